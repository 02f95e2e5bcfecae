#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abcu/stepsize.hpp"

namespace abcu {

/// Contiguous disjoint block ranges covering [0, n).
class BlockPartition {
 public:
  BlockPartition() = default;
  explicit BlockPartition(std::vector<std::int64_t> offsets);

  // Equal contiguous blocks; the last block absorbs n mod m.
  static BlockPartition even(std::int64_t n, int m);
  static BlockPartition from_sizes(const std::vector<std::int64_t>& sizes);

  int m() const { return static_cast<int>(offsets_.size()) - 1; }
  std::int64_t n() const { return offsets_.back(); }
  std::int64_t offset(int i) const { return offsets_[i]; }
  std::int64_t size(int i) const { return offsets_[i + 1] - offsets_[i]; }

 private:
  std::vector<std::int64_t> offsets_;  // m + 1 entries, 0 = first, n = last
};

/// Reads one shared block into `out` (sized by the callee). The engine
/// supplies an implementation that honors the active read mode.
using BlockReader = std::function<void(int, Eigen::VectorXd&)>;

/// Shared residual-style state for the cached gradient path. Entry updates
/// use atomic read-modify-writes; readers use relaxed loads, so concurrent
/// reads see a possibly stale but never torn accumulation.
class ResidualCache {
 public:
  virtual ~ResidualCache() = default;
  // Gradient of block i from the cache; `read_block` provides any current
  // blocks the formula needs besides the cache itself.
  virtual Eigen::VectorXd grad_block(int i, const BlockReader& read_block) = 0;
  // Fold the effect of replacing block i (old_value -> new_value).
  virtual void apply_update(int i, const Eigen::VectorXd& old_value,
                            const Eigen::VectorXd& new_value,
                            const BlockReader& read_block) = 0;
  // Recompute from a full iterate (single-threaded use).
  virtual void refresh(const Eigen::VectorXd& x) = 0;
};

/// A block-structured objective F(x) = f(x) + sum_i r_i(x_i).
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::int64_t dimension() const = 0;
  virtual const BlockPartition& partition() const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;     // F
  virtual double smooth_value(const Eigen::VectorXd& x) const = 0;  // f

  // grad_i f(x), recomputed from the supplied iterate.
  virtual Eigen::VectorXd partial_grad(int i, const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd full_grad(const Eigen::VectorXd& x) const;

  // prox of eta * r_i evaluated at v (plus any per-block maintenance rule
  // the instance defines, e.g. column normalization).
  virtual Eigen::VectorXd prox_block(int i, const Eigen::VectorXd& v,
                                     double eta) const = 0;

  // Per-block gradient Lipschitz estimate at the current point. Instances
  // with constant curvature ignore the reader.
  virtual double block_lipschitz(int i, const BlockReader& read_block) const = 0;
  double block_lipschitz_at(int i, const Eigen::VectorXd& x) const;

  virtual ProblemConstants constants() const = 0;

  // When true, the runners rescale the configured stepsize by
  // L_c / block_lipschitz at each update (adaptive curvature).
  virtual bool adaptive_lipschitz() const { return false; }

  virtual Eigen::VectorXd initial_point() const;

  // Null when the instance has no cached-gradient support.
  virtual std::unique_ptr<ResidualCache> make_residual_cache(
      const Eigen::VectorXd& x) const;

  virtual std::string kind_name() const = 0;
};

/// Componentwise sign(v) * max(|v| - theta, 0).
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double theta);

/// 0.5 ||A x - b||^2 + lambda ||x||_1 over equal column blocks.
class LassoProblem : public Problem {
 public:
  LassoProblem(Eigen::MatrixXd A, Eigen::VectorXd b, double lambda,
               int m_blocks, std::uint64_t seed = 0);

  // A and b i.i.d. standard normal from the seeded generator;
  // lambda defaults to 1/N.
  static LassoProblem generate(int N, int n, int m_blocks,
                               std::optional<double> lambda,
                               std::uint64_t seed);

  std::int64_t dimension() const override { return A_.cols(); }
  const BlockPartition& partition() const override { return partition_; }
  double objective(const Eigen::VectorXd& x) const override;
  double smooth_value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd partial_grad(int i, const Eigen::VectorXd& x) const override;
  Eigen::VectorXd full_grad(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd prox_block(int i, const Eigen::VectorXd& v,
                             double eta) const override;
  double block_lipschitz(int i, const BlockReader& read_block) const override;
  ProblemConstants constants() const override;
  std::unique_ptr<ResidualCache> make_residual_cache(
      const Eigen::VectorXd& x) const override;
  std::string kind_name() const override { return "lasso"; }

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }
  double lambda() const { return lambda_; }
  std::uint64_t seed() const { return seed_; }

  // lambda_min(A^T A) when N >= n (0 otherwise); dense eigensolve, intended
  // for desk-scale instances.
  double strong_convexity() const;

 private:
  void compute_constants() const;

  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  double lambda_;
  BlockPartition partition_;
  std::uint64_t seed_ = 0;
  mutable std::vector<double> block_L_;  // ||A_i^T A_i||_2 per block
  mutable double L_c_ = 0.0, L_r_ = 0.0, L_f_ = 0.0;
  mutable bool L_r_exact_ = true;
  mutable bool constants_ready_ = false;
};

/// 0.5 ||X Y^T - Z||_F^2 over nonnegative X (M x r) and Y (N x r); blocks
/// are the r columns of X followed by the r columns of Y. X columns are
/// rescaled to unit norm by the block prox, so the Y-block curvature is 1.
class NmfProblem : public Problem {
 public:
  NmfProblem(Eigen::MatrixXd Z, int rank, std::uint64_t seed = 0);

  // Z = Z_L Z_R^T from projected standard normal factors; the initial point
  // is (Z_L, Z_R) + 0.5 * noise, projected, with X columns normalized.
  static NmfProblem generate(int M, int N, int r, std::uint64_t seed);

  std::int64_t dimension() const override { return n_; }
  const BlockPartition& partition() const override { return partition_; }
  double objective(const Eigen::VectorXd& x) const override;
  double smooth_value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd partial_grad(int i, const Eigen::VectorXd& x) const override;
  Eigen::VectorXd full_grad(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd prox_block(int i, const Eigen::VectorXd& v,
                             double eta) const override;
  double block_lipschitz(int i, const BlockReader& read_block) const override;
  ProblemConstants constants() const override;
  bool adaptive_lipschitz() const override { return true; }
  Eigen::VectorXd initial_point() const override;
  std::unique_ptr<ResidualCache> make_residual_cache(
      const Eigen::VectorXd& x) const override;
  std::string kind_name() const override { return "nmf"; }

  const Eigen::MatrixXd& Z() const { return Z_; }
  int rank() const { return rank_; }
  int rows() const { return static_cast<int>(Z_.rows()); }
  int cols() const { return static_cast<int>(Z_.cols()); }
  std::uint64_t seed() const { return seed_; }
  bool is_x_block(int i) const { return i < rank_; }

  // Column-matrix views of a packed iterate [vec(X) | vec(Y)].
  Eigen::Map<const Eigen::MatrixXd> map_X(const Eigen::VectorXd& x) const;
  Eigen::Map<const Eigen::MatrixXd> map_Y(const Eigen::VectorXd& x) const;

  void set_initial_point(Eigen::VectorXd x0);

 private:
  Eigen::MatrixXd Z_;
  int rank_;
  std::int64_t n_;
  BlockPartition partition_;
  std::optional<Eigen::VectorXd> x0_;
  std::uint64_t seed_ = 0;
};

/// f(x) = 0.5 x^T Q x - c^T x with diagonal Q and singleton blocks; the
/// minimizer Q^{-1} c and optimal value are known exactly.
class QuadraticProblem : public Problem {
 public:
  QuadraticProblem(Eigen::VectorXd diag, Eigen::VectorXd c,
                   std::uint64_t seed = 0);

  // Spectrum linearly spaced on [mu, L]; c standard normal.
  static QuadraticProblem generate(int n, double mu, double L,
                                   std::uint64_t seed);

  std::int64_t dimension() const override { return diag_.size(); }
  const BlockPartition& partition() const override { return partition_; }
  double objective(const Eigen::VectorXd& x) const override;
  double smooth_value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd partial_grad(int i, const Eigen::VectorXd& x) const override;
  Eigen::VectorXd full_grad(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd prox_block(int i, const Eigen::VectorXd& v,
                             double eta) const override;
  double block_lipschitz(int i, const BlockReader& read_block) const override;
  ProblemConstants constants() const override;
  std::string kind_name() const override { return "quadratic"; }

  Eigen::VectorXd solution() const;
  double optimal_value() const;
  const Eigen::VectorXd& diagonal() const { return diag_; }
  const Eigen::VectorXd& linear_term() const { return c_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Eigen::VectorXd diag_;
  Eigen::VectorXd c_;
  BlockPartition partition_;
  std::uint64_t seed_ = 0;
};

// Binary container: "ABCU1" magic, kind byte, three u64 dims, one f64
// parameter, u64 seed, then the payload as 64-bit floats (row-major for
// matrices), all little-endian.
void save_instance(const std::string& path, const Problem& problem);
std::unique_ptr<Problem> load_instance(const std::string& path);

}  // namespace abcu
