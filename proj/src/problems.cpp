#include "abcu/problems.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "abcu/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "instance files assume a little-endian host");

namespace abcu {

BlockPartition::BlockPartition(std::vector<std::int64_t> offsets)
    : offsets_(std::move(offsets)) {
  if (offsets_.size() < 2 || offsets_.front() != 0)
    throw std::invalid_argument("partition offsets must start at 0");
  for (std::size_t i = 1; i < offsets_.size(); ++i)
    if (offsets_[i] <= offsets_[i - 1])
      throw std::invalid_argument("partition blocks must be nonempty and ordered");
}

BlockPartition BlockPartition::even(std::int64_t n, int m) {
  if (m < 1 || n < m)
    throw std::invalid_argument("need 1 <= m <= n for an even partition");
  const std::int64_t base = n / m;
  std::vector<std::int64_t> offsets(m + 1);
  for (int i = 0; i < m; ++i) offsets[i] = base * i;
  offsets[m] = n;  // last block absorbs the remainder
  return BlockPartition(std::move(offsets));
}

BlockPartition BlockPartition::from_sizes(const std::vector<std::int64_t>& sizes) {
  std::vector<std::int64_t> offsets(sizes.size() + 1, 0);
  for (std::size_t i = 0; i < sizes.size(); ++i)
    offsets[i + 1] = offsets[i] + sizes[i];
  return BlockPartition(std::move(offsets));
}

Eigen::VectorXd Problem::full_grad(const Eigen::VectorXd& x) const {
  const auto& part = partition();
  Eigen::VectorXd g(dimension());
  for (int i = 0; i < part.m(); ++i)
    g.segment(part.offset(i), part.size(i)) = partial_grad(i, x);
  return g;
}

double Problem::block_lipschitz_at(int i, const Eigen::VectorXd& x) const {
  const auto& part = partition();
  BlockReader reader = [&](int b, Eigen::VectorXd& out) {
    out = x.segment(part.offset(b), part.size(b));
  };
  return block_lipschitz(i, reader);
}

Eigen::VectorXd Problem::initial_point() const {
  return Eigen::VectorXd::Zero(dimension());
}

std::unique_ptr<ResidualCache> Problem::make_residual_cache(
    const Eigen::VectorXd&) const {
  return nullptr;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double theta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("theta must be nonnegative");
  Eigen::VectorXd out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double a = std::abs(v[j]) - theta;
    out[j] = a > 0.0 ? (v[j] > 0.0 ? a : -a) : 0.0;
  }
  return out;
}

namespace {

void fill_normal(double* data, std::int64_t count, NormalSampler& normal) {
  for (std::int64_t i = 0; i < count; ++i) data[i] = normal();
}

// Largest eigenvalue of the PSD operator v -> op(v) by power iteration.
double power_lambda_max(std::int64_t dim,
                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(dim);
  for (std::int64_t i = 0; i < dim; ++i) v[i] += 1e-3 * static_cast<double>(i % 7);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = op(v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    w /= nw;
    const double next = w.dot(op(w));
    if (it > 3 && std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
      return next;
    }
    lambda = next;
    v = std::move(w);
  }
  return lambda;
}

}  // namespace

// ---------------------------------------------------------------------------
// LASSO

LassoProblem::LassoProblem(Eigen::MatrixXd A, Eigen::VectorXd b, double lambda,
                           int m_blocks, std::uint64_t seed)
    : A_(std::move(A)), b_(std::move(b)), lambda_(lambda), seed_(seed) {
  if (A_.rows() != b_.size())
    throw std::invalid_argument("A and b row counts differ");
  if (!(lambda_ > 0.0)) throw std::invalid_argument("lambda must be positive");
  partition_ = BlockPartition::even(A_.cols(), m_blocks);
}

LassoProblem LassoProblem::generate(int N, int n, int m_blocks,
                                    std::optional<double> lambda,
                                    std::uint64_t seed) {
  if (N < 1 || n < 1) throw std::invalid_argument("N and n must be >= 1");
  auto rng = make_rng(seed, RngStream::Data);
  NormalSampler normal(rng);
  Eigen::MatrixXd A(N, n);
  fill_normal(A.data(), A.size(), normal);
  Eigen::VectorXd b(N);
  fill_normal(b.data(), b.size(), normal);
  const double lam = lambda.value_or(1.0 / static_cast<double>(N));
  return LassoProblem(std::move(A), std::move(b), lam, m_blocks, seed);
}

double LassoProblem::objective(const Eigen::VectorXd& x) const {
  return smooth_value(x) + lambda_ * x.lpNorm<1>();
}

double LassoProblem::smooth_value(const Eigen::VectorXd& x) const {
  return 0.5 * (A_ * x - b_).squaredNorm();
}

Eigen::VectorXd LassoProblem::partial_grad(int i, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd residual = A_ * x - b_;
  return A_.middleCols(partition_.offset(i), partition_.size(i)).transpose() *
         residual;
}

Eigen::VectorXd LassoProblem::full_grad(const Eigen::VectorXd& x) const {
  return A_.transpose() * (A_ * x - b_);
}

Eigen::VectorXd LassoProblem::prox_block(int i, const Eigen::VectorXd& v,
                                         double eta) const {
  (void)i;
  return soft_threshold(v, eta * lambda_);
}

double LassoProblem::block_lipschitz(int i, const BlockReader&) const {
  compute_constants();
  return block_L_[i];
}

void LassoProblem::compute_constants() const {
  if (constants_ready_) return;
  const int m = partition_.m();
  block_L_.resize(m);
  for (int i = 0; i < m; ++i) {
    const auto Ai = A_.middleCols(partition_.offset(i), partition_.size(i));
    const Eigen::MatrixXd gram = Ai.transpose() * Ai;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram,
                                                      Eigen::EigenvaluesOnly);
    block_L_[i] = es.eigenvalues().maxCoeff();
  }
  L_c_ = *std::max_element(block_L_.begin(), block_L_.end());
  L_f_ = power_lambda_max(A_.cols(), [&](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(A_.transpose() * (A_ * v));
  });
  if (A_.cols() <= 2200) {
    const Eigen::MatrixXd B = A_.transpose() * A_;
    double lr_sq = 0.0;
    for (int i = 0; i < m; ++i) {
      const auto Bi = B.middleCols(partition_.offset(i), partition_.size(i));
      const double lam = power_lambda_max(
          partition_.size(i),
          [&](const Eigen::VectorXd& v) {
            return Eigen::VectorXd(Bi.transpose() * (Bi * v));
          });
      lr_sq = std::max(lr_sq, lam);
    }
    L_r_ = std::sqrt(lr_sq);
    L_r_exact_ = true;
  } else {
    // ||A^T A_i|| <= sigma_max(A) sigma_max(A_i); safe overestimate, so the
    // resulting stepsizes only shrink.
    L_r_ = std::sqrt(L_f_ * L_c_);
    L_r_exact_ = false;
  }
  // Guard the ordering against rounding in the iterative estimates.
  L_r_ = std::min(std::max(L_r_, L_c_), L_f_);
  constants_ready_ = true;
}

ProblemConstants LassoProblem::constants() const {
  compute_constants();
  return ProblemConstants(partition_.m(), L_c_, L_r_, L_f_);
}

double LassoProblem::strong_convexity() const {
  if (A_.rows() < A_.cols()) return 0.0;
  const Eigen::MatrixXd B = A_.transpose() * A_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().minCoeff());
}

namespace {

class LassoResidualCache : public ResidualCache {
 public:
  LassoResidualCache(const LassoProblem& prob, const Eigen::VectorXd& x)
      : prob_(prob), r_(prob.A().rows()) {
    refresh(x);
  }

  void refresh(const Eigen::VectorXd& x) override {
    Eigen::VectorXd r = prob_.A() * x - prob_.b();
    for (Eigen::Index k = 0; k < r.size(); ++k)
      std::atomic_ref<double>(r_[k]).store(r[k], std::memory_order_relaxed);
  }

  Eigen::VectorXd grad_block(int i, const BlockReader&) override {
    const auto& part = prob_.partition();
    Eigen::VectorXd r(static_cast<Eigen::Index>(r_.size()));
    for (Eigen::Index k = 0; k < r.size(); ++k)
      r[k] = std::atomic_ref<double>(r_[k]).load(std::memory_order_relaxed);
    return prob_.A().middleCols(part.offset(i), part.size(i)).transpose() * r;
  }

  void apply_update(int i, const Eigen::VectorXd& old_value,
                    const Eigen::VectorXd& new_value,
                    const BlockReader&) override {
    const auto& part = prob_.partition();
    const Eigen::VectorXd d =
        prob_.A().middleCols(part.offset(i), part.size(i)) *
        (new_value - old_value);
    for (Eigen::Index k = 0; k < d.size(); ++k)
      if (d[k] != 0.0)
        std::atomic_ref<double>(r_[k]).fetch_add(d[k],
                                                 std::memory_order_relaxed);
  }

 private:
  const LassoProblem& prob_;
  std::vector<double> r_;
};

}  // namespace

std::unique_ptr<ResidualCache> LassoProblem::make_residual_cache(
    const Eigen::VectorXd& x) const {
  return std::make_unique<LassoResidualCache>(*this, x);
}

// ---------------------------------------------------------------------------
// NMF

NmfProblem::NmfProblem(Eigen::MatrixXd Z, int rank, std::uint64_t seed)
    : Z_(std::move(Z)), rank_(rank), seed_(seed) {
  if (rank_ < 1) throw std::invalid_argument("rank must be >= 1");
  if (Z_.minCoeff() < 0.0)
    throw std::invalid_argument("Z must be nonnegative");
  const std::int64_t M = Z_.rows(), N = Z_.cols();
  n_ = (M + N) * rank_;
  std::vector<std::int64_t> sizes;
  sizes.reserve(2 * rank_);
  for (int j = 0; j < rank_; ++j) sizes.push_back(M);
  for (int j = 0; j < rank_; ++j) sizes.push_back(N);
  partition_ = BlockPartition::from_sizes(sizes);
}

NmfProblem NmfProblem::generate(int M, int N, int r, std::uint64_t seed) {
  if (M < 1 || N < 1 || r < 1)
    throw std::invalid_argument("M, N, r must be >= 1");
  auto rng = make_rng(seed, RngStream::Data);
  NormalSampler normal(rng);
  Eigen::MatrixXd ZL(M, r), ZR(N, r);
  fill_normal(ZL.data(), ZL.size(), normal);
  fill_normal(ZR.data(), ZR.size(), normal);
  ZL = ZL.cwiseMax(0.0);
  ZR = ZR.cwiseMax(0.0);
  Eigen::MatrixXd Z = ZL * ZR.transpose();

  Eigen::MatrixXd X0(M, r), Y0(N, r);
  fill_normal(X0.data(), X0.size(), normal);
  fill_normal(Y0.data(), Y0.size(), normal);
  X0 = (ZL + 0.5 * X0).cwiseMax(0.0);
  Y0 = (ZR + 0.5 * Y0).cwiseMax(0.0);
  // Normalize the starting X columns so the unit-norm invariant (and with it
  // the unit Y-block curvature) holds from the first iteration.
  for (int j = 0; j < r; ++j) {
    const double nj = X0.col(j).norm();
    if (nj > 0.0) X0.col(j) /= nj;
  }

  NmfProblem prob(std::move(Z), r, seed);
  Eigen::VectorXd x0(prob.dimension());
  std::memcpy(x0.data(), X0.data(), sizeof(double) * X0.size());
  std::memcpy(x0.data() + X0.size(), Y0.data(), sizeof(double) * Y0.size());
  prob.set_initial_point(std::move(x0));
  return prob;
}

Eigen::Map<const Eigen::MatrixXd> NmfProblem::map_X(
    const Eigen::VectorXd& x) const {
  return Eigen::Map<const Eigen::MatrixXd>(x.data(), Z_.rows(), rank_);
}

Eigen::Map<const Eigen::MatrixXd> NmfProblem::map_Y(
    const Eigen::VectorXd& x) const {
  return Eigen::Map<const Eigen::MatrixXd>(x.data() + Z_.rows() * rank_,
                                           Z_.cols(), rank_);
}

void NmfProblem::set_initial_point(Eigen::VectorXd x0) {
  if (x0.size() != n_) throw std::invalid_argument("bad initial point size");
  x0_ = std::move(x0);
}

Eigen::VectorXd NmfProblem::initial_point() const {
  if (x0_) return *x0_;
  return Eigen::VectorXd::Zero(n_);
}

double NmfProblem::objective(const Eigen::VectorXd& x) const {
  if (x.minCoeff() < -1e-12)
    return std::numeric_limits<double>::infinity();  // outside the orthant
  return smooth_value(x);
}

double NmfProblem::smooth_value(const Eigen::VectorXd& x) const {
  const auto X = map_X(x);
  const auto Y = map_Y(x);
  return 0.5 * (X * Y.transpose() - Z_).squaredNorm();
}

Eigen::VectorXd NmfProblem::partial_grad(int i, const Eigen::VectorXd& x) const {
  const auto X = map_X(x);
  const auto Y = map_Y(x);
  if (is_x_block(i)) {
    const int j = i;
    // (X Y^T - Z) y_j without forming the residual
    return X * (Y.transpose() * Y.col(j)) - Z_ * Y.col(j);
  }
  const int j = i - rank_;
  return Y * (X.transpose() * X.col(j)) - Z_.transpose() * X.col(j);
}

Eigen::VectorXd NmfProblem::full_grad(const Eigen::VectorXd& x) const {
  const auto X = map_X(x);
  const auto Y = map_Y(x);
  const Eigen::MatrixXd R = X * Y.transpose() - Z_;
  Eigen::VectorXd g(n_);
  Eigen::Map<Eigen::MatrixXd>(g.data(), Z_.rows(), rank_) = R * Y;
  Eigen::Map<Eigen::MatrixXd>(g.data() + Z_.rows() * rank_, Z_.cols(), rank_) =
      R.transpose() * X;
  return g;
}

Eigen::VectorXd NmfProblem::prox_block(int i, const Eigen::VectorXd& v,
                                       double) const {
  Eigen::VectorXd out = v.cwiseMax(0.0);
  if (is_x_block(i)) {
    const double norm = out.norm();
    // A fully clipped column stays zero; the 0.001 curvature floor keeps the
    // paired updates finite.
    if (norm > 0.0) out /= norm;
  }
  return out;
}

double NmfProblem::block_lipschitz(int i, const BlockReader& read_block) const {
  if (is_x_block(i)) {
    Eigen::VectorXd y;
    read_block(rank_ + i, y);
    return std::max(0.001, y.squaredNorm());
  }
  return 1.0;  // X columns have unit norm
}

ProblemConstants NmfProblem::constants() const {
  // Nominal unit constants; the actual curvature is applied per update via
  // block_lipschitz (adaptive_lipschitz() is true).
  return ProblemConstants(partition_.m(), 1.0, 1.0, 1.0);
}

namespace {

class NmfResidualCache : public ResidualCache {
 public:
  NmfResidualCache(const NmfProblem& prob, const Eigen::VectorXd& x)
      : prob_(prob),
        M_(prob.rows()),
        N_(prob.cols()),
        r_(static_cast<std::size_t>(M_) * N_) {
    refresh(x);
  }

  void refresh(const Eigen::VectorXd& x) override {
    const Eigen::MatrixXd R =
        prob_.map_X(x) * prob_.map_Y(x).transpose() - prob_.Z();
    for (std::int64_t k = 0; k < M_ * N_; ++k)
      std::atomic_ref<double>(r_[k]).store(R.data()[k],
                                           std::memory_order_relaxed);
  }

  Eigen::VectorXd grad_block(int i, const BlockReader& read_block) override {
    if (prob_.is_x_block(i)) {
      Eigen::VectorXd y;
      read_block(prob_.rank() + i, y);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(M_);
      for (std::int64_t b = 0; b < N_; ++b) {
        const double yb = y[b];
        if (yb == 0.0) continue;
        double* col = r_.data() + b * M_;
        for (std::int64_t a = 0; a < M_; ++a)
          g[a] += std::atomic_ref<double>(col[a]).load(
                      std::memory_order_relaxed) *
                  yb;
      }
      return g;
    }
    const int j = i - prob_.rank();
    Eigen::VectorXd xc;
    read_block(j, xc);
    Eigen::VectorXd g(N_);
    for (std::int64_t b = 0; b < N_; ++b) {
      double* col = r_.data() + b * M_;
      double acc = 0.0;
      for (std::int64_t a = 0; a < M_; ++a)
        acc += std::atomic_ref<double>(col[a]).load(
                   std::memory_order_relaxed) *
               xc[a];
      g[b] = acc;
    }
    return g;
  }

  void apply_update(int i, const Eigen::VectorXd& old_value,
                    const Eigen::VectorXd& new_value,
                    const BlockReader& read_block) override {
    const Eigen::VectorXd d = new_value - old_value;
    if (prob_.is_x_block(i)) {
      Eigen::VectorXd y;
      read_block(prob_.rank() + i, y);
      for (std::int64_t b = 0; b < N_; ++b) {
        const double yb = y[b];
        if (yb == 0.0) continue;
        double* col = r_.data() + b * M_;
        for (std::int64_t a = 0; a < M_; ++a)
          if (d[a] != 0.0)
            std::atomic_ref<double>(col[a]).fetch_add(
                d[a] * yb, std::memory_order_relaxed);
      }
      return;
    }
    const int j = i - prob_.rank();
    Eigen::VectorXd xc;
    read_block(j, xc);
    for (std::int64_t b = 0; b < N_; ++b) {
      const double db = d[b];
      if (db == 0.0) continue;
      double* col = r_.data() + b * M_;
      for (std::int64_t a = 0; a < M_; ++a)
        if (xc[a] != 0.0)
          std::atomic_ref<double>(col[a]).fetch_add(
              xc[a] * db, std::memory_order_relaxed);
    }
  }

 private:
  const NmfProblem& prob_;
  std::int64_t M_, N_;
  std::vector<double> r_;  // X Y^T - Z, column-major
};

}  // namespace

std::unique_ptr<ResidualCache> NmfProblem::make_residual_cache(
    const Eigen::VectorXd& x) const {
  return std::make_unique<NmfResidualCache>(*this, x);
}

// ---------------------------------------------------------------------------
// Diagonal quadratic

QuadraticProblem::QuadraticProblem(Eigen::VectorXd diag, Eigen::VectorXd c,
                                   std::uint64_t seed)
    : diag_(std::move(diag)), c_(std::move(c)), seed_(seed) {
  if (diag_.size() != c_.size())
    throw std::invalid_argument("diag and c sizes differ");
  if (diag_.minCoeff() <= 0.0)
    throw std::invalid_argument("Q must be positive definite");
  partition_ = BlockPartition::even(diag_.size(), static_cast<int>(diag_.size()));
}

QuadraticProblem QuadraticProblem::generate(int n, double mu, double L,
                                            std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (!(0.0 < mu && mu <= L))
    throw std::invalid_argument("need 0 < mu <= L");
  Eigen::VectorXd diag(n);
  if (n == 1) {
    diag[0] = L;
  } else {
    for (int i = 0; i < n; ++i)
      diag[i] = mu + (L - mu) * static_cast<double>(i) /
                         static_cast<double>(n - 1);
  }
  auto rng = make_rng(seed, RngStream::Data);
  NormalSampler normal(rng);
  Eigen::VectorXd c(n);
  fill_normal(c.data(), n, normal);
  return QuadraticProblem(std::move(diag), std::move(c), seed);
}

double QuadraticProblem::objective(const Eigen::VectorXd& x) const {
  return smooth_value(x);
}

double QuadraticProblem::smooth_value(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(diag_.cwiseProduct(x)) - c_.dot(x);
}

Eigen::VectorXd QuadraticProblem::partial_grad(int i,
                                               const Eigen::VectorXd& x) const {
  Eigen::VectorXd g(1);
  g[0] = diag_[i] * x[i] - c_[i];
  return g;
}

Eigen::VectorXd QuadraticProblem::full_grad(const Eigen::VectorXd& x) const {
  return diag_.cwiseProduct(x) - c_;
}

Eigen::VectorXd QuadraticProblem::prox_block(int, const Eigen::VectorXd& v,
                                             double) const {
  return v;  // r identically zero
}

double QuadraticProblem::block_lipschitz(int i, const BlockReader&) const {
  return diag_[i];
}

ProblemConstants QuadraticProblem::constants() const {
  const double L = diag_.maxCoeff();
  return ProblemConstants(partition_.m(), L, L, L, diag_.minCoeff());
}

Eigen::VectorXd QuadraticProblem::solution() const {
  return c_.cwiseQuotient(diag_);
}

double QuadraticProblem::optimal_value() const {
  return smooth_value(solution());
}

// ---------------------------------------------------------------------------
// Binary container

namespace {

constexpr char kMagic[5] = {'A', 'B', 'C', 'U', '1'};

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, 8); }

void write_matrix_rowmajor(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("truncated instance file");
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v;
  read_bytes(in, &v, 8);
  return v;
}

double read_f64(std::ifstream& in) {
  double v;
  read_bytes(in, &v, 8);
  return v;
}

Eigen::MatrixXd read_matrix_rowmajor(std::ifstream& in, std::int64_t rows,
                                     std::int64_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) m(r, c) = read_f64(in);
  return m;
}

}  // namespace

void save_instance(const std::string& path, const Problem& problem) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_bytes(out, kMagic, sizeof kMagic);
  if (const auto* lasso = dynamic_cast<const LassoProblem*>(&problem)) {
    const std::uint8_t kind = 1;
    write_bytes(out, &kind, 1);
    write_u64(out, static_cast<std::uint64_t>(lasso->A().rows()));
    write_u64(out, static_cast<std::uint64_t>(lasso->A().cols()));
    write_u64(out, static_cast<std::uint64_t>(lasso->partition().m()));
    write_f64(out, lasso->lambda());
    write_u64(out, lasso->seed());
    write_matrix_rowmajor(out, lasso->A());
    for (Eigen::Index i = 0; i < lasso->b().size(); ++i)
      write_f64(out, lasso->b()[i]);
  } else if (const auto* nmf = dynamic_cast<const NmfProblem*>(&problem)) {
    const std::uint8_t kind = 2;
    write_bytes(out, &kind, 1);
    write_u64(out, static_cast<std::uint64_t>(nmf->rows()));
    write_u64(out, static_cast<std::uint64_t>(nmf->cols()));
    write_u64(out, static_cast<std::uint64_t>(nmf->rank()));
    write_f64(out, 0.0);
    write_u64(out, nmf->seed());
    write_matrix_rowmajor(out, nmf->Z());
    const Eigen::VectorXd x0 = nmf->initial_point();
    for (Eigen::Index i = 0; i < x0.size(); ++i) write_f64(out, x0[i]);
  } else if (const auto* quad = dynamic_cast<const QuadraticProblem*>(&problem)) {
    const std::uint8_t kind = 3;
    write_bytes(out, &kind, 1);
    write_u64(out, static_cast<std::uint64_t>(quad->dimension()));
    write_u64(out, 0);
    write_u64(out, 0);
    write_f64(out, 0.0);
    write_u64(out, quad->seed());
    for (Eigen::Index i = 0; i < quad->dimension(); ++i)
      write_f64(out, quad->diagonal()[i]);
    for (Eigen::Index i = 0; i < quad->dimension(); ++i)
      write_f64(out, quad->linear_term()[i]);
  } else {
    throw std::invalid_argument("unknown problem kind for serialization");
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::unique_ptr<Problem> load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[5];
  read_bytes(in, magic, 5);
  if (std::memcmp(magic, kMagic, 5) != 0)
    throw std::runtime_error("not an instance file: " + path);
  std::uint8_t kind;
  read_bytes(in, &kind, 1);
  const std::uint64_t d0 = read_u64(in);
  const std::uint64_t d1 = read_u64(in);
  const std::uint64_t d2 = read_u64(in);
  const double param = read_f64(in);
  const std::uint64_t seed = read_u64(in);
  switch (kind) {
    case 1: {
      Eigen::MatrixXd A = read_matrix_rowmajor(in, d0, d1);
      Eigen::VectorXd b(d0);
      for (std::uint64_t i = 0; i < d0; ++i) b[i] = read_f64(in);
      return std::make_unique<LassoProblem>(std::move(A), std::move(b), param,
                                            static_cast<int>(d2), seed);
    }
    case 2: {
      Eigen::MatrixXd Z = read_matrix_rowmajor(in, d0, d1);
      auto prob = std::make_unique<NmfProblem>(std::move(Z),
                                               static_cast<int>(d2), seed);
      Eigen::VectorXd x0(prob->dimension());
      for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = read_f64(in);
      prob->set_initial_point(std::move(x0));
      return prob;
    }
    case 3: {
      Eigen::VectorXd diag(d0), c(d0);
      for (std::uint64_t i = 0; i < d0; ++i) diag[i] = read_f64(in);
      for (std::uint64_t i = 0; i < d0; ++i) c[i] = read_f64(in);
      return std::make_unique<QuadraticProblem>(std::move(diag), std::move(c),
                                                seed);
    }
    default:
      throw std::runtime_error("unknown instance kind in " + path);
  }
}

}  // namespace abcu
