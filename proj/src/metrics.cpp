#include "abcu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace abcu {

double phi(const Problem& problem, const Eigen::VectorXd& x, double eta,
           const Eigen::VectorXd& x_ref) {
  const double gap = problem.objective(x) - problem.objective(x_ref);
  return phi_from_parts((x - x_ref).squaredNorm(), eta, gap);
}

double phi_from_parts(double dist_sq, double eta, double objective_gap) {
  return dist_sq + 2.0 * eta * objective_gap;
}

LinearRateFit fit_linear_rate(const std::vector<double>& values,
                              double stride) {
  LinearRateFit fit;
  if (values.size() < 10) {
    fit.note = "need at least 10 samples";
    return fit;
  }
  if (!(stride > 0.0)) {
    fit.note = "stride must be positive";
    return fit;
  }
  for (double v : values) {
    if (!(v > 0.0)) {
      fit.note = "nonpositive value in trace; rate undefined";
      return fit;
    }
  }
  const double n = static_cast<double>(values.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double xi = static_cast<double>(i);
    const double yi = std::log(values[i]);
    sx += xi;
    sy += yi;
    sxx += xi * xi;
    sxy += xi * yi;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.factor = std::exp(slope / stride);
  fit.valid = true;
  return fit;
}

int check_sublinear(const std::vector<std::pair<double, double>>& samples,
                    const std::function<double(double)>& envelope,
                    double burn_in_k, double rel_slack, double abs_slack) {
  int violations = 0;
  for (const auto& [k, value] : samples) {
    if (k < burn_in_k) continue;
    const double cap = envelope(k) * (1.0 + rel_slack) + abs_slack;
    if (value > cap) ++violations;
  }
  return violations;
}

DelayReport delay_report(const std::vector<std::uint64_t>& histogram,
                         int threads) {
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  double total = 0.0;
  for (auto c : histogram) total += static_cast<double>(c);
  if (total <= 0.0) throw std::invalid_argument("empty delay histogram");
  DelayReport rep;
  rep.threads = threads;
  rep.normalized.resize(histogram.size());
  for (std::size_t t = 0; t < histogram.size(); ++t)
    rep.normalized[t] = static_cast<double>(histogram[t]) / total;
  const auto fit = fit_poisson(histogram);
  rep.p_hat = fit.p_hat;
  rep.kl_vs_fit = fit.divergence;
  rep.kl_vs_expected =
      kl_vs_poisson(histogram, static_cast<double>(threads - 1));
  const double expected = static_cast<double>(threads - 1);
  if (expected > 0.0 && std::abs(rep.p_hat - expected) > 0.5 * expected) {
    rep.note =
        "measured delays deviate from the processor-count model; "
        "uneven core speeds or scheduling can shift the histogram";
  }
  return rep;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceSample>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "epoch,objective,grad_map_norm,elapsed_seconds,clamp_events\n";
  for (const auto& s : trace) {
    out << format_double(s.epoch) << ',' << format_double(s.objective) << ','
        << format_double(s.grad_map_norm) << ','
        << format_double(s.elapsed_seconds) << ',' << s.clamp_events << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<TraceSample> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty trace file: " + path);
  std::vector<TraceSample> trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    TraceSample s;
    if (!(row >> s.epoch >> s.objective >> s.grad_map_norm >>
          s.elapsed_seconds >> s.clamp_events))
      throw std::runtime_error("malformed trace row: " + line);
    trace.push_back(s);
  }
  return trace;
}

void write_histogram_csv(const std::string& path,
                         const std::vector<std::uint64_t>& histogram) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "delay,count\n";
  for (std::size_t t = 0; t < histogram.size(); ++t)
    out << t << ',' << histogram[t] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint64_t> read_histogram_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty histogram file: " + path);
  std::vector<std::uint64_t> hist;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::uint64_t t, c;
    if (!(row >> t >> c))
      throw std::runtime_error("malformed histogram row: " + line);
    if (t >= hist.size()) hist.resize(t + 1, 0);
    hist[t] = c;
  }
  return hist;
}

void write_columns_csv(const std::string& path,
                       const std::vector<std::string>& headers,
                       const std::vector<std::vector<double>>& columns) {
  if (headers.size() != columns.size())
    throw std::invalid_argument("headers and columns mismatch");
  std::size_t rows = 0;
  for (const auto& c : columns) rows = std::max(rows, c.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t j = 0; j < headers.size(); ++j)
    out << headers[j] << (j + 1 < headers.size() ? ',' : '\n');
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (r < columns[j].size()) out << format_double(columns[j][r]);
      out << (j + 1 < columns.size() ? ',' : '\n');
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace abcu
