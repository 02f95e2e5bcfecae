#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "abcu/delay_model.hpp"
#include "abcu/rng.hpp"

using namespace abcu;

namespace {

std::vector<DelaySpec> sample_specs() {
  return {DelaySpec::poisson(0.0), DelaySpec::poisson(1.0),
          DelaySpec::poisson(4.0), DelaySpec::poisson(39.0),
          DelaySpec::deterministic(0), DelaySpec::deterministic(3),
          DelaySpec::empirical({0.5, 0.5}),
          DelaySpec::empirical({0.2, 0.0, 0.3, 0.5})};
}

}  // namespace

TEST_SUITE("delay_model") {

TEST_CASE("pmf known values") {
  CHECK(DelaySpec::poisson(0.0).pmf(0) == 1.0);
  CHECK(DelaySpec::poisson(0.0).pmf(3) == 0.0);
  CHECK(DelaySpec::poisson(1.0).pmf(1) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(DelaySpec::empirical({0.5, 0.5}).pmf(2) == 0.0);
  CHECK(DelaySpec::deterministic(3).pmf(3) == 1.0);
  CHECK(DelaySpec::deterministic(3).pmf(2) == 0.0);
}

TEST_CASE("tail known values") {
  for (const auto& spec : sample_specs()) CHECK(spec.tail(0) == 1.0);
  CHECK(DelaySpec::poisson(1.0).tail(1) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  CHECK(DelaySpec::deterministic(3).tail(4) == 0.0);
  CHECK(DelaySpec::deterministic(3).tail(3) == 1.0);
}

TEST_CASE("pmf sums to one") {
  for (const auto& spec : sample_specs()) {
    double sum = 0.0;
    const std::uint64_t h = spec.horizon(1e-14, 1 << 16);
    for (std::uint64_t t = 0; t <= h + 2; ++t) sum += spec.pmf(t);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("tail recurrence tail(k) = tail(k+1) + pmf(k)") {
  for (const auto& spec : sample_specs()) {
    for (std::uint64_t k = 0; k < 50; ++k) {
      CHECK(std::abs(spec.tail(k) - (spec.tail(k + 1) + spec.pmf(k))) <=
            1e-12);
    }
  }
}

TEST_CASE("tail nonincreasing") {
  for (const auto& spec : sample_specs())
    for (std::uint64_t k = 0; k < 60; ++k)
      CHECK(spec.tail(k + 1) <= spec.tail(k) + 1e-15);
}

TEST_CASE("moments known values") {
  const auto m1 = moments(DelaySpec::poisson(4.0), 1.25);
  CHECK(m1.T == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(m1.S == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(m1.method == MomentMethod::ClosedForm);

  const auto m0 = moments(DelaySpec::poisson(0.0), 3.0);
  CHECK(m0.T == 0.0);
  CHECK(m0.S == 0.0);
  CHECK(m0.M_rho == 1.0);
  CHECK(m0.N_rho == 0.0);
  CHECK(m0.gamma1 == 0.0);
  CHECK(m0.gamma2 == 0.0);

  const auto me = moments(DelaySpec::poisson(1.0), 2.0);
  CHECK(me.M_rho == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(me.N_rho == doctest::Approx(2.0 * std::exp(1.0)).epsilon(1e-12));
  const auto mt = moments_truncated(DelaySpec::poisson(1.0), 2.0);
  CHECK(me.M_rho == doctest::Approx(mt.M_rho).epsilon(1e-10));
  CHECK(me.N_rho == doctest::Approx(mt.N_rho).epsilon(1e-10));
}

TEST_CASE("deterministic zero delay collapses") {
  const auto m = moments(DelaySpec::deterministic(0), 1.5);
  CHECK(m.T == 0.0);
  CHECK(m.S == 0.0);
  CHECK(m.M_rho == 1.0);
  CHECK(m.N_rho == 0.0);
  CHECK(m.gamma1 == 0.0);
  CHECK(m.gamma2 == 0.0);
}

TEST_CASE("closed form matches the series oracle on the grid") {
  for (double p : {0.5, 1.0, 4.0, 9.0, 39.0}) {
    for (double rho : {1.01, 1.25, 2.0}) {
      const auto closed = moments(DelaySpec::poisson(p), rho);
      const auto series = moments_truncated(DelaySpec::poisson(p), rho, 1e-13);
      CHECK(closed.T == doctest::Approx(series.T).epsilon(1e-10));
      CHECK(closed.S == doctest::Approx(series.S).epsilon(1e-10));
      CHECK(closed.M_rho == doctest::Approx(series.M_rho).epsilon(1e-10));
      CHECK(closed.N_rho == doctest::Approx(series.N_rho).epsilon(1e-10));
      CHECK(closed.gamma1 == doctest::Approx(series.gamma1).epsilon(1e-10));
      CHECK(closed.gamma2 == doctest::Approx(series.gamma2).epsilon(1e-10));
      CHECK(series.method == MomentMethod::TruncatedSum);
      CHECK(series.truncation_error_bound >= 0.0);
      CHECK(series.truncation_error_bound < 1e-10);
    }
  }
}

TEST_CASE("empirical and deterministic moments are exact sums") {
  const auto spec = DelaySpec::empirical({0.25, 0.5, 0.25});
  const auto m = moments(spec, 2.0);
  CHECK(m.T == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.S == doctest::Approx(0.5 + 4 * 0.25).epsilon(1e-14));
  CHECK(m.M_rho ==
        doctest::Approx(0.25 + 0.5 * 2.0 + 0.25 * 4.0).epsilon(1e-14));
  CHECK(m.N_rho ==
        doctest::Approx(0.5 * 2.0 + 2 * 0.25 * 4.0).epsilon(1e-14));
  // gamma1 = q1 (sqrt(2)-1)/(sqrt(2)-1) + q2 (2-1)/(sqrt(2)-1)
  const double s2 = std::sqrt(2.0);
  CHECK(m.gamma1 ==
        doctest::Approx(0.5 + 0.25 * 1.0 / (s2 - 1.0)).epsilon(1e-13));
  // gamma2^2 = [q1*1*(2-1) + q2*2*(4-1)] / (1 - 1/2)
  CHECK(m.gamma2 ==
        doctest::Approx(std::sqrt((0.5 + 0.25 * 6.0) / 0.5)).epsilon(1e-13));

  const auto d = moments(DelaySpec::deterministic(3), 2.0);
  CHECK(d.T == 3.0);
  CHECK(d.S == 9.0);
  CHECK(d.M_rho == 8.0);
  CHECK(d.N_rho == 24.0);
}

TEST_CASE("T^2 <= S for every spec") {
  for (const auto& spec : sample_specs()) {
    const auto m = moments(spec, 1.25);
    CHECK(m.T * m.T <= m.S + 1e-12);
  }
}

TEST_CASE("moments are nondecreasing in the Poisson rate") {
  for (double rho : {1.25, 2.0}) {
    DelayMoments prev = moments(DelaySpec::poisson(0.0), rho);
    for (double p : {0.25, 0.5, 1.0, 2.0, 4.0, 9.0, 16.0, 39.0}) {
      const auto cur = moments(DelaySpec::poisson(p), rho);
      CHECK(cur.T >= prev.T);
      CHECK(cur.S >= prev.S);
      CHECK(cur.M_rho >= prev.M_rho);
      CHECK(cur.N_rho >= prev.N_rho);
      CHECK(cur.gamma1 >= prev.gamma1);
      CHECK(cur.gamma2 >= prev.gamma2);
      prev = cur;
    }
  }
}

TEST_CASE("moments rejects bad arguments") {
  CHECK_THROWS_AS(moments(DelaySpec::poisson(1.0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(moments(DelaySpec::poisson(1.0), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(moments(DelaySpec::poisson(1.0), 2.0, 0.0),
                  std::invalid_argument);
  // e^{p (rho - 1)} overflows: divergence is an error, not an inf result
  CHECK_THROWS_AS(moments(DelaySpec::poisson(1000.0), 3.0), std::domain_error);
  CHECK_THROWS_AS(moments_truncated(DelaySpec::poisson(1000.0), 3.0),
                  std::domain_error);
}

TEST_CASE("empirical validation") {
  CHECK_THROWS_AS(DelaySpec::empirical({}), std::invalid_argument);
  CHECK_THROWS_AS(DelaySpec::empirical({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(DelaySpec::empirical({1.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(DelaySpec::poisson(-1.0), std::invalid_argument);
}

TEST_CASE("sampling point masses") {
  auto rng = make_rng(7, RngStream::Delays);
  for (int i = 0; i < 100; ++i) {
    CHECK(DelaySpec::deterministic(0).sample(rng) == 0);
    CHECK(DelaySpec::empirical({0.0, 1.0}).sample(rng) == 1);
    CHECK(DelaySpec::deterministic(5).sample(rng) == 5);
  }
}

TEST_CASE("poisson sample mean obeys the CLT bound") {
  const auto spec = DelaySpec::poisson(4.0);
  auto rng = make_rng(123, RngStream::Delays);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(spec.sample(rng));
  const double mean = sum / n;
  CHECK(std::abs(mean - 4.0) <= 0.006);  // 3 sigma / sqrt(n) with sigma = 2
}

TEST_CASE("sampling is deterministic per seed") {
  const auto spec = DelaySpec::poisson(9.0);
  auto a = make_rng(5, RngStream::Delays);
  auto b = make_rng(5, RngStream::Delays);
  for (int i = 0; i < 1000; ++i) CHECK(spec.sample(a) == spec.sample(b));
}

TEST_CASE("fit_poisson point mass at zero") {
  const auto fit = fit_poisson({10, 0, 0});
  CHECK(fit.p_hat == 0.0);
  CHECK(fit.divergence == 0.0);
}

TEST_CASE("fit_poisson recovers the rate from draws") {
  const auto spec = DelaySpec::poisson(9.0);
  auto rng = make_rng(42, RngStream::Delays);
  std::vector<std::uint64_t> hist;
  for (int i = 0; i < 100000; ++i) {
    const auto t = spec.sample(rng);
    if (t >= hist.size()) hist.resize(t + 1, 0);
    ++hist[t];
  }
  const auto fit = fit_poisson(hist);
  CHECK(fit.p_hat >= 8.9);
  CHECK(fit.p_hat <= 9.1);
  CHECK(fit.divergence < 0.01);
}

TEST_CASE("fit_poisson two-bin hand value") {
  const auto fit = fit_poisson({1, 1});
  CHECK(fit.p_hat == 0.5);
  // Support {0, 1} with the model tail folded into the last bin:
  // KL = 0.5 log(0.5 / e^{-1/2}) + 0.5 log(0.5 / (1 - e^{-1/2}))
  const double q0 = std::exp(-0.5);
  const double q1 = 1.0 - q0;
  const double expected = 0.5 * std::log(0.5 / q0) + 0.5 * std::log(0.5 / q1);
  CHECK(fit.divergence == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("fit_poisson rejects empty histograms") {
  CHECK_THROWS_AS(fit_poisson({}), std::invalid_argument);
  CHECK_THROWS_AS(fit_poisson({0, 0, 0}), std::invalid_argument);
}

TEST_CASE("horizon sizes") {
  CHECK(DelaySpec::deterministic(3).horizon(1e-6) == 4);
  CHECK(DelaySpec::deterministic(0).horizon(1e-6) == 1);
  const auto h = DelaySpec::poisson(4.0).horizon(1e-6);
  CHECK(h >= 10);
  CHECK(h <= 40);
  CHECK(DelaySpec::poisson(4.0).horizon(1e-300, 64) == 64);  // cap applies
}

TEST_CASE("empirical table and histogram files round-trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "abcu_delay_io_test";
  fs::create_directories(dir);

  const auto spec = DelaySpec::empirical({0.125, 0.25, 0.0, 0.625});
  const auto table = (dir / "delays.txt").string();
  save_empirical(table, spec);
  const auto loaded = load_empirical(table);
  REQUIRE(loaded.kind() == DelaySpec::Kind::Empirical);
  REQUIRE(loaded.weights().size() == spec.weights().size());
  for (std::size_t t = 0; t < spec.weights().size(); ++t)
    CHECK(loaded.weights()[t] == spec.weights()[t]);

  const std::vector<std::uint64_t> hist{4, 0, 7, 1};
  const auto hpath = (dir / "hist.txt").string();
  save_histogram(hpath, hist);
  CHECK(load_histogram(hpath) == hist);

  // A Poisson spec saved as a table loads as a close empirical distribution.
  const auto ppath = (dir / "poisson.txt").string();
  save_empirical(ppath, DelaySpec::poisson(2.0));
  const auto papprox = load_empirical(ppath);
  CHECK(papprox.mean() == doctest::Approx(2.0).epsilon(1e-9));
  fs::remove_all(dir);
}

}  // TEST_SUITE
