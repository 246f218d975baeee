#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "srm/nuts.hpp"
#include "srm/rng.hpp"

using namespace srm;

namespace {

// Zero-mean bivariate normal with unit variances and correlation rho.
class CorrelatedGaussian : public LogDensity {
 public:
  explicit CorrelatedGaussian(double rho) : rho_(rho) {}
  std::size_t dimension() const override { return 2; }
  double log_density_and_gradient(std::span<const double> q, std::span<double> g) const override {
    const double k = 1.0 / (1.0 - rho_ * rho_);
    g[0] = -k * (q[0] - rho_ * q[1]);
    g[1] = -k * (q[1] - rho_ * q[0]);
    return -0.5 * k * (q[0] * q[0] - 2.0 * rho_ * q[0] * q[1] + q[1] * q[1]);
  }

 private:
  double rho_;
};

class Broken : public LogDensity {
 public:
  std::size_t dimension() const override { return 1; }
  double log_density_and_gradient(std::span<const double>, std::span<double> g) const override {
    g[0] = 0.0;
    return std::nan("");
  }
};

}  // namespace

TEST_CASE("NUTS recovers a correlated Gaussian") {
  const CorrelatedGaussian target(0.9);
  Rng rng(17);
  NutsSampler sampler(target, rng);
  sampler.set_position(std::vector<double>{1.0, -1.0});
  sampler.set_step_size(0.3);
  const int n = 20000;
  double m0 = 0.0, m1 = 0.0, s00 = 0.0, s11 = 0.0, s01 = 0.0;
  int divergent = 0;
  for (int i = 0; i < n; ++i) {
    const auto stats = sampler.transition();
    divergent += stats.divergent;
    const auto q = sampler.position();
    m0 += q[0];
    m1 += q[1];
    s00 += q[0] * q[0];
    s11 += q[1] * q[1];
    s01 += q[0] * q[1];
  }
  m0 /= n;
  m1 /= n;
  CHECK(divergent == 0);
  CHECK(std::abs(m0) < 0.1);
  CHECK(std::abs(m1) < 0.1);
  CHECK(s00 / n == doctest::Approx(1.0).epsilon(0.1));
  CHECK(s11 / n == doctest::Approx(1.0).epsilon(0.1));
  CHECK(s01 / n == doctest::Approx(0.9).epsilon(0.1));
}

TEST_CASE("NUTS is deterministic for a seed") {
  const CorrelatedGaussian target(0.5);
  std::vector<double> first, second;
  for (auto* out : {&first, &second}) {
    Rng rng(3);
    NutsSampler sampler(target, rng);
    sampler.set_position(std::vector<double>{0.2, 0.1});
    sampler.init_step_size();
    for (int i = 0; i < 100; ++i) {
      sampler.transition();
      out->push_back(sampler.position()[0]);
    }
  }
  CHECK(first == second);
}

TEST_CASE("a huge step size diverges") {
  const CorrelatedGaussian target(0.99);
  Rng rng(5);
  NutsSampler sampler(target, rng);
  sampler.set_position(std::vector<double>{0.0, 0.0});
  sampler.set_step_size(50.0);
  int divergent = 0;
  for (int i = 0; i < 20; ++i) divergent += sampler.transition().divergent;
  CHECK(divergent > 0);
}

TEST_CASE("non-finite start is rejected") {
  const Broken target;
  Rng rng(1);
  NutsSampler sampler(target, rng);
  CHECK_THROWS_AS(sampler.set_position(std::vector<double>{0.0}), std::domain_error);
}

TEST_CASE("dual averaging approaches the target acceptance") {
  const CorrelatedGaussian target(0.9);
  Rng rng(8);
  NutsSampler sampler(target, rng);
  sampler.set_position(std::vector<double>{0.5, 0.5});
  sampler.init_step_size();
  StepSizeAdaptation adapt(0.8);
  adapt.restart(sampler.step_size());
  for (int i = 0; i < 1000; ++i) sampler.set_step_size(adapt.learn(sampler.transition().accept_stat));
  sampler.set_step_size(adapt.final_step_size());
  double accept = 0.0;
  for (int i = 0; i < 2000; ++i) accept += sampler.transition().accept_stat;
  CHECK(accept / 2000.0 == doctest::Approx(0.8).epsilon(0.1));
}

TEST_CASE("Welford variance with regularization") {
  WelfordVariance w(1);
  for (double x : {1.0, 2.0, 3.0, 4.0, 5.0}) w.add(std::vector<double>{x});
  CHECK(w.count() == 5);
  const double expected = (5.0 / 10.0) * 2.5 + 1e-3 * (5.0 / 10.0);
  CHECK(w.regularized_variance()[0] == doctest::Approx(expected));
  w.reset();
  CHECK(w.count() == 0);
}

TEST_CASE("warmup windows for a thousand iterations") {
  const WarmupSchedule s(1000);
  CHECK(s.adapt_metric());
  std::vector<int> ends;
  for (int i = 0; i < 1000; ++i) {
    if (s.window_end(i)) ends.push_back(i);
  }
  CHECK(ends == std::vector<int>{99, 149, 249, 449, 949});
  CHECK_FALSE(s.in_window(74));
  CHECK(s.in_window(75));
  CHECK(s.in_window(949));
  CHECK_FALSE(s.in_window(950));
}

TEST_CASE("short warmup skips metric adaptation") {
  const WarmupSchedule s(15);
  CHECK_FALSE(s.adapt_metric());
  for (int i = 0; i < 15; ++i) CHECK_FALSE(s.window_end(i));
}
