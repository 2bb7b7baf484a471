#include "rvae/robustfit.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace rvae {
namespace {

std::vector<double> contaminated(std::size_t n = 2000, std::uint64_t seed = 42) {
  return sample_mixture(n, 0.9, 0.0, 1.0, 8.0, 1.0, seed).values;
}

// Objective evaluated straight from its definition, independent of the
// library's (mu, log sigma) parametrization.
double direct_objective(const std::vector<double>& x, double beta, double mu, double sigma) {
  double s = 0.0;
  for (double v : x) {
    const double z = (v - mu) / sigma;
    const double pdf = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * std::numbers::pi));
    s += std::pow(pdf, beta) - 1.0;
  }
  const double n = static_cast<double>(x.size());
  return -(beta + 1) / (beta * n) * s +
         std::pow(2 * std::numbers::pi * sigma * sigma, -beta / 2) / std::sqrt(beta + 1);
}

TEST(Mixture, WeightOneUsesFirstComponentOnly) {
  const auto m = sample_mixture(500, 1.0, 2.0, 0.5, 50.0, 1.0, 1);
  for (auto f : m.from_second) EXPECT_EQ(f, 0);
  for (double v : m.values) EXPECT_LT(v, 10.0);
}

TEST(Mixture, SameSeedSameSamples) {
  const auto a = sample_mixture(100, 0.7, 0, 1, 5, 2, 9), b = sample_mixture(100, 0.7, 0, 1, 5, 2, 9);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.from_second, b.from_second);
  EXPECT_NE(a.values, sample_mixture(100, 0.7, 0, 1, 5, 2, 10).values);
}

TEST(Mixture, EmpiricalMeanMatchesMixtureMean) {
  const double w = 0.9, m1 = 0.0, s1 = 1.0, m2 = 8.0, s2 = 1.0;
  const std::size_t n = 100000;
  const auto x = sample_mixture(n, w, m1, s1, m2, s2, 3).values;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  const double mix_mean = w * m1 + (1 - w) * m2;
  const double mix_var = w * (s1 * s1 + m1 * m1) + (1 - w) * (s2 * s2 + m2 * m2) - mix_mean * mix_mean;
  EXPECT_NEAR(mean, mix_mean, 3 * std::sqrt(mix_var / n));
}

TEST(Mixture, InvalidParametersThrow) {
  EXPECT_THROW(sample_mixture(10, 0.0, 0, 1, 0, 1, 1), ConfigError);
  EXPECT_THROW(sample_mixture(10, 1.5, 0, 1, 0, 1, 1), ConfigError);
  EXPECT_THROW(sample_mixture(10, 0.5, 0, 0, 0, 1, 1), ConfigError);
}

TEST(Mle, TwoPointHandValue) {
  const std::vector<double> x{-1.0, 1.0};
  const auto f = fit_gaussian_mle(x);
  EXPECT_DOUBLE_EQ(f.mu, 0.0);
  EXPECT_DOUBLE_EQ(f.sigma, 1.0);
  EXPECT_EQ(f.method, "mle");
}

TEST(Mle, PulledToMixtureMean) {
  const auto f = fit_gaussian_mle(contaminated(100000, 5));
  EXPECT_NEAR(f.mu, 0.8, 0.05);
}

TEST(Mle, SingleComponentRecoversMean) {
  const auto f = fit_gaussian_mle(sample_mixture(20000, 1.0, 3.0, 2.0, 0, 1, 5).values);
  EXPECT_NEAR(f.mu, 3.0, 0.05);
  EXPECT_NEAR(f.sigma, 2.0, 0.05);
}

TEST(Mle, DegenerateSamplesFloorSigma) {
  const std::vector<double> x(5, 2.0);
  const auto f = fit_gaussian_mle(x);
  EXPECT_EQ(f.sigma, kMinSigma);
  EXPECT_THROW(fit_gaussian_mle(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(BetaObjectiveTest, ValueMatchesDefinition) {
  const auto x = contaminated(300, 1);
  for (double beta : {0.1, 0.5, 1.3}) {
    const auto o = beta_objective(x, beta, 0.4, std::log(1.7));
    EXPECT_NEAR(o.value, direct_objective(x, beta, 0.4, 1.7), 1e-12);
  }
}

TEST(BetaObjectiveTest, GradientMatchesFiniteDifferences) {
  const auto x = contaminated(500, 2);
  const double h = 1e-6;
  for (double beta : {0.05, 0.5, 2.0}) {
    for (auto [mu, ls] : {std::pair{0.0, 0.0}, std::pair{1.5, -0.3}, std::pair{-0.7, 0.8}}) {
      const auto o = beta_objective(x, beta, mu, ls);
      const double fd_mu =
          (beta_objective(x, beta, mu + h, ls).value - beta_objective(x, beta, mu - h, ls).value) / (2 * h);
      const double fd_ls =
          (beta_objective(x, beta, mu, ls + h).value - beta_objective(x, beta, mu, ls - h).value) / (2 * h);
      EXPECT_LT(std::abs(o.d_mu - fd_mu) / std::max(std::abs(fd_mu), 1e-8), 1e-6);
      EXPECT_LT(std::abs(o.d_log_sigma - fd_ls) / std::max(std::abs(fd_ls), 1e-8), 1e-6);
    }
  }
}

TEST(BetaObjectiveTest, SingleSampleInfluenceIsBounded) {
  auto x = contaminated(1000, 3);
  const double beta = 0.5, n = static_cast<double>(x.size());
  const double before = beta_objective(x, beta, 0.0, 0.0).value;
  const double mle_before = fit_gaussian_mle(x).mu;
  x[0] = 1e6;
  const double after = beta_objective(x, beta, 0.0, 0.0).value;
  EXPECT_LE(std::abs(after - before), (beta + 1) / (beta * n) + 1e-15);
  EXPECT_GT(fit_gaussian_mle(x).mu - mle_before, 900.0);
}

TEST(BetaFit, CleanDataIsConsistent) {
  const auto x = sample_mixture(5000, 1.0, 0.0, 1.0, 0, 1, 11).values;
  const auto f = fit_gaussian_beta(x, 0.5);
  EXPECT_LT(std::abs(f.mu), 0.1);
  EXPECT_LT(std::abs(f.sigma - 1.0), 0.1);
}

TEST(BetaFit, TracksTallModeWhileMleIsPulledAway) {
  const auto x = contaminated();
  const auto mle = fit_gaussian_mle(x);
  const auto beta = fit_gaussian_beta(x, 0.5);
  EXPECT_LT(std::abs(mle.mu - 0.8), 0.3);
  EXPECT_LT(std::abs(beta.mu), 0.3);
  EXPECT_LT(beta.mu, mle.mu);
  EXPECT_EQ(beta.method, "beta");
  EXPECT_EQ(beta.beta, 0.5);
}

TEST(BetaFit, TraceNeverIncreases) {
  const auto f = fit_gaussian_beta(contaminated(), 0.5);
  ASSERT_GE(f.objective_trace.size(), 2u);
  for (std::size_t i = 1; i < f.objective_trace.size(); ++i) {
    EXPECT_LE(f.objective_trace[i], f.objective_trace[i - 1]);
  }
  EXPECT_GT(f.sigma, 0.0);
}

TEST(BetaFit, SmallBetaApproachesMle) {
  const auto x = contaminated(2000, 8);
  const auto mle = fit_gaussian_mle(x);
  const auto f = fit_gaussian_beta(x, 1e-4);
  EXPECT_LT(std::abs(f.mu - mle.mu) / std::abs(mle.mu), 1e-2);
  EXPECT_LT(std::abs(f.sigma - mle.sigma) / mle.sigma, 1e-2);
}

TEST(BetaFit, ExplicitInitAndValidation) {
  const auto x = contaminated(500, 4);
  BetaFitOptions opt;
  opt.init = std::pair{5.0, 3.0};
  const auto f = fit_gaussian_beta(x, 0.5, opt);
  EXPECT_LT(f.objective_trace.back(), f.objective_trace.front());
  EXPECT_THROW(fit_gaussian_beta(x, 0.0), std::invalid_argument);
  opt.init = std::pair{0.0, -1.0};
  EXPECT_THROW(fit_gaussian_beta(x, 0.5, opt), std::invalid_argument);
}

TEST(Csv, SummaryAndDensity) {
  const auto x = contaminated(400, 5);
  const std::vector<FitResult> fits{fit_gaussian_mle(x), fit_gaussian_beta(x, 0.5)};
  const auto summary = fit_summary_csv(fits);
  EXPECT_EQ(summary.rfind("method,mu,sigma,beta\nmle,", 0), 0u);
  std::istringstream in(density_csv(x, fits, 20));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,empirical,mle,beta");
  double mass = 0.0, width = 0.0, prev = NAN;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream cells(line);
    std::string c;
    std::getline(cells, c, ',');
    const double center = std::stod(c);
    if (!std::isnan(prev)) width = center - prev;
    prev = center;
    std::getline(cells, c, ',');
    mass += std::stod(c);
  }
  EXPECT_EQ(rows, 20u);
  EXPECT_NEAR(mass * width, 1.0, 1e-9);
}

}  // namespace
}  // namespace rvae
