#include "confilter/simulator.hpp"

#include <gtest/gtest.h>

namespace confilter {
namespace {

SyntheticDistribution beta_dist() {
    SyntheticDistribution dist;
    dist.kind = DistributionKind::continuous_beta;
    dist.a_pos = 2.0;
    dist.b_pos = 8.0;
    dist.a_neg = 8.0;
    dist.b_neg = 2.0;
    dist.positive_fraction = 0.4;
    return dist;
}

// Positives take the value 0.1, negatives 0.9, so every conformal threshold
// lands on 0.1 and coverage is exactly 1 while removal equals the negative
// fraction of the test draw.
SyntheticDistribution separated_grid() {
    SyntheticDistribution dist;
    dist.kind = DistributionKind::quantized_grid;
    dist.support = {0.1, 0.9};
    dist.pos_probs = {1.0, 0.0};
    dist.neg_probs = {0.0, 1.0};
    dist.positive_fraction = 0.5;
    return dist;
}

TEST(RunTrials, DeterministicGivenSeed) {
    const auto a = run_trials(beta_dist(), 100, 80, {0.1, 0.3}, 50, 7);
    const auto b = run_trials(beta_dist(), 100, 80, {0.1, 0.3}, 50, 7);
    ASSERT_EQ(a.per_alpha.size(), b.per_alpha.size());
    for (std::size_t i = 0; i < a.per_alpha.size(); ++i) {
        EXPECT_EQ(a.per_alpha[i].mean_coverage, b.per_alpha[i].mean_coverage);
        EXPECT_EQ(a.per_alpha[i].mean_removal, b.per_alpha[i].mean_removal);
        EXPECT_EQ(a.per_alpha[i].ci_half_width, b.per_alpha[i].ci_half_width);
    }
    ASSERT_EQ(a.results.size(), b.results.size());
    for (std::size_t i = 0; i < a.results.size(); ++i) {
        EXPECT_EQ(a.results[i].tau, b.results[i].tau);
    }

    const auto c = run_trials(beta_dist(), 100, 80, {0.1, 0.3}, 50, 8);
    EXPECT_NE(a.per_alpha[0].mean_coverage, c.per_alpha[0].mean_coverage);
}

TEST(RunTrials, SingleTrialHandWalk) {
    const auto summary = run_trials(separated_grid(), 3, 4, {0.5}, 1, 1234);
    ASSERT_EQ(summary.results.size(), 1u);
    const TrialResult& r = summary.results.front();
    // rank = ceil((n+1)/2) <= n for every n >= 1, so tau is always the
    // positive support point.
    ASSERT_TRUE(r.tau.has_value());
    EXPECT_DOUBLE_EQ(*r.tau, 0.1);
    ASSERT_TRUE(r.empirical_coverage.has_value() || r.n_test_relevant == 0);
    if (r.empirical_coverage) {
        EXPECT_DOUBLE_EQ(*r.empirical_coverage, 1.0);
    }
    // Exactly the negatives are removed.
    EXPECT_DOUBLE_EQ(r.removal_rate,
                     static_cast<double>(r.n_test_total - r.n_test_relevant) /
                         static_cast<double>(r.n_test_total));
}

TEST(RunTrials, CoverageWithinConformalBand) {
    // 200 trials at moderate sizes: mean coverage must sit in
    // [1-alpha - 3se, 1-alpha + 1/(n+1) + 3se] for continuous scores.
    const auto summary = run_trials(beta_dist(), 300, 200, {0.1, 0.2, 0.4}, 200, 99);
    for (const auto& agg : summary.per_alpha) {
        const double target = 1.0 - agg.alpha;
        const double se3 = 3.0 * agg.coverage_se;
        EXPECT_GE(agg.mean_coverage, target - se3) << "alpha " << agg.alpha;
        EXPECT_LE(agg.mean_coverage, target + agg.mean_rank_slack + se3)
            << "alpha " << agg.alpha;
    }
}

TEST(RunTrials, RemovalMonotoneInTargetCoverage) {
    const auto summary = run_trials(beta_dist(), 200, 150, {0.05, 0.1, 0.2, 0.3, 0.4}, 100, 3);
    for (std::size_t i = 1; i < summary.per_alpha.size(); ++i) {
        EXPECT_LE(summary.per_alpha[i - 1].mean_removal, summary.per_alpha[i].mean_removal);
    }
}

TEST(RunTrials, QuantizedGridOverCoversWithPlateau) {
    SyntheticDistribution dist;
    dist.kind = DistributionKind::quantized_grid;
    dist.support = {0.05, 0.25, 0.5, 0.75, 0.95};
    dist.pos_probs = {0.55, 0.30, 0.08, 0.04, 0.03};
    dist.neg_probs = {0.02, 0.08, 0.20, 0.30, 0.40};
    dist.positive_fraction = 0.5;
    const auto summary =
        run_trials(dist, 1000, 400, {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35}, 100, 11);
    for (const auto& agg : summary.per_alpha) {
        EXPECT_GE(agg.mean_coverage, 1.0 - agg.alpha) << "alpha " << agg.alpha;
    }
    // The empirical quantile stays inside the same support run across these
    // alphas, so their per-trial coverage (and hence the means) coincide.
    const auto& a25 = summary.per_alpha[4];
    const auto& a30 = summary.per_alpha[5];
    EXPECT_EQ(a25.mean_coverage, a30.mean_coverage);
}

TEST(RunTrials, ArgumentValidation) {
    EXPECT_THROW(run_trials(beta_dist(), 0, 10, {0.1}, 5, 1), DomainError);
    EXPECT_THROW(run_trials(beta_dist(), 10, 10, {}, 5, 1), DomainError);
    EXPECT_THROW(run_trials(beta_dist(), 10, 10, {1.5}, 5, 1), DomainError);
    SyntheticDistribution bad = beta_dist();
    bad.positive_fraction = 0.0;
    EXPECT_THROW(run_trials(bad, 10, 10, {0.1}, 5, 1), DomainError);
}

TEST(RunTrials, ZeroPositiveRedrawBudgetExceeded) {
    SyntheticDistribution dist = beta_dist();
    dist.positive_fraction = 1e-12;
    EXPECT_THROW(run_trials(dist, 1, 4, {0.5}, 1, 42), SimulationError);
}

TEST(SizeStudy, SizeOneForcesRetainAllAndFullCoverage) {
    // n = 1, alpha < 0.5: rank = ceil(2(1-alpha)) = 2 > 1 -> retain-all in
    // every trial -> coverage exactly 1. (At alpha = 0.5 exactly the rank is
    // ceil(1.0) = 1 and the single positive becomes the threshold instead.)
    const auto rows = calibration_size_study(beta_dist(), {1}, 0.45, 50, 5, 100);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rows[0].mean_coverage, 1.0);
    EXPECT_DOUBLE_EQ(rows[0].coverage_spread, 0.0);
    EXPECT_DOUBLE_EQ(rows[0].mean_removal, 0.0);
}

TEST(SizeStudy, OverCoverageMarginBoundedByRankSlack) {
    // Margins evaluated at the 1/(n+1) bound plus Monte Carlo tolerance.
    const std::size_t trials = 300;
    const auto rows = calibration_size_study(beta_dist(), {10, 100, 1440}, 0.2, trials, 7, 400);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& row : rows) {
        const double margin = row.mean_coverage - 0.8;
        const double bound = 1.0 / static_cast<double>(row.n_positives + 1);
        const double tol = 3.0 * row.coverage_spread / std::sqrt(static_cast<double>(trials));
        EXPECT_LE(margin, bound + tol) << "n = " << row.n_positives;
        EXPECT_GE(margin, -tol) << "n = " << row.n_positives;
    }
    // Spread shrinks as the calibration set grows.
    EXPECT_GT(rows[0].coverage_spread, rows[2].coverage_spread);
}

TEST(SizeStudy, DeterministicGivenSeed) {
    const auto a = calibration_size_study(beta_dist(), {5, 50}, 0.25, 40, 77, 120);
    const auto b = calibration_size_study(beta_dist(), {5, 50}, 0.25, 40, 77, 120);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].mean_coverage, b[i].mean_coverage);
        EXPECT_EQ(a[i].coverage_spread, b[i].coverage_spread);
    }
}

TEST(DistributionValidation, QuantizedGridInvariants) {
    SyntheticDistribution dist = separated_grid();
    EXPECT_NO_THROW(validate(dist));
    dist.pos_probs = {0.5, 0.4};
    EXPECT_THROW(validate(dist), DomainError);
    dist = separated_grid();
    dist.support = {0.1, 1.5};
    EXPECT_THROW(validate(dist), DomainError);
    dist = separated_grid();
    dist.neg_probs = {0.0};
    EXPECT_THROW(validate(dist), DomainError);
}

}  // namespace
}  // namespace confilter
