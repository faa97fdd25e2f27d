#pragma once

// Monte Carlo test-bed for the split conformal guarantee. Calibration and
// test sets are drawn i.i.d. from the same synthetic distribution (hence
// exchangeable) and pushed through the production calibrate -> apply_filter
// -> evaluate path; nothing here reimplements the conformal rule. Fixed seed
// plus per-trial substreams make every aggregate reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "confilter/conformal.hpp"
#include "confilter/errors.hpp"
#include "confilter/rng.hpp"
#include "confilter/types.hpp"

namespace confilter {

enum class DistributionKind { continuous_beta, quantized_grid };

// Class-conditional score distributions on [0, 1]: positives concentrated low
// (relevant snippets score well), negatives high. continuous-beta draws from
// Beta(a, b) per class; quantized-grid draws from a finite support set, which
// models coarse LLM rating bins.
struct SyntheticDistribution {
    DistributionKind kind = DistributionKind::continuous_beta;
    double a_pos = 2.0, b_pos = 8.0;
    double a_neg = 8.0, b_neg = 2.0;
    std::vector<double> support;    // quantized-grid only
    std::vector<double> pos_probs;  // class-conditional probabilities over support
    std::vector<double> neg_probs;
    double positive_fraction = 0.3;
};

inline void validate(const SyntheticDistribution& dist) {
    if (!(dist.positive_fraction > 0.0 && dist.positive_fraction < 1.0)) {
        throw DomainError("positive_fraction must lie in (0,1)");
    }
    if (dist.kind == DistributionKind::continuous_beta) {
        if (!(dist.a_pos > 0.0 && dist.b_pos > 0.0 && dist.a_neg > 0.0 && dist.b_neg > 0.0)) {
            throw DomainError("beta shape parameters must be > 0");
        }
        return;
    }
    if (dist.support.empty() || dist.pos_probs.size() != dist.support.size() ||
        dist.neg_probs.size() != dist.support.size()) {
        throw DomainError("quantized-grid support and probabilities must have equal nonzero size");
    }
    double pos_sum = 0.0, neg_sum = 0.0;
    for (std::size_t i = 0; i < dist.support.size(); ++i) {
        if (!(dist.support[i] >= 0.0 && dist.support[i] <= 1.0)) {
            throw DomainError("quantized-grid support must lie within [0,1]");
        }
        if (dist.pos_probs[i] < 0.0 || dist.neg_probs[i] < 0.0) {
            throw DomainError("quantized-grid probabilities must be >= 0");
        }
        pos_sum += dist.pos_probs[i];
        neg_sum += dist.neg_probs[i];
    }
    if (std::abs(pos_sum - 1.0) > 1e-9 || std::abs(neg_sum - 1.0) > 1e-9) {
        throw DomainError("quantized-grid class probabilities must each sum to 1");
    }
}

inline std::string_view to_string(DistributionKind k) {
    return k == DistributionKind::continuous_beta ? "continuous-beta" : "quantized-grid";
}

inline DistributionKind distribution_kind_from_string(std::string_view s) {
    if (s == "continuous-beta") return DistributionKind::continuous_beta;
    if (s == "quantized-grid") return DistributionKind::quantized_grid;
    throw ConfigError("unknown distribution kind: \"" + std::string(s) + "\"");
}

// One calibrate -> filter -> evaluate pass; a point on a coverage curve.
struct TrialResult {
    double alpha = 0.0;
    std::int64_t n_cal_positives = 0;
    std::optional<double> empirical_coverage;  // nullopt when the test draw had no positives
    double removal_rate = 0.0;
    std::optional<double> tau;  // nullopt = retain-all
    std::int64_t n_test_relevant = 0;
    std::int64_t n_test_total = 0;
};

struct AlphaAggregate {
    double alpha = 0.0;
    std::int64_t trials = 0;
    std::int64_t trials_with_coverage = 0;
    double mean_coverage = 0.0;
    double coverage_stddev = 0.0;
    double coverage_se = 0.0;      // stddev / sqrt(trials_with_coverage)
    double ci_half_width = 0.0;    // 1.96 * coverage_se
    double mean_removal = 0.0;
    double mean_rank_slack = 0.0;  // mean of 1/(n_cal_positives + 1), the over-coverage bound
    std::int64_t total_relevant = 0;  // summed across trials
    std::int64_t total_snippets = 0;
};

struct SimulationSummary {
    std::vector<AlphaAggregate> per_alpha;  // ordered by alpha ascending
    std::vector<TrialResult> results;       // trial-major, alpha ascending within a trial
};

namespace detail {

inline double draw_score(std::mt19937_64& gen, const SyntheticDistribution& dist,
                         bool relevant) {
    if (dist.kind == DistributionKind::continuous_beta) {
        return relevant ? rng::sample_beta(gen, dist.a_pos, dist.b_pos)
                        : rng::sample_beta(gen, dist.a_neg, dist.b_neg);
    }
    const auto& probs = relevant ? dist.pos_probs : dist.neg_probs;
    double u = rng::uniform01(gen);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        u -= probs[i];
        if (u < 0.0) return dist.support[i];
    }
    return dist.support.back();
}

struct DrawnSet {
    std::vector<CalibrationRecord> calibration;
    std::vector<ScoredSnippet> test_scored;
    std::vector<RelevanceLabel> test_labels;
    std::int64_t n_cal_positives = 0;
};

constexpr int kRedrawBudget = 100;
constexpr const char* kSimScorer = "sim";
constexpr const char* kSimQuery = "q";

inline DrawnSet draw_trial(std::mt19937_64& gen, const SyntheticDistribution& dist,
                           std::size_t n_cal, std::size_t n_test) {
    DrawnSet set;

    // A calibration draw with zero positives cannot be calibrated; redraw it,
    // within budget.
    for (int redraw = 0;; ++redraw) {
        if (redraw > kRedrawBudget) {
            throw SimulationError("drew zero calibration positives " +
                                  std::to_string(kRedrawBudget + 1) +
                                  " times in a row; increase n_cal or positive_fraction");
        }
        set.calibration.clear();
        set.n_cal_positives = 0;
        for (std::size_t i = 0; i < n_cal; ++i) {
            const bool relevant = rng::uniform01(gen) < dist.positive_fraction;
            const double score = draw_score(gen, dist, relevant);
            if (relevant) ++set.n_cal_positives;
            set.calibration.push_back({kSimQuery, "c" + std::to_string(i), score, kSimScorer,
                                       relevant, LabelSource::synthetic});
        }
        if (set.n_cal_positives > 0) break;
    }

    set.test_scored.reserve(n_test);
    set.test_labels.reserve(n_test);
    for (std::size_t i = 0; i < n_test; ++i) {
        const bool relevant = rng::uniform01(gen) < dist.positive_fraction;
        const double score = draw_score(gen, dist, relevant);
        const std::string id = "t" + std::to_string(i);
        set.test_scored.push_back({kSimQuery, id, score, kSimScorer});
        set.test_labels.push_back({kSimQuery, id, relevant, LabelSource::synthetic});
    }
    return set;
}

inline std::vector<AlphaAggregate> aggregate(const std::vector<double>& alphas,
                                             const std::vector<TrialResult>& results) {
    std::vector<AlphaAggregate> aggregates;
    aggregates.reserve(alphas.size());
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        AlphaAggregate agg;
        agg.alpha = alphas[a];
        double cov_sum = 0.0, removal_sum = 0.0, slack_sum = 0.0;
        for (std::size_t i = a; i < results.size(); i += alphas.size()) {
            const TrialResult& r = results[i];
            ++agg.trials;
            removal_sum += r.removal_rate;
            slack_sum += 1.0 / static_cast<double>(r.n_cal_positives + 1);
            agg.total_relevant += r.n_test_relevant;
            agg.total_snippets += r.n_test_total;
            if (r.empirical_coverage) {
                ++agg.trials_with_coverage;
                cov_sum += *r.empirical_coverage;
            }
        }
        agg.mean_removal = removal_sum / static_cast<double>(agg.trials);
        agg.mean_rank_slack = slack_sum / static_cast<double>(agg.trials);
        if (agg.trials_with_coverage > 0) {
            agg.mean_coverage = cov_sum / static_cast<double>(agg.trials_with_coverage);
            double ss = 0.0;
            for (std::size_t i = a; i < results.size(); i += alphas.size()) {
                if (results[i].empirical_coverage) {
                    const double d = *results[i].empirical_coverage - agg.mean_coverage;
                    ss += d * d;
                }
            }
            if (agg.trials_with_coverage > 1) {
                agg.coverage_stddev =
                    std::sqrt(ss / static_cast<double>(agg.trials_with_coverage - 1));
                agg.coverage_se = agg.coverage_stddev /
                                  std::sqrt(static_cast<double>(agg.trials_with_coverage));
                agg.ci_half_width = 1.96 * agg.coverage_se;
            }
        }
        aggregates.push_back(agg);
    }
    return aggregates;
}

}  // namespace detail

// Draws `trials` independent calibration/test pairs of sizes n_cal and n_test
// (labels Bernoulli(positive_fraction), scores class-conditional) and runs
// the conformal pipeline at every alpha. Results and aggregates are
// deterministic functions of (dist, n_cal, n_test, alphas, trials, seed).
inline SimulationSummary run_trials(const SyntheticDistribution& dist, std::size_t n_cal,
                                    std::size_t n_test, std::vector<double> alphas,
                                    std::size_t trials, std::uint64_t seed) {
    validate(dist);
    if (n_cal < 1 || n_test < 1 || trials < 1) {
        throw DomainError("n_cal, n_test and trials must each be >= 1");
    }
    if (alphas.empty()) {
        throw DomainError("at least one alpha is required");
    }
    for (double alpha : alphas) {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw DomainError("alpha must lie strictly in (0,1), got " + std::to_string(alpha));
        }
    }
    std::sort(alphas.begin(), alphas.end());

    SimulationSummary summary;
    summary.results.reserve(trials * alphas.size());
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto gen = rng::substream(seed, trial);
        const detail::DrawnSet set = detail::draw_trial(gen, dist, n_cal, n_test);
        for (double alpha : alphas) {
            const ConformalThreshold threshold = calibrate(set.calibration, alpha);
            const auto outcomes = apply_filter(set.test_scored, threshold);
            const CoverageReport report = evaluate(outcomes, set.test_labels);
            summary.results.push_back({alpha, set.n_cal_positives, report.empirical_coverage,
                                       report.removal_rate, threshold.tau, report.n_relevant,
                                       report.n_total});
        }
    }
    summary.per_alpha = detail::aggregate(alphas, summary.results);
    return summary;
}

struct SizeStudyRow {
    std::int64_t n_positives = 0;
    double mean_coverage = 0.0;
    double coverage_spread = 0.0;  // stddev of per-trial coverage
    double mean_removal = 0.0;
};

// Coverage as a function of calibration size: each trial draws exactly
// n positive calibration scores, so the over-coverage margin is bounded by
// 1/(n+1) per row and the spread shrinks as n grows.
inline std::vector<SizeStudyRow> calibration_size_study(const SyntheticDistribution& dist,
                                                        const std::vector<std::int64_t>& sizes,
                                                        double alpha, std::size_t trials,
                                                        std::uint64_t seed,
                                                        std::size_t n_test = 500) {
    validate(dist);
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("alpha must lie strictly in (0,1)");
    }
    if (trials < 1 || n_test < 1) {
        throw DomainError("trials and n_test must each be >= 1");
    }
    for (auto n : sizes) {
        if (n < 1) throw DomainError("calibration sizes must be >= 1");
    }

    std::vector<SizeStudyRow> rows;
    rows.reserve(sizes.size());
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        const auto n = static_cast<std::size_t>(sizes[si]);
        std::vector<double> coverages;
        coverages.reserve(trials);
        double removal_sum = 0.0;
        for (std::size_t trial = 0; trial < trials; ++trial) {
            auto gen = rng::substream(seed, si * trials + trial);

            std::vector<CalibrationRecord> calibration;
            calibration.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                calibration.push_back({detail::kSimQuery, "c" + std::to_string(i),
                                       detail::draw_score(gen, dist, true), detail::kSimScorer,
                                       true, LabelSource::synthetic});
            }

            // Test draws with zero positives leave coverage undefined; redraw
            // within the same budget the trial runner uses.
            std::vector<ScoredSnippet> test_scored;
            std::vector<RelevanceLabel> test_labels;
            for (int redraw = 0;; ++redraw) {
                if (redraw > detail::kRedrawBudget) {
                    throw SimulationError("drew zero test positives " +
                                          std::to_string(detail::kRedrawBudget + 1) +
                                          " times in a row; increase n_test or positive_fraction");
                }
                test_scored.clear();
                test_labels.clear();
                std::int64_t positives = 0;
                for (std::size_t i = 0; i < n_test; ++i) {
                    const bool relevant = rng::uniform01(gen) < dist.positive_fraction;
                    const double score = detail::draw_score(gen, dist, relevant);
                    const std::string id = "t" + std::to_string(i);
                    test_scored.push_back({detail::kSimQuery, id, score, detail::kSimScorer});
                    test_labels.push_back({detail::kSimQuery, id, relevant,
                                           LabelSource::synthetic});
                    if (relevant) ++positives;
                }
                if (positives > 0) break;
            }

            const ConformalThreshold threshold = calibrate(calibration, alpha);
            const auto outcomes = apply_filter(test_scored, threshold);
            const CoverageReport report = evaluate(outcomes, test_labels);
            coverages.push_back(*report.empirical_coverage);
            removal_sum += report.removal_rate;
        }

        SizeStudyRow row;
        row.n_positives = sizes[si];
        double sum = 0.0;
        for (double c : coverages) sum += c;
        row.mean_coverage = sum / static_cast<double>(coverages.size());
        double ss = 0.0;
        for (double c : coverages) {
            const double d = c - row.mean_coverage;
            ss += d * d;
        }
        row.coverage_spread = coverages.size() > 1
                                  ? std::sqrt(ss / static_cast<double>(coverages.size() - 1))
                                  : 0.0;
        row.mean_removal = removal_sum / static_cast<double>(trials);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace confilter
