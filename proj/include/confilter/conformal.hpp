#pragma once

// Split conformal calibration, threshold filtering and coverage metrics.
//
// The threshold is the explicit order statistic from the split conformal
// construction: the ceiling((n+1)(1-alpha))-th smallest positive calibration
// score. No interpolating quantile estimator is used anywhere; interpolation
// would void the finite-sample guarantee. Test scores are compared with exact
// floating-point <= (the threshold is itself one of the calibration scores,
// so exact comparison preserves the rank semantics).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "confilter/errors.hpp"
#include "confilter/types.hpp"

namespace confilter {

inline std::int64_t conformal_rank(std::int64_t n_positives, double alpha) {
    return static_cast<std::int64_t>(
        std::ceil(static_cast<double>(n_positives + 1) * (1.0 - alpha)));
}

// Computes the filtering threshold from a labeled calibration set. Negative
// (irrelevant) records are accepted and ignored; the quantile is taken over
// positive scores only, duplicates counted with multiplicity. Deterministic
// and independent of input order. When the rank exceeds the number of
// positives the retain-all sentinel is returned.
inline ConformalThreshold calibrate(const std::vector<CalibrationRecord>& records,
                                    double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("alpha must lie strictly in (0,1), got " + std::to_string(alpha));
    }
    std::string scorer_id;
    std::vector<double> positives;
    positives.reserve(records.size());
    for (const auto& r : records) {
        if (!std::isfinite(r.score)) {
            throw DomainError("calibration score must be finite (snippet_id=" + r.snippet_id +
                              ")");
        }
        if (scorer_id.empty()) {
            scorer_id = r.scorer_id;
        } else if (r.scorer_id != scorer_id) {
            throw CalibrationError("mixed scorer ids in calibration set: \"" + scorer_id +
                                   "\" vs \"" + r.scorer_id + "\"");
        }
        if (r.relevant) positives.push_back(r.score);
    }
    if (positives.empty()) {
        throw CalibrationError("calibration set contains no positive (relevant) records");
    }

    const auto n = static_cast<std::int64_t>(positives.size());
    const std::int64_t rank = conformal_rank(n, alpha);

    ConformalThreshold threshold;
    threshold.alpha = alpha;
    threshold.n_positives = n;
    threshold.rank = rank;
    threshold.scorer_id = scorer_id;
    if (rank > n) {
        threshold.tau.reset();
    } else {
        std::nth_element(positives.begin(), positives.begin() + (rank - 1), positives.end());
        threshold.tau = positives[rank - 1];
    }
    return threshold;
}

// Applies the retention rule score <= tau, sentinel retaining everything.
// Output order equals input order and sizes match. Filtering with a threshold
// calibrated on a different score scale is invalid, so scorer ids must match.
inline std::vector<FilterOutcome> apply_filter(const std::vector<ScoredSnippet>& scored,
                                               const ConformalThreshold& threshold) {
    std::vector<FilterOutcome> outcomes;
    outcomes.reserve(scored.size());
    for (const auto& s : scored) {
        if (s.scorer_id != threshold.scorer_id) {
            throw DomainError("scorer mismatch: snippet " + s.snippet_id + " scored by \"" +
                              s.scorer_id + "\" but threshold calibrated for \"" +
                              threshold.scorer_id + "\"");
        }
        if (!std::isfinite(s.score)) {
            throw DomainError("score must be finite (snippet_id=" + s.snippet_id + ")");
        }
        const bool retained = threshold.retain_all() || s.score <= *threshold.tau;
        outcomes.push_back({s.query_id, s.snippet_id, s.score, retained, threshold});
    }
    return outcomes;
}

// Tallies empirical coverage (retained relevant / relevant) and removal rate
// (removed / total). Coverage is flagged undefined when the test set has no
// relevant snippets. Every outcome must have exactly one matching label.
inline CoverageReport evaluate(const std::vector<FilterOutcome>& outcomes,
                               const std::vector<RelevanceLabel>& labels) {
    if (outcomes.empty()) {
        throw DomainError("cannot evaluate an empty outcome set");
    }
    std::unordered_map<std::string, bool> label_by_key;
    label_by_key.reserve(labels.size());
    for (const auto& l : labels) {
        const std::string key = l.query_id + '\x1f' + l.snippet_id;
        if (!label_by_key.emplace(key, l.relevant).second) {
            throw SchemaError("duplicate label for (" + l.query_id + ", " + l.snippet_id + ")");
        }
    }

    const ConformalThreshold& threshold = outcomes.front().threshold;
    CoverageReport report;
    report.alpha = threshold.alpha;
    report.scorer_id = threshold.scorer_id;
    report.n_total = static_cast<std::int64_t>(outcomes.size());

    std::vector<std::string> unmatched;
    for (const auto& o : outcomes) {
        if (o.threshold.alpha != threshold.alpha || o.threshold.scorer_id != threshold.scorer_id) {
            throw DomainError("outcomes mix thresholds; evaluate one (alpha, scorer) cell at a time");
        }
        auto it = label_by_key.find(o.query_id + '\x1f' + o.snippet_id);
        if (it == label_by_key.end()) {
            unmatched.push_back("(" + o.query_id + ", " + o.snippet_id + ")");
            continue;
        }
        if (!o.retained) ++report.n_removed;
        if (it->second) {
            ++report.n_relevant;
            if (o.retained) ++report.n_relevant_retained;
        }
    }
    if (!unmatched.empty()) {
        std::string msg = "missing labels for " + std::to_string(unmatched.size()) +
                          " outcome(s):";
        const std::size_t shown = std::min<std::size_t>(unmatched.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) msg += " " + unmatched[i];
        if (unmatched.size() > shown) msg += " ...";
        throw DomainError(msg);
    }

    if (report.n_relevant > 0) {
        report.empirical_coverage = static_cast<double>(report.n_relevant_retained) /
                                    static_cast<double>(report.n_relevant);
    }
    report.removal_rate =
        static_cast<double>(report.n_removed) / static_cast<double>(report.n_total);
    return report;
}

// calibrate -> apply_filter -> evaluate for each alpha; reports come back
// ordered by alpha ascending regardless of input order.
inline std::vector<CoverageReport> sweep(const std::vector<CalibrationRecord>& calibration,
                                         const std::vector<ScoredSnippet>& test_scored,
                                         const std::vector<RelevanceLabel>& test_labels,
                                         std::vector<double> alphas) {
    std::sort(alphas.begin(), alphas.end());
    std::vector<CoverageReport> reports;
    reports.reserve(alphas.size());
    for (double alpha : alphas) {
        const ConformalThreshold threshold = calibrate(calibration, alpha);
        const auto outcomes = apply_filter(test_scored, threshold);
        reports.push_back(evaluate(outcomes, test_labels));
    }
    return reports;
}

}  // namespace confilter
