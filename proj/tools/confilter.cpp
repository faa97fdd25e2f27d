// confilter command-line interface. Each subcommand wraps one pipeline stage;
// stages communicate only through the files named in the run configuration.
// Exit codes: 0 success, 1 record-level failures (see the error manifest),
// 2 configuration or usage errors.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "confilter/commands.hpp"
#include "confilter/errors.hpp"

namespace {

struct Overrides {
    std::string config;
    std::string input;
    std::string output;
    std::string scorer;
    std::optional<double> alpha;
    std::vector<double> alphas;
    std::optional<std::uint64_t> seed;
};

void add_common_options(CLI::App* sub, Overrides& ov, bool with_input = true) {
    sub->add_option("--config", ov.config, "Run configuration file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--alpha", ov.alpha, "Miscoverage rate override, in (0,1)");
    sub->add_option("--alphas", ov.alphas, "Alpha grid override")->delimiter(',');
    sub->add_option("--seed", ov.seed, "Random seed override");
    sub->add_option("--scorer", ov.scorer,
                    "Scorer kind override: lexical, embedding or llm-rating");
    if (with_input) {
        sub->add_option("--input", ov.input, "Primary input file override");
    }
    sub->add_option("--output", ov.output, "Primary output file override");
}

void apply_shared_overrides(confilter::RunConfig& cfg, const Overrides& ov) {
    if (ov.alpha) cfg.alpha = *ov.alpha;
    if (!ov.alphas.empty()) cfg.alphas = ov.alphas;
    if (ov.seed) cfg.seed = *ov.seed;
    if (!ov.scorer.empty()) {
        cfg.scorer.kind = confilter::scorer_kind_from_string(ov.scorer);
        cfg.scorer.scorer_id = ov.scorer;
    }
}

int finish(const confilter::CommandResult& result, const std::string& what) {
    for (const auto& warning : result.warnings) {
        std::cerr << "confilter: warning: " << warning << "\n";
    }
    std::cerr << "confilter: " << what << ": " << result.records_written << " record(s)\n";
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coverage-controlled context filtering via split conformal prediction"};
    app.set_version_flag("--version", "confilter 0.1.0");
    app.require_subcommand(1);

    Overrides ov;
    auto* segment = app.add_subcommand("segment", "Cut documents into snippet windows");
    auto* score = app.add_subcommand("score", "Score snippets against their queries");
    auto* label = app.add_subcommand("label", "Label snippet relevance with the LLM judge");
    auto* calibrate =
        app.add_subcommand("calibrate", "Compute the conformal threshold from labeled scores");
    auto* filter =
        app.add_subcommand("filter", "Apply a stored threshold and assemble contexts");
    auto* report = app.add_subcommand("report", "Sweep alphas and write coverage reports");
    auto* simulate =
        app.add_subcommand("simulate", "Validate the coverage guarantee by Monte Carlo");
    for (auto* sub : {segment, score, label, calibrate, filter, report}) {
        add_common_options(sub, ov);
    }
    add_common_options(simulate, ov, /*with_input=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        confilter::RunConfig cfg = confilter::load_run_config(ov.config);
        apply_shared_overrides(cfg, ov);

        if (segment->parsed()) {
            if (!ov.input.empty()) cfg.documents = ov.input;
            if (!ov.output.empty()) cfg.snippets = ov.output;
            return finish(confilter::cmd_segment(cfg), "segment wrote");
        }
        if (score->parsed()) {
            if (!ov.input.empty()) cfg.snippets = ov.input;
            if (!ov.output.empty()) cfg.scores = ov.output;
            return finish(confilter::cmd_score(cfg), "score wrote");
        }
        if (label->parsed()) {
            if (!ov.input.empty()) cfg.snippets = ov.input;
            if (!ov.output.empty()) cfg.labels = ov.output;
            return finish(confilter::cmd_label(cfg), "label wrote");
        }
        if (calibrate->parsed()) {
            if (!ov.input.empty()) cfg.calibration_scores = ov.input;
            if (!ov.output.empty()) cfg.threshold = ov.output;
            return finish(confilter::cmd_calibrate(cfg), "calibrate wrote");
        }
        if (filter->parsed()) {
            if (!ov.input.empty()) cfg.test_scores = ov.input;
            if (!ov.output.empty()) cfg.outcomes = ov.output;
            return finish(confilter::cmd_filter(cfg), "filter wrote");
        }
        if (report->parsed()) {
            if (!ov.input.empty()) cfg.test_scores = ov.input;
            if (!ov.output.empty()) cfg.report_csv = ov.output;
            return finish(confilter::cmd_report(cfg), "report wrote");
        }
        if (simulate->parsed()) {
            if (!ov.output.empty()) cfg.simulation_csv = ov.output;
            return finish(confilter::cmd_simulate(cfg), "simulate wrote");
        }
    } catch (const confilter::Error& e) {
        std::cerr << "confilter: error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
