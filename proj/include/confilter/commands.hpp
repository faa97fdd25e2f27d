#pragma once

// Pipeline commands behind the CLI: segment -> score -> label -> calibrate ->
// filter -> report, plus the simulator. Stages communicate only through
// files, so any stage can be resumed, audited or swapped for an external
// tool. Commands validate their configuration and referenced inputs before
// writing anything; outputs are written atomically; record-level failures go
// to a machine-readable error manifest and flip the exit code to 1.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "confilter/conformal.hpp"
#include "confilter/errors.hpp"
#include "confilter/gateway.hpp"
#include "confilter/jsonl.hpp"
#include "confilter/scoring.hpp"
#include "confilter/segmenter.hpp"
#include "confilter/simulator.hpp"
#include "confilter/types.hpp"

namespace confilter {

struct SimulationConfig {
    SyntheticDistribution dist;
    std::size_t n_cal = 1000;
    std::size_t n_test = 500;
    std::size_t trials = 200;
};

struct RunConfig {
    // Record files. Empty string = not configured.
    std::string queries;
    std::string documents;
    std::string snippets;
    std::string scores;
    std::string labels;
    std::string raw_verdicts;  // judge audit sidecar
    std::string calibration_scores;
    std::string calibration_labels;
    std::string test_scores;
    std::string test_labels;
    std::string threshold;
    std::string outcomes;
    std::string context;
    std::string reports;
    std::string report_csv;
    std::string plot_data;
    std::string simulation_csv;

    std::optional<double> alpha;
    std::vector<double> alphas;
    std::uint64_t seed = 0;

    SegmenterConfig segmenter;
    ScorerSpec scorer{"lexical", ScorerKind::lexical, "", ""};
    std::map<std::string, GatewayConfig> gateways;
    std::string rating_template;
    std::string judge_template;
    SimulationConfig simulation;

    nlohmann::json raw = nlohmann::json::object();  // as loaded, for the manifest hash
};

struct CommandResult {
    int exit_code = 0;
    std::size_t records_written = 0;
    std::vector<std::string> warnings;
};

// --- config loading -----------------------------------------------------------

namespace detail {

inline std::string get_path(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) {
        throw ConfigError(std::string("config field \"") + key + "\" must be a string path");
    }
    return it->get<std::string>();
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config field \"") + key + "\" has the wrong type");
    }
}

inline GatewayConfig parse_gateway(const nlohmann::json& j) {
    GatewayConfig cfg;
    cfg.base_url = get_or<std::string>(j, "base_url", "");
    cfg.api_key_env = get_or<std::string>(j, "api_key_env", "");
    cfg.embed_model = get_or<std::string>(j, "embed_model", "");
    cfg.chat_model = get_or<std::string>(j, "chat_model", "");
    cfg.max_batch = get_or<int>(j, "max_batch", cfg.max_batch);
    cfg.max_retries = get_or<int>(j, "max_retries", cfg.max_retries);
    cfg.timeout = std::chrono::milliseconds(
        get_or<std::int64_t>(j, "timeout_ms", cfg.timeout.count()));
    cfg.parallelism = get_or<int>(j, "parallelism", cfg.parallelism);
    cfg.backoff = std::chrono::milliseconds(
        get_or<std::int64_t>(j, "backoff_ms", cfg.backoff.count()));
    validate(cfg);
    return cfg;
}

inline SyntheticDistribution parse_distribution(const nlohmann::json& j) {
    SyntheticDistribution dist;
    dist.kind = distribution_kind_from_string(
        get_or<std::string>(j, "kind", "continuous-beta"));
    dist.a_pos = get_or<double>(j, "a_pos", dist.a_pos);
    dist.b_pos = get_or<double>(j, "b_pos", dist.b_pos);
    dist.a_neg = get_or<double>(j, "a_neg", dist.a_neg);
    dist.b_neg = get_or<double>(j, "b_neg", dist.b_neg);
    dist.support = get_or<std::vector<double>>(j, "support", {});
    dist.pos_probs = get_or<std::vector<double>>(j, "pos_probs", {});
    dist.neg_probs = get_or<std::vector<double>>(j, "neg_probs", {});
    dist.positive_fraction = get_or<double>(j, "positive_fraction", dist.positive_fraction);
    validate(dist);
    return dist;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("run config must be a JSON object");
    }
    RunConfig cfg;
    cfg.raw = j;

    cfg.queries = detail::get_path(j, "queries");
    cfg.documents = detail::get_path(j, "documents");
    cfg.snippets = detail::get_path(j, "snippets");
    cfg.scores = detail::get_path(j, "scores");
    cfg.labels = detail::get_path(j, "labels");
    cfg.raw_verdicts = detail::get_path(j, "raw_verdicts");
    cfg.calibration_scores = detail::get_path(j, "calibration_scores");
    cfg.calibration_labels = detail::get_path(j, "calibration_labels");
    cfg.test_scores = detail::get_path(j, "test_scores");
    cfg.test_labels = detail::get_path(j, "test_labels");
    cfg.threshold = detail::get_path(j, "threshold");
    cfg.outcomes = detail::get_path(j, "outcomes");
    cfg.context = detail::get_path(j, "context");
    cfg.reports = detail::get_path(j, "reports");
    cfg.report_csv = detail::get_path(j, "report_csv");
    cfg.plot_data = detail::get_path(j, "plot_data");
    cfg.simulation_csv = detail::get_path(j, "simulation_csv");

    if (j.contains("alpha") && !j.at("alpha").is_null()) {
        cfg.alpha = detail::get_or<double>(j, "alpha", 0.0);
    }
    cfg.alphas = detail::get_or<std::vector<double>>(j, "alphas", {});
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);

    if (j.contains("segmenter")) {
        const auto& s = j.at("segmenter");
        cfg.segmenter.window_chars =
            detail::get_or<std::size_t>(s, "window_chars", cfg.segmenter.window_chars);
        cfg.segmenter.overlap_total_chars = detail::get_or<std::size_t>(
            s, "overlap_total_chars", cfg.segmenter.overlap_total_chars);
        cfg.segmenter.respect_sentences =
            detail::get_or<bool>(s, "respect_sentences", cfg.segmenter.respect_sentences);
        cfg.segmenter.max_boundary_shift_chars = detail::get_or<std::size_t>(
            s, "max_boundary_shift_chars", cfg.segmenter.max_boundary_shift_chars);
    }
    if (j.contains("scorer")) {
        const auto& s = j.at("scorer");
        cfg.scorer.kind =
            scorer_kind_from_string(detail::get_or<std::string>(s, "kind", "lexical"));
        cfg.scorer.scorer_id = detail::get_or<std::string>(
            s, "scorer_id", std::string(to_string(cfg.scorer.kind)));
        cfg.scorer.model_name = detail::get_or<std::string>(s, "model_name", "");
        cfg.scorer.endpoint_ref = detail::get_or<std::string>(s, "endpoint_ref", "");
    }
    if (j.contains("gateways")) {
        const auto& g = j.at("gateways");
        if (!g.is_object()) throw ConfigError("config field \"gateways\" must be an object");
        for (auto it = g.begin(); it != g.end(); ++it) {
            cfg.gateways.emplace(it.key(), detail::parse_gateway(it.value()));
        }
    }
    if (j.contains("prompts")) {
        const auto& p = j.at("prompts");
        cfg.rating_template = detail::get_path(p, "rating_template");
        cfg.judge_template = detail::get_path(p, "judge_template");
    }
    if (j.contains("simulation")) {
        const auto& s = j.at("simulation");
        cfg.simulation.dist = detail::parse_distribution(s);
        cfg.simulation.n_cal = detail::get_or<std::size_t>(s, "n_cal", cfg.simulation.n_cal);
        cfg.simulation.n_test = detail::get_or<std::size_t>(s, "n_test", cfg.simulation.n_test);
        cfg.simulation.trials = detail::get_or<std::size_t>(s, "trials", cfg.simulation.trials);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

// --- shared command plumbing --------------------------------------------------

namespace detail {

inline void require_output(const std::string& path, const char* what) {
    if (path.empty()) {
        throw ConfigError(std::string("config does not name the ") + what + " output file");
    }
}

inline std::filesystem::path require_input(const std::string& path, const char* what) {
    if (path.empty()) {
        throw ConfigError(std::string("config does not name the ") + what + " input file");
    }
    if (!std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " input file does not exist: " + path);
    }
    return path;
}

inline void ensure_parent_dir(const std::filesystem::path& path) {
    const auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    ensure_parent_dir(path);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                      ec.message());
    }
}

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

inline std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(cfg.raw.dump())));
    return buf;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// The run manifest ties every output to the exact configuration, scorer and
// seed that produced it. This is the only artifact allowed to differ between
// identical re-runs (by its timestamp).
inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::filesystem::path& primary_output,
                           const std::vector<std::string>& outputs,
                           const std::string& scorer_id = "",
                           const std::string& template_version = "") {
    nlohmann::json manifest = {
        {"command", command},
        {"config_hash", config_hash(cfg)},
        {"seed", cfg.seed},
        {"outputs", outputs},
        {"timestamp", utc_timestamp()},
    };
    if (!scorer_id.empty()) manifest["scorer_id"] = scorer_id;
    if (!template_version.empty()) manifest["prompt_template_version"] = template_version;
    write_text_atomic(primary_output.string() + ".manifest.json", manifest.dump(2) + "\n");
}

struct RecordFailure {
    std::string id;
    std::string error;
};

inline void write_error_manifest(const std::filesystem::path& primary_output,
                                 const std::vector<RecordFailure>& failures) {
    std::string lines;
    for (const auto& f : failures) {
        lines += nlohmann::json{{"id", f.id}, {"error", f.error}}.dump() + "\n";
    }
    write_text_atomic(primary_output.string() + ".errors.jsonl", lines);
}

inline double single_alpha(const RunConfig& cfg) {
    if (cfg.alpha) return *cfg.alpha;
    if (cfg.alphas.size() == 1) return cfg.alphas.front();
    throw ConfigError("this command needs exactly one alpha (set \"alpha\" in the config)");
}

inline std::vector<double> alpha_list(const RunConfig& cfg) {
    if (!cfg.alphas.empty()) return cfg.alphas;
    if (cfg.alpha) return {*cfg.alpha};
    throw ConfigError("config must set \"alpha\" or \"alphas\"");
}

inline std::unordered_map<std::string, Query> query_index(const std::vector<Query>& queries) {
    std::unordered_map<std::string, Query> by_id;
    for (const auto& q : queries) {
        if (!by_id.emplace(q.id, q).second) {
            throw SchemaError("duplicate query id \"" + q.id + "\"");
        }
    }
    return by_id;
}

// Joins scored snippets with labels into calibration records; both sides must
// match one-to-one or the orphans are listed.
inline std::vector<CalibrationRecord> join_calibration(
    const std::vector<ScoredSnippet>& scored, const std::vector<RelevanceLabel>& labels) {
    std::unordered_map<std::string, const RelevanceLabel*> label_by_key;
    for (const auto& l : labels) {
        label_by_key.emplace(l.query_id + '\x1f' + l.snippet_id, &l);
    }
    std::unordered_set<std::string> scored_keys;
    std::vector<std::string> orphans;
    std::vector<CalibrationRecord> records;
    records.reserve(scored.size());
    for (const auto& s : scored) {
        const std::string key = s.query_id + '\x1f' + s.snippet_id;
        if (!scored_keys.insert(key).second) {
            throw SchemaError("duplicate score for (" + s.query_id + ", " + s.snippet_id + ")");
        }
        auto it = label_by_key.find(key);
        if (it == label_by_key.end()) {
            orphans.push_back("score(" + s.query_id + ", " + s.snippet_id + ")");
            continue;
        }
        records.push_back({s.query_id, s.snippet_id, s.score, s.scorer_id,
                           it->second->relevant, it->second->source});
    }
    for (const auto& l : labels) {
        if (!scored_keys.count(l.query_id + '\x1f' + l.snippet_id)) {
            orphans.push_back("label(" + l.query_id + ", " + l.snippet_id + ")");
        }
    }
    if (!orphans.empty()) {
        std::string msg = "scores and labels do not match; " +
                          std::to_string(orphans.size()) + " orphan(s):";
        const std::size_t shown = std::min<std::size_t>(orphans.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) msg += " " + orphans[i];
        if (orphans.size() > shown) msg += " ...";
        throw DomainError(msg);
    }
    return records;
}

inline std::string csv_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

inline std::string report_csv_text(const std::vector<CoverageReport>& reports) {
    std::string csv = "alpha,target_coverage,empirical_coverage,removal_rate,n_relevant,n_total\n";
    for (const auto& r : reports) {
        csv += format_double(r.alpha) + "," + format_double(1.0 - r.alpha) + "," +
               csv_cell(r.empirical_coverage) + "," + format_double(r.removal_rate) + "," +
               std::to_string(r.n_relevant) + "," + std::to_string(r.n_total) + "\n";
    }
    return csv;
}

inline GatewayConfig resolve_gateway_config(const RunConfig& cfg) {
    validate(cfg.scorer);
    auto it = cfg.gateways.find(cfg.scorer.endpoint_ref);
    if (it == cfg.gateways.end()) {
        throw ConfigError("scorer endpoint_ref \"" + cfg.scorer.endpoint_ref +
                          "\" names no configured gateway");
    }
    GatewayConfig gw = it->second;
    if (gw.embed_model.empty()) gw.embed_model = cfg.scorer.model_name;
    if (gw.chat_model.empty()) gw.chat_model = cfg.scorer.model_name;
    return gw;
}

}  // namespace detail

// --- judge verdict / context records -------------------------------------------

inline void to_json(nlohmann::json& j, const JudgeVerdict& v) {
    j = nlohmann::json{{"query_id", v.query_id},
                       {"snippet_id", v.snippet_id},
                       {"relevant", v.relevant},
                       {"raw_response", v.raw_response}};
}

inline void from_json(const nlohmann::json& j, JudgeVerdict& v) {
    v.query_id = detail::require_string(j, "query_id");
    v.snippet_id = detail::require_string(j, "snippet_id");
    v.relevant = detail::require_bool(j, "relevant");
    v.raw_response = detail::require_string(j, "raw_response");
}

// Concatenated retained context for one query, ready for a downstream
// generator.
struct ContextRecord {
    std::string query_id;
    std::string context;
};

inline void to_json(nlohmann::json& j, const ContextRecord& c) {
    j = nlohmann::json{{"query_id", c.query_id}, {"context", c.context}};
}

inline void from_json(const nlohmann::json& j, ContextRecord& c) {
    c.query_id = detail::require_string(j, "query_id");
    c.context = detail::require_string(j, "context");
}

template <> constexpr const char* record_kind_name<JudgeVerdict>() { return "judge_verdict"; }
template <> constexpr const char* record_kind_name<ContextRecord>() { return "context"; }

// --- commands -------------------------------------------------------------------

// Segments every document into snippet records. A document that fails keeps
// the run alive: its id and error land in the error manifest and the exit
// code becomes nonzero.
inline CommandResult cmd_segment(const RunConfig& cfg) {
    validate(cfg.segmenter);
    const auto input = detail::require_input(cfg.documents, "documents");
    detail::require_output(cfg.snippets, "snippets");

    const auto documents = read_records<Document>(input);
    std::vector<Snippet> snippets;
    std::vector<detail::RecordFailure> failures;
    for (const auto& doc : documents) {
        try {
            auto cut = segment(doc, cfg.segmenter);
            snippets.insert(snippets.end(), std::make_move_iterator(cut.begin()),
                            std::make_move_iterator(cut.end()));
        } catch (const Error& e) {
            failures.push_back({doc.id, e.what()});
        }
    }

    detail::ensure_parent_dir(cfg.snippets);
    write_records(snippets, cfg.snippets);
    CommandResult result;
    result.records_written = snippets.size();
    if (!failures.empty()) {
        detail::write_error_manifest(cfg.snippets, failures);
        result.exit_code = 1;
        result.warnings.push_back(std::to_string(failures.size()) +
                                  " document(s) failed to segment; see error manifest");
    }
    detail::write_manifest(cfg, "segment", cfg.snippets, {cfg.snippets});
    return result;
}

// Scores every snippet against its query with the configured scorer. The
// lexical scorer needs no gateway; embedding and llm-rating resolve their
// endpoint before any file is read.
inline CommandResult cmd_score(const RunConfig& cfg) {
    std::optional<Gateway> gateway;
    PromptTemplate rating_template;
    if (cfg.scorer.kind != ScorerKind::lexical) {
        gateway.emplace(detail::resolve_gateway_config(cfg));
        if (cfg.scorer.kind == ScorerKind::llm_rating) {
            rating_template =
                load_prompt_template(detail::require_input(cfg.rating_template, "rating template"));
        }
    }
    const auto queries_path = detail::require_input(cfg.queries, "queries");
    const auto snippets_path = detail::require_input(cfg.snippets, "snippets");
    detail::require_output(cfg.scores, "scores");

    const auto queries = detail::query_index(read_records<Query>(queries_path));
    const auto snippets = read_records<Snippet>(snippets_path);

    // Group snippet indices per query, keeping the file order within and
    // across groups reproducible.
    std::map<std::string, std::vector<std::size_t>> by_query;
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        if (!queries.count(snippets[i].query_id)) {
            throw DomainError("snippet " + snippets[i].id + " references unknown query \"" +
                              snippets[i].query_id + "\"");
        }
        by_query[snippets[i].query_id].push_back(i);
    }

    std::vector<ScoredSnippet> scored(snippets.size());
    std::string effective_scorer_id = cfg.scorer.scorer_id;
    for (const auto& [query_id, indices] : by_query) {
        const Query& query = queries.at(query_id);
        std::vector<Snippet> group;
        group.reserve(indices.size());
        for (std::size_t i : indices) group.push_back(snippets[i]);

        std::vector<ScoredSnippet> group_scored;
        switch (cfg.scorer.kind) {
            case ScorerKind::lexical:
                group_scored = score_lexical(query, group, cfg.scorer.scorer_id);
                break;
            case ScorerKind::embedding:
                group_scored = score_embedding(query, group, cfg.scorer, *gateway);
                break;
            case ScorerKind::llm_rating:
                group_scored = score_llm(query, group, cfg.scorer, *gateway, rating_template);
                effective_scorer_id = versioned_scorer_id(cfg.scorer, rating_template);
                break;
        }
        for (std::size_t k = 0; k < indices.size(); ++k) {
            scored[indices[k]] = std::move(group_scored[k]);
        }
    }

    detail::ensure_parent_dir(cfg.scores);
    write_records(scored, cfg.scores);
    detail::write_manifest(cfg, "score", cfg.scores, {cfg.scores}, effective_scorer_id,
                           cfg.scorer.kind == ScorerKind::llm_rating ? rating_template.version
                                                                     : std::string());
    return {0, scored.size(), {}};
}

// Labels every (query, snippet) pair with the LLM judge. Raw responses are
// archived to the sidecar verdict file so labels stay auditable; snippets
// whose verdicts stay undecided land in the error manifest.
inline CommandResult cmd_label(const RunConfig& cfg) {
    validate(cfg.scorer);
    const auto rubric =
        load_prompt_template(detail::require_input(cfg.judge_template, "judge template"));
    if (!rubric.has_placeholders()) {
        throw ConfigError("judge rubric must contain {query} and {snippet} placeholders");
    }
    Gateway gateway(detail::resolve_gateway_config(cfg));
    const auto queries_path = detail::require_input(cfg.queries, "queries");
    const auto snippets_path = detail::require_input(cfg.snippets, "snippets");
    detail::require_output(cfg.labels, "labels");
    detail::require_output(cfg.raw_verdicts, "raw_verdicts");

    const auto queries = detail::query_index(read_records<Query>(queries_path));
    const auto snippets = read_records<Snippet>(snippets_path);

    std::vector<RelevanceLabel> labels;
    std::vector<JudgeVerdict> verdicts;
    std::vector<detail::RecordFailure> failures;
    for (const auto& snippet : snippets) {
        auto it = queries.find(snippet.query_id);
        if (it == queries.end()) {
            throw DomainError("snippet " + snippet.id + " references unknown query \"" +
                              snippet.query_id + "\"");
        }
        try {
            JudgeVerdict verdict = gateway.judge_relevance(it->second, snippet, rubric);
            labels.push_back(
                {verdict.query_id, verdict.snippet_id, verdict.relevant, LabelSource::llm_judge});
            verdicts.push_back(std::move(verdict));
        } catch (const LabelingError& e) {
            failures.push_back({snippet.id, e.what()});
        }
    }

    detail::ensure_parent_dir(cfg.labels);
    write_records(labels, cfg.labels);
    detail::ensure_parent_dir(cfg.raw_verdicts);
    write_records(verdicts, cfg.raw_verdicts);
    CommandResult result;
    result.records_written = labels.size();
    if (!failures.empty()) {
        detail::write_error_manifest(cfg.labels, failures);
        result.exit_code = 1;
        result.warnings.push_back(std::to_string(failures.size()) +
                                  " snippet(s) could not be labeled; see error manifest");
    }
    detail::write_manifest(cfg, "label", cfg.labels, {cfg.labels, cfg.raw_verdicts}, "",
                           rubric.version);
    return result;
}

// Joins calibration scores and labels, calibrates at the configured alpha and
// writes a one-record threshold file. Warns when a calibration query id also
// appears in the configured test scores, since topic overlap undermines the
// exchangeability the guarantee rests on.
inline CommandResult cmd_calibrate(const RunConfig& cfg) {
    const double alpha = detail::single_alpha(cfg);
    const std::string scores_path =
        cfg.calibration_scores.empty() ? cfg.scores : cfg.calibration_scores;
    const std::string labels_path =
        cfg.calibration_labels.empty() ? cfg.labels : cfg.calibration_labels;
    const auto scores_file = detail::require_input(scores_path, "calibration scores");
    const auto labels_file = detail::require_input(labels_path, "calibration labels");
    detail::require_output(cfg.threshold, "threshold");

    const auto scored = read_records<ScoredSnippet>(scores_file);
    const auto labels = read_labels_checked(labels_file);
    const auto records = detail::join_calibration(scored, labels);
    const ConformalThreshold threshold = calibrate(records, alpha);

    CommandResult result;
    if (!cfg.test_scores.empty() && std::filesystem::exists(cfg.test_scores)) {
        std::set<std::string> cal_queries;
        for (const auto& s : scored) cal_queries.insert(s.query_id);
        std::set<std::string> overlapping;
        for (const auto& s : read_records<ScoredSnippet>(cfg.test_scores)) {
            if (cal_queries.count(s.query_id)) overlapping.insert(s.query_id);
        }
        if (!overlapping.empty()) {
            std::string msg = "query id(s) appear in both calibration and test scores:";
            for (const auto& q : overlapping) msg += " " + q;
            msg += "; coverage guarantees assume disjoint topics";
            result.warnings.push_back(msg);
        }
    }

    detail::ensure_parent_dir(cfg.threshold);
    write_records(std::vector<ConformalThreshold>{threshold}, cfg.threshold);
    detail::write_manifest(cfg, "calibrate", cfg.threshold, {cfg.threshold},
                           threshold.scorer_id);
    result.records_written = 1;
    return result;
}

// Applies a stored threshold to test scores and assembles the per-query
// context files. Retained snippets are ordered by (document rank, char_start);
// documents without a rank sort last, ties break on doc id.
inline CommandResult cmd_filter(const RunConfig& cfg) {
    const std::string scores_path = cfg.test_scores.empty() ? cfg.scores : cfg.test_scores;
    const auto scores_file = detail::require_input(scores_path, "test scores");
    const auto threshold_file = detail::require_input(cfg.threshold, "threshold");
    const auto snippets_file = detail::require_input(cfg.snippets, "snippets");
    const auto documents_file = detail::require_input(cfg.documents, "documents");
    detail::require_output(cfg.outcomes, "outcomes");
    detail::require_output(cfg.context, "context");

    const auto thresholds = read_records<ConformalThreshold>(threshold_file);
    if (thresholds.size() != 1) {
        throw SchemaError("threshold file must contain exactly one record, found " +
                          std::to_string(thresholds.size()));
    }
    const auto scored = read_records<ScoredSnippet>(scores_file);
    const auto outcomes = apply_filter(scored, thresholds.front());

    std::unordered_map<std::string, const Snippet*> snippet_by_id;
    const auto snippets = read_records<Snippet>(snippets_file);
    for (const auto& s : snippets) snippet_by_id.emplace(s.id, &s);
    std::unordered_map<std::string, const Document*> doc_by_id;
    const auto documents = read_records<Document>(documents_file);
    for (const auto& d : documents) doc_by_id.emplace(d.id, &d);

    struct Piece {
        std::int64_t rank;
        bool ranked;
        std::string doc_id;
        std::size_t char_start;
        const std::string* text;
    };
    std::map<std::string, std::vector<Piece>> retained_by_query;
    for (const auto& o : outcomes) {
        if (!o.retained) continue;
        auto sit = snippet_by_id.find(o.snippet_id);
        if (sit == snippet_by_id.end()) {
            throw DomainError("outcome references unknown snippet \"" + o.snippet_id + "\"");
        }
        const Snippet& snippet = *sit->second;
        auto dit = doc_by_id.find(snippet.doc_id);
        if (dit == doc_by_id.end()) {
            throw DomainError("snippet " + snippet.id + " references unknown document \"" +
                              snippet.doc_id + "\"");
        }
        const auto& rank = dit->second->rank;
        retained_by_query[o.query_id].push_back(
            {rank.value_or(0), rank.has_value(), snippet.doc_id, snippet.char_start,
             &snippet.text});
    }

    std::vector<ContextRecord> contexts;
    contexts.reserve(retained_by_query.size());
    for (auto& [query_id, pieces] : retained_by_query) {
        std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) {
            if (a.ranked != b.ranked) return a.ranked;  // ranked before unranked
            if (a.ranked && a.rank != b.rank) return a.rank < b.rank;
            if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
            return a.char_start < b.char_start;
        });
        std::string context;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            if (i > 0) context += '\n';
            context += *pieces[i].text;
        }
        contexts.push_back({query_id, std::move(context)});
    }

    detail::ensure_parent_dir(cfg.outcomes);
    write_records(outcomes, cfg.outcomes);
    detail::ensure_parent_dir(cfg.context);
    write_records(contexts, cfg.context);
    detail::write_manifest(cfg, "filter", cfg.outcomes, {cfg.outcomes, cfg.context},
                           thresholds.front().scorer_id);
    return {0, outcomes.size(), {}};
}

// Sweeps the alpha grid with calibrate -> filter -> evaluate and writes the
// coverage report rows (JSONL + CSV) plus plot-ready triples.
inline CommandResult cmd_report(const RunConfig& cfg) {
    const auto alphas = detail::alpha_list(cfg);
    const auto cal_scores_file =
        detail::require_input(cfg.calibration_scores.empty() ? cfg.scores : cfg.calibration_scores,
                              "calibration scores");
    const auto cal_labels_file =
        detail::require_input(cfg.calibration_labels.empty() ? cfg.labels : cfg.calibration_labels,
                              "calibration labels");
    const auto test_scores_file = detail::require_input(cfg.test_scores, "test scores");
    const auto test_labels_file = detail::require_input(cfg.test_labels, "test labels");
    detail::require_output(cfg.report_csv, "report_csv");

    const auto calibration = detail::join_calibration(
        read_records<ScoredSnippet>(cal_scores_file), read_labels_checked(cal_labels_file));
    const auto test_scored = read_records<ScoredSnippet>(test_scores_file);
    const auto test_labels = read_labels_checked(test_labels_file);

    const auto reports = sweep(calibration, test_scored, test_labels, alphas);

    detail::write_text_atomic(cfg.report_csv, detail::report_csv_text(reports));
    std::vector<std::string> outputs = {cfg.report_csv};
    if (!cfg.reports.empty()) {
        detail::ensure_parent_dir(cfg.reports);
        write_records(reports, cfg.reports);
        outputs.push_back(cfg.reports);
    }
    if (!cfg.plot_data.empty()) {
        std::string plot = "target_coverage,empirical_coverage,removal_rate\n";
        for (const auto& r : reports) {
            plot += format_double(1.0 - r.alpha) + "," +
                    detail::csv_cell(r.empirical_coverage) + "," +
                    format_double(r.removal_rate) + "\n";
        }
        detail::write_text_atomic(cfg.plot_data, plot);
        outputs.push_back(cfg.plot_data);
    }
    detail::write_manifest(cfg, "report", cfg.report_csv, outputs,
                           reports.empty() ? "" : reports.front().scorer_id);
    return {0, reports.size(), {}};
}

// Runs the Monte Carlo validation and writes per-alpha aggregates in the
// coverage-report CSV shape plus (trials, ci_half_width). The count columns
// are totals across trials; the rate columns are means of per-trial rates.
inline CommandResult cmd_simulate(const RunConfig& cfg) {
    detail::require_output(cfg.simulation_csv, "simulation_csv");
    std::vector<double> alphas = cfg.alphas;
    if (alphas.empty()) {
        alphas = cfg.alpha ? std::vector<double>{*cfg.alpha}
                           : std::vector<double>{0.05, 0.10, 0.20, 0.40};
    }

    const SimulationSummary summary =
        run_trials(cfg.simulation.dist, cfg.simulation.n_cal, cfg.simulation.n_test, alphas,
                   cfg.simulation.trials, cfg.seed);

    std::string csv =
        "alpha,target_coverage,empirical_coverage,removal_rate,n_relevant,n_total,trials,"
        "ci_half_width\n";
    for (const auto& agg : summary.per_alpha) {
        csv += format_double(agg.alpha) + "," + format_double(1.0 - agg.alpha) + "," +
               format_double(agg.mean_coverage) + "," + format_double(agg.mean_removal) + "," +
               std::to_string(agg.total_relevant) + "," + std::to_string(agg.total_snippets) +
               "," + std::to_string(agg.trials) + "," + format_double(agg.ci_half_width) + "\n";
    }
    detail::write_text_atomic(cfg.simulation_csv, csv);
    detail::write_manifest(cfg, "simulate", cfg.simulation_csv, {cfg.simulation_csv});
    return {0, summary.per_alpha.size(), {}};
}

}  // namespace confilter
