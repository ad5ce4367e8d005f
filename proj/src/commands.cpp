#include "sisfm/commands.hpp"

#include "sisfm/error.hpp"

#include <ostream>

namespace sisfm {

namespace fs = std::filesystem;

namespace {

const Json& section(const Json& doc, const char* key) {
    static const Json empty = Json::object();
    if (!doc.contains(key)) return empty;
    const Json& s = doc.at(key);
    if (!s.is_object()) throw ArgumentError(std::string("config: '") + key + "' must be an object");
    return s;
}

template <class T>
T get_or(const Json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ArgumentError(std::string("config: key '") + key + "' has the wrong type");
    }
}

void check_keys(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ArgumentError("config: unknown key '" + where + "." + it.key() + "'");
    }
}

/// Hyperparameters with c_p absent or "auto" resolved to 2e log(p)/p.
Hyperparameters resolve_hyper(const Json& doc, Eigen::Index p, DataMode mode) {
    Json h = section(doc, "hyper");
    Hyperparameters base;
    if (mode == DataMode::probit) base.alpha = 4.0;
    bool auto_offset = true;
    if (h.contains("c_p")) {
        if (h.at("c_p").is_string()) {
            if (h.at("c_p").get<std::string>() != "auto") throw ArgumentError("config: hyper.c_p must be a number or \"auto\"");
            h.erase("c_p");
        } else {
            auto_offset = false;
        }
    }
    if (auto_offset) {
        base.c_p = Hyperparameters::default_offset(p);
        if (!(base.c_p < 1.0))
            throw ArgumentError("the default c_p = 2e log(p)/p is not below 1 for p = " + std::to_string(p) +
                                "; set hyper.c_p explicitly");
    }
    Hyperparameters hyper = hyper_from_json(h, base);
    hyper.validate();
    return hyper;
}

ChainConfig resolve_chain(const Json& doc, DataMode mode) {
    ChainConfig c = chain_config_from_json(section(doc, "chain"), ChainConfig::defaults(mode));
    c.validate();
    return c;
}

SummaryOptions resolve_summary(const Json& doc, int threads) {
    const Json& s = section(doc, "summary");
    check_keys(s, {"lpml_per_observation", "edge_threshold", "cv_folds"}, "summary");
    SummaryOptions o;
    o.lpml_per_observation = get_or(s, "lpml_per_observation", o.lpml_per_observation);
    o.edge_threshold = get_or(s, "edge_threshold", o.edge_threshold);
    o.cv_folds = get_or(s, "cv_folds", o.cv_folds);
    if (o.edge_threshold < 0.0) throw ArgumentError("summary.edge_threshold must be non-negative");
    if (o.cv_folds < 0 || o.cv_folds == 1) throw ArgumentError("summary.cv_folds must be 0 or at least 2");
    o.threads = threads;
    return o;
}

LoadedData resolve_data(const Json& doc) {
    const Json& d = section(doc, "data");
    check_keys(d, {"y", "x", "w", "mode", "categorical_x", "categorical_w", "standardize_x", "standardize_w"}, "data");
    if (!d.contains("y")) throw ArgumentError("config: data.y (response CSV) is required");
    DataPaths paths;
    paths.y = get_or<std::string>(d, "y", "");
    paths.x = get_or<std::string>(d, "x", "");
    paths.w = get_or<std::string>(d, "w", "");
    LoadOptions lo;
    lo.mode = data_mode_from_string(get_or<std::string>(d, "mode", "gaussian"));
    lo.x.categorical = get_or(d, "categorical_x", std::vector<std::string>{});
    lo.w.categorical = get_or(d, "categorical_w", std::vector<std::string>{});
    lo.x.standardize = get_or(d, "standardize_x", true);
    lo.w.standardize = get_or(d, "standardize_w", true);
    return load_dataset(paths, lo);
}

void write_summary_artifacts(const fs::path& dir, const SummaryReport& report, const SummaryOptions& options,
                             const LoadedData& loaded) {
    write_json_atomic(dir / "summary.json", to_json(report, options));
    std::vector<std::string> factor_names;
    for (Eigen::Index h = 0; h < report.lambda_map.cols(); ++h) factor_names.push_back("factor" + std::to_string(h + 1));
    write_matrix_csv(dir / "lambda_map.csv", report.lambda_map, factor_names);
    write_matrix_csv(dir / "correlation.csv", report.network.mean_correlation, loaded.variables);
    write_matrix_csv(dir / "partial_correlation.csv", report.network.partial_correlation, loaded.variables);
    write_text_atomic(dir / "edges.csv", edges_csv(report.network.edges, loaded.variables));
}

int run_fit(const Json& doc, const CliOptions& options, std::ostream& out) {
    const LoadedData loaded = resolve_data(doc);
    const Hyperparameters hyper = resolve_hyper(doc, loaded.data.p(), loaded.data.mode);
    ChainConfig cfg = resolve_chain(doc, loaded.data.mode);
    if (options.seed) cfg.seed = *options.seed;
    const SummaryOptions sopt = resolve_summary(doc, options.threads);
    ChainOutput chain = run_chain(loaded.data, hyper, cfg);
    const SummaryReport report = summarize_chain(chain, loaded.data, hyper, sopt);

    write_json_atomic(options.output / "chain.json", to_json(chain));
    CsvTable trace;
    trace.header = {"iteration", "H", "H_active"};
    for (std::size_t t = 0; t < chain.h_trace.size(); ++t)
        trace.rows.push_back({std::to_string(t + 1), std::to_string(chain.h_trace[t]), std::to_string(chain.h_active_trace[t])});
    write_text_atomic(options.output / "trace.csv", format_csv(trace));
    write_summary_artifacts(options.output, report, sopt, loaded);
    out << "fit: " << chain.draws.size() << " draws, E(H_a|y) = " << report.e_h_active
        << ", LPML = " << report.lpml.lpml << ", wrote " << options.output.string() << "\n";
    return 0;
}

int run_summarize(const Json& doc, const CliOptions& options, std::ostream& out) {
    const LoadedData loaded = resolve_data(doc);
    const Hyperparameters hyper = resolve_hyper(doc, loaded.data.p(), loaded.data.mode);
    const Json& in = section(doc, "input");
    check_keys(in, {"chain"}, "input");
    const fs::path chain_path = get_or<std::string>(in, "chain", (options.output / "chain.json").string());
    ChainOutput chain = chain_from_json(read_json(chain_path));
    if (chain.mode != loaded.data.mode) throw ArgumentError("summarize: chain and data modes differ");
    // Recompute densities from the draws so the report does not depend on stored values.
    chain.log_density.clear();
    const SummaryOptions sopt = resolve_summary(doc, options.threads);
    const SummaryReport report = summarize_chain(chain, loaded.data, hyper, sopt);
    write_summary_artifacts(options.output, report, sopt, loaded);
    out << "summarize: " << chain.draws.size() << " draws, wrote " << options.output.string() << "\n";
    return 0;
}

int run_simulate(const Json& doc, const CliOptions& options, std::ostream& out) {
    const Json& sim = section(doc, "simulation");
    check_keys(sim, {"include_timing"}, "simulation");
    ScenarioSpec spec = scenario_from_json(section(doc, "scenario"));
    if (options.seed) spec.seed = *options.seed;
    spec.validate();
    SimulationSettings settings;
    const Json& h = section(doc, "hyper");
    settings.default_offset = !h.contains("c_p") || h.at("c_p").is_string();
    settings.hyper = resolve_hyper(doc, spec.p, DataMode::gaussian);
    settings.chain = resolve_chain(doc, DataMode::gaussian);
    if (options.seed) settings.chain.seed = *options.seed;
    settings.threads = options.threads;
    const bool timing = get_or(sim, "include_timing", false);
    const MetricsReport report = run_replicates(spec, settings);
    write_text_atomic(options.output / "metrics.csv", metrics_csv(report, timing));
    write_json_atomic(options.output / "metrics.json", to_json(report, timing));
    out << "simulate: scenario " << to_string(spec.scenario) << ", " << report.replicates.size()
        << " replicates (" << report.failures << " failed), median E(H_a|y) = " << report.e_h_active.median
        << ", median LPML = " << report.lpml.median << "\n";
    return report.failures == static_cast<int>(report.replicates.size()) ? 1 : 0;
}

int run_prior_check_command(const Json& doc, const CliOptions& options, std::ostream& out) {
    const Json& pc = section(doc, "prior_check");
    check_keys(pc,
               {"family", "p", "H", "n_draws", "mgp", "cusp", "truncation_H", "truncation_T", "concentration_h",
                "concentration_eps", "support_p", "support_epsilon"},
               "prior_check");
    PriorCheckSettings s;
    s.p = get_or(pc, "p", s.p);
    s.H = get_or(pc, "H", s.H);
    s.n_draws = get_or(pc, "n_draws", s.n_draws);
    s.seed = options.seed.value_or(1);
    s.threads = options.threads;
    s.spec.family = prior_family_from_string(get_or<std::string>(pc, "family", "sis"));
    s.spec.hyper = resolve_hyper(doc, s.p, DataMode::gaussian);
    if (pc.contains("mgp")) {
        const Json& m = pc.at("mgp");
        check_keys(m, {"a1", "a2", "nu"}, "prior_check.mgp");
        s.spec.mgp.a1 = get_or(m, "a1", s.spec.mgp.a1);
        s.spec.mgp.a2 = get_or(m, "a2", s.spec.mgp.a2);
        s.spec.mgp.nu = get_or(m, "nu", s.spec.mgp.nu);
    }
    if (pc.contains("cusp")) {
        const Json& c = pc.at("cusp");
        check_keys(c, {"theta_inf"}, "prior_check.cusp");
        s.spec.cusp.theta_inf = get_or(c, "theta_inf", s.spec.cusp.theta_inf);
    }
    s.truncation_H = get_or(pc, "truncation_H", s.truncation_H);
    s.truncation_T = get_or(pc, "truncation_T", s.truncation_T);
    s.concentration_h = get_or(pc, "concentration_h", s.concentration_h);
    s.concentration_eps = get_or(pc, "concentration_eps", s.concentration_eps);
    s.support_p = get_or(pc, "support_p", s.support_p);
    s.support_epsilon = get_or(pc, "support_epsilon", s.support_epsilon);
    if (s.p < 2 || s.H < 2 || s.n_draws < 1) throw ArgumentError("prior_check: need p >= 2, H >= 2, n_draws >= 1");
    const PriorPropertyReport report = run_prior_check(s);
    write_json_atomic(options.output / "prior_check.json", to_json(report));
    out << "prior-check: family " << to_string(s.spec.family) << ", weakly decreasing variances: "
        << (report.shrinkage.weakly_decreasing ? "yes" : "no") << ", tail index " << report.tail.index << "\n";
    return 0;
}

void resolve_paths(Json& doc, const fs::path& base) {
    auto fix = [&](Json& obj, const char* key) {
        if (obj.contains(key) && obj.at(key).is_string()) {
            const fs::path p = obj.at(key).get<std::string>();
            if (!p.empty() && p.is_relative()) obj[key] = (base / p).lexically_normal().string();
        }
    };
    if (doc.contains("data") && doc["data"].is_object())
        for (const char* k : {"y", "x", "w"}) fix(doc["data"], k);
    if (doc.contains("input") && doc["input"].is_object()) fix(doc["input"], "chain");
}

} // namespace

void apply_override(Json& document, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ArgumentError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        value = text;
    }
    Json* node = &document;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ArgumentError("--set: empty key component in '" + key + "'");
        if (!node->is_object()) throw ArgumentError("--set: '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = Json::object();
        start = dot + 1;
    }
}

Json load_run_config(const CliOptions& options) {
    Json doc = Json::object();
    if (options.config) {
        doc = read_json(*options.config);
        if (!doc.is_object()) throw ArgumentError("config: top level must be a JSON object");
        resolve_paths(doc, options.config->has_parent_path() ? options.config->parent_path() : fs::path("."));
    }
    for (const std::string& a : options.overrides) apply_override(doc, a);
    check_keys(doc, {"data", "hyper", "chain", "summary", "scenario", "simulation", "prior_check", "input"}, "");
    return doc;
}

Json error_json(const std::exception& error) {
    Json j{{"schema_version", kSchemaVersion}, {"kind", "error"}, {"code", "internal_error"}, {"message", error.what()}};
    if (const auto* e = dynamic_cast<const Error*>(&error)) j["code"] = e->code();
    if (const auto* e = dynamic_cast<const ValidationError*>(&error)) {
        j["row"] = e->row() >= 0 ? Json(e->row() + 1) : Json(nullptr);
        j["column"] = e->column() >= 0 ? Json(e->column() + 1) : Json(nullptr);
    }
    if (const auto* e = dynamic_cast<const NumericalError*>(&error)) {
        j["iteration"] = e->iteration();
        j["block"] = e->block();
    }
    if (dynamic_cast<const nlohmann::json::exception*>(&error)) j["code"] = "io_error";
    return j;
}

int run_command(const CliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        if (options.threads < 1) throw ArgumentError("--threads must be at least 1");
        const Json doc = load_run_config(options);
        if (options.command == "fit") return run_fit(doc, options, out);
        if (options.command == "summarize") return run_summarize(doc, options, out);
        if (options.command == "simulate") return run_simulate(doc, options, out);
        if (options.command == "prior-check") return run_prior_check_command(doc, options, out);
        throw ArgumentError("unknown command '" + options.command + "'");
    } catch (const std::exception& e) {
        const Json j = error_json(e);
        try {
            write_json_atomic(options.output / "error.json", j);
        } catch (const std::exception&) {
            // The output directory itself may be the problem; stderr still carries the error.
        }
        err << j.dump() << "\n";
        const std::string code = j.at("code").get<std::string>();
        return code == "argument_error" ? 2 : 1;
    }
}

} // namespace sisfm
