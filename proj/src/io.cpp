#include "sisfm/io.hpp"

#include "sisfm/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace sisfm {

namespace fs = std::filesystem;

void write_text_atomic(const fs::path& path, const std::string& content) {
    const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
    const fs::path tmp = parent / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp, ec);
            throw IoError("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CsvTable parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    std::size_t i = 0;
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
    auto end_record = [&] {
        record.push_back(field);
        field.clear();
        // Skip blank lines.
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
        any = false;
    };
    for (; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"' && field.empty()) {
            quoted = true;
            any = true;
        } else if (ch == ',') {
            record.push_back(field);
            field.clear();
            any = true;
        } else if (ch == '\n') {
            end_record();
        } else if (ch != '\r') {
            field.push_back(ch);
            any = true;
        }
    }
    if (quoted) throw ValidationError("csv: unterminated quoted field");
    if (any || !field.empty() || !record.empty()) end_record();
    if (records.empty()) throw ValidationError("csv: missing header row");
    CsvTable table;
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size())
            throw ValidationError("csv: row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                      " fields, header has " + std::to_string(table.header.size()),
                                  static_cast<long>(r - 1), -1);
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

CsvTable read_csv(const fs::path& path) {
    try {
        return parse_csv(read_text(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what(), e.row(), e.column());
    }
}

namespace {

std::string quote_field(const std::string& f) {
    if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

} // namespace

std::string format_csv(const CsvTable& table) {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out.push_back(',');
            out += quote_field(fields[i]);
        }
        out.push_back('\n');
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
    return out;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "NaN";
    if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, long row, long column) {
    const std::string t = trim(text);
    if (t == "Inf" || t == "inf") return std::numeric_limits<double>::infinity();
    if (t == "-Inf" || t == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    if (!t.empty() && *begin == '+') ++begin;
    const auto res = std::from_chars(begin, end, v);
    if (t.empty() || res.ec != std::errc() || res.ptr != end)
        throw ValidationError("not a number: '" + text + "' at row " + std::to_string(row + 1) + ", column " +
                                  std::to_string(column + 1),
                              row, column);
    return v;
}

NumericTable read_numeric_csv(const fs::path& path) {
    const CsvTable table = read_csv(path);
    NumericTable out;
    out.header = table.header;
    out.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            try {
                out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    parse_double(table.rows[r][c], static_cast<long>(r), static_cast<long>(c));
            } catch (const ValidationError& e) {
                throw ValidationError(path.string() + ": " + e.what(), e.row(), e.column());
            }
        }
    }
    return out;
}

std::string format_matrix_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
    if (static_cast<Eigen::Index>(header.size()) != values.cols())
        throw StructuralError("csv: header does not match the matrix width");
    CsvTable t;
    t.header = header;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index j = 0; j < values.cols(); ++j) row.push_back(format_double(values(i, j)));
        t.rows.push_back(std::move(row));
    }
    return format_csv(t);
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& values, std::vector<std::string> header) {
    if (header.empty())
        for (Eigen::Index j = 0; j < values.cols(); ++j) header.push_back("V" + std::to_string(j + 1));
    write_text_atomic(path, format_matrix_csv(header, values));
}

void standardize_columns(Eigen::MatrixXd& m, Eigen::Index first_column) {
    const double n = static_cast<double>(m.rows());
    if (m.rows() < 2) throw ValidationError("standardize: need at least two rows");
    for (Eigen::Index j = first_column; j < m.cols(); ++j) {
        const double mean = m.col(j).mean();
        m.col(j).array() -= mean;
        const double sd = std::sqrt(m.col(j).squaredNorm() / (n - 1.0));
        if (!(sd > 0.0)) throw ValidationError("standardize: column " + std::to_string(j + 1) + " is constant", -1, j);
        m.col(j) /= sd;
    }
}

Design build_design(const CsvTable& table, const DesignOptions& options) {
    const std::set<std::string> categorical(options.categorical.begin(), options.categorical.end());
    for (const auto& name : options.categorical)
        if (std::find(table.header.begin(), table.header.end(), name) == table.header.end())
            throw ValidationError("categorical column '" + name + "' not found in the header");
    const auto rows = static_cast<Eigen::Index>(table.rows.size());
    std::vector<Eigen::VectorXd> continuous;
    std::vector<std::string> cont_names;
    std::vector<Eigen::VectorXd> dummies;
    std::vector<std::string> dummy_names;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        const std::string& name = table.header[c];
        if (categorical.count(name)) {
            std::set<std::string> levels;
            for (const auto& r : table.rows) levels.insert(trim(r[c]));
            bool first = true;
            for (const auto& level : levels) {
                if (first) {
                    first = false;
                    continue;
                }
                Eigen::VectorXd d(rows);
                for (Eigen::Index i = 0; i < rows; ++i)
                    d(i) = trim(table.rows[static_cast<std::size_t>(i)][c]) == level ? 1.0 : 0.0;
                dummies.push_back(std::move(d));
                dummy_names.push_back(name + "=" + level);
            }
        } else {
            Eigen::VectorXd v(rows);
            for (Eigen::Index i = 0; i < rows; ++i)
                v(i) = parse_double(table.rows[static_cast<std::size_t>(i)][c], static_cast<long>(i), static_cast<long>(c));
            continuous.push_back(std::move(v));
            cont_names.push_back(name);
        }
    }
    const Eigen::Index lead = options.intercept ? 1 : 0;
    const auto n_cont = static_cast<Eigen::Index>(continuous.size());
    Design d;
    d.matrix.resize(rows, lead + n_cont + static_cast<Eigen::Index>(dummies.size()));
    if (options.intercept) {
        d.matrix.col(0).setOnes();
        d.names.push_back("(intercept)");
    }
    for (Eigen::Index k = 0; k < n_cont; ++k) d.matrix.col(lead + k) = continuous[static_cast<std::size_t>(k)];
    if (options.standardize && n_cont > 0) {
        Eigen::MatrixXd block = d.matrix.middleCols(lead, n_cont);
        standardize_columns(block);
        d.matrix.middleCols(lead, n_cont) = block;
    }
    d.names.insert(d.names.end(), cont_names.begin(), cont_names.end());
    for (std::size_t k = 0; k < dummies.size(); ++k)
        d.matrix.col(lead + n_cont + static_cast<Eigen::Index>(k)) = dummies[k];
    d.names.insert(d.names.end(), dummy_names.begin(), dummy_names.end());
    if (d.matrix.cols() == 0) throw ValidationError("design has no columns");
    return d;
}

LoadedData load_dataset(const DataPaths& paths, const LoadOptions& options) {
    LoadedData out;
    const NumericTable y = read_numeric_csv(paths.y);
    out.data.mode = options.mode;
    out.data.y = y.values;
    out.variables = y.header;
    const Eigen::Index p = y.values.cols();
    if (paths.x.empty()) {
        out.data.x = Eigen::MatrixXd::Ones(p, 1);
        out.x_names = {"(intercept)"};
    } else {
        const CsvTable xt = read_csv(paths.x);
        if (static_cast<Eigen::Index>(xt.rows.size()) != p)
            throw ValidationError("meta covariates: " + std::to_string(xt.rows.size()) + " rows for " +
                                  std::to_string(p) + " response columns");
        Design d = build_design(xt, options.x);
        out.data.x = std::move(d.matrix);
        out.x_names = std::move(d.names);
    }
    if (!paths.w.empty()) {
        if (options.mode != DataMode::probit)
            throw ValidationError("environmental covariates are only used with probit data");
        const CsvTable wt = read_csv(paths.w);
        if (static_cast<Eigen::Index>(wt.rows.size()) != y.values.rows())
            throw ValidationError("environmental covariates: " + std::to_string(wt.rows.size()) + " rows for " +
                                  std::to_string(y.values.rows()) + " observations");
        Design d = build_design(wt, options.w);
        out.data.w = std::move(d.matrix);
        out.w_names = std::move(d.names);
    }
    out.data.validate();
    return out;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

namespace {

double json_number(const Json& v) {
    if (v.is_null()) return -std::numeric_limits<double>::infinity();
    return v.get<double>();
}

} // namespace

Eigen::MatrixXd matrix_from_json(const Json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const Json& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw IoError("matrix json: row count mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Json& r = data[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(r.size()) != cols) throw IoError("matrix json: column count mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = json_number(r[static_cast<std::size_t>(c)]);
    }
    return m;
}

Json imatrix_to_json(const Eigen::MatrixXi& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXi imatrix_from_json(const Json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    Eigen::MatrixXi m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(i, c) = j.at("data").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<int>();
    return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const Json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = json_number(j[i]);
    return v;
}

namespace {

Json ivector_to_json(const Eigen::VectorXi& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXi ivector_from_json(const Json& j) {
    Eigen::VectorXi v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<int>();
    return v;
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ArgumentError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ArgumentError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
void read_key(const Json& j, const char* key, T& target, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        target = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ArgumentError(where + ": key '" + key + "' has the wrong type");
    }
}

} // namespace

Json to_json(const Hyperparameters& h) {
    return Json{{"alpha", h.alpha},           {"a_theta", h.a_theta}, {"b_theta", h.b_theta},
                {"sigma_beta", h.sigma_beta}, {"a_sigma", h.a_sigma}, {"b_sigma", h.b_sigma},
                {"c_p", h.c_p},               {"sigma_mu", h.sigma_mu}, {"sigma_b", h.sigma_b}};
}

Hyperparameters hyper_from_json(const Json& j, Hyperparameters h) {
    const std::string where = "hyper";
    reject_unknown(j, {"alpha", "a_theta", "b_theta", "sigma_beta", "a_sigma", "b_sigma", "c_p", "sigma_mu", "sigma_b"},
                   where);
    read_key(j, "alpha", h.alpha, where);
    read_key(j, "a_theta", h.a_theta, where);
    read_key(j, "b_theta", h.b_theta, where);
    read_key(j, "sigma_beta", h.sigma_beta, where);
    read_key(j, "a_sigma", h.a_sigma, where);
    read_key(j, "b_sigma", h.b_sigma, where);
    read_key(j, "c_p", h.c_p, where);
    read_key(j, "sigma_mu", h.sigma_mu, where);
    read_key(j, "sigma_b", h.sigma_b, where);
    return h;
}

Json to_json(const ChainConfig& c) {
    return Json{{"n_iterations", c.n_iterations},
                {"burn_in", c.burn_in},
                {"thin", c.thin},
                {"alpha0", c.alpha0},
                {"alpha1", c.alpha1},
                {"H_init", c.H_init},
                {"seed", c.seed},
                {"stream", c.stream},
                {"record_log_density", c.record_log_density},
                {"expected_pi", c.density.expected_pi},
                {"probit_mc_draws", c.density.probit_mc_draws}};
}

ChainConfig chain_config_from_json(const Json& j, ChainConfig c) {
    const std::string where = "chain";
    reject_unknown(j,
                   {"n_iterations", "burn_in", "thin", "alpha0", "alpha1", "H_init", "seed", "stream",
                    "record_log_density", "expected_pi", "probit_mc_draws"},
                   where);
    read_key(j, "n_iterations", c.n_iterations, where);
    read_key(j, "burn_in", c.burn_in, where);
    read_key(j, "thin", c.thin, where);
    read_key(j, "alpha0", c.alpha0, where);
    read_key(j, "alpha1", c.alpha1, where);
    read_key(j, "H_init", c.H_init, where);
    read_key(j, "seed", c.seed, where);
    read_key(j, "stream", c.stream, where);
    read_key(j, "record_log_density", c.record_log_density, where);
    read_key(j, "expected_pi", c.density.expected_pi, where);
    read_key(j, "probit_mc_draws", c.density.probit_mc_draws, where);
    return c;
}

Json to_json(const ScenarioSpec& s) {
    return Json{{"scenario", to_string(s.scenario)},
                {"p", s.p},
                {"k", s.k},
                {"s", s.s},
                {"n", s.n},
                {"n_replicates", s.n_replicates},
                {"sigma2_lambda", s.sigma2_lambda},
                {"seed", s.seed}};
}

ScenarioSpec scenario_from_json(const Json& j, ScenarioSpec s) {
    const std::string where = "scenario";
    reject_unknown(j, {"scenario", "p", "k", "s", "n", "n_replicates", "sigma2_lambda", "seed"}, where);
    if (j.contains("scenario")) s.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    read_key(j, "p", s.p, where);
    read_key(j, "k", s.k, where);
    read_key(j, "s", s.s, where);
    read_key(j, "n", s.n, where);
    read_key(j, "n_replicates", s.n_replicates, where);
    read_key(j, "sigma2_lambda", s.sigma2_lambda, where);
    read_key(j, "seed", s.seed, where);
    return s;
}

Json to_json(const Draw& d) {
    Json j{{"iteration", d.iteration},
           {"lambda", matrix_to_json(d.lambda)},
           {"phi", imatrix_to_json(d.phi)},
           {"rho", ivector_to_json(d.rho)},
           {"beta", matrix_to_json(d.beta)},
           {"sigma2", vector_to_json(d.sigma2)},
           {"theta", vector_to_json(d.theta)},
           {"v", vector_to_json(d.v)}};
    if (d.mu.size() > 0 || d.b.size() > 0) {
        j["mu"] = matrix_to_json(d.mu);
        j["b"] = matrix_to_json(d.b);
    }
    return j;
}

Draw draw_from_json(const Json& j) {
    Draw d;
    d.iteration = j.at("iteration").get<long>();
    d.lambda = matrix_from_json(j.at("lambda"));
    d.phi = imatrix_from_json(j.at("phi"));
    d.rho = ivector_from_json(j.at("rho"));
    d.beta = matrix_from_json(j.at("beta"));
    d.sigma2 = vector_from_json(j.at("sigma2"));
    d.theta = vector_from_json(j.at("theta"));
    d.v = vector_from_json(j.at("v"));
    if (j.contains("mu")) d.mu = matrix_from_json(j.at("mu"));
    if (j.contains("b")) d.b = matrix_from_json(j.at("b"));
    return d;
}

Json to_json(const ChainOutput& c) {
    Json draws = Json::array();
    for (const Draw& d : c.draws) draws.push_back(to_json(d));
    Json logd = Json::array();
    for (double v : c.log_density) logd.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "chain"},
                {"mode", to_string(c.mode)},
                {"config", to_json(c.config)},
                {"h_active_trace", c.h_active_trace},
                {"h_trace", c.h_trace},
                {"adaptation_iterations", c.adaptation_iterations},
                {"log_density", std::move(logd)},
                {"draws", std::move(draws)}};
}

ChainOutput chain_from_json(const Json& j) {
    try {
        if (j.at("kind").get<std::string>() != "chain") throw IoError("not a chain document");
        if (j.at("schema_version").get<int>() != kSchemaVersion) throw IoError("unsupported chain schema_version");
        ChainOutput c;
        c.mode = data_mode_from_string(j.at("mode").get<std::string>());
        c.config = chain_config_from_json(j.at("config"));
        c.h_active_trace = j.at("h_active_trace").get<std::vector<int>>();
        c.h_trace = j.at("h_trace").get<std::vector<int>>();
        c.adaptation_iterations = j.at("adaptation_iterations").get<std::vector<long>>();
        for (const Json& v : j.at("log_density")) c.log_density.push_back(json_number(v));
        for (const Json& d : j.at("draws")) c.draws.push_back(draw_from_json(d));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed chain document: ") + e.what());
    }
}

Json to_json(const SummaryReport& r, const SummaryOptions& options) {
    Json edges = Json::array();
    for (const NetworkEdge& e : r.network.edges)
        edges.push_back(Json{{"node_i", e.i}, {"node_j", e.j}, {"partial_correlation", e.partial_correlation}});
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "summary"},
                {"n_draws", r.n_draws},
                {"map_index", r.map_index},
                {"map_iteration", r.map_iteration},
                {"map_log_density", r.map_log_density},
                {"lpml",
                 {{"value", r.lpml.lpml},
                  {"total", r.lpml.total},
                  {"normalization", r.lpml.per_observation ? "per_observation" : "total"},
                  {"zero_likelihoods", r.lpml.zero_likelihoods}}},
                {"e_h_active", r.e_h_active},
                {"lambda_map", matrix_to_json(r.lambda_map)},
                {"beta_map", matrix_to_json(r.beta_map)},
                {"sigma_map", vector_to_json(r.sigma_map)},
                {"posterior_mean_correlation", matrix_to_json(r.network.mean_correlation)},
                {"posterior_mean_partial_correlation", matrix_to_json(r.network.partial_correlation)},
                {"edge_threshold", options.edge_threshold},
                {"partial_correlation_jittered", r.network.jittered},
                {"edges", std::move(edges)},
                {"cv_heldout_loglik", r.cv_heldout_loglik ? Json(*r.cv_heldout_loglik) : Json(nullptr)},
                {"cv_folds", options.cv_folds}};
}

namespace {

Json aggregate_json(const Aggregate& a) { return Json{{"median", a.median}, {"iqr", a.iqr}, {"count", a.count}}; }

} // namespace

Json to_json(const MetricsReport& r, bool include_timing) {
    Json reps = Json::array();
    for (const ReplicateMetrics& m : r.replicates) {
        Json j{{"replicate", m.replicate}, {"ok", m.ok}};
        if (m.ok) {
            j["lpml"] = m.lpml;
            j["covariance_mse"] = m.covariance_mse;
            j["mce"] = m.mce;
            j["mce_threshold_0.03"] = m.mce_003;
            j["mce_threshold_0.05"] = m.mce_005;
            j["mce_threshold_0.10"] = m.mce_010;
            j["e_h_active"] = m.e_h_active;
            if (include_timing) j["seconds_per_iteration"] = m.seconds_per_iteration;
        } else {
            j["error"] = m.error;
        }
        reps.push_back(std::move(j));
    }
    Json agg{{"lpml", aggregate_json(r.lpml)},
             {"covariance_mse", aggregate_json(r.covariance_mse)},
             {"mce", aggregate_json(r.mce)},
             {"e_h_active", aggregate_json(r.e_h_active)}};
    if (include_timing) agg["seconds_per_iteration"] = aggregate_json(r.seconds_per_iteration);
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "metrics"},
                {"spec", to_json(r.spec)},
                {"conventions",
                 {{"lpml", "per_observation"},
                  {"covariance_mse", "mean over draws and p(p+1)/2 unique entries, Omega = Lambda Lambda' + I"},
                  {"mce", "exact zeros, columns sorted by ascending zero count, padded to max(k, H_a)"}}},
                {"failures", r.failures},
                {"aggregate", std::move(agg)},
                {"replicates", std::move(reps)}};
}

std::string metrics_csv(const MetricsReport& r, bool include_timing) {
    CsvTable t;
    t.header = {"replicate", "ok", "lpml", "covariance_mse", "mce", "mce_0.03", "mce_0.05", "mce_0.10", "e_h_active"};
    if (include_timing) t.header.push_back("seconds_per_iteration");
    for (const ReplicateMetrics& m : r.replicates) {
        std::vector<std::string> row{std::to_string(m.replicate), m.ok ? "1" : "0"};
        for (double v : {m.lpml, m.covariance_mse, m.mce, m.mce_003, m.mce_005, m.mce_010, m.e_h_active})
            row.push_back(m.ok ? format_double(v) : "NA");
        if (include_timing) row.push_back(m.ok ? format_double(m.seconds_per_iteration) : "NA");
        t.rows.push_back(std::move(row));
    }
    return format_csv(t);
}

Json to_json(const PriorPropertyReport& r) {
    const ShrinkageReport& s = r.shrinkage;
    Json trunc = Json::array();
    for (const TruncationCell& c : r.truncation)
        trunc.push_back(Json{{"H", c.H},
                             {"T", c.T},
                             {"probability", c.probability},
                             {"mcse", c.mcse},
                             {"bound", c.bound},
                             {"bound_literal", c.bound_literal},
                             {"dominated", c.dominated},
                             {"dominated_literal", c.dominated_literal}});
    Json conc = Json::array();
    for (const ConcentrationCell& c : r.concentration)
        conc.push_back(Json{{"h", c.h},
                            {"epsilon", c.epsilon},
                            {"probability", c.probability},
                            {"bound", c.bound},
                            {"dominated", c.dominated}});
    Json support = Json::array();
    for (const SupportCell& c : r.support)
        support.push_back(Json{{"p", c.p}, {"c_p", c.c_p}, {"mean_support", c.mean_support}, {"mcse", c.mcse}});
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "prior_check"},
                {"family", to_string(r.settings.spec.family)},
                {"p", r.settings.p},
                {"H", r.settings.H},
                {"n_draws", r.settings.n_draws},
                {"seed", r.settings.seed},
                {"hyper", to_json(r.settings.spec.hyper)},
                {"shrinkage",
                 {{"column_variance", vector_to_json(s.column_variance)},
                  {"column_mcse", vector_to_json(s.column_mcse)},
                  {"entry_variance", matrix_to_json(s.entry_variance)},
                  {"weakly_decreasing", s.weakly_decreasing},
                  {"strictly_decreasing", s.strictly_decreasing},
                  {"strongly_decreasing", s.strongly_decreasing},
                  {"inconclusive", s.inconclusive}}},
                {"truncation", std::move(trunc)},
                {"concentration", std::move(conc)},
                {"tail",
                 {{"index", r.tail.index},
                  {"index_upper", r.tail.index_upper},
                  {"n_used", r.tail.n_used},
                  {"power_law", r.tail.power_law},
                  {"inconclusive", r.tail.inconclusive}}},
                {"support", std::move(support)},
                {"support_sublinear", r.support_sublinear},
                {"zero_fraction", r.zero_fraction},
                {"phi_zero_fraction", r.phi_zero_fraction}};
}

std::string edges_csv(const std::vector<NetworkEdge>& edges, const std::vector<std::string>& names) {
    CsvTable t;
    t.header = {"node_i", "node_j", "partial_correlation"};
    auto label = [&](Eigen::Index i) {
        return static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)] : std::to_string(i + 1);
    };
    for (const NetworkEdge& e : edges) t.rows.push_back({label(e.i), label(e.j), format_double(e.partial_correlation)});
    return format_csv(t);
}

void write_json_atomic(const fs::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace sisfm
