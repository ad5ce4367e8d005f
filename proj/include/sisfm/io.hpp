#pragma once

// CSV and JSON plumbing: data ingestion, versioned artifacts, atomic writes.

#include "sisfm/gibbs.hpp"
#include "sisfm/model.hpp"
#include "sisfm/priors.hpp"
#include "sisfm/simulation.hpp"
#include "sisfm/summary.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace sisfm {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

/// Writes to a temporary sibling and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Comma separated, header row required, double quotes for fields with commas.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);

/// Shortest text that reads back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text, long row, long column);

struct NumericTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

NumericTable read_numeric_csv(const std::filesystem::path& path);
std::string format_matrix_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values);
/// Header defaults to V1..Vk.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values,
                      std::vector<std::string> header = {});

/// Meta covariate or environmental covariate design built from a table.
struct DesignOptions {
    std::vector<std::string> categorical; ///< column names coded as dummies, first level dropped
    bool standardize = true;              ///< continuous columns only
    bool intercept = true;
};

struct Design {
    Eigen::MatrixXd matrix;
    std::vector<std::string> names;
};

/// Levels sort lexicographically; the first is the reference.
Design build_design(const CsvTable& table, const DesignOptions& options);

/// Column-wise zero mean and unit (n - 1) variance.
void standardize_columns(Eigen::MatrixXd& m, Eigen::Index first_column = 0);

struct DataPaths {
    std::filesystem::path y;
    std::filesystem::path x; ///< empty: intercept only
    std::filesystem::path w; ///< probit only, optional
};

struct LoadOptions {
    DataMode mode = DataMode::gaussian;
    DesignOptions x;
    DesignOptions w;
};

struct LoadedData {
    Dataset data;
    std::vector<std::string> variables;
    std::vector<std::string> x_names;
    std::vector<std::string> w_names;
};

LoadedData load_dataset(const DataPaths& paths, const LoadOptions& options);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);
Json imatrix_to_json(const Eigen::MatrixXi& m);
Eigen::MatrixXi imatrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const Hyperparameters& hyper);
/// Keys absent from j keep the value in `base`; unknown keys are errors.
Hyperparameters hyper_from_json(const Json& j, Hyperparameters base = {});
Json to_json(const ChainConfig& config);
ChainConfig chain_config_from_json(const Json& j, ChainConfig base = {});
Json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const Json& j, ScenarioSpec base = {});

Json to_json(const Draw& draw);
Draw draw_from_json(const Json& j);
/// Draws, traces and densities; timing is left out so reruns are byte-identical.
Json to_json(const ChainOutput& chain);
ChainOutput chain_from_json(const Json& j);

Json to_json(const SummaryReport& report, const SummaryOptions& options);
Json to_json(const MetricsReport& report, bool include_timing = false);
std::string metrics_csv(const MetricsReport& report, bool include_timing = false);
Json to_json(const PriorPropertyReport& report);

std::string edges_csv(const std::vector<NetworkEdge>& edges, const std::vector<std::string>& names = {});

/// Pretty-printed with a trailing newline.
void write_json_atomic(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

} // namespace sisfm
