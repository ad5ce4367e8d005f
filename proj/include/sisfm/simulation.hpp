#pragma once

// Synthetic scenarios a-d, covariance and sparsity recovery metrics, and the
// replicate driver that ties generation, fitting and summaries together.

#include "sisfm/gibbs.hpp"
#include "sisfm/model.hpp"
#include "sisfm/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sisfm {

enum class Scenario { a, b, c, d };

const char* to_string(Scenario scenario);
Scenario scenario_from_string(const std::string& name);

struct ScenarioSpec {
    Scenario scenario = Scenario::a;
    Eigen::Index p = 16;
    Eigen::Index k = 4;
    double s = 1.0;          ///< nonzero fraction of Lambda0; exactly 1 for scenario a
    Eigen::Index n = 250;
    int n_replicates = 25;
    double sigma2_lambda = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
    /// round(s p k) nonzero loadings (p k for scenario a).
    Eigen::Index nonzero_budget() const;
};

struct ScenarioData {
    Eigen::MatrixXd lambda0; ///< p x k
    Eigen::MatrixXd y;       ///< n x p
    Eigen::MatrixXd x0;      ///< p x 6 meta covariates for scenario d, empty otherwise
};

/// Zero counts per column for the linear ramp, capped at p - 1 and sorted ascending.
std::vector<Eigen::Index> ramp_zero_counts(Eigen::Index p, Eigen::Index k, Eigen::Index zeros);

ScenarioData generate_scenario(const ScenarioSpec& spec, RngStream& rng);

/// Omega0 = Lambda0 Lambda0' + I.
Eigen::MatrixXd true_covariance(const Eigen::MatrixXd& lambda0);

/// Mean over draws and the p(p+1)/2 unique entries of (omega^(t) - omega0)^2,
/// omega^(t) = Lambda Lambda' + I, the same convention as Omega0.
double covariance_mse(const std::vector<Draw>& draws, const Eigen::MatrixXd& lambda0);

/// Zero/nonzero mismatches after sorting columns by ascending zero count and
/// padding to max(k, columns); normalized by p k and averaged over draws.
/// With rho present only active columns of a draw enter. threshold 0 means exact zeros.
double mean_classification_error(const std::vector<Draw>& draws, const Eigen::MatrixXd& lambda0, double threshold = 0.0);
double classification_error(const Eigen::MatrixXi& estimate_nonzero, const Eigen::MatrixXi& truth_nonzero);

struct Aggregate {
    double median = 0.0;
    double iqr = 0.0;
    int count = 0;
};

/// Type-7 quantiles.
Aggregate aggregate(std::vector<double> values);

struct ReplicateMetrics {
    int replicate = 0;
    bool ok = false;
    std::string error;
    double lpml = 0.0;
    double covariance_mse = 0.0;
    double mce = 0.0;
    double mce_003 = 0.0;
    double mce_005 = 0.0;
    double mce_010 = 0.0;
    double e_h_active = 0.0;
    double seconds_per_iteration = 0.0;
};

struct MetricsReport {
    ScenarioSpec spec;
    std::vector<ReplicateMetrics> replicates;
    Aggregate lpml;
    Aggregate covariance_mse;
    Aggregate mce;
    Aggregate e_h_active;
    Aggregate seconds_per_iteration;
    int failures = 0;
};

struct SimulationSettings {
    Hyperparameters hyper;
    bool default_offset = true; ///< c_p = 2e log(p)/p instead of hyper.c_p
    ChainConfig chain;
    int threads = 1;
};

/// Replicate r draws its data from RngStream(spec.seed, r) and its chain from
/// stream 1000 + r of the chain seed.
MetricsReport run_replicates(const ScenarioSpec& spec, const SimulationSettings& settings);

} // namespace sisfm
