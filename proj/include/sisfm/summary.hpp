#pragma once

// Post-processing of a chain: marginal densities of the retained draws, MAP
// selection, LPML, posterior correlation networks and held-out likelihood.

#include "sisfm/gibbs.hpp"
#include "sisfm/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sisfm {

/// log p(y_i | draw) with eta integrated out, one entry per observation.
/// Probit draws use an antithetic Monte Carlo integral over eta with common
/// random numbers fixed across draws.
Eigen::VectorXd pointwise_log_likelihood(const Draw& draw, const Dataset& data, const DensityOptions& options = {});

/// Prior terms with phi, vartheta (and eta) integrated out; the stick is
/// evaluated at the draw's v or at E(pi_h).
double log_prior_density(const Draw& draw, const Dataset& data, const Hyperparameters& hyper,
                         const DensityOptions& options = {});

double log_marginal_density(const Draw& draw, const Dataset& data, const Hyperparameters& hyper,
                            const DensityOptions& options = {});

/// Fills chain.log_density and chain.pointwise_loglik.
void record_log_densities(ChainOutput& chain, const Dataset& data, const Hyperparameters& hyper, int threads = 1);

/// argmax with ties to the earliest index.
std::size_t select_map_draw(std::span<const double> log_density);
/// Requires chain.log_density; computes it first when empty.
std::size_t select_map_draw(ChainOutput& chain, const Dataset& data, const Hyperparameters& hyper);

struct LpmlResult {
    double lpml = 0.0;           ///< sum_i log CPO_i, divided by n when normalized
    double total = 0.0;          ///< sum_i log CPO_i
    bool per_observation = true;
    long zero_likelihoods = 0;   ///< entries with f_i^(t) == 0
};

/// pointwise is draws x n of log f(y_i | theta^(t)).
LpmlResult compute_lpml(const Eigen::MatrixXd& pointwise, bool per_observation = true);

struct NetworkEdge {
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double partial_correlation = 0.0;
};

struct PosteriorNetwork {
    Eigen::MatrixXd mean_correlation;
    Eigen::MatrixXd partial_correlation;
    std::vector<NetworkEdge> edges; ///< |partial correlation| >= threshold, i < j
    bool jittered = false;
};

inline constexpr double kEdgeThreshold = 0.025;

PosteriorNetwork posterior_network(const std::vector<Draw>& draws, double threshold = kEdgeThreshold);
std::vector<NetworkEdge> threshold_edges(const Eigen::MatrixXd& partial, double threshold = kEdgeThreshold);

/// Mean of H_a over the retained draws.
double expected_active_factors(const std::vector<Draw>& draws);

/// Held-out probit log-likelihood per observation with mu and Omega at their
/// training posterior means, averaged over folds. Rows go to fold i % n_folds.
double cv_heldout_loglik(const Dataset& data, const Hyperparameters& hyper, const ChainConfig& config, int n_folds,
                         int threads = 1);

/// log P(y_i | mu, Omega) for Omega = A A' + I, by the same Monte Carlo integral.
Eigen::VectorXd probit_pointwise_loglik(const Eigen::MatrixXd& y, const Eigen::MatrixXd& mean,
                                        const Eigen::MatrixXd& A, int mc_draws = 512);

/// The density options come from chain.config.density.
struct SummaryOptions {
    bool lpml_per_observation = true;
    double edge_threshold = kEdgeThreshold;
    int cv_folds = 0; ///< probit only; 0 skips cross-validation
    int threads = 1;
};

struct SummaryReport {
    std::size_t map_index = 0;
    long map_iteration = 0;
    double map_log_density = 0.0;
    Eigen::MatrixXd lambda_map;
    Eigen::MatrixXd beta_map;
    Eigen::VectorXd sigma_map;
    LpmlResult lpml;
    double e_h_active = 0.0;
    PosteriorNetwork network;
    std::optional<double> cv_heldout_loglik;
    std::size_t n_draws = 0;
};

/// Recomputes the log densities when the chain does not carry them.
SummaryReport summarize_chain(ChainOutput& chain, const Dataset& data, const Hyperparameters& hyper,
                              const SummaryOptions& options = {});

} // namespace sisfm
