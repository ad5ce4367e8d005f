#pragma once

// Adaptive Gibbs sampler for the SIS factor model, Gaussian and probit data.

#include "sisfm/model.hpp"
#include "sisfm/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace sisfm {

/// How the stick weights enter the marginal log density of a draw.
struct DensityOptions {
    bool expected_pi = false; ///< use E(pi_h) instead of the sampled stick
    int probit_mc_draws = 512; ///< antithetic Monte Carlo draws over eta (probit)
};

struct ChainConfig {
    long n_iterations = 25000;
    long burn_in = 10000;
    long thin = 5;
    double alpha0 = -1.0;   ///< adaptation probability exp(alpha0 + alpha1 t)
    double alpha1 = -5e-4;
    Eigen::Index H_init = 0; ///< 0 selects min(p, floor(5 log p))
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    bool record_log_density = true;
    DensityOptions density;

    /// 25000/10000/5 for Gaussian data, 40000/20000/5 with alpha1 = -2.5e-4 for probit.
    static ChainConfig defaults(DataMode mode);
    void validate() const;
    long retained() const { return (n_iterations - burn_in) / thin; }
};

Eigen::Index default_truncation(Eigen::Index p);

/// Retained posterior draw.
struct Draw {
    long iteration = 0;
    Eigen::MatrixXd lambda; ///< effective loadings p x H
    Eigen::MatrixXi phi;
    Eigen::VectorXi rho;
    Eigen::MatrixXd beta;
    Eigen::VectorXd sigma2;
    Eigen::VectorXd theta;
    Eigen::VectorXd v;
    Eigen::MatrixXd mu; ///< probit only
    Eigen::MatrixXd b;  ///< probit only
    int active() const { return rho.sum(); }
};

Draw snapshot(const ModelState& state, long iteration);

struct ChainOutput {
    ChainConfig config;
    DataMode mode = DataMode::gaussian;
    std::vector<Draw> draws;
    std::vector<int> h_active_trace; ///< every iteration
    std::vector<int> h_trace;        ///< every iteration
    std::vector<double> log_density; ///< per retained draw, when recorded
    Eigen::MatrixXd pointwise_loglik; ///< retained draws x n, when recorded
    std::vector<long> adaptation_iterations;
    double seconds_per_iteration = 0.0;
};

/**
 * @brief One chain's sampler state and its full-conditional updates.
 *
 * Each update_* method refreshes one block from its full conditional given
 * the rest of the state. The working response is y for Gaussian data and
 * z - w mu' for probit data.
 */
class GibbsSampler {
public:
    GibbsSampler(Dataset data, Hyperparameters hyper, ChainConfig config);

    const ModelState& state() const { return state_; }
    /// Replaces the state wholesale (tests, restarts). Dimensions are checked.
    void set_state(ModelState state);
    const Dataset& data() const { return data_; }
    /// Replaces the Gaussian responses or the probit latent utilities' data (Geweke tests).
    void set_responses(const Eigen::MatrixXd& y);
    const Hyperparameters& hyper() const { return hyper_; }
    const Eigen::MatrixXd& x() const { return x_; }
    RngStream& rng() { return rng_; }

    /// y (Gaussian) or z - w mu' (probit).
    const Eigen::MatrixXd& working_response() const { return response_; }

    void update_regression_means();
    void update_latent_utilities();
    void update_factors();
    void update_noise_variances();
    void update_shrinkage_coefficients();
    void update_loadings();
    void update_column_scales();
    void update_local_scales();
    /// Column scales split into their substeps (5.1 allocation, 5.2 variances, 5.3 sticks).
    void update_allocation();
    void update_column_variances();
    void update_stick_fractions();

    /// Draws the adaptation event with probability exp(alpha0 + alpha1 t); returns whether H changed shape.
    bool adapt_truncation(long iteration);
    /// Applies the truncation rule unconditionally.
    void apply_adaptation();

    /// Every full-conditional update in the model's step order.
    void gibbs_steps();
    /// gibbs_steps() with the iteration counter used in error reports.
    void gibbs_steps_at(long iteration);
    /// gibbs_steps() followed by adapt_truncation(iteration); returns whether adaptation fired.
    bool sweep(long iteration);

private:
    void initialize();
    void refresh_response();
    void check_finite(const char* block) const;
    Eigen::MatrixXd effective() const { return effective_loadings(state_); }

    Dataset data_;
    Hyperparameters hyper_;
    ChainConfig config_;
    Eigen::MatrixXd x_; ///< meta covariates as stored in data
    RngStream rng_;
    ModelState state_;
    Eigen::MatrixXd response_;
    long iteration_ = 0;
};

ChainOutput run_chain(const Dataset& data, const Hyperparameters& hyper, const ChainConfig& config);

} // namespace sisfm
