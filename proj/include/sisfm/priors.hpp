#pragma once

// Forward sampling of the SIS prior and of the two baseline processes
// (multiplicative gamma, cumulative shrinkage), plus the Monte Carlo checks
// of their theoretical properties.

#include "sisfm/model.hpp"
#include "sisfm/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sisfm {

enum class PriorFamily { sis, mgp, cusp };

const char* to_string(PriorFamily family);
PriorFamily prior_family_from_string(const std::string& name);

struct MgpSettings {
    double a1 = 2.1; ///< delta_1 ~ Ga(a1, 1)
    double a2 = 3.1; ///< delta_l ~ Ga(a2, 1), l > 1
    double nu = 3.0; ///< local precisions ~ Ga(nu/2, nu/2)
};

struct CuspSettings {
    double theta_inf = 0.0025; ///< spike variance
};

struct PriorDraw {
    PriorFamily family = PriorFamily::sis;
    Eigen::MatrixXd lambda;      ///< p x H effective loadings
    Eigen::MatrixXd lambda_star; ///< SIS only
    Eigen::VectorXd theta;       ///< column variance scale (vartheta, CUSP scale, or 1/tau for MGP)
    Eigen::VectorXi rho;
    Eigen::MatrixXi phi;
    Eigen::VectorXd v;
    Eigen::VectorXi allocation;  ///< stick indices z_h, zero-based (SIS, CUSP)
    Eigen::MatrixXd beta;        ///< SIS only
    Eigen::VectorXd sigma2;      ///< noise variances from sigma^{-2} ~ Ga(a_sigma, b_sigma)
};

/// One SIS column drawn from the prior given its activity.
struct SisColumn {
    Eigen::VectorXd lambda_star;
    Eigen::VectorXi phi;
    Eigen::VectorXd beta;
    double theta = 1.0;
};

SisColumn sample_sis_column(const Hyperparameters& hyper, const Eigen::MatrixXd& x, RngStream& rng);

/// Stick fractions v_1..v_{H-1} ~ Be(1, alpha), v_H = 1.
Eigen::VectorXd sample_stick_fractions(double alpha, Eigen::Index H, RngStream& rng);

PriorDraw sample_sis_prior(const Hyperparameters& hyper, Eigen::Index p, Eigen::Index H, const Eigen::MatrixXd& x,
                           RngStream& rng);
PriorDraw sample_mgp_prior(const Hyperparameters& hyper, const MgpSettings& mgp, Eigen::Index p, Eigen::Index H,
                           RngStream& rng);
PriorDraw sample_cusp_prior(const Hyperparameters& hyper, const CuspSettings& cusp, Eigen::Index p, Eigen::Index H,
                            RngStream& rng);

/// Common entry point for the Monte Carlo studies below; x is ignored by MGP and CUSP.
struct PriorSpec {
    PriorFamily family = PriorFamily::sis;
    Hyperparameters hyper;
    MgpSettings mgp;
    CuspSettings cusp;
    Eigen::MatrixXd x; ///< p x q; empty means an intercept-only column of ones
};

PriorDraw sample_prior(const PriorSpec& spec, Eigen::Index p, Eigen::Index H, RngStream& rng);

/// Closed forms used as oracles.
double expected_pi(double alpha, Eigen::Index h);            ///< 1 - {alpha/(1+alpha)}^h
double sis_column_variance(const Hyperparameters& hyper, Eigen::Index h); ///< theta0 {alpha/(1+alpha)}^h c_p/2
double mgp_column_variance(const MgpSettings& mgp, Eigen::Index h);

struct ShrinkageReport {
    PriorFamily family = PriorFamily::sis;
    long n_draws = 0;
    std::uint64_t seed = 0;
    Eigen::VectorXd column_variance; ///< pooled over rows
    Eigen::VectorXd column_mcse;
    Eigen::MatrixXd entry_variance;  ///< p x H
    bool weakly_decreasing = false;   ///< var_h - var_{h+1} > -2 se for all h
    bool strictly_decreasing = false; ///< var_h - var_{h+1} > +2 se for all h
    bool strongly_decreasing = false; ///< max_j var(j, h) < min_s var(s, h-1) for all h
    bool inconclusive = false;        ///< fewer than 10^4 draws
};

ShrinkageReport verify_increasing_shrinkage(const PriorSpec& spec, Eigen::Index p, Eigen::Index H, long n_draws,
                                            std::uint64_t seed, int threads = 1);

/// Geometric rate used in the truncation bound.
enum class BoundRate {
    proof,  ///< alpha / (1 + alpha), the rate of E(gamma_h)
    literal ///< {alpha (1 + alpha)}^{-1}
};

/// (1/(1-T)) b^H/(1-b) theta0 (a_sigma/b_sigma) sum_j E(phi_j1).
double truncation_bound(const Hyperparameters& hyper, Eigen::Index H, double T, const Eigen::VectorXd& expected_phi,
                        BoundRate rate = BoundRate::proof);

/// E(phi_jh) = c_p E{logit^{-1}(x_j' beta_h)} = c_p / 2 for any x, since x_j' beta_h is a centred Gaussian.
Eigen::VectorXd expected_local_scales(const Hyperparameters& hyper, Eigen::Index p);

/// theta0 {alpha/(1+alpha)}^h c_p / (2 eps^2).
double concentration_bound(const Hyperparameters& hyper, Eigen::Index h, double epsilon);

struct TruncationCell {
    Eigen::Index H = 0;
    double T = 0.0;
    double probability = 0.0; ///< Monte Carlo pr{tr(Omega_H)/tr(Omega) <= T}
    double mcse = 0.0;
    double bound = 0.0;         ///< proof rate
    double bound_literal = 0.0; ///< literal rate
    bool dominated = false;     ///< bound >= probability
    bool dominated_literal = false;
};

/// SIS draws over max(H_grid) + tail_columns columns, sigma2 from its prior.
std::vector<TruncationCell> truncation_study(const Hyperparameters& hyper, Eigen::Index p,
                                             std::span<const Eigen::Index> H_grid, std::span<const double> T_grid,
                                             long n_draws, std::uint64_t seed, int threads = 1,
                                             Eigen::Index tail_columns = 60);

struct ConcentrationCell {
    Eigen::Index h = 0;
    double epsilon = 0.0;
    double probability = 0.0; ///< Monte Carlo pr(|lambda_jh| > eps), pooled over j
    double bound = 0.0;
    bool dominated = false;
};

std::vector<ConcentrationCell> concentration_study(const Hyperparameters& hyper, Eigen::Index p,
                                                   std::span<const Eigen::Index> h_grid,
                                                   std::span<const double> eps_grid, long n_draws,
                                                   std::uint64_t seed, int threads = 1);

struct TailEstimate {
    double index = 0.0;       ///< Hill estimate from the top `fraction` order statistics
    double index_upper = 0.0; ///< same from the top fraction/5
    std::size_t n_used = 0;   ///< nonzero samples
    bool power_law = false;   ///< the two estimates agree within 20%
    bool inconclusive = false;
};

/// Hill estimator on |samples| after dropping exact zeros.
TailEstimate tail_exponent(std::span<const double> samples, double fraction = 0.01);

/// Nonzero SIS loadings pooled over the first `columns` columns.
std::vector<double> sis_nonzero_loadings(const Hyperparameters& hyper, Eigen::Index p, Eigen::Index columns,
                                         long n_draws, std::uint64_t seed, int threads = 1);

Eigen::Index support_size(const Eigen::Ref<const Eigen::VectorXd>& lambda_h, double epsilon);

struct SupportCell {
    Eigen::Index p = 0;
    double c_p = 0.0;
    double mean_support = 0.0; ///< E|supp_eps(lambda_1)|
    double mcse = 0.0;
};

/// c_p = 2e log(p)/p at each p, x an intercept column; all other constants from hyper.
std::vector<SupportCell> support_growth(const Hyperparameters& hyper, std::span<const Eigen::Index> p_grid,
                                        double epsilon, long n_draws, std::uint64_t seed, int threads = 1);

/// Sublinear growth: mean support per variable strictly decreasing in p and
/// the log-log slope between the extreme grid points below one.
bool support_is_sublinear(const std::vector<SupportCell>& cells);

struct PriorCheckSettings {
    PriorSpec spec;
    Eigen::Index p = 16;
    Eigen::Index H = 10;
    long n_draws = 100000;
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<Eigen::Index> truncation_H{2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<double> truncation_T{0.5, 0.75, 0.9};
    std::vector<Eigen::Index> concentration_h{1, 2, 3, 4, 5};
    std::vector<double> concentration_eps{0.5, 1.0, 2.0};
    std::vector<Eigen::Index> support_p{64, 128, 256, 512};
    double support_epsilon = 0.05;
};

struct PriorPropertyReport {
    PriorCheckSettings settings;
    ShrinkageReport shrinkage;
    std::vector<TruncationCell> truncation;       ///< SIS only
    std::vector<ConcentrationCell> concentration; ///< SIS only
    TailEstimate tail;
    std::vector<SupportCell> support;             ///< SIS only
    bool support_sublinear = false;
    double zero_fraction = 0.0;       ///< Monte Carlo pr(lambda_jh = 0)
    double phi_zero_fraction = 0.0;   ///< Monte Carlo pr(phi_jh = 0), SIS only
};

PriorPropertyReport run_prior_check(const PriorCheckSettings& settings);

} // namespace sisfm
