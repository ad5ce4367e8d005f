#pragma once

// Domain types of the structured increasing shrinkage (SIS) factor model and
// the deterministic algebra built on them.
//
// The loadings are stored in the non-centred form used by the sampler:
// lambda_jh = lambda*_jh * sqrt(rho_h) * sqrt(phi_jh), with rho and phi
// binary, so an inactive column or local scale gives an exact zero.

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace sisfm {

enum class DataMode { gaussian, probit };

const char* to_string(DataMode mode);
DataMode data_mode_from_string(const std::string& name);

struct Dataset {
    Eigen::MatrixXd y;                ///< n x p responses; {0,1} in probit mode
    Eigen::MatrixXd x;                ///< p x q meta covariates
    std::optional<Eigen::MatrixXd> w; ///< n x c environmental covariates (probit only)
    DataMode mode = DataMode::gaussian;

    Eigen::Index n() const { return y.rows(); }
    Eigen::Index p() const { return y.cols(); }
    Eigen::Index q() const { return x.cols(); }
    Eigen::Index c() const { return w ? w->cols() : 0; }

    /// Throws StructuralError / ValidationError when the invariants fail.
    void validate() const;
};

/// Fixed prior constants. Gamma laws are shape-rate.
struct Hyperparameters {
    double alpha = 5.0;      ///< expected number of active factors
    double a_theta = 2.0;    ///< vartheta_h^{-1} ~ Ga(a_theta, b_theta), a_theta > 1
    double b_theta = 2.0;
    double sigma_beta = 1.0; ///< beta_mh ~ N(0, sigma_beta^2)
    double a_sigma = 1.0;    ///< sigma_j^{-2} ~ Ga(a_sigma, b_sigma)
    double b_sigma = 0.3;
    double c_p = 0.5;        ///< link offset in (0, 1)
    double sigma_mu = 1.0;   ///< probit mean structure scales
    double sigma_b = 1.0;

    /// theta_0 = E(vartheta_h) = b_theta / (a_theta - 1).
    double theta0() const;
    void validate() const;

    /// 2e log(p) / p; lies in (0, 1) for p >= 15.
    static double default_offset(Eigen::Index p);
};

struct ModelState {
    Eigen::MatrixXd lambda_star; ///< p x H
    Eigen::MatrixXi phi;         ///< p x H local indicators
    Eigen::VectorXi rho;         ///< H column activity indicators
    Eigen::VectorXd theta;       ///< H column variances vartheta_h
    Eigen::VectorXd v;           ///< H stick fractions, v(H-1) == 1
    Eigen::VectorXi allocation;  ///< H stick indices z_h, zero-based
    Eigen::MatrixXd beta;        ///< q x H
    Eigen::VectorXd sigma2;      ///< p noise variances
    Eigen::MatrixXd eta;         ///< n x H latent factors
    Eigen::MatrixXd mu;          ///< p x c regression coefficients (probit)
    Eigen::MatrixXd b;           ///< c x q trait effects (probit)
    Eigen::MatrixXd z;           ///< n x p latent utilities (probit)

    Eigen::Index H() const { return lambda_star.cols(); }
    Eigen::Index p() const { return lambda_star.rows(); }
    int active_count() const { return rho.sum(); }
};

struct StickBreaking {
    Eigen::VectorXd w;  ///< weights w_l = v_l prod_{m<l} (1 - v_m)
    Eigen::VectorXd pi; ///< cumulative sums pi_h
};

/// Throws ArgumentError unless every v_l lies in (0, 1] and the last equals 1.
StickBreaking stick_breaking(const Eigen::VectorXd& v);

/// lambda*_jh where rho_h = phi_jh = 1, exactly 0 elsewhere.
Eigen::MatrixXd effective_loadings(const Eigen::MatrixXd& lambda_star, const Eigen::VectorXi& rho,
                                   const Eigen::MatrixXi& phi);
Eigen::MatrixXd effective_loadings(const ModelState& state);

struct CovarianceView {
    Eigen::MatrixXd omega;
    Eigen::MatrixXd correlation;
    Eigen::MatrixXd partial_correlation;
};

/// Omega = Lambda Psi Lambda^T + diag(sigma2). An empty psi means the identity.
CovarianceView assemble_covariance(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi,
                                   const Eigen::VectorXd& sigma2);

Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& omega);

/// Partial correlations from the inverse of a correlation matrix; a 1e-10
/// diagonal jitter is added when the pivoted factorization fails.
Eigen::MatrixXd partial_correlation(const Eigen::MatrixXd& correlation, bool* jittered = nullptr);

/// tr(Omega_H) / tr(Omega) using the first h_trunc columns.
double truncation_ratio(const ModelState& state, Eigen::Index h_trunc,
                        const Eigen::VectorXd& psi = Eigen::VectorXd());
double truncation_ratio(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2, Eigen::Index h_trunc,
                        const Eigen::VectorXd& psi = Eigen::VectorXd());

/// tr(Lambda Psi Lambda^T) / tr(Omega).
double variance_explained(const ModelState& state, const Eigen::VectorXd& psi = Eigen::VectorXd());
double variance_explained(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2,
                          const Eigen::VectorXd& psi = Eigen::VectorXd());

} // namespace sisfm
