#include "sisfm/model.hpp"

#include "sisfm/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace sisfm {

const char* to_string(DataMode mode) { return mode == DataMode::gaussian ? "gaussian" : "probit"; }

DataMode data_mode_from_string(const std::string& name) {
    if (name == "gaussian") return DataMode::gaussian;
    if (name == "probit") return DataMode::probit;
    throw ArgumentError("unknown data mode '" + name + "' (expected gaussian or probit)");
}

void Dataset::validate() const {
    if (n() < 1 || p() < 1) throw StructuralError("dataset: y must have at least one row and one column");
    if (q() < 1) throw StructuralError("dataset: x must have at least one column");
    if (x.rows() != p()) {
        std::ostringstream msg;
        msg << "dataset: x has " << x.rows() << " rows but y has " << p() << " columns";
        throw StructuralError(msg.str());
    }
    if (w && w->rows() != n()) {
        std::ostringstream msg;
        msg << "dataset: w has " << w->rows() << " rows but y has " << n() << " rows";
        throw StructuralError(msg.str());
    }
    if (w && mode != DataMode::probit) throw StructuralError("dataset: w is only used in probit mode");
    for (Eigen::Index j = 0; j < p(); ++j) {
        for (Eigen::Index i = 0; i < n(); ++i) {
            const double v = y(i, j);
            if (mode == DataMode::probit) {
                if (v != 0.0 && v != 1.0) {
                    std::ostringstream msg;
                    msg << "dataset: probit response at row " << i + 1 << ", column " << j + 1 << " is " << v
                        << " (expected 0 or 1)";
                    throw ValidationError(msg.str(), i, j);
                }
            } else if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "dataset: non-finite response at row " << i + 1 << ", column " << j + 1;
                throw ValidationError(msg.str(), i, j);
            }
        }
    }
    if (!x.allFinite()) throw ValidationError("dataset: x contains non-finite values");
    if (w && !w->allFinite()) throw ValidationError("dataset: w contains non-finite values");
}

double Hyperparameters::theta0() const {
    if (!(a_theta > 1.0)) throw ArgumentError("theta0 requires a_theta > 1");
    return b_theta / (a_theta - 1.0);
}

void Hyperparameters::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError(std::string("hyperparameter ") + name + " must be positive");
    };
    positive(alpha, "alpha");
    positive(b_theta, "b_theta");
    positive(sigma_beta, "sigma_beta");
    positive(a_sigma, "a_sigma");
    positive(b_sigma, "b_sigma");
    positive(sigma_mu, "sigma_mu");
    positive(sigma_b, "sigma_b");
    if (!(a_theta > 1.0)) throw ArgumentError("hyperparameter a_theta must exceed 1");
    if (!(c_p > 0.0 && c_p < 1.0)) throw ArgumentError("hyperparameter c_p must lie in (0, 1)");
}

double Hyperparameters::default_offset(Eigen::Index p) {
    return 2.0 * std::numbers::e * std::log(static_cast<double>(p)) / static_cast<double>(p);
}

StickBreaking stick_breaking(const Eigen::VectorXd& v) {
    const Eigen::Index H = v.size();
    if (H < 1) throw ArgumentError("stick_breaking: empty v");
    for (Eigen::Index l = 0; l < H; ++l) {
        if (!(v(l) > 0.0 && v(l) <= 1.0)) throw ArgumentError("stick_breaking: v must lie in (0, 1]");
    }
    if (v(H - 1) != 1.0) throw ArgumentError("stick_breaking: last fraction must equal 1");
    StickBreaking out{Eigen::VectorXd(H), Eigen::VectorXd(H)};
    double remaining = 1.0;
    double cumulative = 0.0;
    for (Eigen::Index l = 0; l < H; ++l) {
        out.w(l) = v(l) * remaining;
        remaining *= 1.0 - v(l);
        cumulative += out.w(l);
        out.pi(l) = cumulative;
    }
    // v_H = 1 closes the stick exactly.
    out.pi(H - 1) = 1.0;
    return out;
}

Eigen::MatrixXd effective_loadings(const Eigen::MatrixXd& lambda_star, const Eigen::VectorXi& rho,
                                   const Eigen::MatrixXi& phi) {
    if (rho.size() != lambda_star.cols() || phi.rows() != lambda_star.rows() || phi.cols() != lambda_star.cols())
        throw StructuralError("effective_loadings: indicator dimensions do not match lambda_star");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(lambda_star.rows(), lambda_star.cols());
    for (Eigen::Index h = 0; h < lambda_star.cols(); ++h) {
        if (rho(h) == 0) continue;
        for (Eigen::Index j = 0; j < lambda_star.rows(); ++j) {
            if (phi(j, h) != 0) out(j, h) = lambda_star(j, h);
        }
    }
    return out;
}

Eigen::MatrixXd effective_loadings(const ModelState& state) {
    return effective_loadings(state.lambda_star, state.rho, state.phi);
}

Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& omega) {
    const Eigen::VectorXd inv_sd = omega.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd corr = inv_sd.asDiagonal() * omega * inv_sd.asDiagonal();
    corr = 0.5 * (corr + corr.transpose());
    corr.diagonal().setOnes();
    return corr.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::MatrixXd partial_correlation(const Eigen::MatrixXd& correlation, bool* jittered) {
    const Eigen::Index p = correlation.rows();
    Eigen::MatrixXd work = correlation;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(work);
    bool used_jitter = false;
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
        work.diagonal().array() += 1e-10;
        ldlt.compute(work);
        used_jitter = true;
    }
    if (jittered != nullptr) *jittered = used_jitter;
    const Eigen::MatrixXd precision = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd out(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index l = 0; l < p; ++l) {
            out(j, l) = j == l ? 1.0 : -precision(j, l) / std::sqrt(precision(j, j) * precision(l, l));
        }
    }
    out = 0.5 * (out + out.transpose());
    return out;
}

CovarianceView assemble_covariance(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi,
                                   const Eigen::VectorXd& sigma2) {
    if (sigma2.size() != lambda.rows())
        throw StructuralError("assemble_covariance: sigma2 length does not match the rows of lambda");
    if (psi.size() != 0 && psi.size() != lambda.cols())
        throw StructuralError("assemble_covariance: psi length does not match the columns of lambda");
    if (!(sigma2.array() > 0.0).all()) throw ArgumentError("assemble_covariance: sigma2 must be positive");
    CovarianceView view;
    if (psi.size() == 0) {
        view.omega = lambda * lambda.transpose();
    } else {
        view.omega = lambda * psi.asDiagonal() * lambda.transpose();
    }
    view.omega = 0.5 * (view.omega + view.omega.transpose());
    view.omega.diagonal() += sigma2;
    view.correlation = correlation_from_covariance(view.omega);
    view.partial_correlation = partial_correlation(view.correlation);
    return view;
}

namespace {

double weighted_column_trace(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi, Eigen::Index columns) {
    double total = 0.0;
    for (Eigen::Index h = 0; h < columns; ++h) {
        const double scale = psi.size() == 0 ? 1.0 : psi(h);
        total += scale * lambda.col(h).squaredNorm();
    }
    return total;
}

} // namespace

double truncation_ratio(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2, Eigen::Index h_trunc,
                        const Eigen::VectorXd& psi) {
    if (h_trunc < 1 || h_trunc > lambda.cols())
        throw ArgumentError("truncation_ratio: truncation level must lie in [1, H]");
    if (psi.size() != 0 && psi.size() != lambda.cols())
        throw StructuralError("truncation_ratio: psi length does not match the columns of lambda");
    const double noise = sigma2.sum();
    const double kept = weighted_column_trace(lambda, psi, h_trunc) + noise;
    const double full = weighted_column_trace(lambda, psi, lambda.cols()) + noise;
    return h_trunc == lambda.cols() ? 1.0 : kept / full;
}

double truncation_ratio(const ModelState& state, Eigen::Index h_trunc, const Eigen::VectorXd& psi) {
    return truncation_ratio(effective_loadings(state), state.sigma2, h_trunc, psi);
}

double variance_explained(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2, const Eigen::VectorXd& psi) {
    if (psi.size() != 0 && psi.size() != lambda.cols())
        throw StructuralError("variance_explained: psi length does not match the columns of lambda");
    const double factor = weighted_column_trace(lambda, psi, lambda.cols());
    return factor / (factor + sigma2.sum());
}

double variance_explained(const ModelState& state, const Eigen::VectorXd& psi) {
    return variance_explained(effective_loadings(state), state.sigma2, psi);
}

} // namespace sisfm
