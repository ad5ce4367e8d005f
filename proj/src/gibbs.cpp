#include "sisfm/gibbs.hpp"

#include "sisfm/error.hpp"
#include "sisfm/priors.hpp"
#include "sisfm/summary.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace sisfm {

namespace {

double clamp_fraction(double v) { return std::clamp(v, std::numeric_limits<double>::min(), 1.0); }

/// Draw from N(Q^{-1} r, Q^{-1}) given the precision Q.
Eigen::VectorXd sample_precision_normal(const Eigen::MatrixXd& Q, const Eigen::VectorXd& r, RngStream& rng,
                                        const char* block) {
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string("Cholesky factorization failed in ") + block, -1, block);
    Eigen::VectorXd z(r.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
    return llt.solve(r) + llt.matrixU().solve(z);
}

} // namespace

ChainConfig ChainConfig::defaults(DataMode mode) {
    ChainConfig c;
    if (mode == DataMode::probit) {
        c.n_iterations = 40000;
        c.burn_in = 20000;
        c.alpha1 = -2.5e-4;
    }
    return c;
}

void ChainConfig::validate() const {
    if (n_iterations < 1) throw ArgumentError("chain: n_iterations must be positive");
    if (burn_in < 0 || burn_in >= n_iterations) throw ArgumentError("chain: burn_in must lie in [0, n_iterations)");
    if (thin < 1) throw ArgumentError("chain: thin must be at least 1");
    if (!(alpha0 < 0.0) || !(alpha1 < 0.0)) throw ArgumentError("chain: alpha0 and alpha1 must be negative");
    if (H_init < 0) throw ArgumentError("chain: H_init must be positive (or 0 for the default)");
    if (density.probit_mc_draws < 2 || density.probit_mc_draws % 2 != 0)
        throw ArgumentError("chain: probit_mc_draws must be a positive even number");
}

Eigen::Index default_truncation(Eigen::Index p) {
    const auto h = static_cast<Eigen::Index>(std::floor(5.0 * std::log(static_cast<double>(p))));
    return std::max<Eigen::Index>(1, std::min(p, h));
}

Draw snapshot(const ModelState& state, long iteration) {
    Draw d;
    d.iteration = iteration;
    d.lambda = effective_loadings(state);
    d.phi = state.phi;
    d.rho = state.rho;
    d.beta = state.beta;
    d.sigma2 = state.sigma2;
    d.theta = state.theta;
    d.v = state.v;
    d.mu = state.mu;
    d.b = state.b;
    return d;
}

GibbsSampler::GibbsSampler(Dataset data, Hyperparameters hyper, ChainConfig config)
    : data_(std::move(data)), hyper_(hyper), config_(config), rng_(config.seed, config.stream) {
    data_.validate();
    hyper_.validate();
    config_.validate();
    x_ = data_.x;
    initialize();
}

void GibbsSampler::initialize() {
    const Eigen::Index n = data_.n();
    const Eigen::Index p = data_.p();
    const Eigen::Index H = config_.H_init > 0 ? config_.H_init : default_truncation(p);
    ModelState& s = state_;
    s.theta.resize(H);
    s.lambda_star.resize(p, H);
    for (Eigen::Index h = 0; h < H; ++h) {
        s.theta(h) = sample_inverse_gamma(hyper_.a_theta, hyper_.b_theta, rng_);
        const double sd = std::sqrt(s.theta(h));
        for (Eigen::Index j = 0; j < p; ++j) s.lambda_star(j, h) = sd * rng_.normal();
    }
    s.v = sample_stick_fractions(hyper_.alpha, H, rng_);
    s.rho = Eigen::VectorXi::Ones(H);
    s.allocation = Eigen::VectorXi::Constant(H, static_cast<int>(H - 1));
    s.phi = Eigen::MatrixXi::Ones(p, H);
    s.beta = Eigen::MatrixXd::Zero(data_.q(), H);
    s.eta = Eigen::MatrixXd::Zero(n, H);
    if (data_.mode == DataMode::gaussian) {
        s.sigma2 = Eigen::VectorXd::Constant(p, hyper_.b_sigma / hyper_.a_sigma);
    } else {
        s.sigma2 = Eigen::VectorXd::Ones(p);
        s.mu = Eigen::MatrixXd::Zero(p, data_.c());
        s.b = Eigen::MatrixXd::Zero(data_.c(), data_.q());
        s.z.resize(n, p);
        const double inf = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < p; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                s.z(i, j) = data_.y(i, j) == 1.0 ? sample_truncated_normal(0.0, 1.0, 0.0, inf, rng_)
                                                 : sample_truncated_normal(0.0, 1.0, -inf, 0.0, rng_);
            }
        }
    }
    refresh_response();
}

void GibbsSampler::set_state(ModelState state) {
    const Eigen::Index H = state.H();
    if (state.p() != data_.p() || state.phi.rows() != data_.p() || state.phi.cols() != H || state.rho.size() != H ||
        state.theta.size() != H || state.v.size() != H || state.allocation.size() != H ||
        state.beta.rows() != data_.q() || state.beta.cols() != H || state.sigma2.size() != data_.p() ||
        state.eta.rows() != data_.n() || state.eta.cols() != H)
        throw StructuralError("set_state: state dimensions do not match the data");
    if (data_.mode == DataMode::probit) {
        if (state.z.rows() != data_.n() || state.z.cols() != data_.p() || state.mu.rows() != data_.p() ||
            state.mu.cols() != data_.c() || state.b.rows() != data_.c() || state.b.cols() != data_.q())
            throw StructuralError("set_state: probit blocks do not match the data");
    }
    state_ = std::move(state);
    refresh_response();
}

void GibbsSampler::set_responses(const Eigen::MatrixXd& y) {
    if (y.rows() != data_.n() || y.cols() != data_.p()) throw StructuralError("set_responses: dimension mismatch");
    data_.y = y;
    refresh_response();
}

void GibbsSampler::refresh_response() {
    if (data_.mode == DataMode::gaussian) {
        response_ = data_.y;
    } else if (data_.c() > 0) {
        response_ = state_.z - (*data_.w) * state_.mu.transpose();
    } else {
        response_ = state_.z;
    }
}

void GibbsSampler::check_finite(const char* block) const {
    const ModelState& s = state_;
    bool ok = s.lambda_star.allFinite() && s.eta.allFinite() && s.sigma2.allFinite() && s.beta.allFinite() &&
              s.theta.allFinite() && s.v.allFinite() && (s.sigma2.array() > 0.0).all() &&
              (s.theta.array() > 0.0).all();
    if (data_.mode == DataMode::probit) ok = ok && s.z.allFinite() && s.mu.allFinite() && s.b.allFinite();
    if (!ok) {
        std::ostringstream msg;
        msg << "non-finite value after block '" << block << "' at iteration " << iteration_;
        throw NumericalError(msg.str(), iteration_, block);
    }
}

// Probit steps 1-2.
void GibbsSampler::update_regression_means() {
    if (data_.mode != DataMode::probit || data_.c() == 0) return;
    ModelState& s = state_;
    const Eigen::MatrixXd& w = *data_.w;
    const Eigen::Index p = data_.p();
    const Eigen::Index c = data_.c();
    const Eigen::Index q = data_.q();
    const double prec_mu = 1.0 / (hyper_.sigma_mu * hyper_.sigma_mu);
    const double prec_b = 1.0 / (hyper_.sigma_b * hyper_.sigma_b);

    const Eigen::MatrixXd Q = w.transpose() * w + prec_mu * Eigen::MatrixXd::Identity(c, c);
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky failed in regression means", iteration_, "mu");
    const Eigen::MatrixXd target = s.z - s.eta * effective().transpose(); // n x p
    const Eigen::MatrixXd rhs = w.transpose() * target + prec_mu * s.b * x_.transpose(); // c x p
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::VectorXd noise(c);
        for (Eigen::Index k = 0; k < c; ++k) noise(k) = rng_.normal();
        s.mu.row(j) = (llt.solve(rhs.col(j)) + llt.matrixU().solve(noise)).transpose();
    }

    const Eigen::MatrixXd Qb = prec_mu * x_.transpose() * x_ + prec_b * Eigen::MatrixXd::Identity(q, q);
    Eigen::LLT<Eigen::MatrixXd> lltb(Qb);
    if (lltb.info() != Eigen::Success) throw NumericalError("Cholesky failed in trait effects", iteration_, "b");
    const Eigen::MatrixXd rhs_b = prec_mu * x_.transpose() * s.mu; // q x c
    for (Eigen::Index l = 0; l < c; ++l) {
        Eigen::VectorXd noise(q);
        for (Eigen::Index k = 0; k < q; ++k) noise(k) = rng_.normal();
        s.b.row(l) = (lltb.solve(rhs_b.col(l)) + lltb.matrixU().solve(noise)).transpose();
    }
    refresh_response();
    check_finite("regression_means");
}

// Probit step 3.
void GibbsSampler::update_latent_utilities() {
    if (data_.mode != DataMode::probit) return;
    ModelState& s = state_;
    Eigen::MatrixXd mean = s.eta * effective().transpose();
    if (data_.c() > 0) mean += (*data_.w) * s.mu.transpose();
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < data_.p(); ++j) {
        for (Eigen::Index i = 0; i < data_.n(); ++i) {
            s.z(i, j) = data_.y(i, j) == 1.0 ? sample_truncated_normal(mean(i, j), 1.0, 0.0, inf, rng_)
                                             : sample_truncated_normal(mean(i, j), 1.0, -inf, 0.0, rng_);
        }
    }
    refresh_response();
    check_finite("latent_utilities");
}

// Gaussian step 1, probit step 4.
void GibbsSampler::update_factors() {
    ModelState& s = state_;
    const Eigen::Index n = data_.n();
    const Eigen::Index H = s.H();
    const Eigen::MatrixXd lambda = effective();
    const Eigen::VectorXd inv_sigma2 = s.sigma2.cwiseInverse();
    const Eigen::MatrixXd scaled = inv_sigma2.asDiagonal() * lambda; // Sigma^{-1} Lambda
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(H, H) + lambda.transpose() * scaled;
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky failed in factors", iteration_, "eta");
    const Eigen::MatrixXd rhs = scaled.transpose() * response_.transpose(); // H x n
    Eigen::MatrixXd noise(H, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index h = 0; h < H; ++h) noise(h, i) = rng_.normal();
    s.eta = (llt.solve(rhs) + llt.matrixU().solve(noise)).transpose();
    check_finite("factors");
}

// Gaussian step 2.
void GibbsSampler::update_noise_variances() {
    if (data_.mode != DataMode::gaussian) return;
    ModelState& s = state_;
    const Eigen::MatrixXd resid = response_ - s.eta * effective().transpose();
    const double shape = hyper_.a_sigma + 0.5 * static_cast<double>(data_.n());
    for (Eigen::Index j = 0; j < data_.p(); ++j) {
        const double rate = hyper_.b_sigma + 0.5 * resid.col(j).squaredNorm();
        s.sigma2(j) = 1.0 / sample_gamma(shape, rate, rng_);
    }
    check_finite("noise_variances");
}

// Gaussian step 3, probit step 5.
void GibbsSampler::update_shrinkage_coefficients() {
    ModelState& s = state_;
    const Eigen::Index p = data_.p();
    const Eigen::Index q = data_.q();
    const double prec_beta = 1.0 / (hyper_.sigma_beta * hyper_.sigma_beta);
    for (Eigen::Index h = 0; h < s.H(); ++h) {
        const Eigen::VectorXd lin = x_ * s.beta.col(h);
        Eigen::VectorXd kappa(p);
        Eigen::VectorXd d(p);
        for (Eigen::Index j = 0; j < p; ++j) {
            int phi_l = 1;
            if (s.phi(j, h) == 0) {
                const double g = logistic(lin(j));
                const double one = g * (1.0 - hyper_.c_p);
                phi_l = sample_bernoulli(one / (one + 1.0 - g), rng_) ? 1 : 0;
            }
            kappa(j) = static_cast<double>(phi_l) - 0.5;
        }
        for (Eigen::Index j = 0; j < p; ++j) d(j) = sample_polya_gamma(lin(j), rng_);
        const Eigen::MatrixXd Q = x_.transpose() * d.asDiagonal() * x_ + prec_beta * Eigen::MatrixXd::Identity(q, q);
        s.beta.col(h) = sample_precision_normal(Q, x_.transpose() * kappa, rng_, "beta");
    }
    check_finite("shrinkage_coefficients");
}

// Gaussian step 4, probit step 6.
void GibbsSampler::update_loadings() {
    ModelState& s = state_;
    const Eigen::Index H = s.H();
    const Eigen::MatrixXd G = s.eta.transpose() * s.eta;        // H x H
    const Eigen::MatrixXd C = s.eta.transpose() * response_;     // H x p
    const Eigen::VectorXd prior_prec = s.theta.cwiseInverse();
    for (Eigen::Index j = 0; j < data_.p(); ++j) {
        Eigen::VectorXd mask(H);
        for (Eigen::Index h = 0; h < H; ++h) mask(h) = (s.rho(h) != 0 && s.phi(j, h) != 0) ? 1.0 : 0.0;
        const double prec = 1.0 / s.sigma2(j);
        Eigen::MatrixXd Q = prec * (mask.asDiagonal() * G * mask.asDiagonal());
        Q.diagonal() += prior_prec;
        const Eigen::VectorXd r = prec * mask.cwiseProduct(C.col(j));
        s.lambda_star.row(j) = sample_precision_normal(Q, r, rng_, "lambda").transpose();
    }
    check_finite("loadings");
}

// Gaussian step 5.1, probit step 7.1.
void GibbsSampler::update_allocation() {
    ModelState& s = state_;
    const Eigen::Index H = s.H();
    const StickBreaking stick = stick_breaking(s.v);
    Eigen::VectorXd log_w(H);
    for (Eigen::Index l = 0; l < H; ++l) log_w(l) = std::log(stick.w(l));
    const Eigen::VectorXd inv_sigma2 = s.sigma2.cwiseInverse();

    // Full residual; updated as each rho_h changes.
    Eigen::MatrixXd resid = response_ - s.eta * effective().transpose();
    std::vector<double> weights(static_cast<std::size_t>(H));
    for (Eigen::Index h = 0; h < H; ++h) {
        // Column contribution when active: c_ij = eta_ih * phi_jh * lambda*_jh.
        Eigen::VectorXd a(data_.p());
        for (Eigen::Index j = 0; j < data_.p(); ++j) a(j) = s.phi(j, h) != 0 ? s.lambda_star(j, h) : 0.0;
        const double eta_sq = s.eta.col(h).squaredNorm();
        const Eigen::VectorXd cross = resid.transpose() * s.eta.col(h); // p
        const double rho_old = static_cast<double>(s.rho(h));
        double delta = 0.0;
        for (Eigen::Index j = 0; j < data_.p(); ++j) {
            if (a(j) == 0.0) continue;
            const double rc = a(j) * cross(j) + rho_old * a(j) * a(j) * eta_sq;
            delta += inv_sigma2(j) * (rc - 0.5 * a(j) * a(j) * eta_sq);
        }
        for (Eigen::Index l = 0; l < H; ++l)
            weights[static_cast<std::size_t>(l)] = log_w(l) + (l > h ? delta : 0.0);
        const auto z = static_cast<int>(sample_categorical_log(weights, rng_));
        s.allocation(h) = z;
        const int rho_new = z > h ? 1 : 0;
        if (rho_new != s.rho(h)) {
            resid.noalias() -= (static_cast<double>(rho_new) - rho_old) * s.eta.col(h) * a.transpose();
            s.rho(h) = rho_new;
        }
    }
    check_finite("allocation");
}

// Gaussian step 5.2, probit step 7.2.
void GibbsSampler::update_column_variances() {
    ModelState& s = state_;
    const double shape = hyper_.a_theta + 0.5 * static_cast<double>(data_.p());
    for (Eigen::Index h = 0; h < s.H(); ++h) {
        const double rate = hyper_.b_theta + 0.5 * s.lambda_star.col(h).squaredNorm();
        s.theta(h) = 1.0 / sample_gamma(shape, rate, rng_);
    }
    check_finite("column_variances");
}

// Gaussian step 5.3, probit step 7.3.
void GibbsSampler::update_stick_fractions() {
    ModelState& s = state_;
    const Eigen::Index H = s.H();
    for (Eigen::Index l = 0; l + 1 < H; ++l) {
        double equal = 0.0;
        double above = 0.0;
        for (Eigen::Index h = 0; h < H; ++h) {
            if (s.allocation(h) == l) equal += 1.0;
            if (s.allocation(h) > l) above += 1.0;
        }
        s.v(l) = clamp_fraction(sample_beta(1.0 + equal, hyper_.alpha + above, rng_));
    }
    s.v(H - 1) = 1.0;
    check_finite("stick_fractions");
}

void GibbsSampler::update_column_scales() {
    update_allocation();
    update_column_variances();
    update_stick_fractions();
}

// Gaussian step 6, probit step 8.
void GibbsSampler::update_local_scales() {
    ModelState& s = state_;
    const Eigen::Index H = s.H();
    const Eigen::MatrixXd lambda = effective();
    const Eigen::VectorXd eta_sq = s.eta.colwise().squaredNorm().transpose();
    Eigen::MatrixXd lin = x_ * s.beta; // p x H
    for (Eigen::Index j = 0; j < data_.p(); ++j) {
        Eigen::VectorXd resid = response_.col(j) - s.eta * lambda.row(j).transpose();
        const double prec = 1.0 / s.sigma2(j);
        for (Eigen::Index h = 0; h < H; ++h) {
            const double prior_one = logistic(lin(j, h)) * hyper_.c_p;
            const double log_prior_odds = std::log(prior_one) - std::log1p(-prior_one);
            if (s.rho(h) == 0) {
                s.phi(j, h) = sample_bernoulli(prior_one, rng_) ? 1 : 0;
                continue;
            }
            const double ls = s.lambda_star(j, h);
            const double phi_old = static_cast<double>(s.phi(j, h));
            const double rc = ls * resid.dot(s.eta.col(h)) + phi_old * ls * ls * eta_sq(h);
            const double delta = prec * (rc - 0.5 * ls * ls * eta_sq(h));
            const double prob = logistic(log_prior_odds + delta);
            const int phi_new = sample_bernoulli(prob, rng_) ? 1 : 0;
            if (phi_new != s.phi(j, h)) {
                resid.noalias() -= (static_cast<double>(phi_new) - phi_old) * ls * s.eta.col(h);
                s.phi(j, h) = phi_new;
            }
        }
    }
    check_finite("local_scales");
}

bool GibbsSampler::adapt_truncation(long iteration) {
    const double prob = std::exp(config_.alpha0 + config_.alpha1 * static_cast<double>(iteration));
    if (!(rng_.uniform() < prob)) return false;
    apply_adaptation();
    return true;
}

void GibbsSampler::apply_adaptation() {
    ModelState& s = state_;
    const Eigen::Index H = s.H();
    const Eigen::Index p = data_.p();
    const Eigen::Index n = data_.n();
    const Eigen::Index active = s.active_count();
    const SisColumn fresh = sample_sis_column(hyper_, x_, rng_);
    Eigen::VectorXd fresh_eta(n);
    for (Eigen::Index i = 0; i < n; ++i) fresh_eta(i) = rng_.normal();

    if (active < H - 1) {
        const Eigen::Index H_new = active + 1;
        std::vector<Eigen::Index> keep;
        for (Eigen::Index h = 0; h < H; ++h)
            if (s.rho(h) != 0) keep.push_back(h);
        const StickBreaking stick = stick_breaking(s.v);
        ModelState next = s;
        next.lambda_star.resize(p, H_new);
        next.phi.resize(p, H_new);
        next.beta.resize(data_.q(), H_new);
        next.theta.resize(H_new);
        next.eta.resize(n, H_new);
        next.rho.resize(H_new);
        next.v.resize(H_new);
        next.allocation.resize(H_new);
        double remaining = 1.0;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const auto h = keep[k];
            const auto c = static_cast<Eigen::Index>(k);
            next.lambda_star.col(c) = s.lambda_star.col(h);
            next.phi.col(c) = s.phi.col(h);
            next.beta.col(c) = s.beta.col(h);
            next.theta(c) = s.theta(h);
            next.eta.col(c) = s.eta.col(h);
            next.rho(c) = 1;
            next.allocation(c) = static_cast<int>(H_new - 1);
            // Keep the active weights; the spare column closes the stick.
            next.v(c) = clamp_fraction(remaining > 0.0 ? stick.w(h) / remaining : 1.0);
            remaining -= stick.w(h);
        }
        const Eigen::Index last = H_new - 1;
        next.lambda_star.col(last) = fresh.lambda_star;
        next.phi.col(last) = fresh.phi;
        next.beta.col(last) = fresh.beta;
        next.theta(last) = fresh.theta;
        next.eta.col(last) = fresh_eta;
        next.rho(last) = 0;
        next.allocation(last) = 0;
        next.v(last) = 1.0;
        s = std::move(next);
    } else {
        const Eigen::Index H_new = H + 1;
        s.lambda_star.conservativeResize(Eigen::NoChange, H_new);
        s.phi.conservativeResize(Eigen::NoChange, H_new);
        s.beta.conservativeResize(Eigen::NoChange, H_new);
        s.theta.conservativeResize(H_new);
        s.eta.conservativeResize(Eigen::NoChange, H_new);
        s.rho.conservativeResize(H_new);
        s.v.conservativeResize(H_new);
        s.allocation.conservativeResize(H_new);
        s.lambda_star.col(H) = fresh.lambda_star;
        s.phi.col(H) = fresh.phi;
        s.beta.col(H) = fresh.beta;
        s.theta(H) = fresh.theta;
        s.eta.col(H) = fresh_eta;
        s.rho(H) = 0;
        s.allocation(H) = 0;
        s.v(H - 1) = clamp_fraction(sample_beta(1.0, hyper_.alpha, rng_));
        s.v(H) = 1.0;
    }
    check_finite("adaptation");
}

void GibbsSampler::gibbs_steps() {
    if (data_.mode == DataMode::probit) {
        update_regression_means();
        update_latent_utilities();
        update_factors();
        update_shrinkage_coefficients();
        update_loadings();
        update_column_scales();
        update_local_scales();
    } else {
        update_factors();
        update_noise_variances();
        update_shrinkage_coefficients();
        update_loadings();
        update_column_scales();
        update_local_scales();
    }
}

void GibbsSampler::gibbs_steps_at(long iteration) {
    iteration_ = iteration;
    gibbs_steps();
}

bool GibbsSampler::sweep(long iteration) {
    gibbs_steps_at(iteration);
    return adapt_truncation(iteration);
}

ChainOutput run_chain(const Dataset& data, const Hyperparameters& hyper, const ChainConfig& config) {
    GibbsSampler sampler(data, hyper, config);
    ChainOutput out;
    out.config = config;
    out.mode = data.mode;
    out.h_active_trace.reserve(static_cast<std::size_t>(config.n_iterations));
    out.h_trace.reserve(static_cast<std::size_t>(config.n_iterations));
    out.draws.reserve(static_cast<std::size_t>(config.retained()));
    const auto start = std::chrono::steady_clock::now();
    for (long t = 1; t <= config.n_iterations; ++t) {
        // Adaptation comes last, so record the state the updates produced first.
        sampler.gibbs_steps_at(t);
        out.h_active_trace.push_back(static_cast<int>(sampler.state().active_count()));
        out.h_trace.push_back(static_cast<int>(sampler.state().H()));
        if (t > config.burn_in && (t - config.burn_in) % config.thin == 0)
            out.draws.push_back(snapshot(sampler.state(), t));
        if (sampler.adapt_truncation(t)) out.adaptation_iterations.push_back(t);
    }
    const auto stop = std::chrono::steady_clock::now();
    out.seconds_per_iteration =
        std::chrono::duration<double>(stop - start).count() / static_cast<double>(config.n_iterations);
    if (config.record_log_density) record_log_densities(out, data, hyper);
    return out;
}

} // namespace sisfm
