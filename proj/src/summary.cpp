#include "sisfm/summary.hpp"

#include "sisfm/error.hpp"
#include "sisfm/parallel.hpp"
#include "sisfm/priors.hpp"
#include "sisfm/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sisfm {

namespace {

constexpr std::uint64_t kCrnSeed = 0x5eed'c0de'2024ULL;
constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal_density(double x, double sd) { return -0.5 * kLog2Pi - std::log(sd) - 0.5 * (x / sd) * (x / sd); }

double log_gamma_density(double x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// M x H common random numbers: rows M/2.. mirror the first half.
Eigen::MatrixXd common_normals(int mc_draws, Eigen::Index H) {
    const Eigen::Index half = mc_draws / 2;
    Eigen::MatrixXd e(2 * half, H);
    const RngStream root(kCrnSeed, 0);
    for (Eigen::Index h = 0; h < H; ++h) {
        RngStream rng = root.substream(static_cast<std::uint64_t>(h));
        for (Eigen::Index m = 0; m < half; ++m) {
            const double z = rng.normal();
            e(m, h) = z;
            e(m + half, h) = -z;
        }
    }
    return e;
}

double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double top = std::max(a, b);
    return top + std::log(std::exp(a - top) + std::exp(b - top));
}

Eigen::VectorXd gaussian_pointwise(const Draw& draw, const Dataset& data) {
    const Eigen::Index n = data.n();
    const Eigen::Index p = data.p();
    std::vector<Eigen::Index> active;
    for (Eigen::Index h = 0; h < draw.lambda.cols(); ++h)
        if (draw.lambda.col(h).cwiseAbs().maxCoeff() > 0.0) active.push_back(h);
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd A(p, k);
    for (Eigen::Index c = 0; c < k; ++c) A.col(c) = draw.lambda.col(active[static_cast<std::size_t>(c)]);
    if (!(draw.sigma2.array() > 0.0).all()) throw NumericalError("log density: non-positive noise variance", -1, "density");
    const Eigen::VectorXd inv = draw.sigma2.cwiseInverse();

    // Woodbury: Omega^{-1} = S^{-1} - S^{-1} A M^{-1} A' S^{-1}, M = I + A' S^{-1} A.
    const Eigen::MatrixXd SA = inv.asDiagonal() * A;
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(k, k) + A.transpose() * SA;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw NumericalError("log density: Cholesky failed", -1, "density");
    double log_det = draw.sigma2.array().log().sum();
    for (Eigen::Index c = 0; c < k; ++c) log_det += 2.0 * std::log(llt.matrixLLT()(c, c));

    Eigen::VectorXd out(n);
    const Eigen::MatrixXd proj = SA.transpose() * data.y.transpose(); // k x n
    const Eigen::MatrixXd reduced = k > 0 ? Eigen::MatrixXd(llt.matrixL().solve(proj)) : Eigen::MatrixXd(0, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double quad = data.y.row(i).cwiseAbs2().dot(inv) - (k > 0 ? reduced.col(i).squaredNorm() : 0.0);
        out(i) = -0.5 * (static_cast<double>(p) * kLog2Pi + log_det + quad);
    }
    return out;
}

double column_log_prior(const Eigen::Ref<const Eigen::VectorXd>& lambda, const Eigen::Ref<const Eigen::VectorXd>& beta,
                        const Eigen::MatrixXd& x, const Hyperparameters& hyper, double pi) {
    const Eigen::VectorXd lin = x * beta;
    double log_phi_pattern = 0.0;
    double sq = 0.0;
    double m = 0.0;
    for (Eigen::Index j = 0; j < lambda.size(); ++j) {
        const double q = hyper.c_p * logistic(lin(j));
        if (lambda(j) != 0.0) {
            log_phi_pattern += std::log(q);
            sq += lambda(j) * lambda(j);
            m += 1.0;
        } else {
            log_phi_pattern += std::log1p(-q);
        }
    }
    const double a = hyper.a_theta;
    const double b = hyper.b_theta;
    // Multivariate t from integrating vartheta against its inverse gamma.
    const double log_t = std::lgamma(a + 0.5 * m) - std::lgamma(a) + a * std::log(b) - 0.5 * m * kLog2Pi -
                         (a + 0.5 * m) * std::log(b + 0.5 * sq);
    const double log_slab = (pi < 1.0 ? std::log1p(-pi) : -std::numeric_limits<double>::infinity()) +
                            log_phi_pattern + log_t;
    if (m > 0.0) return log_slab;
    return log_add(pi > 0.0 ? std::log(pi) : -std::numeric_limits<double>::infinity(), log_slab);
}

} // namespace

Eigen::VectorXd probit_pointwise_loglik(const Eigen::MatrixXd& y, const Eigen::MatrixXd& mean, const Eigen::MatrixXd& A,
                                        int mc_draws) {
    if (mc_draws < 2 || mc_draws % 2 != 0) throw ArgumentError("probit likelihood: mc_draws must be positive and even");
    if (mean.rows() != y.rows() || mean.cols() != y.cols() || A.rows() != y.cols())
        throw StructuralError("probit likelihood: dimension mismatch");
    const Eigen::Index n = y.rows();
    const Eigen::Index p = y.cols();
    const Eigen::MatrixXd e = common_normals(mc_draws, A.cols());
    const Eigen::MatrixXd shift = e * A.transpose(); // M x p
    const Eigen::Index M = shift.rows();
    Eigen::VectorXd out(n);
    std::vector<double> acc(static_cast<std::size_t>(M));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (Eigen::Index j = 0; j < p; ++j) {
            const double sign = y(i, j) == 1.0 ? 1.0 : -1.0;
            const double base = mean(i, j);
            for (Eigen::Index m = 0; m < M; ++m)
                acc[static_cast<std::size_t>(m)] += normal_log_cdf(sign * (base + shift(m, j)));
        }
        out(i) = log_sum_exp(acc) - std::log(static_cast<double>(M));
    }
    return out;
}

Eigen::VectorXd pointwise_log_likelihood(const Draw& draw, const Dataset& data, const DensityOptions& options) {
    if (draw.lambda.rows() != data.p()) throw StructuralError("log density: draw does not match the data");
    if (data.mode == DataMode::gaussian) return gaussian_pointwise(draw, data);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(data.n(), data.p());
    if (data.c() > 0) mean = (*data.w) * draw.mu.transpose();
    return probit_pointwise_loglik(data.y, mean, draw.lambda, options.probit_mc_draws);
}

double log_prior_density(const Draw& draw, const Dataset& data, const Hyperparameters& hyper,
                         const DensityOptions& options) {
    const Eigen::Index H = draw.lambda.cols();
    const Eigen::VectorXd pi = options.expected_pi ? Eigen::VectorXd(Eigen::VectorXd::NullaryExpr(H, [&](Eigen::Index h) {
        return expected_pi(hyper.alpha, h + 1);
    }))
                                                   : stick_breaking(draw.v).pi;
    double total = 0.0;
    for (Eigen::Index h = 0; h < H; ++h)
        total += column_log_prior(draw.lambda.col(h), draw.beta.col(h), data.x, hyper, pi(h));
    for (Eigen::Index k = 0; k < draw.beta.size(); ++k)
        total += log_normal_density(draw.beta.data()[k], hyper.sigma_beta);
    if (data.mode == DataMode::gaussian) {
        for (Eigen::Index j = 0; j < draw.sigma2.size(); ++j)
            total += log_gamma_density(1.0 / draw.sigma2(j), hyper.a_sigma, hyper.b_sigma);
    } else if (data.c() > 0) {
        const Eigen::MatrixXd centre = data.x * draw.b.transpose(); // p x c
        for (Eigen::Index j = 0; j < draw.mu.rows(); ++j)
            for (Eigen::Index l = 0; l < draw.mu.cols(); ++l)
                total += log_normal_density(draw.mu(j, l) - centre(j, l), hyper.sigma_mu);
        for (Eigen::Index k = 0; k < draw.b.size(); ++k) total += log_normal_density(draw.b.data()[k], hyper.sigma_b);
    }
    return total;
}

double log_marginal_density(const Draw& draw, const Dataset& data, const Hyperparameters& hyper,
                            const DensityOptions& options) {
    return pointwise_log_likelihood(draw, data, options).sum() + log_prior_density(draw, data, hyper, options);
}

void record_log_densities(ChainOutput& chain, const Dataset& data, const Hyperparameters& hyper, int threads) {
    const std::size_t S = chain.draws.size();
    chain.log_density.assign(S, 0.0);
    chain.pointwise_loglik.resize(static_cast<Eigen::Index>(S), data.n());
    parallel_for(S, threads, [&](std::size_t t) {
        const Eigen::VectorXd ll = pointwise_log_likelihood(chain.draws[t], data, chain.config.density);
        chain.pointwise_loglik.row(static_cast<Eigen::Index>(t)) = ll.transpose();
        chain.log_density[t] = ll.sum() + log_prior_density(chain.draws[t], data, hyper, chain.config.density);
    });
}

std::size_t select_map_draw(std::span<const double> log_density) {
    if (log_density.empty()) throw ArgumentError("select_map_draw: the chain has no retained draws");
    std::size_t best = 0;
    for (std::size_t t = 1; t < log_density.size(); ++t)
        if (log_density[t] > log_density[best]) best = t;
    return best;
}

std::size_t select_map_draw(ChainOutput& chain, const Dataset& data, const Hyperparameters& hyper) {
    if (chain.draws.empty()) throw ArgumentError("select_map_draw: the chain has no retained draws");
    if (chain.log_density.size() != chain.draws.size()) record_log_densities(chain, data, hyper);
    return select_map_draw(chain.log_density);
}

LpmlResult compute_lpml(const Eigen::MatrixXd& pointwise, bool per_observation) {
    const Eigen::Index S = pointwise.rows();
    const Eigen::Index n = pointwise.cols();
    if (S == 0 || n == 0) throw ArgumentError("compute_lpml: no pointwise likelihood values");
    LpmlResult r;
    r.per_observation = per_observation;
    std::vector<double> neg(static_cast<std::size_t>(S));
    const double log_S = std::log(static_cast<double>(S));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < S; ++t) {
            const double v = pointwise(t, i);
            if (v == -std::numeric_limits<double>::infinity()) ++r.zero_likelihoods;
            neg[static_cast<std::size_t>(t)] = -v;
        }
        r.total += log_S - log_sum_exp(neg);
    }
    r.lpml = per_observation ? r.total / static_cast<double>(n) : r.total;
    return r;
}

std::vector<NetworkEdge> threshold_edges(const Eigen::MatrixXd& partial, double threshold) {
    std::vector<NetworkEdge> edges;
    for (Eigen::Index i = 0; i < partial.rows(); ++i)
        for (Eigen::Index j = i + 1; j < partial.cols(); ++j)
            if (std::abs(partial(i, j)) >= threshold) edges.push_back({i, j, partial(i, j)});
    return edges;
}

PosteriorNetwork posterior_network(const std::vector<Draw>& draws, double threshold) {
    if (draws.empty()) throw ArgumentError("posterior_network: the chain has no retained draws");
    const Eigen::Index p = draws.front().lambda.rows();
    PosteriorNetwork net;
    net.mean_correlation = Eigen::MatrixXd::Zero(p, p);
    for (const Draw& d : draws) {
        Eigen::MatrixXd omega = d.lambda * d.lambda.transpose();
        omega.diagonal() += d.sigma2;
        net.mean_correlation += correlation_from_covariance(omega);
    }
    net.mean_correlation /= static_cast<double>(draws.size());
    net.mean_correlation = 0.5 * (net.mean_correlation + net.mean_correlation.transpose()).eval();
    net.mean_correlation.diagonal().setOnes();
    net.partial_correlation = partial_correlation(net.mean_correlation, &net.jittered);
    net.edges = threshold_edges(net.partial_correlation, threshold);
    return net;
}

double expected_active_factors(const std::vector<Draw>& draws) {
    if (draws.empty()) throw ArgumentError("expected_active_factors: the chain has no retained draws");
    double total = 0.0;
    for (const Draw& d : draws) total += d.active();
    return total / static_cast<double>(draws.size());
}

double cv_heldout_loglik(const Dataset& data, const Hyperparameters& hyper, const ChainConfig& config, int n_folds,
                         int threads) {
    if (data.mode != DataMode::probit) throw ArgumentError("cv_heldout_loglik: requires probit data");
    if (n_folds < 2) throw ArgumentError("cv_heldout_loglik: n_folds must be at least 2");
    if (n_folds > data.n()) throw ArgumentError("cv_heldout_loglik: more folds than observations");
    std::vector<double> fold_values(static_cast<std::size_t>(n_folds));
    parallel_for(static_cast<std::size_t>(n_folds), threads, [&](std::size_t f) {
        std::vector<Eigen::Index> train;
        std::vector<Eigen::Index> test;
        for (Eigen::Index i = 0; i < data.n(); ++i)
            (static_cast<std::size_t>(i % n_folds) == f ? test : train).push_back(i);
        if (train.empty()) throw ArgumentError("cv_heldout_loglik: empty training fold");
        Dataset fit;
        fit.mode = DataMode::probit;
        fit.x = data.x;
        fit.y = data.y(train, Eigen::all);
        if (data.w) fit.w = Eigen::MatrixXd((*data.w)(train, Eigen::all));
        ChainConfig cfg = config;
        cfg.record_log_density = false;
        cfg.stream = config.stream + 1 + f;
        const ChainOutput chain = run_chain(fit, hyper, cfg);
        if (chain.draws.empty()) throw ArgumentError("cv_heldout_loglik: no retained draws");

        const Eigen::Index p = data.p();
        Eigen::MatrixXd lambda_outer = Eigen::MatrixXd::Zero(p, p);
        Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(p, data.c());
        for (const Draw& d : chain.draws) {
            lambda_outer += d.lambda * d.lambda.transpose();
            if (data.c() > 0) mu += d.mu;
        }
        lambda_outer /= static_cast<double>(chain.draws.size());
        mu /= static_cast<double>(chain.draws.size());
        // Omega = E(Lambda Lambda') + I; factor the first term for the eta integral.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lambda_outer);
        const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
        Eigen::MatrixXd A = eig.eigenvectors() * values.cwiseSqrt().asDiagonal();

        const Eigen::MatrixXd y_test = data.y(test, Eigen::all);
        Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(y_test.rows(), p);
        if (data.c() > 0) mean = (*data.w)(test, Eigen::all) * mu.transpose();
        fold_values[f] = probit_pointwise_loglik(y_test, mean, A, config.density.probit_mc_draws).mean();
    });
    double total = 0.0;
    for (double v : fold_values) total += v;
    return total / static_cast<double>(n_folds);
}

SummaryReport summarize_chain(ChainOutput& chain, const Dataset& data, const Hyperparameters& hyper,
                              const SummaryOptions& options) {
    if (chain.draws.empty()) throw ArgumentError("summarize: the chain has no retained draws");
    if (chain.log_density.size() != chain.draws.size() ||
        chain.pointwise_loglik.rows() != static_cast<Eigen::Index>(chain.draws.size()) ||
        chain.pointwise_loglik.cols() != data.n())
        record_log_densities(chain, data, hyper, options.threads);
    SummaryReport r;
    r.n_draws = chain.draws.size();
    r.map_index = select_map_draw(chain.log_density);
    const Draw& best = chain.draws[r.map_index];
    r.map_iteration = best.iteration;
    r.map_log_density = chain.log_density[r.map_index];
    r.lambda_map = best.lambda;
    r.beta_map = best.beta;
    r.sigma_map = best.sigma2;
    r.lpml = compute_lpml(chain.pointwise_loglik, options.lpml_per_observation);
    r.e_h_active = expected_active_factors(chain.draws);
    r.network = posterior_network(chain.draws, options.edge_threshold);
    if (options.cv_folds > 0)
        r.cv_heldout_loglik = cv_heldout_loglik(data, hyper, chain.config, options.cv_folds, options.threads);
    return r;
}

} // namespace sisfm
