#pragma once

// Small datasets, model-consistent states and the grid oracle shared by the
// sampler tests and the acceptance run.

#include "oracles.hpp"
#include "sisfm/gibbs.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace gibbs_fixtures {

using namespace sisfm;


inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline Dataset gaussian_data(Eigen::Index n, Eigen::Index p, Eigen::Index q, std::uint64_t seed) {
    RngStream rng(seed, 99);
    Dataset d;
    d.y.resize(n, p);
    for (Eigen::Index k = 0; k < d.y.size(); ++k) d.y.data()[k] = rng.normal();
    d.x = Eigen::MatrixXd::Ones(p, q);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index m = 1; m < q; ++m) d.x(j, m) = rng.normal();
    return d;
}

inline Dataset probit_data(Eigen::Index n, Eigen::Index p, Eigen::Index c, std::uint64_t seed) {
    RngStream rng(seed, 98);
    Dataset d;
    d.mode = DataMode::probit;
    d.y.resize(n, p);
    for (Eigen::Index k = 0; k < d.y.size(); ++k) d.y.data()[k] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    d.x = Eigen::MatrixXd::Ones(p, 1);
    if (c > 0) {
        d.w = Eigen::MatrixXd(n, c);
        for (Eigen::Index k = 0; k < d.w->size(); ++k) d.w->data()[k] = rng.normal();
    }
    return d;
}

/// A state consistent with the model's support: rho_h = 1(z_h > h).
inline ModelState make_state(const Dataset& d, const std::vector<int>& rho, std::uint64_t seed) {
    RngStream rng(seed, 97);
    const Eigen::Index H = static_cast<Eigen::Index>(rho.size());
    const Eigen::Index n = d.n();
    const Eigen::Index p = d.p();
    ModelState s;
    s.lambda_star.resize(p, H);
    for (Eigen::Index k = 0; k < s.lambda_star.size(); ++k) s.lambda_star.data()[k] = rng.normal();
    s.phi = Eigen::MatrixXi::Ones(p, H);
    s.rho.resize(H);
    s.allocation.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) {
        s.rho(h) = rho[static_cast<std::size_t>(h)];
        s.allocation(h) = s.rho(h) ? static_cast<int>(H - 1) : 0;
    }
    s.theta = Eigen::VectorXd::Constant(H, 1.5);
    s.v = Eigen::VectorXd::Constant(H, 0.3);
    s.v(H - 1) = 1.0;
    s.beta.resize(d.q(), H);
    for (Eigen::Index k = 0; k < s.beta.size(); ++k) s.beta.data()[k] = 0.5 * rng.normal();
    s.sigma2 = Eigen::VectorXd::Constant(p, 0.7);
    s.eta.resize(n, H);
    for (Eigen::Index k = 0; k < s.eta.size(); ++k) s.eta.data()[k] = rng.normal();
    if (d.mode == DataMode::probit) {
        s.sigma2.setOnes();
        s.mu = Eigen::MatrixXd::Constant(p, d.c(), 0.2);
        s.b = Eigen::MatrixXd::Constant(d.c(), d.q(), -0.1);
        s.z.resize(n, p);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < p; ++j) s.z(i, j) = (d.y(i, j) == 1.0 ? 1.0 : -1.0) * (0.2 + rng.uniform());
    }
    return s;
}

inline ChainConfig small_config(std::uint64_t seed, Eigen::Index H) {
    ChainConfig c;
    c.seed = seed;
    c.H_init = H;
    c.n_iterations = 10;
    c.burn_in = 0;
    c.thin = 1;
    return c;
}

/// KS p-value of draws of one coordinate against the grid-normalized log joint.
inline double ks_vs_joint(const std::vector<double>& draws, const ModelState& base, const Dataset& data,
                   const Hyperparameters& hp, const std::function<void(ModelState&, double)>& set, double lo,
                   double hi) {
    const oracle::GridCdf cdf(
        [&](double value) {
            ModelState s = base;
            set(s, value);
            return oracle::log_joint(s, data, hp);
        },
        lo, hi, 40001);
    return oracle::ks_one_sample(draws, [&](double v) { return cdf(v); }).p_value;
}

} // namespace gibbs_fixtures
