#include "gibbs_fixtures.hpp"
#include "sisfm/error.hpp"
#include "sisfm/gibbs.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace sisfm;
using namespace gibbs_fixtures;

TEST_CASE("factor update: scalar conjugate case and grid oracle") {
    Dataset d;
    d.y = Eigen::MatrixXd::Constant(1, 1, 2.0);
    d.x = Eigen::MatrixXd::Ones(1, 1);
    Hyperparameters hp;
    GibbsSampler g(d, hp, small_config(1, 1));
    ModelState s = g.state();
    s.lambda_star(0, 0) = 1.0;
    s.rho(0) = 1;
    s.phi(0, 0) = 1;
    s.sigma2(0) = 1.0;
    g.set_state(s);
    std::vector<double> x(50000);
    for (auto& v : x) {
        g.update_factors();
        v = g.state().eta(0, 0);
    }
    CHECK(oracle::ks_one_sample(x, [](double t) { return 1.0 - oracle::upper_tail((t - 1.0) / std::sqrt(0.5)); }).p_value >
          0.01);

    // Zero loadings recover the prior.
    s.rho(0) = 0;
    g.set_state(s);
    for (auto& v : x) {
        g.update_factors();
        v = g.state().eta(0, 0);
    }
    CHECK(oracle::ks_one_sample(x, [](double t) { return 1.0 - oracle::upper_tail(t); }).p_value > 0.01);

    // n = 2, p = 2; rho = (1, 0) decouples the factors so the coordinate conditional is the marginal.
    const Dataset d2 = gaussian_data(2, 2, 1, 2);
    const ModelState base = make_state(d2, {1, 0}, 2);
    GibbsSampler g2(d2, hp, small_config(2, 2));
    g2.set_state(base);
    std::vector<double> e(40000);
    for (auto& v : e) {
        g2.update_factors();
        v = g2.state().eta(1, 0);
    }
    CHECK(ks_vs_joint(e, base, d2, hp, [](ModelState& st, double v) { st.eta(1, 0) = v; }, -8.0, 8.0) > 0.01);
}

TEST_CASE("noise variance update") {
    Hyperparameters hp;
    // Perfect fit: residuals zero, shape a + n/2 = 6, rate b = 0.3.
    Dataset d;
    d.y = Eigen::MatrixXd::Zero(10, 1);
    d.x = Eigen::MatrixXd::Ones(1, 1);
    GibbsSampler g(d, hp, small_config(3, 1));
    std::vector<double> prec(40000);
    for (auto& v : prec) {
        g.update_noise_variances();
        v = 1.0 / g.state().sigma2(0);
    }
    CHECK(oracle::ks_one_sample(prec, [](double t) { return t <= 0 ? 0.0 : boost::math::gamma_p(6.0, 0.3 * t); }).p_value >
          0.01);

    // Random instance: gamma mean oracle and grid oracle on the precision scale.
    const Dataset d2 = gaussian_data(5, 3, 1, 4);
    const ModelState base = make_state(d2, {1, 0}, 4);
    GibbsSampler g2(d2, hp, small_config(4, 2));
    g2.set_state(base);
    const Eigen::MatrixXd resid = d2.y - base.eta * effective_loadings(base).transpose();
    const double shape = hp.a_sigma + 2.5;
    const double rate = hp.b_sigma + 0.5 * resid.col(1).squaredNorm();
    std::vector<double> t(100000);
    for (auto& v : t) {
        g2.update_noise_variances();
        v = 1.0 / g2.state().sigma2(1);
    }
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(t.size());
    const double se = std::sqrt(shape / (rate * rate) / static_cast<double>(t.size()));
    CHECK(std::abs(mean - shape / rate) < 3.0 * se);
    t.resize(30000);
    CHECK(ks_vs_joint(t, base, d2, hp, [](ModelState& st, double v) { st.sigma2(1) = 1.0 / v; }, 1e-9,
                      *std::max_element(t.begin(), t.end()) * 2.0) > 0.01);
}

TEST_CASE("shrinkage coefficient update targets the logistic-Bernoulli posterior") {
    Hyperparameters hp;
    hp.c_p = 0.7;
    const Dataset d = gaussian_data(3, 3, 1, 5);
    ModelState base = make_state(d, {1, 0}, 5);
    base.phi << 1, 0, 0, 1, 0, 0;
    GibbsSampler g(d, hp, small_config(5, 2));
    g.set_state(base);
    std::vector<double> b(20000);
    for (auto& v : b) {
        for (int k = 0; k < 5; ++k) g.update_shrinkage_coefficients();
        v = g.state().beta(0, 0);
    }
    CHECK(ks_vs_joint(b, base, d, hp, [](ModelState& st, double v) { st.beta(0, 0) = v; }, -10.0, 10.0) > 0.01);

    // Intercept only, c_p near 1 and half the indicators on: the posterior is close to symmetric about 0.
    Hyperparameters near_one;
    near_one.c_p = 0.999;
    const Dataset d4 = gaussian_data(2, 4, 1, 6);
    ModelState bal = make_state(d4, {1, 0}, 6);
    bal.phi.col(0) << 1, 0, 1, 0;
    GibbsSampler g4(d4, near_one, small_config(6, 2));
    g4.set_state(bal);
    double mean = 0.0;
    for (int k = 0; k < 20000; ++k) {
        g4.update_shrinkage_coefficients();
        mean += g4.state().beta(0, 0);
    }
    CHECK(std::abs(mean / 20000.0) < 0.05);
}

TEST_CASE("loading update") {
    Hyperparameters hp;
    const Dataset d = gaussian_data(4, 3, 1, 7);
    const ModelState base = make_state(d, {1, 0}, 7);
    GibbsSampler g(d, hp, small_config(7, 2));
    g.set_state(base);
    std::vector<double> l(40000);
    std::vector<double> prior(40000);
    for (std::size_t k = 0; k < l.size(); ++k) {
        g.update_loadings();
        l[k] = g.state().lambda_star(2, 0);
        prior[k] = g.state().lambda_star(2, 1); // inactive column: prior N(0, theta)
    }
    CHECK(ks_vs_joint(l, base, d, hp, [](ModelState& st, double v) { st.lambda_star(2, 0) = v; }, -10.0, 10.0) > 0.01);
    CHECK(oracle::ks_one_sample(prior, [](double t) { return 1.0 - oracle::upper_tail(t / std::sqrt(1.5)); }).p_value >
          0.01);

    // Large n, strong signal: posterior mean approaches the least-squares coefficient.
    Dataset big;
    const Eigen::Index n = 4000;
    RngStream rng(8, 0);
    Eigen::VectorXd f(n);
    for (auto& v : f) v = rng.normal();
    big.y.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) big.y(i, 0) = 2.5 * f(i) + 0.1 * rng.normal();
    big.x = Eigen::MatrixXd::Ones(1, 1);
    GibbsSampler gb(big, hp, small_config(8, 2));
    ModelState sb = gb.state();
    sb.rho << 1, 0;
    sb.allocation << 1, 0;
    sb.eta.col(0) = f;
    sb.sigma2(0) = 0.01;
    gb.set_state(sb);
    const double ls = f.dot(big.y.col(0)) / f.squaredNorm();
    double mean = 0.0;
    for (int k = 0; k < 2000; ++k) {
        gb.update_loadings();
        mean += gb.state().lambda_star(0, 0);
    }
    CHECK(mean / 2000.0 == doctest::Approx(ls).epsilon(1e-3));
}

TEST_CASE("allocation update matches enumeration") {
    Hyperparameters hp;
    const Dataset d = gaussian_data(3, 2, 1, 9);
    ModelState base = make_state(d, {1, 1, 0}, 9);
    base.v << 0.4, 0.3, 1.0;
    GibbsSampler g(d, hp, small_config(9, 3));
    // Exact conditional of z_1 given everything else.
    std::vector<double> logp(3);
    for (int l = 0; l < 3; ++l) {
        ModelState s = base;
        s.allocation(0) = l;
        s.rho(0) = l > 0 ? 1 : 0;
        logp[static_cast<std::size_t>(l)] = oracle::log_joint(s, d, hp);
    }
    const double top = *std::max_element(logp.begin(), logp.end());
    std::vector<double> probs(3);
    double total = 0.0;
    for (int l = 0; l < 3; ++l) total += probs[static_cast<std::size_t>(l)] = std::exp(logp[static_cast<std::size_t>(l)] - top);
    for (auto& v : probs) v /= total;
    std::vector<long> counts(3, 0);
    for (int rep = 0; rep < 100000; ++rep) {
        g.set_state(base);
        g.update_allocation();
        ++counts[static_cast<std::size_t>(g.state().allocation(0))];
        REQUIRE(g.state().rho(0) == (g.state().allocation(0) > 0 ? 1 : 0));
    }
    CHECK(oracle::chi_square_p(counts, probs) > 0.01);

    // No data signal (zero loadings): z_h follows the stick weights, pr(rho_h = 1) = 1 - pi_h.
    ModelState flat = base;
    flat.lambda_star.setZero();
    long active = 0;
    for (int rep = 0; rep < 100000; ++rep) {
        g.set_state(flat);
        g.update_allocation();
        active += g.state().rho(0);
    }
    CHECK(static_cast<double>(active) / 100000.0 == doctest::Approx(0.6).epsilon(0.01));

    // A column carrying the whole signal is kept.
    Dataset strong = d;
    strong.y = base.eta.col(0) * (10.0 * base.lambda_star.col(0)).transpose();
    ModelState sb = base;
    sb.lambda_star.col(0) *= 10.0;
    sb.sigma2.setConstant(0.01);
    GibbsSampler gs(strong, hp, small_config(10, 3));
    long kept = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        gs.set_state(sb);
        gs.update_allocation();
        kept += gs.state().rho(0);
    }
    CHECK(kept == 1000);
}

TEST_CASE("column variance and stick updates") {
    Hyperparameters hp;
    const Dataset d = gaussian_data(3, 4, 1, 11);
    ModelState base = make_state(d, {1, 0}, 11);
    GibbsSampler g(d, hp, small_config(11, 2));
    g.set_state(base);
    std::vector<double> tau(30000);
    for (auto& v : tau) {
        g.update_column_variances();
        v = 1.0 / g.state().theta(1);
    }
    CHECK(ks_vs_joint(tau, base, d, hp, [](ModelState& st, double v) { st.theta(1) = 1.0 / v; }, 1e-9,
                      *std::max_element(tau.begin(), tau.end()) * 2.0) > 0.01);

    g.set_state(base);
    std::vector<double> v1(30000);
    for (auto& v : v1) {
        g.update_stick_fractions();
        v = g.state().v(0);
        REQUIRE(g.state().v(1) == 1.0);
    }
    CHECK(ks_vs_joint(v1, base, d, hp, [](ModelState& st, double v) { st.v(0) = v; }, 1e-12, 1.0 - 1e-12) > 0.01);

    // Summed stick posterior on H = 3: Be(1 + #{z = 0}, alpha + #{z > 0}).
    ModelState three = make_state(d, {1, 1, 0}, 12);
    three.allocation << 2, 2, 0;
    GibbsSampler g3(d, hp, small_config(12, 3));
    g3.set_state(three);
    double mean = 0.0;
    for (int k = 0; k < 100000; ++k) {
        g3.update_stick_fractions();
        mean += g3.state().v(0);
    }
    CHECK(mean / 100000.0 == doctest::Approx(2.0 / (2.0 + 5.0 + 2.0)).epsilon(0.01));
}

TEST_CASE("local scale update matches two-point enumeration") {
    Hyperparameters hp;
    hp.c_p = 0.6;
    const Dataset d = gaussian_data(4, 3, 2, 13);
    const ModelState base = make_state(d, {1, 0}, 13);
    GibbsSampler g(d, hp, small_config(13, 2));
    ModelState off = base;
    off.phi(0, 0) = 0;
    const double l1 = oracle::log_joint(base, d, hp);
    const double l0 = oracle::log_joint(off, d, hp);
    const double prob = 1.0 / (1.0 + std::exp(l0 - l1));
    long ones = 0;
    long prior_ones = 0;
    const int reps = 100000;
    for (int rep = 0; rep < reps; ++rep) {
        g.set_state(base);
        g.update_local_scales();
        ones += g.state().phi(0, 0);
        prior_ones += g.state().phi(1, 1);
    }
    CHECK(oracle::chi_square_p({reps - ones, ones}, {1.0 - prob, prob}) > 0.01);
    // Inactive column: the prior c_p logistic(x' beta).
    const double pp = hp.c_p * oracle::sigmoid(d.x.row(1).dot(base.beta.col(1)));
    CHECK(oracle::chi_square_p({reps - prior_ones, prior_ones}, {1.0 - pp, pp}) > 0.01);
}

TEST_CASE("probit latent utilities") {
    Hyperparameters hp;
    Dataset d = probit_data(3, 2, 0, 14);
    d.y(0, 0) = 1.0;
    ModelState base = make_state(d, {1, 0}, 14);
    base.lambda_star.setZero();
    GibbsSampler g(d, hp, small_config(14, 2));
    g.set_state(base);
    double mean = 0.0;
    const int reps = 200000;
    for (int k = 0; k < reps; ++k) {
        g.update_latent_utilities();
        REQUIRE(g.state().z(0, 0) > 0.0);
        mean += g.state().z(0, 0);
    }
    CHECK(mean / reps == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(0.01));

    // Grid oracle at a nonzero mean.
    const ModelState s2 = make_state(d, {1, 0}, 15);
    g.set_state(s2);
    std::vector<double> z(30000);
    for (auto& v : z) {
        g.update_latent_utilities();
        v = g.state().z(1, 1);
    }
    const double lo = d.y(1, 1) == 1.0 ? 0.0 : -12.0;
    const double hi = d.y(1, 1) == 1.0 ? 12.0 : 0.0;
    CHECK(ks_vs_joint(z, s2, d, hp, [](ModelState& st, double v) { st.z(1, 1) = v; }, lo, hi) > 0.01);

    // y = 0 with mean +5 lands deep in the lower tail.
    Dataset dw = probit_data(2, 1, 1, 16);
    dw.y.setZero();
    dw.w->setOnes();
    ModelState sw = make_state(dw, {1, 0}, 16);
    sw.lambda_star.setZero();
    sw.mu.setConstant(5.0);
    GibbsSampler gw(dw, hp, small_config(16, 2));
    gw.set_state(sw);
    for (int k = 0; k < 1000; ++k) {
        gw.update_latent_utilities();
        REQUIRE(std::isfinite(gw.state().z(0, 0)));
        REQUIRE(gw.state().z(0, 0) < 0.0);
    }
}

TEST_CASE("probit regression means: scalar conjugate oracle") {
    Hyperparameters hp;
    hp.sigma_mu = 0.8;
    hp.sigma_b = 1.3;
    const Dataset d = probit_data(6, 2, 1, 17);
    const ModelState base = make_state(d, {1, 0}, 17);
    GibbsSampler g(d, hp, small_config(17, 2));
    const Eigen::VectorXd w = d.w->col(0);
    const Eigen::VectorXd x = d.x.col(0);
    const Eigen::MatrixXd lambda = effective_loadings(base);
    std::vector<double> mu_std;
    std::vector<double> b_std;
    const double pm = 1.0 / (hp.sigma_mu * hp.sigma_mu);
    const double pb = 1.0 / (hp.sigma_b * hp.sigma_b);
    for (int rep = 0; rep < 30000; ++rep) {
        g.set_state(base);
        g.update_regression_means();
        const ModelState& s = g.state();
        // mu_1 | b: precision w'w + 1/sigma_mu^2, mean (w'(z_1 - eta lambda_1) + b x_1 / sigma_mu^2) / precision.
        const Eigen::VectorXd target = base.z.col(0) - base.eta * lambda.row(0).transpose();
        const double qm = w.squaredNorm() + pm;
        const double mm = (w.dot(target) + pm * base.b(0, 0) * x(0)) / qm;
        mu_std.push_back((s.mu(0, 0) - mm) * std::sqrt(qm));
        // b | new mu: precision x'x / sigma_mu^2 + 1/sigma_b^2, mean x' mu / sigma_mu^2 / precision.
        const double qb = pm * x.squaredNorm() + pb;
        const double mb = pm * x.dot(s.mu.col(0)) / qb;
        b_std.push_back((s.b(0, 0) - mb) * std::sqrt(qb));
    }
    auto std_normal = [](double t) { return 1.0 - oracle::upper_tail(t); };
    CHECK(oracle::ks_one_sample(mu_std, std_normal).p_value > 0.01);
    CHECK(oracle::ks_one_sample(b_std, std_normal).p_value > 0.01);

    // Joint-density grid check for mu against the oracle log joint.
    std::vector<double> draws(20000);
    for (auto& v : draws) {
        g.set_state(base);
        g.update_regression_means();
        v = g.state().mu(1, 0);
    }
    CHECK(ks_vs_joint(draws, base, d, hp, [](ModelState& st, double v) { st.mu(1, 0) = v; }, -8.0, 8.0) > 0.01);
}

TEST_CASE("adaptation rule") {
    Hyperparameters hp;
    const Dataset d = gaussian_data(4, 6, 1, 18);
    ModelState base = make_state(d, {1, 1, 1, 0, 0}, 18);
    base.v << 0.2, 0.3, 0.4, 0.5, 1.0;
    GibbsSampler g(d, hp, small_config(18, 5));
    g.set_state(base);
    g.apply_adaptation();
    const ModelState& s = g.state();
    REQUIRE(s.H() == 4);
    CHECK(s.rho(0) == 1);
    CHECK(s.rho(1) == 1);
    CHECK(s.rho(2) == 1);
    CHECK(s.rho(3) == 0);
    for (int h = 0; h < 3; ++h) {
        CHECK(s.lambda_star.col(h) == base.lambda_star.col(h));
        CHECK(s.eta.col(h) == base.eta.col(h));
    }
    const StickBreaking old_stick = stick_breaking(base.v);
    const StickBreaking new_stick = stick_breaking(s.v);
    for (int h = 0; h < 3; ++h) CHECK(new_stick.w(h) == doctest::Approx(old_stick.w(h)).epsilon(1e-12));
    CHECK(new_stick.w.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.v(3) == 1.0);

    // Every column but the last active: append one.
    ModelState full = make_state(d, {1, 1, 1, 1, 0}, 19);
    g.set_state(full);
    g.apply_adaptation();
    REQUIRE(g.state().H() == 6);
    CHECK(g.state().v(5) == 1.0);
    CHECK(g.state().v(4) < 1.0);
    CHECK(g.state().rho(5) == 0);
    CHECK(stick_breaking(g.state().v).w.sum() == doctest::Approx(1.0).epsilon(1e-14));

    // Probability zero: the state never changes shape.
    ChainConfig never = small_config(20, 5);
    never.alpha0 = -kInf;
    GibbsSampler gn(d, hp, never);
    gn.set_state(base);
    for (long t = 1; t <= 2000; ++t) CHECK_FALSE(gn.adapt_truncation(t));
    CHECK(gn.state().H() == 5);
}

TEST_CASE("adaptation frequency follows the diminishing schedule") {
    double expected = 0.0;
    double var = 0.0;
    for (long t = 1; t <= 25000; ++t) {
        const double p = std::exp(-1.0 - 5e-4 * t);
        expected += p;
        var += p * (1.0 - p);
    }
    // Closed-form geometric series.
    const double r = std::exp(-5e-4);
    CHECK(expected == doctest::Approx(std::exp(-1.0) * r * (1.0 - std::pow(r, 25000)) / (1.0 - r)).epsilon(1e-10));
    CHECK(expected == doctest::Approx(735.57).epsilon(1e-4));
    Hyperparameters hp;
    const Dataset d = gaussian_data(2, 3, 1, 21);
    double total = 0.0;
    const int chains = 8;
    for (int c = 0; c < chains; ++c) {
        ChainConfig cfg = small_config(21 + static_cast<std::uint64_t>(c), 3);
        GibbsSampler g(d, hp, cfg);
        long events = 0;
        for (long t = 1; t <= 25000; ++t) events += g.adapt_truncation(t);
        total += static_cast<double>(events);
    }
    CHECK(std::abs(total / chains - expected) < 3.0 * std::sqrt(var / chains));
}

TEST_CASE("chain runs: zeros, stick, determinism, retention") {
    Hyperparameters hp;
    const Dataset d = gaussian_data(20, 6, 2, 30);
    ChainConfig cfg = small_config(30, 0);
    cfg.n_iterations = 400;
    cfg.burn_in = 100;
    cfg.thin = 3;
    cfg.alpha0 = -0.5;
    cfg.alpha1 = -1e-3;
    GibbsSampler g(d, hp, cfg);
    for (long t = 1; t <= cfg.n_iterations; ++t) {
        g.sweep(t);
        const ModelState& s = g.state();
        const Eigen::MatrixXd lambda = effective_loadings(s);
        for (Eigen::Index h = 0; h < s.H(); ++h)
            for (Eigen::Index j = 0; j < s.p(); ++j)
                if (s.rho(h) == 0 || s.phi(j, h) == 0) REQUIRE(lambda(j, h) == 0.0);
        REQUIRE(s.v(s.H() - 1) == 1.0);
        REQUIRE(stick_breaking(s.v).w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    const ChainOutput a = run_chain(d, hp, cfg);
    const ChainOutput b = run_chain(d, hp, cfg);
    REQUIRE(a.draws.size() == static_cast<std::size_t>(cfg.retained()));
    CHECK(a.h_active_trace == b.h_active_trace);
    CHECK(a.adaptation_iterations == b.adaptation_iterations);
    CHECK(a.log_density == b.log_density);
    for (std::size_t k = 0; k < a.draws.size(); ++k) {
        CHECK(a.draws[k].lambda == b.draws[k].lambda);
        CHECK(a.draws[k].sigma2 == b.draws[k].sigma2);
    }
    cfg.n_iterations = 15;
    cfg.burn_in = 10;
    cfg.thin = 5;
    CHECK(run_chain(d, hp, cfg).draws.size() == 1);

    const Dataset pd = probit_data(15, 5, 1, 31);
    ChainConfig pc = small_config(31, 0);
    pc.n_iterations = 50;
    pc.density.probit_mc_draws = 16;
    const ChainOutput pr = run_chain(pd, hp, pc);
    CHECK(pr.draws.size() == 50);
    for (const Draw& dr : pr.draws) CHECK((dr.sigma2.array() == 1.0).all());
}

TEST_CASE("configuration and numerical guards") {
    ChainConfig c = ChainConfig::defaults(DataMode::probit);
    CHECK(c.n_iterations == 40000);
    CHECK(c.burn_in == 20000);
    CHECK(c.thin == 5);
    CHECK(c.alpha1 == -2.5e-4);
    c.burn_in = c.n_iterations;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = ChainConfig{};
    c.alpha0 = 0.5;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = ChainConfig{};
    c.density.probit_mc_draws = 3;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    CHECK(default_truncation(16) == 13);
    CHECK(default_truncation(1) == 1);
    CHECK(default_truncation(128) == 24);

    Hyperparameters hp;
    const Dataset d = gaussian_data(4, 3, 1, 40);
    GibbsSampler g(d, hp, small_config(40, 2));
    ModelState bad = make_state(d, {1, 0}, 40);
    bad.lambda_star(0, 0) = std::numeric_limits<double>::quiet_NaN();
    g.set_state(bad);
    CHECK_THROWS_AS(g.update_factors(), NumericalError);
    ModelState wrong = make_state(d, {1, 0}, 41);
    wrong.eta.resize(3, 2);
    CHECK_THROWS_AS(g.set_state(wrong), StructuralError);
}
