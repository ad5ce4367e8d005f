#include "oracles.hpp"
#include "sisfm/error.hpp"
#include "sisfm/priors.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace sisfm;

namespace {

// E(pi_h) by direct products of Beta means: 1 - prod_{l<=h} E(1 - v_l).
double pi_oracle(double alpha, int h) {
    double keep = 1.0;
    for (int l = 0; l < h; ++l) keep *= 1.0 - 1.0 / (1.0 + alpha);
    return 1.0 - keep;
}

} // namespace

TEST_CASE("stick-breaking expectation matches simulation") {
    const double alpha = 5.0;
    const int H = 50;
    const long draws = 100000;
    RngStream rng(1, 0);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(H);
    for (long d = 0; d < draws; ++d) {
        const StickBreaking sb = stick_breaking(sample_stick_fractions(alpha, H, rng));
        sum += sb.pi;
        sum_sq += sb.pi.array().square().matrix();
    }
    for (int h = 1; h < H; ++h) {
        const double mean = sum(h - 1) / draws;
        const double se = std::sqrt(std::max(sum_sq(h - 1) / draws - mean * mean, 1e-300) / draws);
        CHECK(expected_pi(alpha, h) == doctest::Approx(pi_oracle(alpha, h)).epsilon(1e-13));
        CHECK_MESSAGE(std::abs(mean - expected_pi(alpha, h)) < 4.0 * se + 1e-12, "h = " << h);
    }
    CHECK(sum(H - 1) / draws == 1.0);
    const StickBreaking single = stick_breaking(Eigen::VectorXd::Ones(1));
    CHECK(single.w(0) == 1.0);
}

TEST_CASE("SIS prior draws") {
    Hyperparameters hp;
    hp.alpha = 5.0;
    const Eigen::Index p = 6;
    const Eigen::Index H = 40;
    RngStream rng(2, 0);
    const long draws = 100000;
    double active = 0.0;
    double active_sq = 0.0;
    long phi_ones = 0;
    long phi_total = 0;
    long zero_lambda = 0;
    long zero_phi = 0;
    for (long d = 0; d < draws; ++d) {
        const PriorDraw draw = sample_sis_prior(hp, p, H, Eigen::MatrixXd(), rng);
        const double a = draw.rho.sum();
        active += a;
        active_sq += a * a;
        for (Eigen::Index h = 0; h < H; ++h) {
            REQUIRE(draw.rho(h) == (draw.allocation(h) > h ? 1 : 0));
            for (Eigen::Index j = 0; j < p; ++j) {
                if (draw.rho(h) == 0 || draw.phi(j, h) == 0) REQUIRE(draw.lambda(j, h) == 0.0);
                zero_lambda += draw.lambda(j, h) == 0.0;
                zero_phi += draw.phi(j, h) == 0;
            }
        }
        if (d < 20000) {
            phi_ones += draw.phi.sum();
            phi_total += draw.phi.size();
        }
    }
    const double mean_active = active / draws;
    const double se = std::sqrt((active_sq / draws - mean_active * mean_active) / draws);
    // Expected number of active columns is sum_h (1 - E pi_h), which tends to alpha.
    double expected = 0.0;
    for (int h = 1; h <= H; ++h) expected += 1.0 - pi_oracle(hp.alpha, h);
    CHECK(expected == doctest::Approx(5.0).epsilon(0.01));
    CHECK(std::abs(mean_active - expected) < 4.0 * se);
    // Intercept-only x: E(phi) = c_p E(logistic(N(0, 1))) = c_p / 2.
    CHECK(static_cast<double>(phi_ones) / phi_total == doctest::Approx(hp.c_p / 2.0).epsilon(0.02));
    CHECK(zero_lambda > zero_phi);
    CHECK(zero_phi > 0);
}

TEST_CASE("beta forced to zero gives local probability c_p / 2") {
    Hyperparameters hp;
    hp.c_p = 0.6;
    RngStream rng(3, 0);
    // x = 0 makes x_j' beta_h = 0 whatever beta is.
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
    long ones = 0;
    const long draws = 50000;
    for (long d = 0; d < draws; ++d) ones += sample_sis_column(hp, x, rng).phi.sum();
    CHECK(static_cast<double>(ones) / (4.0 * draws) == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("tiny alpha empties the loadings") {
    Hyperparameters hp;
    hp.alpha = 1e-6;
    RngStream rng(4, 0);
    long active = 0;
    for (int d = 0; d < 2000; ++d) active += sample_sis_prior(hp, 3, 5, Eigen::MatrixXd(), rng).rho.sum();
    CHECK(active < 5);
}

TEST_CASE("MGP and CUSP baselines") {
    Hyperparameters hp;
    RngStream rng(5, 0);
    MgpSettings mgp;
    CuspSettings cusp;
    CHECK(cusp.theta_inf == doctest::Approx(0.05 * 0.05).epsilon(1e-15));
    long slab = 0;
    const long draws = 100000;
    for (long d = 0; d < draws; ++d) {
        const PriorDraw m = sample_mgp_prior(hp, mgp, 3, 8, rng);
        REQUIRE((m.lambda.array() != 0.0).all());
        const PriorDraw c = sample_cusp_prior(hp, cusp, 3, 30, rng);
        REQUIRE((c.lambda.array() != 0.0).all());
        slab += c.rho.sum();
        for (Eigen::Index h = 0; h < 30; ++h)
            if (!c.rho(h)) REQUIRE(c.theta(h) == cusp.theta_inf);
    }
    double expected = 0.0;
    for (int h = 1; h <= 30; ++h) expected += 1.0 - pi_oracle(hp.alpha, h);
    CHECK(static_cast<double>(slab) / draws == doctest::Approx(expected).epsilon(0.02));

    // Mean-one gamma factors leave E(tau_h) constant.
    MgpSettings flat;
    flat.a1 = 1.0;
    flat.a2 = 1.0;
    Eigen::VectorXd tau = Eigen::VectorXd::Zero(5);
    for (long d = 0; d < draws; ++d) tau += sample_mgp_prior(hp, flat, 1, 5, rng).theta.cwiseInverse();
    tau /= static_cast<double>(draws);
    for (int h = 0; h < 5; ++h) CHECK(tau(h) == doctest::Approx(1.0).epsilon(0.05));

    // Column variance E(1/omega) E(1/tau_h) = nu/(nu-2) / (a1-1) / (a2-1)^(h-1).
    CHECK(mgp_column_variance(mgp, 1) == doctest::Approx(3.0 / 1.1));
    CHECK(mgp_column_variance(mgp, 3) == doctest::Approx(3.0 / 1.1 / (2.1 * 2.1)));
    PriorSpec spec;
    spec.family = PriorFamily::mgp;
    const ShrinkageReport rep = verify_increasing_shrinkage(spec, 4, 4, 200000, 9);
    // Heavy-tailed local scales make the Monte Carlo noisy; check the ratio loosely.
    CHECK(rep.column_variance(1) / rep.column_variance(2) == doctest::Approx(2.1).epsilon(0.2));
    spec.mgp = flat;
    spec.mgp.nu = 3.0;
    const ShrinkageReport none = verify_increasing_shrinkage(spec, 4, 4, 20000, 10);
    CHECK_FALSE(none.strictly_decreasing);
}

TEST_CASE("SIS increasing shrinkage") {
    PriorSpec spec;
    spec.hyper.alpha = 5.0;
    // a_theta = 3 keeps lambda^4 integrable so the Monte Carlo errors are meaningful.
    spec.hyper.a_theta = 3.0;
    spec.hyper.b_theta = 2.0;
    const ShrinkageReport rep = verify_increasing_shrinkage(spec, 10, 10, 400000, 11, 4);
    CHECK_FALSE(rep.inconclusive);
    CHECK(rep.weakly_decreasing);
    CHECK(rep.strictly_decreasing);
    // pi_H = 1 under truncation, so the last column is never active.
    CHECK(rep.column_variance(9) == 0.0);
    for (Eigen::Index h = 0; h < 9; ++h) {
        const double expected = spec.hyper.theta0() * (1.0 - pi_oracle(5.0, static_cast<int>(h) + 1)) * spec.hyper.c_p / 2.0;
        CHECK(sis_column_variance(spec.hyper, h + 1) == doctest::Approx(expected).epsilon(1e-13));
        CHECK_MESSAGE(std::abs(rep.column_variance(h) - expected) < 4.0 * rep.column_mcse(h), "h = " << h);
    }
    CHECK(rep.column_variance(3) / rep.column_variance(2) == doctest::Approx(5.0 / 6.0).epsilon(0.05));
    const ShrinkageReport one = verify_increasing_shrinkage(spec, 3, 1, 10000, 12);
    CHECK(one.weakly_decreasing);
    CHECK(one.strictly_decreasing);
    CHECK(verify_increasing_shrinkage(spec, 3, 2, 100, 13).inconclusive);
}

TEST_CASE("truncation bound") {
    Hyperparameters hp;
    hp.alpha = 1.0;
    hp.a_sigma = 1.0;
    hp.b_sigma = 1.0;
    const Eigen::VectorXd phi = Eigen::VectorXd::Constant(2, 0.25);
    // Literal rate b = 1 / (alpha (1 + alpha)) = 0.5 at alpha = 1.
    CHECK(truncation_bound(hp, 3, 0.5, phi, BoundRate::literal) ==
          doctest::Approx(2.0 * std::pow(0.5, 3) / 0.5 * 2.0 * 0.5).epsilon(1e-14));
    CHECK(truncation_bound(hp, 400, 0.5, phi) < 1e-60);
    CHECK_THROWS_AS(truncation_bound(hp, 3, 1.0, phi), ArgumentError);
    hp.a_theta = 1.0;
    CHECK_THROWS_AS(truncation_bound(hp, 3, 0.5, phi), ArgumentError);

    Hyperparameters sis;
    sis.alpha = 5.0;
    sis.a_sigma = 1.0;
    sis.b_sigma = 1.0;
    sis.c_p = Hyperparameters::default_offset(16);
    const double b = 5.0 / 6.0;
    const double by_hand = 2.0 * std::pow(b, 5) / (1.0 - b) * 2.0 * 16.0 * sis.c_p / 2.0;
    CHECK(truncation_bound(sis, 5, 0.5, expected_local_scales(sis, 16)) == doctest::Approx(by_hand).epsilon(1e-13));

    const std::vector<Eigen::Index> Hs{2, 5, 8};
    const std::vector<double> Ts{0.5, 0.9};
    const auto cells = truncation_study(sis, 16, Hs, Ts, 100000, 14, 4);
    REQUIRE(cells.size() == 6);
    for (const TruncationCell& c : cells) {
        CHECK(c.probability >= 0.0);
        CHECK(c.probability <= 1.0);
        CHECK_MESSAGE(c.dominated, "H = " << c.H << " T = " << c.T << " p = " << c.probability << " bound = " << c.bound);
    }
}

TEST_CASE("concentration bound") {
    Hyperparameters hp;
    hp.alpha = 1.0;
    hp.a_theta = 2.0;
    hp.b_theta = 2.0;
    hp.c_p = 0.5;
    CHECK(concentration_bound(hp, 1, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(concentration_bound(hp, 1, 1e6) < 1e-12);
    CHECK_THROWS_AS(concentration_bound(hp, 1, 0.0), ArgumentError);
    const std::vector<Eigen::Index> hs{1, 2, 3};
    const std::vector<double> eps{0.5, 1.0, 2.0};
    const auto cells = concentration_study(hp, 5, hs, eps, 200000, 15, 4);
    for (const ConcentrationCell& c : cells) CHECK_MESSAGE(c.dominated, "h = " << c.h << " eps = " << c.epsilon);
    // Direct Monte Carlo at h = 1, eps = 1.
    RngStream rng(16, 0);
    long exceed = 0;
    long total = 0;
    for (int d = 0; d < 200000; ++d) {
        const PriorDraw draw = sample_sis_prior(hp, 5, 3, Eigen::MatrixXd(), rng);
        for (Eigen::Index j = 0; j < 5; ++j) exceed += std::abs(draw.lambda(j, 0)) > 1.0;
        total += 5;
    }
    CHECK(static_cast<double>(exceed) / total <= 0.25);
}

TEST_CASE("tail index") {
    RngStream rng(17, 0);
    std::vector<double> t4(400000);
    std::vector<double> gauss(400000);
    for (auto& v : t4) v = rng.normal() / std::sqrt(sample_gamma(2.0, 2.0, rng)); // t with 4 df
    for (auto& v : gauss) v = rng.normal();
    const TailEstimate te = tail_exponent(t4);
    CHECK(te.index == doctest::Approx(4.0).epsilon(0.125));
    CHECK(te.power_law);
    const TailEstimate ge = tail_exponent(gauss);
    CHECK_FALSE(ge.power_law);
    CHECK(tail_exponent(std::vector<double>(100, 1.0)).inconclusive);

    Hyperparameters hp;
    const std::vector<double> sis = sis_nonzero_loadings(hp, 10, 3, 100000, 18, 4);
    const TailEstimate se = tail_exponent(sis);
    CHECK(se.index == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("support size and its growth") {
    CHECK(support_size(Eigen::VectorXd::Zero(4), 0.1) == 0);
    Eigen::VectorXd v(3);
    v << 0.1, -0.2, 0.0;
    CHECK(support_size(v, 0.15) == 1);
    Hyperparameters hp;
    const std::vector<Eigen::Index> ps{64, 128, 256, 512};
    const auto cells = support_growth(hp, ps, 0.05, 20000, 19, 4);
    REQUIRE(cells.size() == 4);
    for (const SupportCell& c : cells)
        CHECK(c.c_p == doctest::Approx(2.0 * std::exp(1.0) * std::log(static_cast<double>(c.p)) / c.p));
    CHECK(support_is_sublinear(cells));
    // Mean support tracks p c_p / 2 times pr(|lambda*| > eps) ~ log p.
    CHECK(cells[3].mean_support / cells[0].mean_support < 2.0);
}

TEST_CASE("prior check report") {
    PriorCheckSettings settings;
    settings.n_draws = 20000;
    settings.threads = 2;
    settings.support_p = {64, 128};
    const PriorPropertyReport rep = run_prior_check(settings);
    CHECK(rep.shrinkage.weakly_decreasing);
    CHECK(rep.zero_fraction > rep.phi_zero_fraction);
    CHECK(rep.phi_zero_fraction > 0.0);
    CHECK_FALSE(rep.truncation.empty());
    settings.spec.family = PriorFamily::cusp;
    const PriorPropertyReport cusp = run_prior_check(settings);
    CHECK(cusp.zero_fraction == 0.0);
    CHECK(prior_family_from_string("mgp") == PriorFamily::mgp);
    CHECK_THROWS_AS(prior_family_from_string("horseshoe"), ArgumentError);
}
