#include "sisfm/simulation.hpp"

#include "sisfm/error.hpp"
#include "sisfm/parallel.hpp"
#include "sisfm/summary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sisfm {

namespace {

/// N(0, sigma2) shifted away from zero by sigma2 / 3.
double shifted_loading(double sigma2, RngStream& rng) {
    const double v = std::sqrt(sigma2) * rng.normal();
    return v + std::copysign(sigma2 / 3.0, v);
}

Eigen::MatrixXd dense_loadings(const ScenarioSpec& spec, RngStream& rng) {
    Eigen::MatrixXd L(spec.p, spec.k);
    for (Eigen::Index h = 0; h < spec.k; ++h)
        for (Eigen::Index j = 0; j < spec.p; ++j) L(j, h) = shifted_loading(spec.sigma2_lambda, rng);
    return L;
}

/// Columns reordered by descending empirical variance; stable on ties.
Eigen::MatrixXd sort_by_variance(const Eigen::MatrixXd& L) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(L.cols()));
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd var(L.cols());
    for (Eigen::Index h = 0; h < L.cols(); ++h) {
        const double m = L.col(h).mean();
        var(h) = (L.col(h).array() - m).square().sum();
    }
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return var(a) > var(b); });
    return L(Eigen::all, order);
}

/// Zero entries placed uniformly at random within each column.
void apply_ramp_sparsity(Eigen::MatrixXd& L, Eigen::Index zeros, RngStream& rng) {
    const std::vector<Eigen::Index> counts = ramp_zero_counts(L.rows(), L.cols(), zeros);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(L.rows()));
    for (Eigen::Index h = 0; h < L.cols(); ++h) {
        std::iota(rows.begin(), rows.end(), 0);
        // Partial Fisher-Yates.
        for (Eigen::Index r = 0; r < counts[static_cast<std::size_t>(h)]; ++r) {
            const auto span = static_cast<std::uint64_t>(L.rows() - r);
            const auto pick = r + static_cast<Eigen::Index>(rng() % span);
            std::swap(rows[static_cast<std::size_t>(r)], rows[static_cast<std::size_t>(pick)]);
            L(rows[static_cast<std::size_t>(r)], h) = 0.0;
        }
    }
}

Eigen::MatrixXd scenario_d_covariates(Eigen::Index p, RngStream& rng) {
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(p, 6);
    std::vector<int> category(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) category[static_cast<std::size_t>(j)] = static_cast<int>(j % 4);
    for (Eigen::Index j = p - 1; j > 0; --j) {
        const auto pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(j + 1));
        std::swap(category[static_cast<std::size_t>(j)], category[static_cast<std::size_t>(pick)]);
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        x0(j, 0) = 1.0;
        const int c = category[static_cast<std::size_t>(j)];
        if (c > 0) x0(j, c) = 1.0;
        x0(j, 4) = rng.normal();
        x0(j, 5) = sample_gamma(2.0, 2.0, rng);
    }
    return x0;
}

/// Exactly `budget` nonzero cells drawn without replacement with weights
/// logit^{-1}(x0' beta0_h + offset); the offset makes the weights sum to the budget.
Eigen::MatrixXi covariate_sparsity(const Eigen::MatrixXd& x0, Eigen::Index k, Eigen::Index budget, RngStream& rng) {
    const Eigen::Index p = x0.rows();
    Eigen::MatrixXd beta0(x0.cols(), k);
    for (Eigen::Index h = 0; h < k; ++h) {
        beta0(0, h) = 0.0;
        for (Eigen::Index m = 1; m < x0.cols(); ++m) beta0(m, h) = rng.normal();
    }
    const Eigen::MatrixXd lin = x0 * beta0;
    auto total = [&](double offset) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < lin.size(); ++i) s += logistic(lin.data()[i] + offset);
        return s;
    };
    double lo = -50.0;
    double hi = 50.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < static_cast<double>(budget) ? lo : hi) = mid;
    }
    const double offset = 0.5 * (lo + hi);
    // Efraimidis-Spirakis keys log(u) / weight; the largest keys win.
    std::vector<std::pair<double, Eigen::Index>> keys;
    keys.reserve(static_cast<std::size_t>(lin.size()));
    for (Eigen::Index i = 0; i < lin.size(); ++i) {
        const double wgt = logistic(lin.data()[i] + offset);
        keys.emplace_back(std::log(rng.uniform()) / wgt, i);
    }
    std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    Eigen::MatrixXi nonzero = Eigen::MatrixXi::Zero(p, k);
    for (Eigen::Index r = 0; r < budget; ++r) nonzero.data()[keys[static_cast<std::size_t>(r)].second] = 1;
    return nonzero;
}

Eigen::MatrixXi nonzero_pattern(const Eigen::MatrixXd& L, double threshold) {
    Eigen::MatrixXi out(L.rows(), L.cols());
    for (Eigen::Index i = 0; i < L.size(); ++i) {
        const double v = std::abs(L.data()[i]);
        out.data()[i] = (threshold > 0.0 ? v > threshold : v != 0.0) ? 1 : 0;
    }
    return out;
}

Eigen::MatrixXi sort_by_zero_count(const Eigen::MatrixXi& nz) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(nz.cols()));
    std::iota(order.begin(), order.end(), 0);
    const Eigen::VectorXi ones = nz.colwise().sum().transpose();
    // Ascending zero count is descending nonzero count.
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ones(a) > ones(b); });
    return nz(Eigen::all, order);
}

double quantile7(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace

const char* to_string(Scenario scenario) {
    switch (scenario) {
    case Scenario::a: return "a";
    case Scenario::b: return "b";
    case Scenario::c: return "c";
    case Scenario::d: return "d";
    }
    return "?";
}

Scenario scenario_from_string(const std::string& name) {
    if (name == "a") return Scenario::a;
    if (name == "b") return Scenario::b;
    if (name == "c") return Scenario::c;
    if (name == "d") return Scenario::d;
    throw ArgumentError("unknown scenario '" + name + "' (expected a, b, c or d)");
}

void ScenarioSpec::validate() const {
    if (p < 2 || k < 1 || k > p) throw ArgumentError("scenario: need p >= 2 and 1 <= k <= p");
    if (n < 2) throw ArgumentError("scenario: n must be at least 2");
    if (n_replicates < 1) throw ArgumentError("scenario: n_replicates must be positive");
    if (!(sigma2_lambda > 0.0)) throw ArgumentError("scenario: sigma2_lambda must be positive");
    if (!(s > 0.0 && s <= 1.0)) throw ArgumentError("scenario: s must lie in (0, 1]");
    if (scenario == Scenario::a && s != 1.0) throw ArgumentError("scenario a is dense: s must equal 1");
    if (scenario != Scenario::a && nonzero_budget() < k)
        throw ArgumentError("scenario: s p k must leave at least one nonzero loading per column");
}

Eigen::Index ScenarioSpec::nonzero_budget() const {
    if (scenario == Scenario::a) return p * k;
    return static_cast<Eigen::Index>(std::llround(s * static_cast<double>(p * k)));
}

std::vector<Eigen::Index> ramp_zero_counts(Eigen::Index p, Eigen::Index k, Eigen::Index zeros) {
    if (zeros < 0 || zeros > (p - 1) * k) throw ArgumentError("ramp_zero_counts: zero budget out of range");
    const double cap = static_cast<double>(p - 1);
    // Zero counts c * h, capped; find c so the capped ramp meets the budget.
    auto capped_total = [&](double c) {
        double t = 0.0;
        for (Eigen::Index h = 1; h <= k; ++h) t += std::min(cap, c * static_cast<double>(h));
        return t;
    };
    double lo = 0.0;
    double hi = cap + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (capped_total(mid) < static_cast<double>(zeros) ? lo : hi) = mid;
    }
    const double c = hi;
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
    double cumulative = 0.0;
    Eigen::Index assigned = 0;
    for (Eigen::Index h = 1; h <= k; ++h) {
        cumulative += std::min(cap, c * static_cast<double>(h));
        const auto target = std::min<Eigen::Index>(zeros, static_cast<Eigen::Index>(std::llround(cumulative)));
        counts[static_cast<std::size_t>(h - 1)] = std::min<Eigen::Index>(p - 1, target - assigned);
        assigned += counts[static_cast<std::size_t>(h - 1)];
    }
    // Rounding may leave a unit or two; give them to the emptiest-capable columns from the right.
    for (Eigen::Index h = k - 1; assigned < zeros && h >= 0; --h) {
        const Eigen::Index room = std::min(p - 1 - counts[static_cast<std::size_t>(h)], zeros - assigned);
        counts[static_cast<std::size_t>(h)] += room;
        assigned += room;
    }
    std::sort(counts.begin(), counts.end());
    return counts;
}

ScenarioData generate_scenario(const ScenarioSpec& spec, RngStream& rng) {
    spec.validate();
    ScenarioData out;
    const Eigen::Index zeros = spec.p * spec.k - spec.nonzero_budget();
    switch (spec.scenario) {
    case Scenario::a:
        out.lambda0 = sort_by_variance(dense_loadings(spec, rng));
        break;
    case Scenario::b:
        out.lambda0 = dense_loadings(spec, rng);
        apply_ramp_sparsity(out.lambda0, zeros, rng);
        break;
    case Scenario::c:
        out.lambda0 = sort_by_variance(dense_loadings(spec, rng));
        apply_ramp_sparsity(out.lambda0, zeros, rng);
        break;
    case Scenario::d: {
        out.lambda0 = sort_by_variance(dense_loadings(spec, rng));
        out.x0 = scenario_d_covariates(spec.p, rng);
        const Eigen::MatrixXi nz = covariate_sparsity(out.x0, spec.k, spec.nonzero_budget(), rng);
        out.lambda0 = out.lambda0.cwiseProduct(nz.cast<double>());
        break;
    }
    }
    // y_i = Lambda0 eta_i + eps_i, so y_i ~ N(0, Lambda0 Lambda0' + I).
    out.y.resize(spec.n, spec.p);
    Eigen::VectorXd eta(spec.k);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
        for (Eigen::Index h = 0; h < spec.k; ++h) eta(h) = rng.normal();
        for (Eigen::Index j = 0; j < spec.p; ++j) out.y(i, j) = out.lambda0.row(j).dot(eta) + rng.normal();
    }
    return out;
}

Eigen::MatrixXd true_covariance(const Eigen::MatrixXd& lambda0) {
    Eigen::MatrixXd omega = lambda0 * lambda0.transpose();
    omega.diagonal().array() += 1.0;
    return omega;
}

double covariance_mse(const std::vector<Draw>& draws, const Eigen::MatrixXd& lambda0) {
    if (draws.empty()) throw ArgumentError("covariance_mse: no draws");
    const Eigen::MatrixXd omega0 = true_covariance(lambda0);
    const Eigen::Index p = omega0.rows();
    double total = 0.0;
    for (const Draw& d : draws) {
        if (d.lambda.rows() != p) throw StructuralError("covariance_mse: draw does not match Lambda0");
        Eigen::MatrixXd omega = d.lambda * d.lambda.transpose();
        omega.diagonal().array() += 1.0;
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index l = j; l < p; ++l) total += (omega(j, l) - omega0(j, l)) * (omega(j, l) - omega0(j, l));
    }
    const double unique = static_cast<double>(p * (p + 1)) / 2.0;
    return total / unique / static_cast<double>(draws.size());
}

double classification_error(const Eigen::MatrixXi& estimate_nonzero, const Eigen::MatrixXi& truth_nonzero) {
    const Eigen::Index p = truth_nonzero.rows();
    const Eigen::Index k = truth_nonzero.cols();
    if (estimate_nonzero.rows() != p) throw StructuralError("classification_error: row mismatch");
    const Eigen::Index kstar = std::max(k, estimate_nonzero.cols());
    Eigen::MatrixXi est = Eigen::MatrixXi::Zero(p, kstar);
    Eigen::MatrixXi tru = Eigen::MatrixXi::Zero(p, kstar);
    est.leftCols(estimate_nonzero.cols()) = sort_by_zero_count(estimate_nonzero);
    tru.leftCols(k) = sort_by_zero_count(truth_nonzero);
    return static_cast<double>((est - tru).cwiseAbs().sum()) / static_cast<double>(p * k);
}

double mean_classification_error(const std::vector<Draw>& draws, const Eigen::MatrixXd& lambda0, double threshold) {
    if (draws.empty()) throw ArgumentError("mean_classification_error: no draws");
    if (threshold < 0.0) throw ArgumentError("mean_classification_error: threshold must be non-negative");
    const Eigen::MatrixXi truth = nonzero_pattern(lambda0, 0.0);
    double total = 0.0;
    for (const Draw& d : draws) {
        std::vector<Eigen::Index> cols;
        const bool use_rho = d.rho.size() == d.lambda.cols();
        for (Eigen::Index h = 0; h < d.lambda.cols(); ++h)
            if (!use_rho || d.rho(h) != 0) cols.push_back(h);
        const Eigen::MatrixXd active = d.lambda(Eigen::all, cols);
        total += classification_error(nonzero_pattern(active, threshold), truth);
    }
    return total / static_cast<double>(draws.size());
}

Aggregate aggregate(std::vector<double> values) {
    Aggregate a;
    a.count = static_cast<int>(values.size());
    if (values.empty()) return a;
    std::sort(values.begin(), values.end());
    a.median = quantile7(values, 0.5);
    a.iqr = quantile7(values, 0.75) - quantile7(values, 0.25);
    return a;
}

MetricsReport run_replicates(const ScenarioSpec& spec, const SimulationSettings& settings) {
    spec.validate();
    Hyperparameters hyper = settings.hyper;
    if (settings.default_offset) hyper.c_p = Hyperparameters::default_offset(spec.p);
    hyper.validate();
    ChainConfig cfg = settings.chain;
    cfg.record_log_density = true;
    cfg.validate();

    MetricsReport report;
    report.spec = spec;
    report.replicates.resize(static_cast<std::size_t>(spec.n_replicates));
    parallel_for(report.replicates.size(), settings.threads, [&](std::size_t r) {
        ReplicateMetrics& m = report.replicates[r];
        m.replicate = static_cast<int>(r);
        try {
            RngStream rng(spec.seed, r);
            const ScenarioData sim = generate_scenario(spec, rng);
            Dataset data;
            data.y = sim.y;
            data.x = sim.x0.size() > 0 ? sim.x0 : Eigen::MatrixXd::Ones(spec.p, 1);
            ChainConfig chain_cfg = cfg;
            chain_cfg.stream = 1000 + r;
            const ChainOutput chain = run_chain(data, hyper, chain_cfg);
            m.lpml = compute_lpml(chain.pointwise_loglik, true).lpml;
            m.covariance_mse = covariance_mse(chain.draws, sim.lambda0);
            m.mce = mean_classification_error(chain.draws, sim.lambda0, 0.0);
            m.mce_003 = mean_classification_error(chain.draws, sim.lambda0, 0.03);
            m.mce_005 = mean_classification_error(chain.draws, sim.lambda0, 0.05);
            m.mce_010 = mean_classification_error(chain.draws, sim.lambda0, 0.10);
            m.e_h_active = expected_active_factors(chain.draws);
            m.seconds_per_iteration = chain.seconds_per_iteration;
            m.ok = true;
        } catch (const std::exception& e) {
            m.ok = false;
            m.error = e.what();
        }
    });
    std::vector<double> lpml, mse, mce, eh, secs;
    for (const ReplicateMetrics& m : report.replicates) {
        if (!m.ok) {
            ++report.failures;
            continue;
        }
        lpml.push_back(m.lpml);
        mse.push_back(m.covariance_mse);
        mce.push_back(m.mce);
        eh.push_back(m.e_h_active);
        secs.push_back(m.seconds_per_iteration);
    }
    report.lpml = aggregate(lpml);
    report.covariance_mse = aggregate(mse);
    report.mce = aggregate(mce);
    report.e_h_active = aggregate(eh);
    report.seconds_per_iteration = aggregate(secs);
    return report;
}

} // namespace sisfm
