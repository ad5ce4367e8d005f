#include "sisfm/priors.hpp"

#include "sisfm/error.hpp"
#include "sisfm/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace sisfm {

namespace {

constexpr long kChunk = 1000;

double clamp_fraction(double v) { return std::max(v, std::numeric_limits<double>::min()); }

Eigen::MatrixXd intercept_or(const Eigen::MatrixXd& x, Eigen::Index p) {
    if (x.size() == 0) return Eigen::MatrixXd::Ones(p, 1);
    if (x.rows() != p) throw StructuralError("prior: x must have p rows");
    return x;
}

void check_dims(Eigen::Index p, Eigen::Index H) {
    if (p < 1) throw ArgumentError("prior: p must be at least 1");
    if (H < 1) throw ArgumentError("prior: H must be at least 1");
}

Eigen::VectorXd sample_sigma2(const Hyperparameters& hyper, Eigen::Index p, RngStream& rng) {
    Eigen::VectorXd sigma2(p);
    for (Eigen::Index j = 0; j < p; ++j) sigma2(j) = sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng);
    return sigma2;
}

/// z_h ~ Cat(w) for each h; returns zero-based indices.
Eigen::VectorXi sample_allocation(const Eigen::VectorXd& w, RngStream& rng) {
    const Eigen::Index H = w.size();
    std::vector<double> lw(static_cast<std::size_t>(H));
    for (Eigen::Index l = 0; l < H; ++l) lw[static_cast<std::size_t>(l)] = std::log(w(l));
    Eigen::VectorXi z(H);
    for (Eigen::Index h = 0; h < H; ++h) z(h) = static_cast<int>(sample_categorical_log(lw, rng));
    return z;
}

/// Draw-chunked Monte Carlo loop: body(draw_index, rng, accumulator) runs for
/// every draw; chunk accumulators are combined in chunk order.
template <class Acc, class Body, class Merge>
Acc chunked_monte_carlo(long n_draws, std::uint64_t seed, std::uint64_t stream, int threads, const Acc& zero,
                        Body&& body, Merge&& merge) {
    if (n_draws < 1) throw ArgumentError("Monte Carlo study: n_draws must be positive");
    const long n_chunks = (n_draws + kChunk - 1) / kChunk;
    std::vector<Acc> partial(static_cast<std::size_t>(n_chunks), zero);
    const RngStream root(seed, stream);
    parallel_for(static_cast<std::size_t>(n_chunks), threads, [&](std::size_t c) {
        const long begin = static_cast<long>(c) * kChunk;
        const long end = std::min(n_draws, begin + kChunk);
        for (long d = begin; d < end; ++d) {
            RngStream rng = root.substream(static_cast<std::uint64_t>(d));
            body(rng, partial[c]);
        }
    });
    Acc total = zero;
    for (const auto& part : partial) merge(total, part);
    return total;
}

} // namespace

const char* to_string(PriorFamily family) {
    switch (family) {
    case PriorFamily::sis: return "sis";
    case PriorFamily::mgp: return "mgp";
    case PriorFamily::cusp: return "cusp";
    }
    return "sis";
}

PriorFamily prior_family_from_string(const std::string& name) {
    if (name == "sis") return PriorFamily::sis;
    if (name == "mgp") return PriorFamily::mgp;
    if (name == "cusp") return PriorFamily::cusp;
    throw ArgumentError("unknown prior family '" + name + "' (expected sis, mgp or cusp)");
}

Eigen::VectorXd sample_stick_fractions(double alpha, Eigen::Index H, RngStream& rng) {
    if (!(alpha > 0.0)) throw ArgumentError("stick fractions: alpha must be positive");
    Eigen::VectorXd v(H);
    for (Eigen::Index l = 0; l + 1 < H; ++l) v(l) = clamp_fraction(sample_beta(1.0, alpha, rng));
    v(H - 1) = 1.0;
    return v;
}

SisColumn sample_sis_column(const Hyperparameters& hyper, const Eigen::MatrixXd& x, RngStream& rng) {
    const Eigen::Index p = x.rows();
    const Eigen::Index q = x.cols();
    SisColumn col;
    col.theta = sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng);
    col.beta.resize(q);
    for (Eigen::Index m = 0; m < q; ++m) col.beta(m) = hyper.sigma_beta * rng.normal();
    const Eigen::VectorXd eta = x * col.beta;
    col.phi.resize(p);
    col.lambda_star.resize(p);
    const double sd = std::sqrt(col.theta);
    for (Eigen::Index j = 0; j < p; ++j) {
        col.phi(j) = sample_bernoulli(logistic(eta(j)) * hyper.c_p, rng) ? 1 : 0;
        col.lambda_star(j) = sd * rng.normal();
    }
    return col;
}

PriorDraw sample_sis_prior(const Hyperparameters& hyper, Eigen::Index p, Eigen::Index H, const Eigen::MatrixXd& x,
                           RngStream& rng) {
    check_dims(p, H);
    hyper.validate();
    const Eigen::MatrixXd xm = intercept_or(x, p);
    PriorDraw draw;
    draw.family = PriorFamily::sis;
    draw.v = sample_stick_fractions(hyper.alpha, H, rng);
    const StickBreaking stick = stick_breaking(draw.v);
    draw.allocation = sample_allocation(stick.w, rng);
    draw.rho.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) draw.rho(h) = draw.allocation(h) > h ? 1 : 0;
    draw.lambda_star.resize(p, H);
    draw.phi.resize(p, H);
    draw.beta.resize(xm.cols(), H);
    draw.theta.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) {
        SisColumn col = sample_sis_column(hyper, xm, rng);
        draw.lambda_star.col(h) = col.lambda_star;
        draw.phi.col(h) = col.phi;
        draw.beta.col(h) = col.beta;
        draw.theta(h) = col.theta;
    }
    draw.lambda = effective_loadings(draw.lambda_star, draw.rho, draw.phi);
    draw.sigma2 = sample_sigma2(hyper, p, rng);
    return draw;
}

PriorDraw sample_mgp_prior(const Hyperparameters& hyper, const MgpSettings& mgp, Eigen::Index p, Eigen::Index H,
                           RngStream& rng) {
    check_dims(p, H);
    if (!(mgp.a1 > 0.0 && mgp.a2 > 0.0 && mgp.nu > 0.0)) throw ArgumentError("mgp: a1, a2, nu must be positive");
    PriorDraw draw;
    draw.family = PriorFamily::mgp;
    draw.theta.resize(H);
    double tau = 1.0;
    for (Eigen::Index h = 0; h < H; ++h) {
        tau *= sample_gamma(h == 0 ? mgp.a1 : mgp.a2, 1.0, rng);
        draw.theta(h) = 1.0 / tau;
    }
    draw.lambda.resize(p, H);
    for (Eigen::Index h = 0; h < H; ++h) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double omega = sample_gamma(0.5 * mgp.nu, 0.5 * mgp.nu, rng);
            draw.lambda(j, h) = std::sqrt(draw.theta(h) / omega) * rng.normal();
        }
    }
    draw.rho = Eigen::VectorXi::Ones(H);
    draw.phi = Eigen::MatrixXi::Ones(p, H);
    draw.sigma2 = sample_sigma2(hyper, p, rng);
    return draw;
}

PriorDraw sample_cusp_prior(const Hyperparameters& hyper, const CuspSettings& cusp, Eigen::Index p, Eigen::Index H,
                            RngStream& rng) {
    check_dims(p, H);
    if (!(cusp.theta_inf > 0.0)) throw ArgumentError("cusp: theta_inf must be positive");
    PriorDraw draw;
    draw.family = PriorFamily::cusp;
    draw.v = sample_stick_fractions(hyper.alpha, H, rng);
    const StickBreaking stick = stick_breaking(draw.v);
    draw.allocation = sample_allocation(stick.w, rng);
    draw.rho.resize(H);
    draw.theta.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) {
        draw.rho(h) = draw.allocation(h) > h ? 1 : 0;
        draw.theta(h) = draw.rho(h) ? sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng) : cusp.theta_inf;
    }
    draw.lambda.resize(p, H);
    for (Eigen::Index h = 0; h < H; ++h) {
        const double sd = std::sqrt(draw.theta(h));
        for (Eigen::Index j = 0; j < p; ++j) draw.lambda(j, h) = sd * rng.normal();
    }
    draw.phi = Eigen::MatrixXi::Ones(p, H);
    draw.sigma2 = sample_sigma2(hyper, p, rng);
    return draw;
}

PriorDraw sample_prior(const PriorSpec& spec, Eigen::Index p, Eigen::Index H, RngStream& rng) {
    switch (spec.family) {
    case PriorFamily::sis: return sample_sis_prior(spec.hyper, p, H, spec.x, rng);
    case PriorFamily::mgp: return sample_mgp_prior(spec.hyper, spec.mgp, p, H, rng);
    case PriorFamily::cusp: return sample_cusp_prior(spec.hyper, spec.cusp, p, H, rng);
    }
    throw ArgumentError("unknown prior family");
}

double expected_pi(double alpha, Eigen::Index h) { return 1.0 - std::pow(alpha / (1.0 + alpha), static_cast<double>(h)); }

double sis_column_variance(const Hyperparameters& hyper, Eigen::Index h) {
    return hyper.theta0() * (1.0 - expected_pi(hyper.alpha, h)) * 0.5 * hyper.c_p;
}

double mgp_column_variance(const MgpSettings& mgp, Eigen::Index h) {
    if (!(mgp.a1 > 1.0 && mgp.a2 > 1.0 && mgp.nu > 2.0))
        throw ArgumentError("mgp column variance is finite only for a1 > 1, a2 > 1, nu > 2");
    const double local = mgp.nu / (mgp.nu - 2.0);
    return local / (mgp.a1 - 1.0) * std::pow(1.0 / (mgp.a2 - 1.0), static_cast<double>(h - 1));
}

ShrinkageReport verify_increasing_shrinkage(const PriorSpec& spec, Eigen::Index p, Eigen::Index H, long n_draws,
                                            std::uint64_t seed, int threads) {
    check_dims(p, H);
    struct Acc {
        Eigen::MatrixXd sum_sq;   // sum of lambda_jh^2
        Eigen::VectorXd col;      // sum of per-draw column means of lambda^2
        Eigen::VectorXd col_sq;   // sum of their squares
        Eigen::VectorXd diff_sq;  // sum of squared consecutive differences
    };
    const Acc zero{Eigen::MatrixXd::Zero(p, H), Eigen::VectorXd::Zero(H), Eigen::VectorXd::Zero(H),
                   Eigen::VectorXd::Zero(std::max<Eigen::Index>(H - 1, 0))};
    const Acc total = chunked_monte_carlo(
        n_draws, seed, 0, threads, zero,
        [&](RngStream& rng, Acc& acc) {
            const PriorDraw draw = sample_prior(spec, p, H, rng);
            const Eigen::MatrixXd sq = draw.lambda.array().square();
            acc.sum_sq += sq;
            const Eigen::VectorXd m = sq.colwise().mean().transpose();
            acc.col += m;
            acc.col_sq += m.array().square().matrix();
            for (Eigen::Index h = 0; h + 1 < H; ++h) acc.diff_sq(h) += (m(h) - m(h + 1)) * (m(h) - m(h + 1));
        },
        [](Acc& into, const Acc& part) {
            into.sum_sq += part.sum_sq;
            into.col += part.col;
            into.col_sq += part.col_sq;
            into.diff_sq += part.diff_sq;
        });

    const double N = static_cast<double>(n_draws);
    ShrinkageReport report;
    report.family = spec.family;
    report.n_draws = n_draws;
    report.seed = seed;
    report.entry_variance = total.sum_sq / N;
    report.column_variance = total.col / N;
    report.column_mcse.resize(H);
    for (Eigen::Index h = 0; h < H; ++h) {
        const double var = std::max(total.col_sq(h) / N - report.column_variance(h) * report.column_variance(h), 0.0);
        report.column_mcse(h) = std::sqrt(var / N);
    }
    report.inconclusive = n_draws < 10000;
    report.weakly_decreasing = true;
    report.strictly_decreasing = true;
    report.strongly_decreasing = true;
    for (Eigen::Index h = 0; h + 1 < H; ++h) {
        const double d = report.column_variance(h) - report.column_variance(h + 1);
        const double var_d = std::max(total.diff_sq(h) / N - d * d, 0.0);
        const double se = std::sqrt(var_d / N);
        if (!(d > -2.0 * se)) report.weakly_decreasing = false;
        if (!(d > 2.0 * se)) report.strictly_decreasing = false;
        if (!(report.entry_variance.col(h + 1).maxCoeff() < report.entry_variance.col(h).minCoeff()))
            report.strongly_decreasing = false;
    }
    return report;
}

double truncation_bound(const Hyperparameters& hyper, Eigen::Index H, double T, const Eigen::VectorXd& expected_phi,
                        BoundRate rate) {
    if (!(T > 0.0 && T < 1.0)) throw ArgumentError("truncation_bound: T must lie in (0, 1)");
    if (H < 1) throw ArgumentError("truncation_bound: H must be positive");
    const double theta0 = hyper.theta0();
    const double b = rate == BoundRate::proof ? hyper.alpha / (1.0 + hyper.alpha)
                                              : 1.0 / (hyper.alpha * (1.0 + hyper.alpha));
    if (!(b < 1.0)) throw ArgumentError("truncation_bound: geometric rate must be below one");
    return (1.0 / (1.0 - T)) * std::pow(b, static_cast<double>(H)) / (1.0 - b) * theta0 *
           (hyper.a_sigma / hyper.b_sigma) * expected_phi.sum();
}

Eigen::VectorXd expected_local_scales(const Hyperparameters& hyper, Eigen::Index p) {
    return Eigen::VectorXd::Constant(p, 0.5 * hyper.c_p);
}

double concentration_bound(const Hyperparameters& hyper, Eigen::Index h, double epsilon) {
    if (!(epsilon > 0.0)) throw ArgumentError("concentration_bound: epsilon must be positive");
    if (h < 1) throw ArgumentError("concentration_bound: h must be positive");
    return hyper.theta0() * std::pow(hyper.alpha / (1.0 + hyper.alpha), static_cast<double>(h)) * hyper.c_p /
           (2.0 * epsilon * epsilon);
}

std::vector<TruncationCell> truncation_study(const Hyperparameters& hyper, Eigen::Index p,
                                             std::span<const Eigen::Index> H_grid, std::span<const double> T_grid,
                                             long n_draws, std::uint64_t seed, int threads, Eigen::Index tail_columns) {
    if (H_grid.empty() || T_grid.empty()) throw ArgumentError("truncation_study: empty grid");
    const Eigen::Index H_total = *std::max_element(H_grid.begin(), H_grid.end()) + tail_columns;
    const std::size_t cells = H_grid.size() * T_grid.size();
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(p, 1);
    const std::vector<long> zero(cells, 0);
    const std::vector<long> counts = chunked_monte_carlo(
        n_draws, seed, 1, threads, zero,
        [&](RngStream& rng, std::vector<long>& acc) {
            const PriorDraw draw = sample_sis_prior(hyper, p, H_total, x, rng);
            const Eigen::VectorXd col = draw.lambda.colwise().squaredNorm().transpose();
            const double noise = draw.sigma2.sum();
            const double full = col.sum() + noise;
            for (std::size_t a = 0; a < H_grid.size(); ++a) {
                const double ratio = (col.head(H_grid[a]).sum() + noise) / full;
                for (std::size_t b = 0; b < T_grid.size(); ++b) {
                    if (ratio <= T_grid[b]) ++acc[a * T_grid.size() + b];
                }
            }
        },
        [](std::vector<long>& into, const std::vector<long>& part) {
            for (std::size_t i = 0; i < into.size(); ++i) into[i] += part[i];
        });
    const Eigen::VectorXd ephi = expected_local_scales(hyper, p);
    std::vector<TruncationCell> out;
    for (std::size_t a = 0; a < H_grid.size(); ++a) {
        for (std::size_t b = 0; b < T_grid.size(); ++b) {
            TruncationCell cell;
            cell.H = H_grid[a];
            cell.T = T_grid[b];
            cell.probability = static_cast<double>(counts[a * T_grid.size() + b]) / static_cast<double>(n_draws);
            cell.mcse = std::sqrt(cell.probability * (1.0 - cell.probability) / static_cast<double>(n_draws));
            cell.bound = truncation_bound(hyper, cell.H, cell.T, ephi, BoundRate::proof);
            cell.bound_literal = truncation_bound(hyper, cell.H, cell.T, ephi, BoundRate::literal);
            cell.dominated = cell.bound >= cell.probability;
            cell.dominated_literal = cell.bound_literal >= cell.probability;
            out.push_back(cell);
        }
    }
    return out;
}

std::vector<ConcentrationCell> concentration_study(const Hyperparameters& hyper, Eigen::Index p,
                                                   std::span<const Eigen::Index> h_grid,
                                                   std::span<const double> eps_grid, long n_draws,
                                                   std::uint64_t seed, int threads) {
    if (h_grid.empty() || eps_grid.empty()) throw ArgumentError("concentration_study: empty grid");
    const Eigen::Index H = *std::max_element(h_grid.begin(), h_grid.end()) + 1;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(p, 1);
    const std::size_t cells = h_grid.size() * eps_grid.size();
    const std::vector<long> zero(cells, 0);
    const std::vector<long> counts = chunked_monte_carlo(
        n_draws, seed, 2, threads, zero,
        [&](RngStream& rng, std::vector<long>& acc) {
            const PriorDraw draw = sample_sis_prior(hyper, p, H, x, rng);
            for (std::size_t a = 0; a < h_grid.size(); ++a) {
                const auto col = draw.lambda.col(h_grid[a] - 1);
                for (std::size_t b = 0; b < eps_grid.size(); ++b) {
                    acc[a * eps_grid.size() + b] += (col.array().abs() > eps_grid[b]).count();
                }
            }
        },
        [](std::vector<long>& into, const std::vector<long>& part) {
            for (std::size_t i = 0; i < into.size(); ++i) into[i] += part[i];
        });
    std::vector<ConcentrationCell> out;
    const double total = static_cast<double>(n_draws) * static_cast<double>(p);
    for (std::size_t a = 0; a < h_grid.size(); ++a) {
        for (std::size_t b = 0; b < eps_grid.size(); ++b) {
            ConcentrationCell cell;
            cell.h = h_grid[a];
            cell.epsilon = eps_grid[b];
            cell.probability = static_cast<double>(counts[a * eps_grid.size() + b]) / total;
            cell.bound = concentration_bound(hyper, cell.h, cell.epsilon);
            cell.dominated = cell.bound >= cell.probability;
            out.push_back(cell);
        }
    }
    return out;
}

namespace {

double hill(const std::vector<double>& sorted_desc, std::size_t k) {
    const double threshold = sorted_desc[k];
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::log(sorted_desc[i] / threshold);
    return static_cast<double>(k) / sum;
}

} // namespace

TailEstimate tail_exponent(std::span<const double> samples, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("tail_exponent: fraction must lie in (0, 1)");
    std::vector<double> a;
    a.reserve(samples.size());
    for (double s : samples) {
        if (s != 0.0 && std::isfinite(s)) a.push_back(std::fabs(s));
    }
    TailEstimate est;
    est.n_used = a.size();
    const std::size_t k = static_cast<std::size_t>(fraction * static_cast<double>(a.size()));
    const std::size_t k_upper = k / 5;
    if (a.size() < 10000 || k_upper < 10) {
        est.inconclusive = true;
        return est;
    }
    std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end(), std::greater<>());
    std::vector<double> top(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k + 1));
    std::sort(top.begin(), top.end(), std::greater<>());
    est.index = hill(top, k);
    est.index_upper = hill(top, k_upper);
    const double ratio = est.index_upper / est.index;
    est.power_law = ratio < 1.2 && ratio > 1.0 / 1.2;
    return est;
}

std::vector<double> sis_nonzero_loadings(const Hyperparameters& hyper, Eigen::Index p, Eigen::Index columns,
                                         long n_draws, std::uint64_t seed, int threads) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(p, 1);
    return chunked_monte_carlo(
        n_draws, seed, 3, threads, std::vector<double>{},
        [&](RngStream& rng, std::vector<double>& acc) {
            const PriorDraw draw = sample_sis_prior(hyper, p, columns + 1, x, rng);
            for (Eigen::Index h = 0; h < columns; ++h) {
                for (Eigen::Index j = 0; j < p; ++j) {
                    if (draw.lambda(j, h) != 0.0) acc.push_back(draw.lambda(j, h));
                }
            }
        },
        [](std::vector<double>& into, const std::vector<double>& part) {
            into.insert(into.end(), part.begin(), part.end());
        });
}

Eigen::Index support_size(const Eigen::Ref<const Eigen::VectorXd>& lambda_h, double epsilon) {
    if (!(epsilon > 0.0)) throw ArgumentError("support_size: epsilon must be positive");
    return (lambda_h.array().abs() > epsilon).count();
}

std::vector<SupportCell> support_growth(const Hyperparameters& hyper, std::span<const Eigen::Index> p_grid,
                                        double epsilon, long n_draws, std::uint64_t seed, int threads) {
    std::vector<SupportCell> out;
    for (std::size_t a = 0; a < p_grid.size(); ++a) {
        const Eigen::Index p = p_grid[a];
        Hyperparameters h = hyper;
        h.c_p = Hyperparameters::default_offset(p);
        const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(p, 1);
        const std::array<double, 2> zero{0.0, 0.0};
        const auto sums = chunked_monte_carlo(
            n_draws, seed, 4 + a, threads, zero,
            [&](RngStream& rng, std::array<double, 2>& acc) {
                const PriorDraw draw = sample_sis_prior(h, p, 2, x, rng);
                const double s = static_cast<double>(support_size(draw.lambda.col(0), epsilon));
                acc[0] += s;
                acc[1] += s * s;
            },
            [](std::array<double, 2>& into, const std::array<double, 2>& part) {
                into[0] += part[0];
                into[1] += part[1];
            });
        const double N = static_cast<double>(n_draws);
        SupportCell cell;
        cell.p = p;
        cell.c_p = h.c_p;
        cell.mean_support = sums[0] / N;
        cell.mcse = std::sqrt(std::max(sums[1] / N - cell.mean_support * cell.mean_support, 0.0) / N);
        out.push_back(cell);
    }
    return out;
}

bool support_is_sublinear(const std::vector<SupportCell>& cells) {
    if (cells.size() < 2) return false;
    for (std::size_t a = 1; a < cells.size(); ++a) {
        const double prev = cells[a - 1].mean_support / static_cast<double>(cells[a - 1].p);
        const double cur = cells[a].mean_support / static_cast<double>(cells[a].p);
        if (!(cur < prev)) return false;
    }
    const auto& first = cells.front();
    const auto& last = cells.back();
    if (!(first.mean_support > 0.0)) return false;
    const double slope = std::log(last.mean_support / first.mean_support) /
                         std::log(static_cast<double>(last.p) / static_cast<double>(first.p));
    return slope < 1.0;
}

PriorPropertyReport run_prior_check(const PriorCheckSettings& settings) {
    const PriorSpec& spec = settings.spec;
    spec.hyper.validate();
    PriorPropertyReport report;
    report.settings = settings;
    report.shrinkage = verify_increasing_shrinkage(spec, settings.p, settings.H, settings.n_draws, settings.seed,
                                                   settings.threads);

    struct Acc {
        std::vector<double> loadings;
        long zeros = 0;
        long phi_zeros = 0;
        long cells = 0;
    };
    const Acc pooled = chunked_monte_carlo(
        settings.n_draws, settings.seed, 10, settings.threads, Acc{},
        [&](RngStream& rng, Acc& acc) {
            const PriorDraw draw = sample_prior(spec, settings.p, settings.H, rng);
            for (Eigen::Index h = 0; h < settings.H; ++h) {
                for (Eigen::Index j = 0; j < settings.p; ++j) {
                    const double l = draw.lambda(j, h);
                    if (l == 0.0) {
                        ++acc.zeros;
                    } else if (h < 3) {
                        acc.loadings.push_back(l);
                    }
                    if (draw.phi(j, h) == 0) ++acc.phi_zeros;
                    ++acc.cells;
                }
            }
        },
        [](Acc& into, const Acc& part) {
            into.loadings.insert(into.loadings.end(), part.loadings.begin(), part.loadings.end());
            into.zeros += part.zeros;
            into.phi_zeros += part.phi_zeros;
            into.cells += part.cells;
        });
    report.tail = tail_exponent(pooled.loadings);
    report.zero_fraction = static_cast<double>(pooled.zeros) / static_cast<double>(pooled.cells);
    report.phi_zero_fraction = static_cast<double>(pooled.phi_zeros) / static_cast<double>(pooled.cells);

    if (spec.family == PriorFamily::sis) {
        report.truncation = truncation_study(spec.hyper, settings.p, settings.truncation_H, settings.truncation_T,
                                             settings.n_draws, settings.seed, settings.threads);
        report.concentration = concentration_study(spec.hyper, settings.p, settings.concentration_h,
                                                   settings.concentration_eps, settings.n_draws, settings.seed,
                                                   settings.threads);
        report.support = support_growth(spec.hyper, settings.support_p, settings.support_epsilon,
                                        std::min<long>(settings.n_draws, 20000), settings.seed, settings.threads);
        report.support_sublinear = support_is_sublinear(report.support);
    }
    return report;
}

} // namespace sisfm
