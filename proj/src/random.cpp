#include "sisfm/random.hpp"

#include "sisfm/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace sisfm {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

// Tail threshold (in standard deviations) for the truncated normal.
constexpr double kTailCut = 4.0;

// Standardized right-tail draw on [a, b), a >= kTailCut, b possibly infinite.
double truncated_tail(double a, double b, RngStream& rng) {
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    const double span = b - a;
    const double mass = std::isinf(b) ? 1.0 : -std::expm1(-rate * span);
    for (;;) {
        const double x = a - std::log1p(-rng.uniform() * mass) / rate;
        if (x >= b) continue;
        const double d = x - rate;
        if (rng.uniform() <= std::exp(-0.5 * d * d)) return x;
    }
}

double truncated_central(double a, double b, RngStream& rng) {
    if (std::isinf(a) && std::isinf(b)) return rng.normal();
    const double u = rng.uniform();
    if (a > 0.0) {
        const double sa = normal_sf(a);
        const double sb = normal_sf(b);
        if (!(sa > sb)) return a + u * (b - a);
        return -normal_quantile(sb + u * (sa - sb));
    }
    const double fa = normal_cdf(a);
    const double fb = normal_cdf(b);
    if (!(fb > fa)) return a + u * (b - a);
    return normal_quantile(fa + u * (fb - fa));
}

// Polya-Gamma PG(1, c) pieces. J*(1, z) is drawn and PG(1, 2z) = J*(1, z) / 4.
constexpr double kPgTrunc = 0.64;

double pg_coefficient(int n, double x) {
    const double k = (n + 0.5) * kPi;
    if (x > kPgTrunc) return k * std::exp(-0.5 * k * k * x);
    const double half = n + 0.5;
    return std::exp(-1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) - 2.0 * half * half / x);
}

// Probability of taking the exponential (right) proposal piece.
double pg_right_mass(double z) {
    const double t = kPgTrunc;
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
    const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
    const double x0 = std::log(fz) + fz * t;
    const double xb = x0 - z + normal_log_cdf(b);
    const double xa = x0 + z + normal_log_cdf(a);
    const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
    return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, kPgTrunc).
double pg_truncated_inverse_gaussian(double z, RngStream& rng) {
    const double t = kPgTrunc;
    double x = t + 1.0;
    if (z < 1.0 / t) {
        double accept = 0.0;
        while (rng.uniform() > accept) {
            double e1 = rng.exponential();
            double e2 = rng.exponential();
            while (e1 * e1 > 2.0 * e2 / t) {
                e1 = rng.exponential();
                e2 = rng.exponential();
            }
            const double s = 1.0 + t * e1;
            x = t / (s * s);
            accept = std::exp(-0.5 * z * z * x);
        }
        return x;
    }
    const double mu = 1.0 / z;
    while (x > t) {
        const double n = rng.normal();
        const double mu_y = mu * n * n;
        const double half_mu = 0.5 * mu;
        x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
        if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
    return x;
}

} // namespace

std::array<std::uint32_t, 4> detail::philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key) {
    return philox_block(counter, key);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

void RngStream::refill() {
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                           static_cast<std::uint32_t>(seed_ >> 32)};
    buffer_ = philox_block(ctr, key);
    ++block_;
    cursor_ = 0;
}

RngStream::result_type RngStream::operator()() {
    if (cursor_ >= 4) refill();
    const std::uint64_t hi = buffer_[cursor_];
    const std::uint64_t lo = buffer_[cursor_ + 1];
    cursor_ += 2;
    return (hi << 32) | lo;
}

double RngStream::uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

double RngStream::exponential() { return -std::log(uniform()); }

RngStream RngStream::substream(std::uint64_t index) const {
    return RngStream(seed_, splitmix64(splitmix64(stream_) ^ (index + 0x632BE59BD9B4E019ull)));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double normal_log_cdf(double x) {
    if (x > -30.0) return std::log(normal_cdf(x));
    // Asymptotic Mills-ratio expansion for the far lower tail.
    const double x2 = x * x;
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * kPi) + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw ArgumentError("normal_quantile: probability outside [0, 1]");
    }
    return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> values) {
    double top = -std::numeric_limits<double>::infinity();
    for (double v : values) top = std::max(top, v);
    if (!std::isfinite(top)) return top;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - top);
    return top + std::log(sum);
}

double sample_gamma(double shape, double rate, RngStream& rng) {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
        throw ArgumentError("sample_gamma: shape and rate must be positive and finite");
    if (shape < 1.0) {
        const double g = sample_gamma(shape + 1.0, 1.0, rng);
        return g * std::pow(rng.uniform(), 1.0 / shape) / rate;
    }
    // Marsaglia-Tsang
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

double sample_log_gamma(double shape, RngStream& rng) {
    if (!(shape > 0.0) || !std::isfinite(shape))
        throw ArgumentError("sample_log_gamma: shape must be positive and finite");
    if (shape >= 1.0) return std::log(sample_gamma(shape, 1.0, rng));
    return std::log(sample_gamma(shape + 1.0, 1.0, rng)) + std::log(rng.uniform()) / shape;
}

double sample_inverse_gamma(double shape, double rate, RngStream& rng) {
    return 1.0 / sample_gamma(shape, rate, rng);
}

double sample_beta(double a, double b, RngStream& rng) {
    if (!(a > 0.0) || !(b > 0.0)) throw ArgumentError("sample_beta: parameters must be positive");
    const double la = sample_log_gamma(a, rng);
    const double lb = sample_log_gamma(b, rng);
    return 1.0 / (1.0 + std::exp(lb - la));
}

bool sample_bernoulli(double prob, RngStream& rng) { return rng.uniform() < prob; }

double sample_truncated_normal(double mu, double sigma, double lower, double upper, RngStream& rng) {
    if (!std::isfinite(mu) || !(sigma > 0.0) || !std::isfinite(sigma))
        throw ArgumentError("sample_truncated_normal: mu must be finite and sigma positive");
    if (!(lower < upper)) throw ArgumentError("sample_truncated_normal: requires lower < upper");
    const double a = (lower - mu) / sigma;
    const double b = (upper - mu) / sigma;
    double x = 0.0;
    if (a >= kTailCut) {
        x = truncated_tail(a, b, rng);
    } else if (b <= -kTailCut) {
        x = -truncated_tail(-b, -a, rng);
    } else {
        x = truncated_central(a, b, rng);
    }
    double value = mu + sigma * x;
    // Rounding in the affine map can land on a bound; pull it strictly inside.
    if (value <= lower) value = std::nextafter(lower, upper);
    if (value >= upper) value = std::nextafter(upper, lower);
    return value;
}

double sample_polya_gamma(double c, RngStream& rng) {
    if (!std::isfinite(c)) throw ArgumentError("sample_polya_gamma: c must be finite");
    const double z = 0.5 * std::fabs(c);
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double right_mass = pg_right_mass(z);
    for (;;) {
        double x = 0.0;
        if (rng.uniform() < right_mass) {
            x = kPgTrunc + rng.exponential() / fz;
        } else {
            x = pg_truncated_inverse_gaussian(z, rng);
        }
        double s = pg_coefficient(0, x);
        const double y = rng.uniform() * s;
        for (int n = 1;; ++n) {
            if (n % 2 == 1) {
                s -= pg_coefficient(n, x);
                if (y <= s) return 0.25 * x;
            } else {
                s += pg_coefficient(n, x);
                if (y > s) break;
            }
        }
    }
}

std::size_t sample_categorical_log(std::span<const double> log_weights, RngStream& rng) {
    if (log_weights.empty()) throw ArgumentError("sample_categorical_log: empty weight vector");
    double top = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) {
        if (std::isnan(lw)) throw ArgumentError("sample_categorical_log: NaN log weight");
        top = std::max(top, lw);
    }
    if (!std::isfinite(top)) throw ArgumentError("sample_categorical_log: no finite log weight");
    double total = 0.0;
    for (double lw : log_weights) total += std::exp(lw - top);
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t l = 0; l < log_weights.size(); ++l) {
        const double w = std::exp(log_weights[l] - top);
        if (w > 0.0) last_positive = l;
        acc += w;
        if (target < acc) return l;
    }
    return last_positive;
}

} // namespace sisfm
