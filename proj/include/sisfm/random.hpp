#pragma once

// Random variate kernels used by the samplers.
//
// Every distribution here is parameterized the way the model writes it:
// Ga(a, b) is shape-rate with mean a/b and variance a/b^2. Inverse-gamma
// draws are 1/Ga(a, b), so InvGa(a, b) has mean b/(a-1).

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace sisfm {

/**
 * @brief Counter-based pseudo-random stream (Philox4x32-10).
 *
 * A stream is identified by a 64-bit root seed and a 64-bit stream index.
 * Equal (seed, index) pairs reproduce the same sequence bit-for-bit;
 * different indices address disjoint regions of the counter space.
 * Satisfies std::uniform_random_bit_generator.
 */
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal (polar method; the spare variate is cached in the stream).
    double normal();
    /// Standard exponential.
    double exponential();

    /// Independent child stream; deterministic in (seed, stream, index).
    RngStream substream(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int cursor_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

namespace detail {
/// One Philox4x32-10 block; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);
} // namespace detail

// Scalar helpers.
double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate for large x.
double normal_sf(double x);
double normal_log_cdf(double x);
double normal_quantile(double p);
double logistic(double x);
double log_sum_exp(std::span<const double> values);

double sample_gamma(double shape, double rate, RngStream& rng);
/// log of a Ga(shape, 1) variate; stable for shapes far below one.
double sample_log_gamma(double shape, RngStream& rng);
double sample_inverse_gamma(double shape, double rate, RngStream& rng);
double sample_beta(double a, double b, RngStream& rng);
bool sample_bernoulli(double prob, RngStream& rng);

/**
 * @brief Draw from N(mu, sigma^2) restricted to (lower, upper).
 *
 * Either bound may be infinite. Central intervals use inversion; intervals
 * lying more than four standard deviations into a tail use exponential
 * rejection so that the draw stays exact far from the mode.
 */
double sample_truncated_normal(double mu, double sigma, double lower, double upper, RngStream& rng);

/**
 * @brief Exact draw from the Polya-Gamma PG(1, c) distribution.
 *
 * Alternating-series accept/reject sampler; the result depends on |c| only.
 */
double sample_polya_gamma(double c, RngStream& rng);

/// Index l drawn with probability exp(lw_l - logsumexp(lw)).
std::size_t sample_categorical_log(std::span<const double> log_weights, RngStream& rng);

} // namespace sisfm
