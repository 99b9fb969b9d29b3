#pragma once

#include <complex>
#include <span>
#include <vector>

namespace stimclean::dsp {

enum class FilterKind { butterworth_lp, butterworth_hp, butterworth_bp, notch, peak };

/// One second-order section, a0 normalized to 1:
/// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    std::complex<double> response(double omega) const;
    bool stable() const;
};

/// Cascade of second-order sections together with the parameters it was designed from.
class BiquadChain {
public:
    BiquadChain() = default;
    BiquadChain(std::vector<Biquad> sections, int order, double fs);

    const std::vector<Biquad>& sections() const { return sections_; }
    /// Total filter order (sum of section orders).
    int order() const { return order_; }
    double fs() const { return fs_; }

    std::complex<double> response(double hz) const;
    double gain_db(double hz) const;
    bool stable() const;

    /// Series connection of two chains designed at the same sampling rate.
    BiquadChain then(const BiquadChain& next) const;

private:
    std::vector<Biquad> sections_;
    int order_ = 0;
    double fs_ = 0.0;
};

/// Bilinear-transform designs. Butterworth kinds use `order` as the prototype order
/// (a band-pass of order N has 2N poles); `hz_high` is only read for band-pass.
/// Notch and peak are single sections centered at `hz_low` with quality factor `q`.
/// Throws ValidationError for frequencies outside (0, fs/2) and NumericError if the
/// resulting design is unstable.
BiquadChain design_filter(FilterKind kind, int order, double hz_low, double hz_high, double q, double fs);

/// Notches at every multiple of `base_hz` up to and including `max_hz`.
BiquadChain notch_comb(double base_hz, double max_hz, double q, double fs);

/// Zero-phase forward-backward filtering with odd reflective padding of 3x the
/// filter order and steady-state initial conditions.
std::vector<double> filtfilt(const BiquadChain& chain, std::span<const double> x);

/// Single causal pass from rest.
std::vector<double> filter_causal(const BiquadChain& chain, std::span<const double> x);

/// Streaming causal filter (direct form II transposed), one sample at a time.
class CausalFilter {
public:
    explicit CausalFilter(const BiquadChain& chain);
    double step(double x);
    void reset();

private:
    std::vector<Biquad> sections_;
    std::vector<double> z1_, z2_;
};

/// Window length in samples for a moving average of `win_ms`, forced odd.
int moving_average_width(double win_ms, double fs);

/// Centered moving mean; windows shrink at the edges.
std::vector<double> moving_average(std::span<const double> x, double win_ms, double fs);
std::vector<double> moving_average_samples(std::span<const double> x, int width);

/// Smallest power of two >= n (1 for n == 0).
std::size_t next_pow2(std::size_t n);

/// Orthonormal full-depth Haar transform of `x` zero-padded to the next power of two.
/// Output layout: [approximation, coarsest detail, ..., finest details].
std::vector<double> haar_forward(std::span<const double> x);
/// Inverse of haar_forward; the input length must be a power of two.
std::vector<double> haar_inverse(std::span<const double> coeffs);

struct Spectrum {
    std::vector<double> freqs;
    std::vector<double> power;  // one-sided density, units^2 / Hz
    double resolution() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

/// Welch averaged periodogram: periodic Hann window, per-segment mean removal.
Spectrum welch_psd(std::span<const double> x, double fs, double win_s = 1.0, double overlap = 0.5);

/// Least-squares polynomial fit over the normalized abscissa t in [-1, 1]
/// (t_i = -1 + 2 i / (n - 1)). Coefficients are ascending powers of t.
std::vector<double> polyfit(std::span<const double> x, int degree);
/// Evaluates the fitted polynomial on the same normalized grid of length n.
std::vector<double> polyeval(std::span<const double> coeffs, std::size_t n);

// Order statistics. `percentile` uses linear interpolation between closest ranks
// (q in [0, 100]); both copy their input.
double median(std::span<const double> x);
double percentile(std::span<const double> x, double q);
double rms(std::span<const double> x);

}  // namespace stimclean::dsp
