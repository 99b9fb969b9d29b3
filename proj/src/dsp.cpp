#include "stimclean/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "stimclean/core.hpp"

namespace stimclean::dsp {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

std::complex<double> Biquad::response(double omega) const {
    const cd z1 = std::polar(1.0, -omega);
    const cd z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

bool Biquad::stable() const {
    // Roots of z^2 + a1 z + a2 inside the unit circle (Jury conditions).
    return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

BiquadChain::BiquadChain(std::vector<Biquad> sections, int order, double fs)
    : sections_(std::move(sections)), order_(order), fs_(fs) {}

std::complex<double> BiquadChain::response(double hz) const {
    const double omega = 2.0 * kPi * hz / fs_;
    cd h = 1.0;
    for (const auto& s : sections_) h *= s.response(omega);
    return h;
}

double BiquadChain::gain_db(double hz) const {
    return 20.0 * std::log10(std::max(std::abs(response(hz)), 1e-300));
}

bool BiquadChain::stable() const {
    return std::all_of(sections_.begin(), sections_.end(), [](const Biquad& b) { return b.stable(); });
}

BiquadChain BiquadChain::then(const BiquadChain& next) const {
    if (sections_.empty()) return next;
    if (next.sections_.empty()) return *this;
    if (next.fs_ != fs_) throw ValidationError("cannot cascade filters designed at different sampling rates");
    std::vector<Biquad> all = sections_;
    all.insert(all.end(), next.sections_.begin(), next.sections_.end());
    return BiquadChain(std::move(all), order_ + next.order_, fs_);
}

namespace {

double prewarp(double hz, double fs) { return 2.0 * fs * std::tan(kPi * hz / fs); }

cd bilinear(cd s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

// Groups digital poles into denominators: conjugate pairs first, then real poles
// two at a time, a leftover real pole becomes a first-order section.
std::vector<std::pair<double, double>> pole_sections(const std::vector<cd>& poles) {
    std::vector<std::pair<double, double>> out;
    std::vector<double> reals;
    for (const cd& p : poles) {
        if (std::abs(p.imag()) > 1e-12 * std::max(1.0, std::abs(p))) {
            if (p.imag() > 0) out.emplace_back(-2.0 * p.real(), std::norm(p));
        } else {
            reals.push_back(p.real());
        }
    }
    std::sort(reals.begin(), reals.end());
    std::size_t i = 0;
    for (; i + 1 < reals.size(); i += 2) out.emplace_back(-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]);
    if (i < reals.size()) out.emplace_back(-reals[i], 0.0);
    return out;
}

BiquadChain butterworth(FilterKind kind, int order, double lo, double hi, double fs) {
    std::vector<cd> proto;
    for (int k = 0; k < order; ++k) proto.push_back(std::polar(1.0, kPi * (2.0 * k + order + 1) / (2.0 * order)));

    std::vector<cd> analog;
    double ref_omega = 0.0;
    switch (kind) {
        case FilterKind::butterworth_lp: {
            const double wc = prewarp(lo, fs);
            for (const cd& p : proto) analog.push_back(wc * p);
            ref_omega = 0.0;
            break;
        }
        case FilterKind::butterworth_hp: {
            const double wc = prewarp(lo, fs);
            for (const cd& p : proto) analog.push_back(wc / p);
            ref_omega = kPi;
            break;
        }
        case FilterKind::butterworth_bp: {
            const double w1 = prewarp(lo, fs), w2 = prewarp(hi, fs);
            const double wo = std::sqrt(w1 * w2), bw = w2 - w1;
            for (const cd& p : proto) {
                const cd pl = p * (bw / 2.0);
                const cd r = std::sqrt(pl * pl - wo * wo);
                analog.push_back(pl + r);
                analog.push_back(pl - r);
            }
            ref_omega = 2.0 * std::atan(wo / (2.0 * fs));
            break;
        }
        default:
            throw ValidationError("not a Butterworth kind");
    }

    std::vector<cd> digital;
    for (const cd& s : analog) digital.push_back(bilinear(s, fs));

    std::vector<Biquad> sections;
    for (auto [a1, a2] : pole_sections(digital)) {
        const bool first_order = (a2 == 0.0);
        Biquad b;
        b.a1 = a1;
        b.a2 = a2;
        if (kind == FilterKind::butterworth_lp) {
            b.b0 = 1.0, b.b1 = first_order ? 1.0 : 2.0, b.b2 = first_order ? 0.0 : 1.0;
        } else if (kind == FilterKind::butterworth_hp) {
            b.b0 = 1.0, b.b1 = first_order ? -1.0 : -2.0, b.b2 = first_order ? 0.0 : 1.0;
        } else {
            b.b0 = 1.0, b.b1 = 0.0, b.b2 = -1.0;
        }
        const double g = std::abs(b.response(ref_omega));
        b.b0 /= g, b.b1 /= g, b.b2 /= g;
        sections.push_back(b);
    }
    const int total_order = kind == FilterKind::butterworth_bp ? 2 * order : order;
    return BiquadChain(std::move(sections), total_order, fs);
}

}  // namespace

BiquadChain design_filter(FilterKind kind, int order, double hz_low, double hz_high, double q, double fs) {
    const double nyq = fs / 2.0;
    auto check = [&](double f) {
        if (!(f > 0.0 && f < nyq))
            throw ValidationError("filter frequency " + std::to_string(f) + " Hz outside (0, " + std::to_string(nyq) + ")");
    };
    check(hz_low);
    BiquadChain chain;
    switch (kind) {
        case FilterKind::butterworth_lp:
        case FilterKind::butterworth_hp:
            if (order < 1) throw ValidationError("Butterworth order must be >= 1");
            chain = butterworth(kind, order, hz_low, hz_low, fs);
            break;
        case FilterKind::butterworth_bp:
            check(hz_high);
            if (order < 1) throw ValidationError("Butterworth order must be >= 1");
            if (!(hz_high > hz_low)) throw ValidationError("band-pass requires hz_high > hz_low");
            chain = butterworth(kind, order, hz_low, hz_high, fs);
            break;
        case FilterKind::notch:
        case FilterKind::peak: {
            if (!(q > 0.0)) throw ValidationError("Q must be positive");
            const double w0 = 2.0 * kPi * hz_low / fs;
            const double alpha = std::sin(w0) / (2.0 * q);
            const double a0 = 1.0 + alpha;
            Biquad b;
            b.a1 = -2.0 * std::cos(w0) / a0;
            b.a2 = (1.0 - alpha) / a0;
            if (kind == FilterKind::notch) {
                b.b0 = 1.0 / a0, b.b1 = -2.0 * std::cos(w0) / a0, b.b2 = 1.0 / a0;
            } else {
                b.b0 = alpha / a0, b.b1 = 0.0, b.b2 = -alpha / a0;
            }
            chain = BiquadChain({b}, 2, fs);
            break;
        }
    }
    if (!chain.stable()) throw NumericError("unstable filter design");
    return chain;
}

BiquadChain notch_comb(double base_hz, double max_hz, double q, double fs) {
    BiquadChain chain;
    for (int h = 1; h * base_hz <= max_hz + 1e-9 && h * base_hz < fs / 2.0; ++h)
        chain = chain.then(design_filter(FilterKind::notch, 2, h * base_hz, 0.0, q, fs));
    return chain;
}

namespace {

// In-place cascade with steady-state initial conditions for a constant input x[0].
void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x) {
    if (x.empty()) return;
    double level = x[0];
    for (const Biquad& s : sections) {
        const double den = 1.0 + s.a1 + s.a2;
        const double g = std::abs(den) > 1e-300 ? (s.b0 + s.b1 + s.b2) / den : 0.0;
        double z1 = (g - s.b0) * level;
        double z2 = (s.b2 - s.a2 * g) * level;
        for (double& v : x) {
            const double in = v;
            const double y = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * y + z2;
            z2 = s.b2 * in - s.a2 * y;
            v = y;
        }
        level *= g;
    }
}

}  // namespace

std::vector<double> filtfilt(const BiquadChain& chain, std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("filtfilt: non-finite input");
    const std::size_t pad = std::min<std::size_t>(3 * static_cast<std::size_t>(chain.order()), n - 1);

    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
    for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    run_cascade(chain.sections(), ext);
    std::reverse(ext.begin(), ext.end());
    run_cascade(chain.sections(), ext);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> filter_causal(const BiquadChain& chain, std::span<const double> x) {
    CausalFilter f(chain);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) throw ValidationError("filter_causal: non-finite input");
        y[i] = f.step(x[i]);
    }
    return y;
}

CausalFilter::CausalFilter(const BiquadChain& chain)
    : sections_(chain.sections()), z1_(sections_.size(), 0.0), z2_(sections_.size(), 0.0) {}

double CausalFilter::step(double x) {
    for (std::size_t k = 0; k < sections_.size(); ++k) {
        const Biquad& s = sections_[k];
        const double y = s.b0 * x + z1_[k];
        z1_[k] = s.b1 * x - s.a1 * y + z2_[k];
        z2_[k] = s.b2 * x - s.a2 * y;
        x = y;
    }
    return x;
}

void CausalFilter::reset() {
    std::fill(z1_.begin(), z1_.end(), 0.0);
    std::fill(z2_.begin(), z2_.end(), 0.0);
}

int moving_average_width(double win_ms, double fs) {
    int w = std::max(1, static_cast<int>(std::lround(fs * win_ms / 1000.0)));
    if (w % 2 == 0) ++w;
    return w;
}

std::vector<double> moving_average(std::span<const double> x, double win_ms, double fs) {
    if (!(win_ms > 0.0)) throw ValidationError("moving_average: window must be positive");
    return moving_average_samples(x, moving_average_width(win_ms, fs));
}

std::vector<double> moving_average_samples(std::span<const double> x, int width) {
    const std::size_t n = x.size();
    std::vector<double> y(n);
    if (n == 0) return y;
    const std::ptrdiff_t half = std::max(0, width / 2);
    std::vector<long double> prefix(n + 1, 0.0L);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + static_cast<long double>(x[i]);
    const auto sn = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(sn - 1, i + half);
        y[static_cast<std::size_t>(i)] =
            static_cast<double>((prefix[static_cast<std::size_t>(hi + 1)] - prefix[static_cast<std::size_t>(lo)]) /
                                static_cast<long double>(hi - lo + 1));
    }
    return y;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t q = 1;
    while (q < n) q <<= 1;
    return q;
}

std::vector<double> haar_forward(std::span<const double> x) {
    const std::size_t q = next_pow2(x.size());
    std::vector<double> a(q, 0.0);
    std::copy(x.begin(), x.end(), a.begin());
    std::vector<double> out(q, 0.0);
    std::vector<double> tmp(q);
    const double r = std::numbers::sqrt2 / 2.0;
    // Details of level with `len` inputs land in out[len/2, len).
    for (std::size_t len = q; len > 1; len /= 2) {
        const std::size_t h = len / 2;
        for (std::size_t i = 0; i < h; ++i) {
            tmp[i] = (a[2 * i] + a[2 * i + 1]) * r;
            out[h + i] = (a[2 * i] - a[2 * i + 1]) * r;
        }
        std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(h), a.begin());
    }
    out[0] = a[0];
    return out;
}

std::vector<double> haar_inverse(std::span<const double> coeffs) {
    const std::size_t q = coeffs.size();
    if (q == 0) return {};
    if (next_pow2(q) != q) throw ValidationError("haar_inverse: length must be a power of two");
    std::vector<double> a(q, 0.0), tmp(q);
    a[0] = coeffs[0];
    const double r = std::numbers::sqrt2 / 2.0;
    for (std::size_t h = 1; h < q; h *= 2) {
        for (std::size_t i = 0; i < h; ++i) {
            const double s = a[i], d = coeffs[h + i];
            tmp[2 * i] = (s + d) * r;
            tmp[2 * i + 1] = (s - d) * r;
        }
        std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(2 * h), a.begin());
    }
    return a;
}

Spectrum welch_psd(std::span<const double> x, double fs, double win_s, double overlap) {
    const auto nperseg = static_cast<std::size_t>(std::lround(win_s * fs));
    if (nperseg < 2) throw ValidationError("welch_psd: window too short");
    if (x.size() < nperseg) throw ValidationError("welch_psd: signal shorter than one window");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw ValidationError("welch_psd: overlap must be in [0, 1)");
    const std::size_t step = std::max<std::size_t>(1, nperseg - static_cast<std::size_t>(std::lround(overlap * nperseg)));

    std::vector<double> win(nperseg);
    double wss = 0.0;
    for (std::size_t i = 0; i < nperseg; ++i) {
        win[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(nperseg));
        wss += win[i] * win[i];
    }

    const std::size_t nbins = nperseg / 2 + 1;
    Spectrum out;
    out.freqs.resize(nbins);
    out.power.assign(nbins, 0.0);
    for (std::size_t k = 0; k < nbins; ++k) out.freqs[k] = fs * static_cast<double>(k) / static_cast<double>(nperseg);

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> seg(nperseg);
    std::vector<cd> spec;
    std::size_t count = 0;
    for (std::size_t start = 0; start + nperseg <= x.size(); start += step) {
        double mean = 0.0;
        for (std::size_t i = 0; i < nperseg; ++i) mean += x[start + i];
        mean /= static_cast<double>(nperseg);
        for (std::size_t i = 0; i < nperseg; ++i) seg[i] = (x[start + i] - mean) * win[i];
        fft.fwd(spec, seg);
        for (std::size_t k = 0; k < nbins; ++k) out.power[k] += std::norm(spec[k]);
        ++count;
    }
    const double scale = 1.0 / (fs * wss * static_cast<double>(count));
    for (std::size_t k = 0; k < nbins; ++k) {
        double v = out.power[k] * scale;
        const bool edge = (k == 0) || (nperseg % 2 == 0 && k == nbins - 1);
        if (!edge) v *= 2.0;
        out.power[k] = v;
    }
    return out;
}

std::vector<double> polyfit(std::span<const double> x, int degree) {
    const std::size_t n = x.size();
    if (degree < 0) throw ValidationError("polyfit: negative degree");
    if (n < 2 || n <= static_cast<std::size_t>(degree))
        throw ValidationError("polyfit: need more than degree samples and at least 2");
    const int m = degree + 1;
    constexpr std::size_t kBlock = 2048;

    // Streaming Householder QR of the augmented design [V | x]; only the
    // (m+1) x (m+1) triangular factor is carried between blocks.
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m + 1, m + 1);
    bool have_r = false;
    const double denom = static_cast<double>(n - 1);
    for (std::size_t start = 0; start < n; start += kBlock) {
        const std::size_t rows = std::min(kBlock, n - start);
        const Eigen::Index top = have_r ? m + 1 : 0;
        Eigen::MatrixXd block(top + static_cast<Eigen::Index>(rows), m + 1);
        if (have_r) block.topRows(m + 1) = r;
        for (std::size_t i = 0; i < rows; ++i) {
            const double t = -1.0 + 2.0 * static_cast<double>(start + i) / denom;
            double pw = 1.0;
            const auto row = top + static_cast<Eigen::Index>(i);
            for (int j = 0; j < m; ++j) {
                block(row, j) = pw;
                pw *= t;
            }
            block(row, m) = x[start + i];
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(block);
        const Eigen::Index keep = std::min<Eigen::Index>(m + 1, block.rows());
        r.setZero();
        r.topRows(keep) = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
        // Zero rows below `keep` are harmless when stacked onto the next block.
        have_r = true;
    }
    const Eigen::MatrixXd rr = r.topLeftCorner(m, m);
    const Eigen::VectorXd rhs = r.col(m).head(m);
    for (int j = 0; j < m; ++j)
        if (std::abs(rr(j, j)) < 1e-300) throw NumericError("polyfit: rank-deficient design");
    const Eigen::VectorXd c = rr.triangularView<Eigen::Upper>().solve(rhs);
    return {c.data(), c.data() + m};
}

std::vector<double> polyeval(std::span<const double> coeffs, std::size_t n) {
    std::vector<double> y(n, 0.0);
    if (n == 0 || coeffs.empty()) return y;
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n > 1 ? -1.0 + 2.0 * static_cast<double>(i) / denom : 0.0;
        double acc = 0.0;
        for (std::size_t j = coeffs.size(); j-- > 0;) acc = acc * t + coeffs[j];
        y[i] = acc;
    }
    return y;
}

double median(std::span<const double> x) { return percentile(x, 50.0); }

double percentile(std::span<const double> x, double q) {
    if (x.empty()) throw ValidationError("percentile of empty sequence");
    std::vector<double> v(x.begin(), x.end());
    const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (frac == 0.0 || lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + frac * (b - a);
}

double rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    long double acc = 0.0L;
    for (double v : x) acc += static_cast<long double>(v) * v;
    return static_cast<double>(std::sqrt(acc / static_cast<long double>(x.size())));
}

}  // namespace stimclean::dsp
