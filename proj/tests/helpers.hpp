#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Dense>

#include "stimclean/core.hpp"

namespace testutil {

inline const double kPi = std::acos(-1.0);

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sigma = 1.0) {
    std::normal_distribution<double> g(0.0, sigma);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
    return m;
}

inline Eigen::VectorXd unit(Eigen::Index n, std::mt19937_64& rng) {
    Eigen::VectorXd v = gaussian(n, 1, rng);
    return v / v.norm();
}

inline std::vector<double> noise(std::size_t n, std::mt19937_64& rng, double sigma = 1.0) {
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    return x;
}

inline std::vector<double> tone(std::size_t n, double hz, double fs, double amp = 1.0, double phase = 0.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs + phase);
    return x;
}

inline double rms(const std::vector<double>& x, std::size_t lo = 0, std::size_t hi = 0) {
    if (hi == 0) hi = x.size();
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i] * x[i];
    return std::sqrt(s / static_cast<double>(hi - lo));
}

// Biphasic spike template of `len` samples.
inline std::vector<double> spike_shape(int len = 60, double height = 400.0) {
    std::vector<double> s(static_cast<std::size_t>(len), 0.0);
    for (int t = 0; t < len; ++t) {
        const double u = t / 3.0;
        s[static_cast<std::size_t>(t)] = height * (std::exp(-u * u) - 0.6 * std::exp(-(u - 2.0) * (u - 2.0) / 4.0)) *
                                         std::exp(-t / 25.0);
    }
    return s;
}

// Adds `shape` with its first sample at each peak.
inline void add_pulses(std::vector<double>& x, const std::vector<stimclean::SampleIndex>& peaks,
                       const std::vector<double>& shape, double scale = 1.0) {
    for (auto pk : peaks)
        for (std::size_t t = 0; t < shape.size() && static_cast<std::size_t>(pk) + t < x.size(); ++t)
            x[static_cast<std::size_t>(pk) + t] += scale * shape[t];
}

// Peaks at f_sti over [t0, t1) seconds, rounded to samples.
inline std::vector<stimclean::SampleIndex> train(double t0, double t1, double fs, double f_sti) {
    std::vector<stimclean::SampleIndex> out;
    for (double t = t0; t < t1; t += 1.0 / f_sti) out.push_back(static_cast<stimclean::SampleIndex>(std::llround(t * fs)));
    return out;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("stimclean_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
