#include "fcd/synth.hpp"

#include <cmath>
#include <random>

namespace fcd::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586;

std::vector<double> ramp(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
    return x;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double gauss(std::mt19937_64& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

SyntheticSignal noisy_sine(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double cycles = uniform(rng, 2.0, 5.0);
    double amp = uniform(rng, 0.5, 2.0);
    double phase = uniform(rng, 0.0, kTwoPi);
    double offset = uniform(rng, -1.0, 1.0);
    double noise = 0.02 * amp;
    SyntheticSignal s{"noisy_sine/" + std::to_string(seed), ramp(n), {}};
    s.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(n);
        s.y[i] = amp * std::sin(kTwoPi * cycles * t + phase) + offset + noise * gauss(rng);
    }
    return s;
}

SyntheticSignal am_sine(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double carrier = uniform(rng, 4.0, 8.0);
    double envelope = uniform(rng, 0.5, 1.5);
    double amp = uniform(rng, 0.5, 2.0);
    double noise = 0.02 * amp;
    SyntheticSignal s{"am_sine/" + std::to_string(seed), ramp(n), {}};
    s.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(n);
        double env = 1.0 + 0.6 * std::sin(kTwoPi * envelope * t);
        s.y[i] = amp * env * std::sin(kTwoPi * carrier * t) + noise * gauss(rng);
    }
    return s;
}

SyntheticSignal sine_mixture(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double f1 = uniform(rng, 2.0, 4.0);
    double f2 = f1 * uniform(rng, 2.2, 3.4);
    double a1 = uniform(rng, 0.8, 1.6);
    double a2 = a1 * uniform(rng, 0.3, 0.6);
    double noise = 0.02 * a1;
    SyntheticSignal s{"sine_mixture/" + std::to_string(seed), ramp(n), {}};
    s.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(n);
        s.y[i] = a1 * std::sin(kTwoPi * f1 * t) + a2 * std::sin(kTwoPi * f2 * t + 1.0) +
                 noise * gauss(rng);
    }
    return s;
}

SyntheticSignal random_walk(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SyntheticSignal s{"random_walk/" + std::to_string(seed), ramp(n), {}};
    s.y.resize(n);
    double level = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        level += gauss(rng);
        s.y[i] = level;
    }
    return s;
}

SyntheticSignal poly_trend(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double a = uniform(rng, -2.0, 2.0);
    double b = uniform(rng, -2.0, 2.0);
    double c = uniform(rng, -2.0, 2.0);
    double d = uniform(rng, -1.0, 1.0);
    SyntheticSignal s{"poly_trend/" + std::to_string(seed), ramp(n), {}};
    s.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = 2.0 * static_cast<double>(i) / static_cast<double>(n) - 1.0;
        s.y[i] = a * t * t * t + b * t * t + c * t + d + 0.01 * gauss(rng);
    }
    return s;
}

SyntheticSignal flat(std::size_t n, double level) {
    SyntheticSignal s{"flat/" + std::to_string(level), ramp(n), {}};
    s.y.assign(n, level);
    return s;
}

SyntheticSignal eeg_like(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    // alpha/beta/theta-like bands over a nominal 4-second span
    double f_theta = uniform(rng, 4.0, 7.0);
    double f_alpha = uniform(rng, 8.0, 12.0);
    double f_beta = uniform(rng, 15.0, 25.0);
    double span_seconds = 4.0;
    SyntheticSignal s{"eeg_like/" + std::to_string(seed), {}, {}};
    s.x.resize(n);
    s.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = span_seconds * static_cast<double>(i) / static_cast<double>(n);
        s.x[i] = t;
        s.y[i] = 40.0 * std::sin(kTwoPi * f_theta * t) + 25.0 * std::sin(kTwoPi * f_alpha * t + 0.7) +
                 10.0 * std::sin(kTwoPi * f_beta * t + 1.9) + 3.0 * gauss(rng);
    }
    return s;
}

std::vector<SyntheticSignal> benchmark_suite(std::size_t n) {
    return {
        noisy_sine(n, 101), am_sine(n, 202),    sine_mixture(n, 303),
        random_walk(n, 404), poly_trend(n, 505), flat(n, 5.0),
    };
}

std::vector<SyntheticSignal> sinusoidal_suite(std::size_t n) {
    return {
        noisy_sine(n, 111), noisy_sine(n, 112), am_sine(n, 221),
        am_sine(n, 222),    sine_mixture(n, 331), sine_mixture(n, 332),
    };
}

}  // namespace fcd::synth
