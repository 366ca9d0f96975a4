#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fcd::synth {

struct SyntheticSignal {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Deterministic generators (fixed engine, seeds documented at call sites).
// x is uniform 0..n-1 unless noted.

SyntheticSignal noisy_sine(std::size_t n, std::uint64_t seed);
SyntheticSignal am_sine(std::size_t n, std::uint64_t seed);       // amplitude-modulated
SyntheticSignal sine_mixture(std::size_t n, std::uint64_t seed);  // two incommensurate tones
SyntheticSignal random_walk(std::size_t n, std::uint64_t seed);
SyntheticSignal poly_trend(std::size_t n, std::uint64_t seed);    // cubic trend + noise
SyntheticSignal flat(std::size_t n, double level);
SyntheticSignal eeg_like(std::size_t n, std::uint64_t seed);      // banded oscillations + noise

/// Mixed-structure suite used by the speed benchmark and acceptance checks.
std::vector<SyntheticSignal> benchmark_suite(std::size_t n);
/// Sinusoidal-family subset (noisy/AM/mixture sines).
std::vector<SyntheticSignal> sinusoidal_suite(std::size_t n);

}  // namespace fcd::synth
