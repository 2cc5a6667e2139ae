#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace lagda {

using Engine = std::mt19937_64;

// Stream tags keep the dynamics, tracer, selection and sampler noise
// independent, so changing one consumer never perturbs another.
enum class Stream : std::uint64_t {
  FlowNoise = 1,
  TracerNoise = 2,
  TracerInit = 3,
  Selection = 4,
  Sampler = 5,
  Ensemble = 6,
  Topography = 7,
  FlowInit = 8,
};

Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

/// Standard normal draws from a private engine.
class NormalStream {
 public:
  NormalStream() = default;
  NormalStream(std::uint64_t seed, Stream stream, std::uint64_t index = 0)
      : engine_(make_engine(seed, stream, index)) {}

  double operator()() { return dist_(engine_); }

  /// Circular complex normal with E|z|^2 = 1.
  std::complex<double> complex() {
    const double re = dist_(engine_);
    const double im = dist_(engine_);
    return {re * M_SQRT1_2, im * M_SQRT1_2};
  }

  Engine& engine() { return engine_; }

 private:
  Engine engine_{};
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace lagda
