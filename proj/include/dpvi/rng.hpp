// Copyright 2026 The dpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPVI_RNG_HPP_
#define DPVI_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace dpvi {

// One SplitMix64 step. Used only to spread a user seed into well-mixed
// engine seeds, never as the run generator itself.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named sub-streams derived from a single run seed. Subsampling,
// reparametrization draws, privacy noise, initialization jitter and
// evaluation-time sampling each get their own engine, so changing how one of
// them is consumed cannot shift the draws seen by the others.
enum class rng_stream : std::uint64_t {
  subsampling = 1,
  reparam = 2,
  noise = 3,
  init = 4,
  evaluation = 5,
};

inline std::mt19937_64 make_stream(std::uint64_t seed, rng_stream stream) {
  std::uint64_t state =
      seed ^ (0xd1342543de82ef95ULL * static_cast<std::uint64_t>(stream));
  const std::uint64_t a = splitmix64(state);
  const std::uint64_t b = splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

// Uniform double in [0, 1) built from the top 53 bits of one engine output.
inline double uniform_unit(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Standard normal draw via Box-Muller, consuming exactly two engine outputs.
// Hand-rolled because std::normal_distribution is implementation-defined and
// the optimizer promises bit-identical traces for a given seed.
inline double standard_normal(std::mt19937_64& eng) {
  const double u1 = (static_cast<double>(eng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform_unit(eng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dpvi

#endif  // DPVI_RNG_HPP_
