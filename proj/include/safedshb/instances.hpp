// Copyright 2026 The safe-dshb Authors
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
//
// Random aggregation instances for certification runs and property tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "safedshb/aggregation.hpp"
#include "safedshb/linalg.hpp"
#include "safedshb/rng.hpp"

namespace safedshb {

enum class Placement {
  kNone,       // every point from the mixture
  kFarPoint,   // f copies of one far point
  kScattered,  // f independent far points
  kAligned,    // f points along the top honest eigenvector, just outside the cloud
};

struct Instance {
  std::vector<ParamVector> points;  // honest first, then the f placed points
  std::size_t honest = 0;
  Placement placement = Placement::kNone;
};

namespace detail {

inline ParamVector gaussian_vector(std::size_t d, double scale, RandomStream& s) {
  ParamVector v(d);
  for (std::size_t k = 0; k < d; ++k) v[k] = scale * s.gaussian();
  return v;
}

inline ParamVector random_direction(std::size_t d, RandomStream& s) {
  ParamVector v;
  do {
    v = gaussian_vector(d, 1.0, s);
  } while (squared_norm(v) == 0.0);
  v *= 1.0 / norm(v);
  return v;
}

}  // namespace detail

// n - f honest points from a 1..3 component Gaussian mixture with random
// centers and scales; the remaining f points follow `placement`.
inline Instance make_instance(std::size_t n, std::size_t f, std::size_t d, Placement placement,
                              RandomStream& s) {
  if (n == 0 || d == 0) throw std::invalid_argument("make_instance: need n >= 1 and d >= 1");
  if (2 * f >= n && f > 0) throw std::invalid_argument("make_instance: need f < n/2");
  const std::size_t honest = placement == Placement::kNone ? n : n - f;
  const std::size_t components = 1 + static_cast<std::size_t>(s.below(3));
  std::vector<ParamVector> centers;
  std::vector<double> scales;
  for (std::size_t c = 0; c < components; ++c) {
    centers.push_back(detail::gaussian_vector(d, 2.0, s));
    scales.push_back(std::exp(2.0 * s.uniform() - 1.0));
  }
  Instance inst;
  inst.honest = honest;
  inst.placement = placement;
  for (std::size_t i = 0; i < honest; ++i) {
    const std::size_t c = static_cast<std::size_t>(s.below(components));
    inst.points.push_back(centers[c] + detail::gaussian_vector(d, scales[c], s));
  }
  if (placement == Placement::kNone) return inst;

  const auto spec = covariance_spectrum(std::span<const ParamVector>(inst.points));
  const double spread = std::sqrt(std::max(spec.lambda_max, 1e-6));
  switch (placement) {
    case Placement::kFarPoint: {
      const ParamVector far = spec.mean + (10.0 + 90.0 * s.uniform()) * spread * detail::random_direction(d, s);
      for (std::size_t i = 0; i < f; ++i) inst.points.push_back(far);
      break;
    }
    case Placement::kScattered:
      for (std::size_t i = 0; i < f; ++i)
        inst.points.push_back(spec.mean + (10.0 + 90.0 * s.uniform()) * spread * detail::random_direction(d, s));
      break;
    case Placement::kAligned: {
      const double offset = (1.0 + 3.0 * s.uniform()) * spread;
      for (std::size_t i = 0; i < f; ++i) inst.points.push_back(spec.mean + offset * spec.eigvec);
      break;
    }
    case Placement::kNone: break;
  }
  return inst;
}

inline Placement random_placement(RandomStream& s) {
  return static_cast<Placement>(s.below(4));
}

}  // namespace safedshb
