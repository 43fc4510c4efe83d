// Fixtures shared by the unit tests.

#pragma once

#include "hrd/acoustics.hpp"
#include "hrd/nn.hpp"

namespace test_support {

inline hrd::GeometricParams reference_gp() {
  hrd::GeometricParams gp;
  for (auto& g : gp.order) g = {0.01, 0.02, 0.05, 0.06};
  return gp;
}

// Untrained network with the production input grid and output scaling.
inline hrd::nn::MLPModel spectrum_model() {
  hrd::nn::Architecture a;
  a.hidden = {8};
  auto m = hrd::nn::MLPModel::create(a, 5);
  m.normalization.input_mean.assign(a.input_width, 5.0);
  m.normalization.input_std.assign(a.input_width, 3.0);
  const hrd::CircuitRanges box;
  for (std::size_t k = 0; k < 6; ++k) m.normalization.output[k] = box.flat_range(k);
  return m;
}

}  // namespace test_support
