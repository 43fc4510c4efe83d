// On-demand invariant suites: analytic vs finite-difference gradients,
// geometry <-> circuit round trips, and resonance classification against a
// dense STL sweep. Each suite can inject a known fault so callers can confirm
// the suite actually detects it.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hrd/acoustics.hpp"
#include "hrd/dataset.hpp"

namespace hrd::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  std::size_t failures = 0;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<std::string> examples; // first few failing cases

  nlohmann::json to_json() const;
};

struct GradientCheckConfig {
  std::size_t configurations = 100;
  double tolerance = 1e-4;
  double step = 1e-5;
  double floor = 1e-5; // denominator floor of the relative error
  std::uint64_t seed = 0;
  bool inject_fault = false; // scales one analytic gradient entry per case
};

CheckResult check_gradients(const GradientCheckConfig& config);

struct RoundTripCheckConfig {
  std::size_t samples = 10000;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;
  PhysicalConstants constants;
  GeometryRanges ranges;
  bool inject_fault = false; // perturbs each recovered neck radius
};

// Strict recovery of the sampled geometry by eep_to_gp.
CheckResult check_geometry_recovery(const RoundTripCheckConfig& config);

// The sampled geometry is one of the per-order preimages and every preimage
// maps back to the same circuit.
CheckResult check_inversion_consistency(const RoundTripCheckConfig& config);

struct ResonanceCheckConfig {
  double location_tolerance_hz = 0.1;
  double stl_tolerance_db = 1e-6;
  double sweep_step_hz = 0.01;
  double required_fraction = 0.99;
  double cross_section = 0.01;
  PhysicalConstants constants;
  FrequencyBand band;
  bool inject_fault = false; // shifts every classified resonance by 0.5 Hz
};

// Accepted samples drawn with the generator's filter (spectra left empty).
std::vector<data::Sample> draw_accepted_samples(const data::GeneratorConfig& config, std::size_t count);

// Samples must carry their circuits; only eep is read.
CheckResult check_resonances(const std::vector<data::Sample>& samples, const ResonanceCheckConfig& config);

struct ModelRoundTripConfig {
  std::size_t models = 5;
  std::uint64_t seed = 0;
  bool inject_fault = false; // flips the low bit of one weight after loading
};

// Serialize -> deserialize reproduces every parameter bit-for-bit and the
// same infer-mode outputs.
CheckResult check_model_roundtrip(const ModelRoundTripConfig& config);

}  // namespace hrd::checks
