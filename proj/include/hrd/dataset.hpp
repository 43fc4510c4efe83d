// Training corpus of (STL spectrum -> equivalent circuit) pairs.
//
// Raw geometries are drawn uniformly from the GP box, pushed through the
// lumped model, filtered, and binned by their two resonant frequencies so
// every (f1-band, f2-band) group holds at most samples_per_group samples.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hrd/acoustics.hpp"

namespace hrd::data {

inline constexpr int kDatasetFormatVersion = 1;

struct BinSpec {
  double band_width = 50.0;             // Hz
  Range band{100.0, 600.0};             // Hz
  std::size_t samples_per_group = 5000;
  std::size_t max_attempts_per_group = 200000;

  void validate() const;
  std::size_t band_count() const;
  // Band index of a frequency; the top edge belongs to the last band.
  std::optional<std::size_t> band_of(double f) const;
};

struct Group {
  std::size_t first_band = 0;
  std::size_t second_band = 0;
};

// Ordered pairs with first_band < second_band, first band major.
std::vector<Group> candidate_groups(const BinSpec& bins);

struct Sample {
  GeometricParams gp;
  EquivalentElectricalParams eep;
  StlSpectrum spectrum;
  double f1 = 0.0;
  double f2 = 0.0;
  double stl_f1 = 0.0;
  double stl_f2 = 0.0;
};

struct Dataset {
  SpectrumGrid grid;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct GeneratorConfig {
  BinSpec bins;
  GeometryRanges gp_ranges;
  CircuitRanges eep_ranges;
  PhysicalConstants constants;
  double cross_section = 0.01;
  SpectrumGrid grid;
  FrequencyBand band;
  double threshold_db = 10.0;
  std::size_t target_total = 0; // 0: no overall cap
  std::uint64_t seed = 0;
  unsigned threads = 1;

  nlohmann::json to_json() const;
};

enum class Rejection {
  accepted,
  eep_out_of_range,
  resonance_out_of_band,
  stl_below_threshold,
};

std::string to_string(Rejection r);

struct Candidate {
  GeometricParams gp;
  EquivalentElectricalParams eep;
  std::optional<ResonanceReport> resonances; // nullopt: fewer than two in band
};

// Counter-derived stream seed (splitmix64 finalizer over seed and counter).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t counter);

GeometricParams sample_gp(std::mt19937_64& rng, const GeometryRanges& ranges);

// Computes the circuit and, only when it is in range, the resonances.
Candidate evaluate_candidate(const GeometricParams& gp, const GeneratorConfig& config);

Rejection filter_sample(const Candidate& candidate, const CircuitRanges& ranges,
                        double threshold_db = 10.0);

struct GroupFill {
  Group group;
  std::size_t count = 0;
  bool filled = false;
  bool infeasible = false; // no accepted sample at all within the budget
};

struct GenerationReport {
  std::uint64_t draws = 0;
  std::uint64_t accepted = 0;
  std::map<std::string, std::uint64_t> rejections; // reason -> count
  std::vector<GroupFill> groups;

  std::size_t feasible_groups() const;
  nlohmann::json to_json() const;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic in (config minus threads). Throws GenerationError when no
// group receives a sample.
Dataset generate_dataset(const GeneratorConfig& config, GenerationReport* report = nullptr);

// Group index of each sample under the given binning (nullopt if none).
std::optional<std::size_t> group_of(const Sample& s, const BinSpec& bins);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path, double cavity_radius = 0.05);
Dataset concat(const std::vector<Dataset>& parts);

struct DatasetSplit {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitParts {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Seeded shuffle then contiguous train/validation/test partition. Validation
// and test sizes are floored; train takes the remainder.
SplitParts split_dataset(const Dataset& dataset, const DatasetSplit& split);

struct NormalizationStats {
  static constexpr double kMinStd = 1e-8;

  std::vector<double> input_mean;
  std::vector<double> input_std;
  std::array<Range, 6> output{};

  std::size_t input_width() const { return input_mean.size(); }
  double normalize_input(std::size_t k, double x) const { return (x - input_mean[k]) / input_std[k]; }
  double normalize_output(std::size_t k, double y) const { return (y - output[k].lo) / output[k].width(); }
  double denormalize_output(std::size_t k, double z) const { return output[k].lo + z * output[k].width(); }
};

// z-score statistics of the spectrum bins over the training part; output
// scaling comes from the configured circuit ranges.
NormalizationStats compute_normalization(const Dataset& train, const CircuitRanges& ranges);

}  // namespace hrd::data
