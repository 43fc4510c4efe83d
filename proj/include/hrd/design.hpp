// Surrogate-driven inverse design of a THR for two target resonances.
//
// Pipeline: synthesize candidate target spectra -> surrogate predicts a
// circuit for each -> invert to geometry -> evaluate the geometry with the
// lumped model -> rank. Every realized quantity comes from the physics
// model, never from the surrogate.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hrd/acoustics.hpp"
#include "hrd/nn.hpp"

namespace hrd::design {

struct DesignTarget {
  double f1 = 150.0;
  double f2 = 250.0;
  double threshold_db = 10.0;

  // Targets must lie in [band.lo, band.hi] with f1 < f2.
  void validate(const FrequencyBand& band = {}) const;
};

struct CandidateSpectrum {
  StlSpectrum spectrum;
  double height1 = 0.0;     // dB
  double height2 = 0.0;     // dB
  double half_width1 = 0.0; // Hz
  double half_width2 = 0.0; // Hz
};

// Two-Lorentzian templates centred on the targets, peak heights drawn from
// [threshold, 30] dB and half-widths from [2, 10] Hz.
std::vector<CandidateSpectrum> synthesize_targets(const DesignTarget& target, std::size_t count,
                                                  const SpectrumGrid& grid, std::uint64_t seed);

double lorentzian_pair(double f, const DesignTarget& target, double h1, double w1, double h2, double w2);

struct DesignResult {
  std::size_t candidate_index = 0;
  CandidateSpectrum candidate;
  EquivalentElectricalParams predicted;
  GeometricParams gp;
  EquivalentElectricalParams recomputed;
  std::array<bool, kOrders> projected{false, false};
  bool in_range = false;
  std::optional<ResonanceReport> realized; // nullopt: resonances out of band
  double stl_at_f1 = 0.0;
  double stl_at_f2 = 0.0;
  double aerf = 0.0; // +inf when not realized
  bool feasible = false;

  double mean_target_stl() const { return 0.5 * (stl_at_f1 + stl_at_f2); }
  // 0: feasible and in range, 1: feasible out of range, 2: infeasible.
  int tier() const;
};

struct DesignOptions {
  std::size_t candidates = 100;
  std::uint64_t seed = 0;
  double cross_section = 0.01;
  PhysicalConstants constants;
  GeometryRanges gp_ranges;
  FrequencyBand band;
  InversionOptions inversion{FoldPolicy::project, true};
  unsigned threads = 1;
};

struct CandidateFailure {
  std::size_t candidate_index = 0;
  std::string reason;
};

class NoRealizableDesign : public std::runtime_error {
 public:
  NoRealizableDesign(std::vector<CandidateFailure> failures)
      : std::runtime_error("no realizable design among the candidates"), failures_(std::move(failures)) {}
  const std::vector<CandidateFailure>& failures() const { return failures_; }

 private:
  std::vector<CandidateFailure> failures_;
};

// Forward-evaluates an explicit geometry against the target.
DesignResult evaluate_geometry(const GeometricParams& gp, const DesignTarget& target,
                               const DesignOptions& options);

bool ranks_before(const DesignResult& a, const DesignResult& b);

struct DesignOutcome {
  std::vector<DesignResult> ranked;
  std::vector<CandidateFailure> failures; // candidates whose inversion failed
};

// Throws NoRealizableDesign when every candidate fails inversion.
DesignOutcome design(const DesignTarget& target, const nn::MLPModel& model, const DesignOptions& options);

struct SensitivityMap {
  std::size_t size = 0;      // n x n, row = a1 index, column = a2 index
  double span = 0.1;         // +-10 %
  std::vector<double> scale; // normalized radius per index
  std::vector<std::optional<double>> aerf; // nullopt: invalid geometry

  std::optional<double> at(std::size_t i, std::size_t j) const { return aerf[i * size + j]; }
  std::optional<double> center() const { return at(size / 2, size / 2); }
  // Fraction of valid cells strictly below the centre cell.
  double center_rank_fraction() const;
  std::string to_csv() const;
};

// n must be odd so the unperturbed design sits on the centre cell.
SensitivityMap sensitivity_map(const GeometricParams& gp, const DesignTarget& target, std::size_t n,
                               double span, const DesignOptions& options);

nlohmann::json to_json(const DesignResult& r);
nlohmann::json gp_to_json_cm(const GeometricParams& gp);

}  // namespace hrd::design
