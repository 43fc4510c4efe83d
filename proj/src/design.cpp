#include "hrd/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "hrd/parallel.hpp"
#include "hrd/text_io.hpp"

namespace hrd::design {

namespace {

constexpr double kMaxPeakDb = 30.0;
constexpr double kMinHalfWidth = 2.0;
constexpr double kMaxHalfWidth = 10.0;

nlohmann::json eep_json(const EquivalentElectricalParams& e) {
  const auto v = e.flat();
  return {{"R1", v[0]}, {"M1", v[1]}, {"C1", v[2]}, {"R2", v[3]}, {"M2", v[4]}, {"C2", v[5]}};
}

}  // namespace

void DesignTarget::validate(const FrequencyBand& band) const {
  if (!(f1 >= band.lo && f1 <= band.hi && f2 >= band.lo && f2 <= band.hi)) {
    throw DomainError("target frequencies must lie inside the analyzed band");
  }
  if (!(f1 < f2)) throw DomainError("first target frequency must be below the second");
  if (!(threshold_db > 0.0)) throw DomainError("STL threshold must be positive");
}

double lorentzian_pair(double f, const DesignTarget& t, double h1, double w1, double h2, double w2) {
  const double d1 = f - t.f1;
  const double d2 = f - t.f2;
  return h1 * w1 * w1 / (d1 * d1 + w1 * w1) + h2 * w2 * w2 / (d2 * d2 + w2 * w2);
}

std::vector<CandidateSpectrum> synthesize_targets(const DesignTarget& target, std::size_t count,
                                                  const SpectrumGrid& grid, std::uint64_t seed) {
  if (count == 0) throw DomainError("candidate count must be at least 1");
  grid.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> height(target.threshold_db, kMaxPeakDb);
  std::uniform_real_distribution<double> width(kMinHalfWidth, kMaxHalfWidth);
  std::vector<CandidateSpectrum> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    CandidateSpectrum c;
    c.height1 = height(rng);
    c.half_width1 = width(rng);
    c.height2 = height(rng);
    c.half_width2 = width(rng);
    c.spectrum.grid = grid;
    c.spectrum.values.resize(grid.count);
    for (std::size_t i = 0; i < grid.count; ++i) {
      c.spectrum.values[i] =
          lorentzian_pair(grid.frequency(i), target, c.height1, c.half_width1, c.height2, c.half_width2);
    }
    out.push_back(std::move(c));
  }
  return out;
}

int DesignResult::tier() const {
  if (!feasible) return 2;
  return in_range ? 0 : 1;
}

bool ranks_before(const DesignResult& a, const DesignResult& b) {
  if (a.tier() != b.tier()) return a.tier() < b.tier();
  if (a.aerf != b.aerf) return a.aerf < b.aerf;
  if (a.mean_target_stl() != b.mean_target_stl()) return a.mean_target_stl() > b.mean_target_stl();
  return a.candidate_index < b.candidate_index;
}

DesignResult evaluate_geometry(const GeometricParams& gp, const DesignTarget& target,
                               const DesignOptions& options) {
  DesignResult r;
  r.gp = gp;
  r.recomputed = gp_to_eep(gp, options.constants);
  r.in_range = options.gp_ranges.contains(gp);
  r.realized = find_resonances(r.recomputed, options.cross_section, options.constants, options.band);
  r.stl_at_f1 = stl_side_branch(r.recomputed, target.f1, options.cross_section, options.constants);
  r.stl_at_f2 = stl_side_branch(r.recomputed, target.f2, options.cross_section, options.constants);
  r.aerf = r.realized ? aerf(r.realized->first.frequency, r.realized->second.frequency, target.f1, target.f2)
                      : std::numeric_limits<double>::infinity();
  r.feasible = r.stl_at_f1 >= target.threshold_db && r.stl_at_f2 >= target.threshold_db;
  return r;
}

DesignOutcome design(const DesignTarget& target, const nn::MLPModel& model, const DesignOptions& options) {
  target.validate(options.band);
  const auto candidates = synthesize_targets(target, options.candidates, model.grid, options.seed);
  std::vector<StlSpectrum> spectra;
  spectra.reserve(candidates.size());
  for (const auto& c : candidates) spectra.push_back(c.spectrum);
  const auto predicted = nn::predict(model, spectra);

  std::vector<std::optional<DesignResult>> results(candidates.size());
  std::vector<std::string> errors(candidates.size());
  parallel_for(candidates.size(), options.threads, [&](std::size_t k) {
    try {
      const auto inv = invert_eep(predicted[k], options.gp_ranges, options.constants, options.inversion);
      DesignResult r = evaluate_geometry(inv.gp, target, options);
      r.candidate_index = k;
      r.candidate = candidates[k];
      r.predicted = predicted[k];
      r.projected = inv.projected;
      results[k] = std::move(r);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });

  DesignOutcome out;
  for (std::size_t k = 0; k < results.size(); ++k) {
    if (results[k]) out.ranked.push_back(std::move(*results[k]));
    else out.failures.push_back({k, errors[k]});
  }
  if (out.ranked.empty()) throw NoRealizableDesign(out.failures);
  std::stable_sort(out.ranked.begin(), out.ranked.end(), ranks_before);
  return out;
}

double SensitivityMap::center_rank_fraction() const {
  const auto c = center();
  if (!c) return 1.0;
  std::size_t valid = 0;
  std::size_t below = 0;
  for (const auto& v : aerf) {
    if (!v) continue;
    ++valid;
    if (*v < *c) ++below;
  }
  return valid == 0 ? 1.0 : static_cast<double>(below) / static_cast<double>(valid);
}

std::string SensitivityMap::to_csv() const {
  std::string out = "a1_scale,a2_scale,aerf_hz,valid\n";
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const auto v = at(i, j);
      out += format_double(scale[i]) + "," + format_double(scale[j]) + "," +
             (v ? format_double(*v) : std::string("nan")) + "," + (v ? "1" : "0") + "\n";
    }
  }
  return out;
}

SensitivityMap sensitivity_map(const GeometricParams& gp, const DesignTarget& target, std::size_t n,
                               double span, const DesignOptions& options) {
  if (n == 0 || n % 2 == 0) throw DomainError("sensitivity grid size must be odd");
  if (!(span > 0.0 && span < 1.0)) throw DomainError("perturbation span must be in (0, 1)");
  SensitivityMap map;
  map.size = n;
  map.span = span;
  map.scale.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = n == 1 ? 0.0 : 2.0 * static_cast<double>(k) / static_cast<double>(n - 1) - 1.0;
    map.scale[k] = 1.0 + span * u;
  }
  map.aerf.assign(n * n, std::nullopt);
  parallel_for(n * n, options.threads, [&](std::size_t cell) {
    GeometricParams p = gp;
    p.order[0].neck_radius = gp.order[0].neck_radius * map.scale[cell / n];
    p.order[1].neck_radius = gp.order[1].neck_radius * map.scale[cell % n];
    try {
      p.validate();
    } catch (const DomainError&) {
      return;
    }
    map.aerf[cell] = aerf(p, target.f1, target.f2, options.cross_section, options.constants, options.band);
  });
  return map;
}

nlohmann::json gp_to_json_cm(const GeometricParams& gp) {
  nlohmann::json j;
  for (std::size_t i = 0; i < kOrders; ++i) {
    const std::string n = std::to_string(i + 1);
    j["a" + n] = gp.order[i].neck_radius * 100.0;
    j["l" + n] = gp.order[i].neck_length * 100.0;
    j["r" + n] = gp.order[i].cavity_radius * 100.0;
    j["h" + n] = gp.order[i].cavity_length * 100.0;
  }
  return j;
}

nlohmann::json to_json(const DesignResult& r) {
  nlohmann::json j{
      {"candidate_index", r.candidate_index},
      {"candidate",
       {{"height1_db", r.candidate.height1},
        {"half_width1_hz", r.candidate.half_width1},
        {"height2_db", r.candidate.height2},
        {"half_width2_hz", r.candidate.half_width2}}},
      {"predicted_eep", eep_json(r.predicted)},
      {"gp_cm", gp_to_json_cm(r.gp)},
      {"recomputed_eep", eep_json(r.recomputed)},
      {"projected", {r.projected[0], r.projected[1]}},
      {"in_range", r.in_range},
      {"stl_at_f1_db", r.stl_at_f1},
      {"stl_at_f2_db", r.stl_at_f2},
      {"feasible", r.feasible},
  };
  if (r.realized) {
    j["realized"] = {{"f1_hz", r.realized->first.frequency},
                     {"f2_hz", r.realized->second.frequency},
                     {"stl_f1_db", r.realized->first.stl},
                     {"stl_f2_db", r.realized->second.stl}};
    j["aerf_hz"] = r.aerf;
  } else {
    j["realized"] = nullptr;
    j["aerf_hz"] = nullptr;
  }
  return j;
}

}  // namespace hrd::design
