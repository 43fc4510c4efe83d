#include "hrd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hrd/parallel.hpp"
#include "hrd/text_io.hpp"

namespace hrd::data {

namespace {

constexpr double kCm = 0.01;
constexpr std::size_t kBlock = 2048;

const char* kGpColumns[] = {"a1_cm", "l1_cm", "h1_cm", "a2_cm", "l2_cm", "h2_cm"};
const char* kEepColumns[] = {"R1", "M1", "C1", "R2", "M2", "C2"};

double draw(std::mt19937_64& rng, const Range& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

void BinSpec::validate() const {
  if (!(band_width > 0.0)) throw DomainError("band width must be positive");
  if (!(band.hi > band.lo)) throw DomainError("band range must be non-empty");
  if (samples_per_group == 0) throw DomainError("samples_per_group must be positive");
  if (max_attempts_per_group == 0) throw DomainError("max_attempts_per_group must be positive");
}

std::size_t BinSpec::band_count() const {
  return static_cast<std::size_t>(std::ceil((band.hi - band.lo) / band_width - 1e-9));
}

std::optional<std::size_t> BinSpec::band_of(double f) const {
  if (!band.contains(f)) return std::nullopt;
  const auto k = static_cast<std::size_t>(std::floor((f - band.lo) / band_width));
  return std::min(k, band_count() - 1);
}

std::vector<Group> candidate_groups(const BinSpec& bins) {
  bins.validate();
  std::vector<Group> groups;
  const std::size_t n = bins.band_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) groups.push_back({i, j});
  }
  return groups;
}

nlohmann::json GeneratorConfig::to_json() const {
  return {
      {"band_width_hz", bins.band_width},
      {"band_lo_hz", bins.band.lo},
      {"band_hi_hz", bins.band.hi},
      {"samples_per_group", bins.samples_per_group},
      {"max_attempts_per_group", bins.max_attempts_per_group},
      {"neck_radius_m", {gp_ranges.neck_radius.lo, gp_ranges.neck_radius.hi}},
      {"neck_length_m", {gp_ranges.neck_length.lo, gp_ranges.neck_length.hi}},
      {"cavity_length_m", {gp_ranges.cavity_length.lo, gp_ranges.cavity_length.hi}},
      {"cavity_radius_m", gp_ranges.cavity_radius},
      {"resistance", {eep_ranges.resistance.lo, eep_ranges.resistance.hi}},
      {"inertance", {eep_ranges.inertance.lo, eep_ranges.inertance.hi}},
      {"compliance", {eep_ranges.compliance.lo, eep_ranges.compliance.hi}},
      {"air_density", constants.air_density},
      {"sound_speed", constants.sound_speed},
      {"air_viscosity", constants.air_viscosity},
      {"cross_section_m2", cross_section},
      {"grid", {{"start", grid.start}, {"step", grid.step}, {"count", grid.count}}},
      {"resonance_band_hz", {band.lo, band.hi}},
      {"threshold_db", threshold_db},
      {"target_total", target_total},
      {"seed", seed},
  };
}

std::string to_string(Rejection r) {
  switch (r) {
    case Rejection::accepted: return "accepted";
    case Rejection::eep_out_of_range: return "eep-out-of-range";
    case Rejection::resonance_out_of_band: return "resonance-out-of-band";
    case Rejection::stl_below_threshold: return "stl-below-threshold";
  }
  return "unknown";
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GeometricParams sample_gp(std::mt19937_64& rng, const GeometryRanges& ranges) {
  GeometricParams gp;
  for (auto& g : gp.order) {
    g.neck_radius = draw(rng, ranges.neck_radius);
    g.neck_length = draw(rng, ranges.neck_length);
    g.cavity_length = draw(rng, ranges.cavity_length);
    g.cavity_radius = ranges.cavity_radius;
  }
  return gp;
}

Candidate evaluate_candidate(const GeometricParams& gp, const GeneratorConfig& config) {
  Candidate c;
  c.gp = gp;
  c.eep = gp_to_eep(gp, config.constants);
  if (config.eep_ranges.contains(c.eep)) {
    c.resonances = find_resonances(c.eep, config.cross_section, config.constants, config.band);
  }
  return c;
}

Rejection filter_sample(const Candidate& candidate, const CircuitRanges& ranges, double threshold_db) {
  if (!ranges.contains(candidate.eep)) return Rejection::eep_out_of_range;
  if (!candidate.resonances) return Rejection::resonance_out_of_band;
  if (!(candidate.resonances->first.stl > threshold_db) ||
      !(candidate.resonances->second.stl > threshold_db)) {
    return Rejection::stl_below_threshold;
  }
  return Rejection::accepted;
}

std::size_t GenerationReport::feasible_groups() const {
  return static_cast<std::size_t>(
      std::count_if(groups.begin(), groups.end(), [](const GroupFill& g) { return !g.infeasible; }));
}

nlohmann::json GenerationReport::to_json() const {
  nlohmann::json g = nlohmann::json::array();
  std::vector<nlohmann::json> infeasible;
  for (const auto& fill : groups) {
    g.push_back({{"first_band", fill.group.first_band},
                 {"second_band", fill.group.second_band},
                 {"count", fill.count},
                 {"filled", fill.filled},
                 {"infeasible", fill.infeasible}});
    if (fill.infeasible) infeasible.push_back({fill.group.first_band, fill.group.second_band});
  }
  return {{"draws", draws},
          {"accepted", accepted},
          {"rejections", rejections},
          {"groups", g},
          {"feasible_groups", feasible_groups()},
          {"infeasible_groups", infeasible}};
}

std::optional<std::size_t> group_of(const Sample& s, const BinSpec& bins) {
  const auto b1 = bins.band_of(s.f1);
  const auto b2 = bins.band_of(s.f2);
  if (!b1 || !b2 || *b1 >= *b2) return std::nullopt;
  // Index into candidate_groups(): row-major over the upper triangle.
  const std::size_t n = bins.band_count();
  std::size_t index = 0;
  for (std::size_t i = 0; i < *b1; ++i) index += n - 1 - i;
  return index + (*b2 - *b1 - 1);
}

Dataset generate_dataset(const GeneratorConfig& config, GenerationReport* report) {
  config.constants.validate();
  config.grid.validate();
  const auto groups = candidate_groups(config.bins);
  if (groups.empty()) throw DomainError("binning yields zero candidate groups");

  const std::uint64_t budget =
      static_cast<std::uint64_t>(config.bins.max_attempts_per_group) * groups.size();
  const std::size_t cap = config.bins.samples_per_group;

  struct Accepted {
    std::size_t group;
    std::uint64_t counter;
    Candidate candidate;
  };
  std::vector<Accepted> accepted;
  std::vector<std::size_t> fill(groups.size(), 0);
  std::size_t full_groups = 0;
  GenerationReport rep;
  for (auto r : {Rejection::eep_out_of_range, Rejection::resonance_out_of_band,
                 Rejection::stl_below_threshold}) {
    rep.rejections[to_string(r)] = 0;
  }
  rep.rejections["ungrouped"] = 0;
  rep.rejections["group-full"] = 0;

  auto done = [&] {
    return full_groups == groups.size() ||
           (config.target_total > 0 && accepted.size() >= config.target_total);
  };

  std::uint64_t counter = 0;
  std::vector<Candidate> block;
  while (counter < budget && !done()) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kBlock, budget - counter));
    block.assign(n, Candidate{});
    const std::uint64_t base = counter;
    parallel_for(n, config.threads, [&](std::size_t i) {
      std::mt19937_64 rng(stream_seed(config.seed, base + i));
      block[i] = evaluate_candidate(sample_gp(rng, config.gp_ranges), config);
    });

    for (std::size_t i = 0; i < n && !done(); ++i) {
      ++rep.draws;
      ++counter;
      const Rejection why = filter_sample(block[i], config.eep_ranges, config.threshold_db);
      if (why != Rejection::accepted) {
        ++rep.rejections[to_string(why)];
        continue;
      }
      Sample probe;
      probe.f1 = block[i].resonances->first.frequency;
      probe.f2 = block[i].resonances->second.frequency;
      const auto g = group_of(probe, config.bins);
      if (!g) {
        ++rep.rejections["ungrouped"];
        continue;
      }
      if (fill[*g] >= cap) {
        ++rep.rejections["group-full"];
        continue;
      }
      if (++fill[*g] == cap) ++full_groups;
      accepted.push_back({*g, base + i, std::move(block[i])});
    }
  }

  std::stable_sort(accepted.begin(), accepted.end(), [](const Accepted& a, const Accepted& b) {
    return a.group != b.group ? a.group < b.group : a.counter < b.counter;
  });

  Dataset ds;
  ds.grid = config.grid;
  ds.samples.resize(accepted.size());
  parallel_for(accepted.size(), config.threads, [&](std::size_t i) {
    const Candidate& c = accepted[i].candidate;
    Sample& s = ds.samples[i];
    s.gp = c.gp;
    s.eep = c.eep;
    s.spectrum = stl_spectrum(c.eep, config.cross_section, config.constants, config.grid);
    s.f1 = c.resonances->first.frequency;
    s.f2 = c.resonances->second.frequency;
    s.stl_f1 = c.resonances->first.stl;
    s.stl_f2 = c.resonances->second.stl;
  });

  rep.accepted = accepted.size();
  for (std::size_t k = 0; k < groups.size(); ++k) {
    rep.groups.push_back({groups[k], fill[k], fill[k] >= cap, fill[k] == 0});
  }
  if (rep.feasible_groups() == 0) throw GenerationError("no group received any accepted sample");
  if (report) *report = std::move(rep);
  return ds;
}

// ---------------------------------------------------------------------------
// CSV persistence

std::string dataset_to_csv(const Dataset& dataset) {
  std::string out;
  out.reserve(dataset.samples.size() * (dataset.grid.count + 16) * 20 + 4096);
  out += "#hrd-dataset,version=" + std::to_string(kDatasetFormatVersion) +
         ",grid_start=" + format_double(dataset.grid.start) +
         ",grid_step=" + format_double(dataset.grid.step) +
         ",grid_count=" + std::to_string(dataset.grid.count) + "\n";
  for (const char* c : kGpColumns) (out += c) += ',';
  for (const char* c : kEepColumns) (out += c) += ',';
  out += "f1_hz,f2_hz,stl_f1_db,stl_f2_db";
  for (std::size_t i = 0; i < dataset.grid.count; ++i) {
    out += ",t_" + format_double(dataset.grid.frequency(i));
  }
  out += '\n';

  for (const auto& s : dataset.samples) {
    const std::array<double, 6> gp_cm{s.gp.order[0].neck_radius / kCm, s.gp.order[0].neck_length / kCm,
                                      s.gp.order[0].cavity_length / kCm, s.gp.order[1].neck_radius / kCm,
                                      s.gp.order[1].neck_length / kCm, s.gp.order[1].cavity_length / kCm};
    for (double v : gp_cm) (out += format_double(v)) += ',';
    for (double v : s.eep.flat()) (out += format_double(v)) += ',';
    out += format_double(s.f1) + ',' + format_double(s.f2) + ',' + format_double(s.stl_f1) + ',' +
           format_double(s.stl_f2);
    for (double v : s.spectrum.values) (out += ',') += format_double(v);
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, dataset_to_csv(dataset));
}

Dataset read_dataset(const std::filesystem::path& path, double cavity_radius) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  const std::string source = path.string();

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("#hrd-dataset", 0) != 0) {
    throw ParseError(source, line_no, "missing dataset version header");
  }
  Dataset ds;
  int version = -1;
  for (auto field : split(line, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    if (key == "version") version = static_cast<int>(parse_double(value, source, line_no));
    else if (key == "grid_start") ds.grid.start = parse_double(value, source, line_no);
    else if (key == "grid_step") ds.grid.step = parse_double(value, source, line_no);
    else if (key == "grid_count") ds.grid.count = static_cast<std::size_t>(parse_double(value, source, line_no));
  }
  if (version != kDatasetFormatVersion) {
    throw ParseError(source, line_no, "unsupported dataset version " + std::to_string(version));
  }
  ds.grid.validate();

  ++line_no;
  if (!std::getline(in, line)) throw ParseError(source, line_no, "missing column header");
  const std::size_t columns = 16 + ds.grid.count;
  if (split(line, ',').size() != columns) {
    throw ParseError(source, line_no, "expected " + std::to_string(columns) + " columns");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != columns) {
      throw ParseError(source, line_no, "expected " + std::to_string(columns) + " columns, got " +
                                            std::to_string(cells.size()));
    }
    Sample s;
    std::array<double, 6> v{};
    for (std::size_t k = 0; k < 6; ++k) v[k] = parse_double(cells[k], source, line_no) * kCm;
    for (std::size_t i = 0; i < kOrders; ++i) {
      s.gp.order[i] = {v[3 * i], v[3 * i + 1], cavity_radius, v[3 * i + 2]};
    }
    for (std::size_t k = 0; k < 6; ++k) v[k] = parse_double(cells[6 + k], source, line_no);
    s.eep = EquivalentElectricalParams::from_flat(v);
    s.f1 = parse_double(cells[12], source, line_no);
    s.f2 = parse_double(cells[13], source, line_no);
    s.stl_f1 = parse_double(cells[14], source, line_no);
    s.stl_f2 = parse_double(cells[15], source, line_no);
    s.spectrum.grid = ds.grid;
    s.spectrum.values.resize(ds.grid.count);
    for (std::size_t k = 0; k < ds.grid.count; ++k) {
      s.spectrum.values[k] = parse_double(cells[16 + k], source, line_no);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset concat(const std::vector<Dataset>& parts) {
  if (parts.empty()) return {};
  Dataset out;
  out.grid = parts.front().grid;
  for (const auto& p : parts) {
    if (!(p.grid == out.grid)) throw DomainError("cannot concatenate datasets on different grids");
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

void DatasetSplit::validate() const {
  if (train < 0.0 || validation < 0.0 || test < 0.0 ||
      std::abs(train + validation + test - 1.0) > 1e-9) {
    throw DomainError("split fractions must be non-negative and sum to 1");
  }
}

SplitParts split_dataset(const Dataset& dataset, const DatasetSplit& split) {
  split.validate();
  if (dataset.empty()) throw DomainError("cannot split an empty dataset");
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(split.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_val = static_cast<std::size_t>(std::floor(split.validation * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(split.test * static_cast<double>(n) + 1e-9));
  const std::size_t n_train = n - n_val - n_test;

  SplitParts parts;
  for (Dataset* d : {&parts.train, &parts.validation, &parts.test}) d->grid = dataset.grid;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& dst = i < n_train ? parts.train : (i < n_train + n_val ? parts.validation : parts.test);
    dst.samples.push_back(dataset.samples[order[i]]);
  }
  return parts;
}

NormalizationStats compute_normalization(const Dataset& train, const CircuitRanges& ranges) {
  if (train.empty()) throw DomainError("normalization needs a non-empty training part");
  const std::size_t width = train.grid.count;
  NormalizationStats stats;
  stats.input_mean.assign(width, 0.0);
  stats.input_std.assign(width, 0.0);
  const double n = static_cast<double>(train.size());
  for (const auto& s : train.samples) {
    for (std::size_t k = 0; k < width; ++k) stats.input_mean[k] += s.spectrum.values[k];
  }
  for (auto& m : stats.input_mean) m /= n;
  for (const auto& s : train.samples) {
    for (std::size_t k = 0; k < width; ++k) {
      const double d = s.spectrum.values[k] - stats.input_mean[k];
      stats.input_std[k] += d * d;
    }
  }
  for (auto& sd : stats.input_std) sd = std::max(std::sqrt(sd / n), NormalizationStats::kMinStd);
  for (std::size_t k = 0; k < 6; ++k) stats.output[k] = ranges.flat_range(k);
  return stats;
}

}  // namespace hrd::data
