// hrd: command-line front end for the THR design pipeline.
//
// Geometry crosses this boundary in centimetres; everything else is SI, Hz
// and dB. Every command writes a JSON report carrying the resolved
// configuration and the tool version next to its data files.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hrd/acoustics.hpp"
#include "hrd/checks.hpp"
#include "hrd/dataset.hpp"
#include "hrd/design.hpp"
#include "hrd/ga.hpp"
#include "hrd/model_io.hpp"
#include "hrd/nn.hpp"
#include "hrd/text_io.hpp"
#include "hrd/tmm.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kCheckFailure = 3 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string constants_file;
  std::string output_dir = ".";
  std::string format = "csv";
  unsigned threads = 1;
};

struct GridOptions {
  double start = 101.0;
  double step = 1.0;
  std::size_t count = 500;

  hrd::SpectrumGrid grid() const { return {start, step, count}; }
};

void add_grid_options(CLI::App* cmd, GridOptions& g) {
  cmd->add_option("--grid-start", g.start, "First frequency of the output grid (Hz)")->capture_default_str();
  cmd->add_option("--grid-step", g.step, "Grid spacing (Hz)")->capture_default_str();
  cmd->add_option("--grid-count", g.count, "Number of grid points")->capture_default_str();
}

json grid_json(const hrd::SpectrumGrid& g) { return {{"start_hz", g.start}, {"step_hz", g.step}, {"count", g.count}}; }

hrd::PhysicalConstants load_constants(const std::string& path) {
  hrd::PhysicalConstants pc;
  if (path.empty()) return pc;
  std::istringstream in(hrd::read_file(path));
  for (const auto& d : hrd::read_directives(in, path)) {
    if (!d.head.empty()) throw hrd::ParseError(path, d.line, "expected 'key = value'");
    const auto& [key, value] = *d.fields.begin();
    const double v = hrd::parse_double(value, path, d.line);
    if (key == "air_density") pc.air_density = v;
    else if (key == "sound_speed") pc.sound_speed = v;
    else if (key == "air_viscosity") pc.air_viscosity = v;
    else if (key == "end_correction_1") pc.end_correction_factor[0] = v;
    else if (key == "end_correction_2") pc.end_correction_factor[1] = v;
    else throw hrd::ParseError(path, d.line, "unknown constant '" + key + "'");
  }
  pc.validate();
  return pc;
}

json constants_json(const hrd::PhysicalConstants& pc) {
  return {{"air_density", pc.air_density},
          {"sound_speed", pc.sound_speed},
          {"air_viscosity", pc.air_viscosity},
          {"end_correction", pc.end_correction_factor}};
}

json globals_json(const Globals& g, const hrd::PhysicalConstants& pc) {
  return {{"seed", g.seed},       {"constants_file", g.constants_file}, {"output_dir", g.output_dir},
          {"format", g.format},   {"threads", g.threads},               {"constants", constants_json(pc)}};
}

json report_head(const std::string& command, const json& config) {
  return {{"tool", "hrd"}, {"version", HRD_VERSION}, {"command", command}, {"config", config}};
}

json eep_json(const hrd::EquivalentElectricalParams& e) {
  const auto v = e.flat();
  return {{"R1", v[0]}, {"M1", v[1]}, {"C1", v[2]}, {"R2", v[3]}, {"M2", v[4]}, {"C2", v[5]}};
}

json resonances_json(const std::optional<hrd::ResonanceReport>& rep) {
  if (!rep) return nullptr;
  return {{"f1_hz", rep->first.frequency},
          {"f2_hz", rep->second.frequency},
          {"stl_f1_db", rep->first.stl},
          {"stl_f2_db", rep->second.stl}};
}

// A column-oriented numeric table written as CSV or JSON with the same values.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out += ",";
        out += hrd::format_double(r[c]);
      }
      out += "\n";
    }
    return out;
  }

  json to_json() const {
    json j = json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      std::vector<double> col;
      col.reserve(rows.size());
      for (const auto& r : rows) col.push_back(r[c]);
      j[columns[c]] = col;
    }
    return {{"columns", columns}, {"data", j}};
  }
};

class Output {
 public:
  explicit Output(const Globals& g) : dir_(g.output_dir), format_(g.format) { fs::create_directories(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path table(const std::string& stem, const Table& t) const {
    const fs::path p = dir_ / (stem + "." + format_);
    hrd::write_file(p, format_ == "csv" ? t.csv() : t.to_json().dump(2) + "\n");
    return p;
  }

  void json_file(const std::string& name, const json& j) const { hrd::write_file(dir_ / name, j.dump(2) + "\n"); }
  void text(const std::string& name, const std::string& s) const { hrd::write_file(dir_ / name, s); }

 private:
  fs::path dir_;
  std::string format_;
};

Table spectrum_table(const hrd::StlSpectrum& s) {
  Table t{{"frequency_hz", "stl_db"}, {}};
  for (std::size_t i = 0; i < s.values.size(); ++i) t.rows.push_back({s.grid.frequency(i), s.values[i]});
  return t;
}

std::vector<double> parse_list(const std::string& text, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  for (auto part : hrd::split(text, ',')) out.push_back(hrd::parse_double(hrd::trim(part), what, 1));
  if (out.size() != expected) {
    throw UsageError(what + " needs " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

std::string branch_line(const hrd::GeometricParams& gp) {
  std::string s = "branch_gp";
  for (std::size_t i = 0; i < hrd::kOrders; ++i) {
    const std::string n = std::to_string(i + 1);
    const auto& o = gp.order[i];
    s += " a" + n + "=" + hrd::format_double(o.neck_radius * 100.0);
    s += " l" + n + "=" + hrd::format_double(o.neck_length * 100.0);
    s += " h" + n + "=" + hrd::format_double(o.cavity_length * 100.0);
    s += " r" + n + "=" + hrd::format_double(o.cavity_radius * 100.0);
  }
  return s + "\n";
}

// ---------------------------------------------------------------------------
// stl

struct StlOptions {
  std::string gp_cm;
  std::string eep;
  std::string input;
  double cavity_radius_cm = 5.0;
  double cross_section = 0.01;
  GridOptions grid;
};

int run_stl(const Globals& g, const StlOptions& o) {
  const auto pc = load_constants(g.constants_file);
  const int given = !o.gp_cm.empty() + !o.eep.empty() + !o.input.empty();
  if (given != 1) throw UsageError("give exactly one of --gp, --eep or --input");

  hrd::EquivalentElectricalParams eep;
  std::optional<hrd::GeometricParams> gp;
  double cross_section = o.cross_section;
  if (!o.gp_cm.empty()) {
    const auto v = parse_list(o.gp_cm, 6, "--gp");
    hrd::GeometricParams p;
    for (std::size_t i = 0; i < hrd::kOrders; ++i) {
      p.order[i] = {v[3 * i] / 100.0, v[3 * i + 1] / 100.0, o.cavity_radius_cm / 100.0, v[3 * i + 2] / 100.0};
    }
    eep = hrd::gp_to_eep(p, pc);
    gp = p;
  } else if (!o.eep.empty()) {
    eep = hrd::EquivalentElectricalParams::from_flat([&] {
      const auto v = parse_list(o.eep, 6, "--eep");
      std::array<double, 6> a{};
      std::copy(v.begin(), v.end(), a.begin());
      return a;
    }());
    if (!eep.all_positive()) throw hrd::DomainError("equivalent electrical parameters must be positive");
  } else {
    const auto net = hrd::tmm::load_network(o.input, pc);
    std::size_t branches = 0;
    for (const auto& e : net.elements) {
      if (const auto* b = std::get_if<hrd::tmm::SideBranch>(&e)) {
        eep = b->eep;
        ++branches;
      }
    }
    if (branches != 1) throw hrd::ParseError(o.input, 0, "expected exactly one side branch, found " + std::to_string(branches));
    cross_section = net.cross_section;
  }

  const auto grid = o.grid.grid();
  const auto spectrum = hrd::stl_spectrum(eep, cross_section, pc, grid);
  const auto res = hrd::find_resonances(eep, cross_section, pc);

  Output out(g);
  const auto data_path = out.table("stl_spectrum", spectrum_table(spectrum));
  json cfg = globals_json(g, pc);
  cfg["gp_cm"] = o.gp_cm;
  cfg["eep"] = o.eep;
  cfg["input"] = o.input;
  cfg["cavity_radius_cm"] = o.cavity_radius_cm;
  cfg["cross_section"] = cross_section;
  cfg["grid"] = grid_json(grid);
  json rep = report_head("stl", cfg);
  rep["eep"] = eep_json(eep);
  rep["gp_cm"] = gp ? hrd::design::gp_to_json_cm(*gp) : json(nullptr);
  rep["resonances"] = resonances_json(res);
  if (!res) rep["resonance_note"] = "fewer than two resonances in [101, 600] Hz";
  rep["spectrum_file"] = data_path.filename().string();
  out.json_file("stl_report.json", rep);
  if (res) {
    std::cout << "resonances: " << hrd::format_double(res->first.frequency) << " Hz ("
              << hrd::format_double(res->first.stl) << " dB), " << hrd::format_double(res->second.frequency)
              << " Hz (" << hrd::format_double(res->second.stl) << " dB)\n";
  } else {
    std::cout << "resonances: fewer than two in band\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenOptions {
  std::string preset = "desk";
  std::optional<std::size_t> samples_per_group;
  std::optional<std::size_t> max_attempts_per_group;
  std::size_t target_total = 0;
  double band_width = 50.0;
  double threshold_db = 10.0;
  double cross_section = 0.01;
};

int run_gen_data(const Globals& g, const GenOptions& o) {
  hrd::data::GeneratorConfig cfg;
  cfg.constants = load_constants(g.constants_file);
  if (o.preset == "desk") {
    cfg.bins.samples_per_group = 1000;
    cfg.bins.max_attempts_per_group = 10000;
  } else if (o.preset == "paper") {
    cfg.bins.samples_per_group = 5000;
    cfg.bins.max_attempts_per_group = 200000;
  } else {
    throw UsageError("unknown preset '" + o.preset + "'");
  }
  if (o.samples_per_group) cfg.bins.samples_per_group = *o.samples_per_group;
  if (o.max_attempts_per_group) cfg.bins.max_attempts_per_group = *o.max_attempts_per_group;
  cfg.bins.band_width = o.band_width;
  cfg.target_total = o.target_total;
  cfg.threshold_db = o.threshold_db;
  cfg.cross_section = o.cross_section;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.bins.validate();

  hrd::data::GenerationReport report;
  const auto ds = hrd::data::generate_dataset(cfg, &report);
  Output out(g);
  hrd::data::write_dataset(ds, out.path("dataset.csv"));
  json c = globals_json(g, cfg.constants);
  c["preset"] = o.preset;
  c["generator"] = cfg.to_json();
  json rep = report_head("gen-data", c);
  rep["generation"] = report.to_json();
  rep["samples"] = ds.size();
  rep["dataset_file"] = "dataset.csv";
  out.json_file("gen_report.json", rep);
  std::cout << "generated " << ds.size() << " samples in " << report.feasible_groups() << " groups from "
            << report.draws << " draws\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::vector<std::string> data;
  bool resume = false;
  std::size_t max_epochs = 500;
  std::size_t batch_size = 256;
  std::size_t patience = 20;
  double learning_rate = 0.001;
  double validation = 0.1;
  double test = 0.1;
  double dropout = 0.1;
  std::vector<std::size_t> hidden{450, 250, 220};
  double cavity_radius_cm = 5.0;
};

int run_train(const Globals& g, const TrainOptions& o) {
  if (o.resume) {
    throw UsageError("resuming is not supported: training keeps no checkpoints, rerun from the start");
  }
  if (o.data.empty()) throw UsageError("at least one --data file is required");
  std::vector<hrd::data::Dataset> parts;
  for (const auto& p : o.data) parts.push_back(hrd::data::read_dataset(p, o.cavity_radius_cm / 100.0));
  const auto all = hrd::data::concat(parts);

  hrd::data::DatasetSplit split;
  split.validation = o.validation;
  split.test = o.test;
  split.train = 1.0 - o.validation - o.test;
  split.seed = hrd::data::stream_seed(g.seed, 1);
  const auto sp = hrd::data::split_dataset(all, split);

  const hrd::CircuitRanges ranges;
  const auto stats = hrd::data::compute_normalization(sp.train, ranges);
  hrd::nn::Architecture arch;
  arch.input_width = all.grid.count;
  arch.hidden = o.hidden;
  arch.dropout = o.dropout;
  auto model = hrd::nn::MLPModel::create(arch, hrd::data::stream_seed(g.seed, 2));
  model.normalization = stats;
  model.grid = all.grid;

  hrd::nn::TrainConfig tc;
  tc.batch_size = o.batch_size;
  tc.max_epochs = o.max_epochs;
  tc.patience = o.patience;
  tc.adam.learning_rate = o.learning_rate;
  tc.seed = hrd::data::stream_seed(g.seed, 3);
  const auto tr = hrd::nn::make_tensors(sp.train, stats);
  const auto va = hrd::nn::make_tensors(sp.validation, stats);
  const auto result = hrd::nn::fit(model, tr.x, tr.y, va.x, va.y, tc);
  double test_mse = std::nan("");
  if (!sp.test.empty()) {
    const auto te = hrd::nn::make_tensors(sp.test, stats);
    test_mse = hrd::nn::evaluate_mse(model, te.x, te.y);
  }

  json c = globals_json(g, load_constants(g.constants_file));
  c["data"] = o.data;
  c["max_epochs"] = o.max_epochs;
  c["batch_size"] = o.batch_size;
  c["patience"] = o.patience;
  c["learning_rate"] = o.learning_rate;
  c["split"] = {{"train", split.train}, {"validation", split.validation}, {"test", split.test}};
  c["hidden"] = o.hidden;
  c["dropout"] = o.dropout;
  c["cavity_radius_cm"] = o.cavity_radius_cm;

  Output out(g);
  hrd::nn::save_model(model, out.path("model.hrdm"), {{"tool", "hrd"}, {"version", HRD_VERSION}, {"config", c}});
  if (!sp.test.empty()) hrd::data::write_dataset(sp.test, out.path("test_set.csv"));
  Table curve{{"epoch", "train_mse", "val_mse"}, {}};
  for (const auto& e : result.curve) curve.rows.push_back({static_cast<double>(e.epoch), e.train_mse, e.val_mse});
  out.table("learning_curve", curve);

  json rep = report_head("train", c);
  rep["samples"] = {{"train", sp.train.size()}, {"validation", sp.validation.size()}, {"test", sp.test.size()}};
  rep["epochs_run"] = result.curve.size() - 1;
  rep["best_epoch"] = result.best_epoch;
  rep["best_val_mse"] = result.best_val_mse;
  rep["test_mse"] = std::isfinite(test_mse) ? json(test_mse) : json(nullptr);
  rep["parameters"] = model.parameter_count();
  rep["model_file"] = "model.hrdm";
  rep["test_set_file"] = sp.test.empty() ? json(nullptr) : json("test_set.csv");
  out.json_file("train_report.json", rep);
  std::cout << "trained " << result.curve.size() - 1 << " epochs, best val MSE "
            << hrd::format_double(result.best_val_mse) << " at epoch " << result.best_epoch << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// design

struct DesignOptionsCli {
  std::string model;
  double f1 = 150.0;
  double f2 = 250.0;
  double threshold_db = 10.0;
  std::size_t candidates = 100;
  std::size_t sensitivity_size = 21;
  double sensitivity_span = 0.1;
  double cross_section = 0.01;
  double cavity_radius_cm = 5.0;
  std::string fold = "project";
};

Table ranked_table(const std::vector<hrd::design::DesignResult>& ranked) {
  Table t{{"rank", "candidate_index", "tier", "aerf_hz", "f1_hz", "f2_hz", "stl_at_f1_db", "stl_at_f2_db",
           "a1_cm", "l1_cm", "h1_cm", "a2_cm", "l2_cm", "h2_cm"},
          {}};
  const double nan = std::nan("");
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const auto& r = ranked[k];
    std::vector<double> row{static_cast<double>(k + 1), static_cast<double>(r.candidate_index),
                            static_cast<double>(r.tier()), r.realized ? r.aerf : nan,
                            r.realized ? r.realized->first.frequency : nan,
                            r.realized ? r.realized->second.frequency : nan, r.stl_at_f1, r.stl_at_f2};
    for (const auto& o : r.gp.order) {
      row.push_back(o.neck_radius * 100.0);
      row.push_back(o.neck_length * 100.0);
      row.push_back(o.cavity_length * 100.0);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

int run_design(const Globals& g, const DesignOptionsCli& o) {
  hrd::design::DesignOptions opts;
  opts.constants = load_constants(g.constants_file);
  opts.candidates = o.candidates;
  opts.seed = g.seed;
  opts.cross_section = o.cross_section;
  opts.gp_ranges.cavity_radius = o.cavity_radius_cm / 100.0;
  opts.threads = g.threads;
  if (o.fold == "project") opts.inversion.fold = hrd::FoldPolicy::project;
  else if (o.fold == "reject") opts.inversion.fold = hrd::FoldPolicy::reject;
  else throw UsageError("--fold must be 'project' or 'reject'");
  const hrd::design::DesignTarget target{o.f1, o.f2, o.threshold_db};
  target.validate(opts.band);

  const auto model = hrd::nn::load_model(o.model);
  const auto outcome = hrd::design::design(target, model, opts);
  const auto& top = outcome.ranked.front();
  const auto map = hrd::design::sensitivity_map(top.gp, target, o.sensitivity_size, o.sensitivity_span, opts);

  Output out(g);
  out.table("design_ranked", ranked_table(outcome.ranked));
  out.table("design_spectrum",
            spectrum_table(hrd::stl_spectrum(top.recomputed, opts.cross_section, opts.constants, model.grid)));
  Table sens{{"a1_scale", "a2_scale", "aerf_hz", "valid"}, {}};
  for (std::size_t i = 0; i < map.size; ++i) {
    for (std::size_t j = 0; j < map.size; ++j) {
      const auto v = map.at(i, j);
      sens.rows.push_back({map.scale[i], map.scale[j], v ? *v : std::nan(""), v ? 1.0 : 0.0});
    }
  }
  out.table("sensitivity", sens);
  out.text("design_branch.txt", branch_line(top.gp));

  json c = globals_json(g, opts.constants);
  c["model"] = o.model;
  c["targets_hz"] = {o.f1, o.f2};
  c["threshold_db"] = o.threshold_db;
  c["candidates"] = o.candidates;
  c["sensitivity"] = {{"size", o.sensitivity_size}, {"span", o.sensitivity_span}};
  c["cross_section"] = o.cross_section;
  c["cavity_radius_cm"] = o.cavity_radius_cm;
  c["fold"] = o.fold;
  json rep = report_head("design", c);
  rep["top"] = hrd::design::to_json(top);
  json ranked = json::array();
  for (const auto& r : outcome.ranked) ranked.push_back(hrd::design::to_json(r));
  rep["ranked"] = ranked;
  json failures = json::array();
  for (const auto& f : outcome.failures) failures.push_back({{"candidate_index", f.candidate_index}, {"reason", f.reason}});
  rep["failures"] = failures;
  const auto centre = map.center();
  rep["sensitivity"] = {{"center_aerf_hz", centre ? json(*centre) : json(nullptr)},
                        {"center_rank_fraction", map.center_rank_fraction()},
                        {"center_in_lowest_decile", centre && map.center_rank_fraction() < 0.1}};
  out.json_file("design_report.json", rep);
  std::cout << "top design: aerf " << hrd::format_double(top.aerf) << " Hz, STL "
            << hrd::format_double(top.stl_at_f1) << " / " << hrd::format_double(top.stl_at_f2) << " dB\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// optimize

struct OptimizeOptions {
  double f1 = 150.0;
  double f2 = 250.0;
  double threshold_db = 10.0;
  double cross_section = 0.01;
  std::string model;
  std::size_t seed_elites = 0;
  std::size_t paired = 0;
  hrd::ga::GAConfig ga;
};

Table trace_table(const std::vector<hrd::ga::GenerationStats>& trace) {
  Table t{{"generation", "best_fitness", "best_j", "best_mean_target_stl_db", "feasible_fraction"}, {}};
  for (const auto& s : trace) {
    t.rows.push_back({static_cast<double>(s.generation), s.best_fitness, s.best_j, s.best_mean_target_stl,
                      s.feasible_fraction});
  }
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_optimize(const Globals& g, const OptimizeOptions& o) {
  const auto pc = load_constants(g.constants_file);
  const hrd::ga::ObjectiveSpec spec{o.f1, o.f2, o.threshold_db, o.cross_section};
  hrd::design::DesignTarget{o.f1, o.f2, o.threshold_db}.validate();
  const hrd::GeometryRanges ranges;
  if (o.seed_elites > 0 && o.model.empty()) throw UsageError("--seed-elites requires --model");
  if (o.paired > 0 && o.model.empty()) throw UsageError("--paired requires --model");

  std::optional<hrd::nn::MLPModel> model;
  if (!o.model.empty()) model = hrd::nn::load_model(o.model);

  hrd::ga::GAConfig base = o.ga;
  base.seed = g.seed;
  base.threads = g.threads;
  base.elite_seeds = o.seed_elites;
  base.validate();

  json c = globals_json(g, pc);
  c["targets_hz"] = {o.f1, o.f2};
  c["threshold_db"] = o.threshold_db;
  c["cross_section"] = o.cross_section;
  c["model"] = o.model;
  c["paired"] = o.paired;
  c["ga"] = base.to_json();
  Output out(g);

  hrd::design::DesignOptions eval;
  eval.constants = pc;
  eval.cross_section = o.cross_section;
  const hrd::design::DesignTarget target{o.f1, o.f2, o.threshold_db};

  if (o.paired == 0) {
    hrd::ga::InitReport init;
    auto pop = hrd::ga::init_population(base, spec, pc, ranges, model ? &*model : nullptr, &init);
    const auto res = hrd::ga::evolve(std::move(pop), base, spec, pc, ranges);
    out.table("ga_trace", trace_table(res.trace));
    json rep = report_head("optimize", c);
    rep["initial_population"] = {{"random", init.random}, {"surrogate_seeded", init.seeded}};
    rep["best"] = hrd::design::to_json(
        hrd::design::evaluate_geometry(hrd::ga::from_genome(res.best.genome, ranges.cavity_radius), target, eval));
    rep["best_objective"] = {{"j", res.best.fitness.j},
                             {"penalized", res.best.fitness.penalized},
                             {"mean_target_stl_db", res.best.fitness.mean_target_stl()}};
    out.json_file("ga_report.json", rep);
    std::cout << "best mean target STL " << hrd::format_double(res.best.fitness.mean_target_stl()) << " dB\n";
    return kOk;
  }

  const std::size_t elites = o.seed_elites > 0 ? o.seed_elites : 5;
  Table traces{{"pair", "seeded", "generation", "best_fitness", "best_j", "best_mean_target_stl_db",
                "feasible_fraction"},
               {}};
  std::vector<std::vector<double>> seeded_best(base.generations + 1), plain_best(base.generations + 1);
  json pairs = json::array();
  std::size_t wins = 0;
  for (std::size_t k = 0; k < o.paired; ++k) {
    std::array<double, 2> final_stl{};
    for (int arm = 0; arm < 2; ++arm) {
      hrd::ga::GAConfig cfg = base;
      cfg.seed = g.seed + k;
      cfg.elite_seeds = arm == 0 ? elites : 0;
      auto pop = hrd::ga::init_population(cfg, spec, pc, ranges, &*model);
      const auto res = hrd::ga::evolve(std::move(pop), cfg, spec, pc, ranges);
      for (const auto& s : res.trace) {
        traces.rows.push_back({static_cast<double>(k), arm == 0 ? 1.0 : 0.0, static_cast<double>(s.generation),
                               s.best_fitness, s.best_j, s.best_mean_target_stl, s.feasible_fraction});
        (arm == 0 ? seeded_best : plain_best)[s.generation].push_back(s.best_fitness);
      }
      final_stl[arm] = res.best.fitness.mean_target_stl();
    }
    if (final_stl[0] > final_stl[1]) ++wins;
    pairs.push_back({{"pair", k},
                     {"seed", g.seed + k},
                     {"seeded_final_mean_target_stl_db", final_stl[0]},
                     {"unseeded_final_mean_target_stl_db", final_stl[1]}});
  }

  json medians = json::array();
  bool dominates = true;
  for (std::size_t gen = 0; gen <= base.generations; ++gen) {
    const double ms = median(seeded_best[gen]);
    const double mu = median(plain_best[gen]);
    dominates = dominates && ms <= mu;
    medians.push_back({{"generation", gen}, {"seeded_median_best_fitness", ms}, {"unseeded_median_best_fitness", mu}});
  }
  out.table("ga_paired_traces", traces);
  c["ga"]["elite_seeds"] = elites;
  json rep = report_head("optimize", c);
  rep["pairs"] = pairs;
  rep["median_trace"] = medians;
  rep["seeded_dominates_every_generation"] = dominates;
  rep["seeded_final_wins"] = wins;
  out.json_file("ga_paired_summary.json", rep);
  std::cout << "seeded dominates in median: " << (dominates ? "yes" : "no") << ", seeded wins " << wins << " of "
            << o.paired << " pairs\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// tmm

struct TmmOptions {
  std::string network;
  double min_prominence_db = 3.0;
  GridOptions grid;
};

int run_tmm(const Globals& g, const TmmOptions& o) {
  const auto pc = load_constants(g.constants_file);
  const auto net = hrd::tmm::load_network(o.network, pc);
  const auto grid = o.grid.grid();
  const auto spectrum = hrd::tmm::network_spectrum(net, grid, pc, g.threads);
  const auto peaks = hrd::tmm::find_peaks(spectrum, o.min_prominence_db);

  Output out(g);
  out.table("tmm_spectrum", spectrum_table(spectrum));
  json c = globals_json(g, pc);
  c["network"] = o.network;
  c["cross_section"] = net.cross_section;
  c["grid"] = grid_json(grid);
  c["min_prominence_db"] = o.min_prominence_db;
  json rep = report_head("tmm", c);
  rep["elements"] = net.elements.size();
  json pk = json::array();
  for (const auto& p : peaks) pk.push_back({{"frequency_hz", p.frequency}, {"stl_db", p.stl}, {"prominence_db", p.prominence}});
  rep["peaks"] = pk;
  out.json_file("tmm_report.json", rep);
  std::cout << peaks.size() << " peaks:";
  for (const auto& p : peaks) std::cout << " " << hrd::format_double(p.frequency);
  std::cout << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// check

struct CheckOptions {
  std::string suite = "all";
  bool expect_fail = false;
  std::size_t samples = 0; // 0: suite default
};

int run_check(const Globals& g, const CheckOptions& o) {
  const auto pc = load_constants(g.constants_file);
  std::vector<hrd::checks::CheckResult> results;
  const bool all = o.suite == "all";
  if (!all && o.suite != "gradients" && o.suite != "roundtrip" && o.suite != "resonance") {
    throw UsageError("unknown check suite '" + o.suite + "'");
  }
  if (all || o.suite == "gradients") {
    hrd::checks::GradientCheckConfig cfg;
    cfg.seed = g.seed;
    cfg.inject_fault = o.expect_fail;
    if (o.samples) cfg.configurations = o.samples;
    results.push_back(hrd::checks::check_gradients(cfg));
  }
  if (all || o.suite == "roundtrip") {
    hrd::checks::RoundTripCheckConfig cfg;
    cfg.seed = g.seed;
    cfg.constants = pc;
    cfg.inject_fault = o.expect_fail;
    if (o.samples) cfg.samples = o.samples;
    results.push_back(hrd::checks::check_inversion_consistency(cfg));
    hrd::checks::ModelRoundTripConfig mc;
    mc.seed = g.seed;
    mc.inject_fault = o.expect_fail;
    results.push_back(hrd::checks::check_model_roundtrip(mc));
  }
  if (all || o.suite == "resonance") {
    hrd::data::GeneratorConfig gen;
    gen.seed = g.seed;
    gen.constants = pc;
    const auto samples = hrd::checks::draw_accepted_samples(gen, o.samples ? o.samples : 200);
    hrd::checks::ResonanceCheckConfig cfg;
    cfg.constants = pc;
    cfg.inject_fault = o.expect_fail;
    results.push_back(hrd::checks::check_resonances(samples, cfg));
  }

  bool ok = true;
  json list = json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases, " << r.failures
              << " failing) " << r.metrics.dump() << "\n";
    for (const auto& e : r.examples) std::cout << "  " << e << "\n";
    list.push_back(r.to_json());
  }
  json c = globals_json(g, pc);
  c["suite"] = o.suite;
  c["expect_fail"] = o.expect_fail;
  c["samples"] = o.samples;
  json rep = report_head("check", c);
  rep["results"] = list;
  rep["passed"] = ok;
  Output(g).json_file("check_report.json", rep);
  return ok ? kOk : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design and analysis of two-order Helmholtz resonators"};
  app.set_version_flag("--version", std::string("hrd ") + HRD_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags win");

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--constants-file", g.constants_file, "Physical constants (key = value lines)");
  app.add_option("--output-dir", g.output_dir, "Directory for output files")->capture_default_str();
  app.add_option("--format", g.format, "Table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();

  StlOptions stl;
  auto* c_stl = app.add_subcommand("stl", "STL spectrum and resonances of one THR");
  c_stl->add_option("--gp", stl.gp_cm, "Geometry a1,l1,h1,a2,l2,h2 in cm");
  c_stl->add_option("--eep", stl.eep, "Circuit R1,M1,C1,R2,M2,C2 (SI)");
  c_stl->add_option("--input", stl.input, "Branch description file (network syntax, one branch)");
  c_stl->add_option("--cavity-radius", stl.cavity_radius_cm, "Cavity radius for --gp (cm)")->capture_default_str();
  c_stl->add_option("--cross-section", stl.cross_section, "Duct cross-section (m^2)")->capture_default_str();
  add_grid_options(c_stl, stl.grid);

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a binned training dataset");
  c_gen->add_option("--preset", gen.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  c_gen->add_option("--samples-per-group", gen.samples_per_group, "Override the preset's per-group cap");
  c_gen->add_option("--max-attempts-per-group", gen.max_attempts_per_group, "Override the preset's draw budget per group");
  c_gen->add_option("--target-total", gen.target_total, "Stop after this many samples (0: no cap)")->capture_default_str();
  c_gen->add_option("--band-width", gen.band_width, "Frequency band width (Hz)")->capture_default_str();
  c_gen->add_option("--threshold", gen.threshold_db, "Minimum STL at both resonances (dB)")->capture_default_str();
  c_gen->add_option("--cross-section", gen.cross_section, "Duct cross-section (m^2)")->capture_default_str();

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train the spectrum-to-circuit surrogate");
  c_train->add_option("--data", train.data, "Dataset CSV file(s)")->required();
  c_train->add_flag("--resume", train.resume, "Not supported; training always starts fresh");
  c_train->add_option("--max-epochs", train.max_epochs, "Epoch limit")->capture_default_str();
  c_train->add_option("--batch-size", train.batch_size, "Mini-batch size")->capture_default_str();
  c_train->add_option("--patience", train.patience, "Early-stopping patience (epochs)")->capture_default_str();
  c_train->add_option("--learning-rate", train.learning_rate, "Adam learning rate")->capture_default_str();
  c_train->add_option("--validation-fraction", train.validation, "Validation share")->capture_default_str();
  c_train->add_option("--test-fraction", train.test, "Held-out test share")->capture_default_str();
  c_train->add_option("--dropout", train.dropout, "Dropout rate")->capture_default_str();
  c_train->add_option("--hidden", train.hidden, "Hidden layer widths")->capture_default_str();
  c_train->add_option("--cavity-radius", train.cavity_radius_cm, "Cavity radius of the dataset (cm)")->capture_default_str();

  DesignOptionsCli des;
  auto* c_des = app.add_subcommand("design", "Surrogate-driven inverse design for two target resonances");
  c_des->add_option("--model", des.model, "Trained model file")->required();
  c_des->add_option("--f1", des.f1, "First target resonance (Hz)")->capture_default_str();
  c_des->add_option("--f2", des.f2, "Second target resonance (Hz)")->capture_default_str();
  c_des->add_option("--threshold", des.threshold_db, "Minimum STL at both targets (dB)")->capture_default_str();
  c_des->add_option("--candidates", des.candidates, "Number of synthesized target spectra")->capture_default_str();
  c_des->add_option("--sensitivity-size", des.sensitivity_size, "Sensitivity grid size (odd)")->capture_default_str();
  c_des->add_option("--sensitivity-span", des.sensitivity_span, "Relative neck-radius span")->capture_default_str();
  c_des->add_option("--cross-section", des.cross_section, "Duct cross-section (m^2)")->capture_default_str();
  c_des->add_option("--cavity-radius", des.cavity_radius_cm, "Cavity radius (cm)")->capture_default_str();
  c_des->add_option("--fold", des.fold, "Unreachable inertance: project or reject")->capture_default_str();

  OptimizeOptions opt;
  auto* c_opt = app.add_subcommand("optimize", "Genetic-algorithm design, optionally seeded by the surrogate");
  c_opt->add_option("--f1", opt.f1, "First target frequency (Hz)")->capture_default_str();
  c_opt->add_option("--f2", opt.f2, "Second target frequency (Hz)")->capture_default_str();
  c_opt->add_option("--threshold", opt.threshold_db, "Minimum STL at both targets (dB)")->capture_default_str();
  c_opt->add_option("--cross-section", opt.cross_section, "Duct cross-section (m^2)")->capture_default_str();
  c_opt->add_option("--model", opt.model, "Trained model file (for surrogate seeding)");
  c_opt->add_option("--seed-elites", opt.seed_elites, "Surrogate-designed individuals in the initial population")
      ->capture_default_str();
  c_opt->add_option("--paired", opt.paired, "Run N seeded/unseeded pairs and summarize")->capture_default_str();
  c_opt->add_option("--population", opt.ga.population, "Population size")->capture_default_str();
  c_opt->add_option("--generations", opt.ga.generations, "Generations")->capture_default_str();
  c_opt->add_option("--tournament", opt.ga.tournament, "Tournament size")->capture_default_str();
  c_opt->add_option("--crossover-probability", opt.ga.crossover_probability, "Uniform crossover probability")
      ->capture_default_str();
  c_opt->add_option("--mutation-probability", opt.ga.mutation_probability, "Per-gene mutation probability")
      ->capture_default_str();
  c_opt->add_option("--mutation-scale", opt.ga.mutation_scale, "Mutation sigma as a fraction of the gene range")
      ->capture_default_str();
  c_opt->add_option("--elitism", opt.ga.elitism, "Individuals carried over unchanged")->capture_default_str();
  c_opt->add_option("--penalty-weight", opt.ga.penalty_weight, "Penalty per dB of shortfall")->capture_default_str();

  TmmOptions tmmo;
  auto* c_tmm = app.add_subcommand("tmm", "Transmission loss of a duct network");
  c_tmm->add_option("--network", tmmo.network, "Network description file")->required();
  c_tmm->add_option("--min-prominence", tmmo.min_prominence_db, "Peak prominence threshold (dB)")->capture_default_str();
  add_grid_options(c_tmm, tmmo.grid);

  CheckOptions chk;
  auto* c_chk = app.add_subcommand("check", "Run invariant suites");
  c_chk->add_option("suite", chk.suite, "gradients, roundtrip, resonance or all")->capture_default_str();
  c_chk->add_flag("--expect-fail", chk.expect_fail, "Inject a known fault; the suite must then fail (testing aid)");
  c_chk->add_option("--samples", chk.samples, "Override the number of cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (c_stl->parsed()) return run_stl(g, stl);
    if (c_gen->parsed()) return run_gen_data(g, gen);
    if (c_train->parsed()) return run_train(g, train);
    if (c_des->parsed()) return run_design(g, des);
    if (c_opt->parsed()) return run_optimize(g, opt);
    if (c_tmm->parsed()) return run_tmm(g, tmmo);
    if (c_chk->parsed()) return run_check(g, chk);
  } catch (const hrd::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const hrd::nn::ModelFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == hrd::nn::ModelFormatError::Kind::io ? kRuntime : kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}
