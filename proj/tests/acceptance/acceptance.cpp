// End-to-end acceptance runner. Criteria 5-9 drive the hrd executable through
// the full pipeline inside a work directory and inspect the files it writes;
// criteria 1-4 call the library directly.
//
//   hrd_acceptance --cli <hrd> --work <dir> setup        run the pipeline into <dir>/run1
//   hrd_acceptance --cli <hrd> --work <dir> c5           one criterion
//   hrd_acceptance --cli <hrd> --work <dir> all          setup + every criterion

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hrd/acoustics.hpp"
#include "hrd/checks.hpp"
#include "hrd/dataset.hpp"
#include "hrd/model_io.hpp"
#include "hrd/nn.hpp"
#include "hrd/text_io.hpp"
#include "hrd/tmm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  std::string cli;
  fs::path work;
  std::uint64_t seed = 1;
};

struct Verdict {
  bool passed = false;
  std::string detail;
};

constexpr double kCrossSection = 0.01;

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs hrd with cwd = dir; stdout/stderr go to a log outside the run tree.
void run_cli(const Context& ctx, const fs::path& dir, const std::string& args, const std::string& log_name) {
  fs::create_directories(ctx.work / "logs");
  const fs::path log = ctx.work / "logs" / (dir.filename().string() + "_" + log_name + ".log");
  const std::string cmd = "cd " + quote(dir.string()) + " && " + quote(ctx.cli) + " " + args + " > " +
                          quote(log.string()) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw std::runtime_error("'hrd " + args + "' failed (see " + log.string() + ")");
}

json read_json(const fs::path& p) { return json::parse(hrd::read_file(p)); }

// Minimal reader for the CLI's CSV tables: header row, then numbers.
std::map<std::string, std::vector<double>> read_table(const fs::path& p) {
  std::istringstream in(hrd::read_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> cols;
  for (auto c : hrd::split(line, ',')) cols.emplace_back(hrd::trim(c));
  std::map<std::string, std::vector<double>> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (hrd::trim(line).empty()) continue;
    auto fields = hrd::split(line, ',');
    if (fields.size() != cols.size()) throw std::runtime_error(p.string() + ": ragged row " + std::to_string(n));
    for (std::size_t k = 0; k < cols.size(); ++k) out[cols[k]].push_back(hrd::parse_double(fields[k], p.string(), n));
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Pipeline shared by the setup fixture and the determinism rerun.

struct HeldOut {
  std::size_t samples = 0;
  std::size_t realized = 0;
  double median_aerf = 0.0;
};

// Held-out evaluation: true spectrum -> predict -> eep_to_gp -> forward model.
HeldOut evaluate_held_out(const fs::path& run, bool write) {
  const hrd::PhysicalConstants pc;
  const hrd::GeometryRanges ranges;
  const auto model = hrd::nn::load_model(run / "model" / "model.hrdm");
  const auto test = hrd::data::read_dataset(run / "model" / "test_set.csv");

  std::string csv = "f1_hz,f2_hz,realized_f1_hz,realized_f2_hz,aerf_hz,projected\n";
  std::vector<double> errors;
  HeldOut h;
  for (const auto& s : test.samples) {
    const auto eep = hrd::nn::predict(model, s.spectrum);
    double r1 = std::numeric_limits<double>::quiet_NaN();
    double r2 = r1;
    double err = std::numeric_limits<double>::infinity();
    bool projected = false;
    try {
      const auto inv = hrd::invert_eep(eep, ranges, pc, {hrd::FoldPolicy::project, true});
      projected = inv.projected[0] || inv.projected[1];
      const auto res = hrd::find_resonances(hrd::gp_to_eep(inv.gp, pc), kCrossSection, pc);
      if (res) {
        r1 = res->first.frequency;
        r2 = res->second.frequency;
        err = hrd::aerf(r1, r2, s.f1, s.f2);
        ++h.realized;
      }
    } catch (const hrd::InversionError&) {
    }
    errors.push_back(err);
    csv += hrd::format_double(s.f1) + "," + hrd::format_double(s.f2) + "," + hrd::format_double(r1) + "," +
           hrd::format_double(r2) + "," + hrd::format_double(err) + "," + (projected ? "1" : "0") + "\n";
  }
  h.samples = test.size();
  h.median_aerf = median(errors);
  if (write) {
    fs::create_directories(run / "eval");
    hrd::write_file(run / "eval" / "held_out_aerf.csv", csv);
  }
  return h;
}

std::string branch_line(const fs::path& design_dir) {
  std::istringstream in(hrd::read_file(design_dir / "design_branch.txt"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("branch_gp", 0) == 0) return line;
  }
  throw std::runtime_error("no branch_gp line in " + (design_dir / "design_branch.txt").string());
}

void run_pipeline(const Context& ctx, const fs::path& run) {
  fs::remove_all(run);
  fs::create_directories(run);
  const std::string seed = "--seed " + std::to_string(ctx.seed);

  run_cli(ctx, run, seed + " --output-dir data gen-data --preset desk", "gen");
  run_cli(ctx, run, seed + " --output-dir model train --data data/dataset.csv", "train");
  run_cli(ctx, run, seed + " --output-dir design_150_250 design --model model/model.hrdm --f1 150 --f2 250", "d1");
  run_cli(ctx, run, seed + " --output-dir design_200_300 design --model model/model.hrdm --f1 200 --f2 300", "d2");
  run_cli(ctx, run,
          seed + " --output-dir ga optimize --f1 150 --f2 250 --model model/model.hrdm --paired 10 --seed-elites 5"
                 " --population 50 --generations 50",
          "ga");

  const std::string network = "cross_section = 0.01\n" + branch_line(run / "design_150_250") +
                              "\nsegment length=0.1\n" + branch_line(run / "design_200_300") + "\n";
  hrd::write_file(run / "af_network.txt", network);
  run_cli(ctx, run, seed + " --output-dir af tmm --network af_network.txt --grid-start 101 --grid-step 0.1"
                           " --grid-count 4991",
          "tmm");

  evaluate_held_out(run, true);
}

fs::path run1(const Context& ctx) {
  const fs::path r = ctx.work / "run1";
  if (!fs::exists(r / "af" / "tmm_spectrum.csv") || !fs::exists(r / "eval" / "held_out_aerf.csv")) {
    throw std::runtime_error("pipeline outputs missing in " + r.string() + "; run 'setup' first");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Criteria

Verdict c1(const Context& ctx) {
  hrd::checks::RoundTripCheckConfig cfg;
  cfg.samples = 10000;
  cfg.tolerance = 1e-9;
  cfg.seed = ctx.seed;
  const auto r = hrd::checks::check_geometry_recovery(cfg);
  return {r.passed, "recovered " + std::to_string(r.cases - r.failures) + "/" + std::to_string(r.cases) +
                        " geometries within 1e-9 relative"};
}

Verdict c2(const Context& ctx) {
  const auto ds = hrd::data::read_dataset(run1(ctx) / "data" / "dataset.csv");
  if (ds.size() < 1000) return {false, "dataset holds only " + std::to_string(ds.size()) + " samples"};
  const std::vector<hrd::data::Sample> first(ds.samples.begin(), ds.samples.begin() + 1000);
  hrd::checks::ResonanceCheckConfig cfg;
  const auto r = hrd::checks::check_resonances(first, cfg);
  return {r.passed, "located fraction " + fmt(r.metrics.value("located_fraction", 0.0)) + " (>= 0.99 within 0.1 Hz, worst offset " +
                        fmt(r.metrics.value("worst_location_offset_hz", 0.0)) + " Hz), " +
                        "worst specialization error " + fmt(r.metrics.value("worst_specialization_error_db", 0.0)) +
                        " dB (< 1e-6), n=1000"};
}

Verdict c3(const Context& ctx) {
  const hrd::PhysicalConstants pc;
  const hrd::CircuitRanges box;
  std::mt19937_64 rng(ctx.seed);
  const hrd::SpectrumGrid grid;
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    std::array<double, 6> v{};
    for (std::size_t k = 0; k < 6; ++k) {
      const auto r = box.flat_range(k);
      v[k] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    }
    const auto eep = hrd::EquivalentElectricalParams::from_flat(v);
    hrd::tmm::DuctNetwork net;
    net.cross_section = kCrossSection;
    net.elements.push_back(hrd::tmm::SideBranch{eep});
    const auto a = hrd::tmm::network_spectrum(net, grid, pc);
    const auto b = hrd::stl_spectrum(eep, kCrossSection, pc, grid);
    for (std::size_t i = 0; i < grid.count; ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  }
  return {worst < 1e-9, "max |TMM - lumped| " + fmt(worst) + " dB (< 1e-9) over 100 EEPs x 500 points"};
}

Verdict c4(const Context& ctx) {
  hrd::checks::GradientCheckConfig cfg;
  cfg.configurations = 100;
  cfg.tolerance = 1e-4;
  cfg.seed = ctx.seed;
  const auto r = hrd::checks::check_gradients(cfg);
  return {r.passed, std::to_string(r.cases - r.failures) + "/" + std::to_string(r.cases) +
                        " configurations within 1e-4 relative, worst " + fmt(r.metrics.value("worst_relative_error", 0.0))};
}

Verdict c5(const Context& ctx) {
  const auto run = run1(ctx);
  const auto train = read_json(run / "data" / "gen_report.json");
  const std::size_t generated = train.at("samples").get<std::size_t>();
  const auto h = evaluate_held_out(run, false);
  const double realized = h.samples ? static_cast<double>(h.realized) / static_cast<double>(h.samples) : 0.0;
  const bool ok = generated >= 20000 && h.samples >= 500 && h.median_aerf < 10.0 && realized >= 0.8;
  return {ok, "generated " + std::to_string(generated) + " (>= 20000), held-out " + std::to_string(h.samples) +
                  " (>= 500), median AERF " + fmt(h.median_aerf) + " Hz (< 10), realized " + fmt(realized) +
                  " (>= 0.8)"};
}

// Realized resonances of one branch from a dense TMM sweep, independent of
// the reactance-zero search used by the design tool.
std::vector<hrd::tmm::Peak> dense_peaks(const hrd::tmm::DuctNetwork& net, const hrd::PhysicalConstants& pc) {
  const hrd::SpectrumGrid fine{101.0, 0.01, 49901};
  return hrd::tmm::find_peaks(hrd::tmm::network_spectrum(net, fine, pc), 3.0);
}

Verdict c6(const Context& ctx) {
  const hrd::PhysicalConstants pc;
  const auto dir = run1(ctx) / "design_150_250";
  std::istringstream branch(branch_line(dir) + "\n");
  const auto net = hrd::tmm::parse_network(branch, pc);
  const auto peaks = dense_peaks(net, pc);
  const double t1 = hrd::tmm::stl_from_matrix(hrd::tmm::cascade(net, 150.0, pc), net.cross_section, pc);
  const double t2 = hrd::tmm::stl_from_matrix(hrd::tmm::cascade(net, 250.0, pc), net.cross_section, pc);
  double err = std::numeric_limits<double>::infinity();
  if (peaks.size() >= 2) err = hrd::aerf(peaks[0].frequency, peaks[1].frequency, 150.0, 250.0);

  const auto sens = read_table(dir / "sensitivity.csv");
  const auto& s1 = sens.at("a1_scale");
  const auto& s2 = sens.at("a2_scale");
  const auto& e = sens.at("aerf_hz");
  const auto& valid = sens.at("valid");
  double center = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (std::abs(s1[i] - 1.0) < 1e-12 && std::abs(s2[i] - 1.0) < 1e-12) center = e[i];
  }
  std::size_t cells = 0;
  std::size_t below = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (valid[i] == 0.0) continue;
    ++cells;
    if (e[i] < center) ++below;
  }
  const double rank = cells ? static_cast<double>(below) / static_cast<double>(cells) : 1.0;
  const bool ok = t1 > 10.0 && t2 > 10.0 && err < 5.0 && std::isfinite(center) && rank < 0.1;
  std::string realized = peaks.size() >= 2 ? fmt(peaks[0].frequency, 6) + "/" + fmt(peaks[1].frequency, 6) + " Hz"
                                            : std::to_string(peaks.size()) + " peaks";
  return {ok, "STL " + fmt(t1) + "/" + fmt(t2) + " dB at 150/250 Hz (> 10), realized " + realized + ", AERF " +
                  fmt(err) + " Hz (< 5), sensitivity rank fraction " + fmt(rank) + " (< 0.1)"};
}

Verdict c7(const Context& ctx) {
  const auto t = read_table(run1(ctx) / "ga" / "ga_paired_traces.csv");
  const auto& pair = t.at("pair");
  const auto& seeded = t.at("seeded");
  const auto& gen = t.at("generation");
  const auto& fit = t.at("best_fitness");
  const auto& stl = t.at("best_mean_target_stl_db");

  std::map<int, std::vector<double>> fs_seeded, fs_plain;
  std::map<int, std::pair<double, double>> final_stl; // pair -> (seeded, unseeded)
  std::map<int, int> last_gen;
  for (std::size_t i = 0; i < gen.size(); ++i) last_gen[static_cast<int>(pair[i])] =
      std::max(last_gen[static_cast<int>(pair[i])], static_cast<int>(gen[i]));
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const int g = static_cast<int>(gen[i]);
    const int p = static_cast<int>(pair[i]);
    (seeded[i] != 0.0 ? fs_seeded : fs_plain)[g].push_back(fit[i]);
    if (g == last_gen[p]) (seeded[i] != 0.0 ? final_stl[p].first : final_stl[p].second) = stl[i];
  }
  std::size_t dominated = 0;
  int first_violation = -1;
  for (const auto& [g, v] : fs_seeded) {
    if (median(v) <= median(fs_plain.at(g))) {
      ++dominated;
    } else if (first_violation < 0) {
      first_violation = g;
    }
  }
  std::size_t wins = 0;
  for (const auto& [p, s] : final_stl) wins += s.first > s.second;
  const std::size_t pairs = final_stl.size();
  const bool ok = pairs >= 10 && dominated == fs_seeded.size() && wins * 10 >= 8 * pairs;
  return {ok, "pairs " + std::to_string(pairs) + " (>= 10), median dominance at " + std::to_string(dominated) + "/" +
                  std::to_string(fs_seeded.size()) + " generations" +
                  (first_violation >= 0 ? " (first miss at generation " + std::to_string(first_violation) + ")" : "") +
                  ", seeded final wins " + std::to_string(wins) + "/" + std::to_string(pairs) + " (>= 8/10)"};
}

Verdict c8(const Context& ctx) {
  const auto spec = read_table(run1(ctx) / "af" / "tmm_spectrum.csv");
  hrd::StlSpectrum s;
  const auto& f = spec.at("frequency_hz");
  s.grid = {f.front(), f.size() > 1 ? f[1] - f[0] : 1.0, f.size()};
  s.values = spec.at("stl_db");
  const auto peaks = hrd::tmm::find_peaks(s, 3.0);
  const std::array<double, 4> targets{150.0, 200.0, 250.0, 300.0};
  std::string list;
  for (const auto& p : peaks) list += (list.empty() ? "" : ", ") + fmt(p.frequency, 5);
  double worst = std::numeric_limits<double>::infinity();
  if (peaks.size() == 4) {
    worst = 0.0;
    for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(peaks[k].frequency - targets[k]));
  }
  return {peaks.size() == 4 && worst <= 2.0, std::to_string(peaks.size()) + " peaks [" + list +
                                                 "] Hz (need exactly 4), worst offset " + fmt(worst) + " Hz (<= 2)"};
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Verdict c9(const Context& ctx) {
  const auto a = run1(ctx);
  const auto b = ctx.work / "run2";
  run_pipeline(ctx, b);
  const auto fa = files_under(a);
  const auto fb = files_under(b);
  if (fa != fb) return {false, "file sets differ (" + std::to_string(fa.size()) + " vs " + std::to_string(fb.size()) + ")"};
  std::size_t differing = 0;
  std::string first;
  for (const auto& rel : fa) {
    if (hrd::read_file(a / rel) != hrd::read_file(b / rel)) {
      if (differing++ == 0) first = rel.string();
    }
  }
  return {differing == 0, std::to_string(fa.size() - differing) + "/" + std::to_string(fa.size()) +
                              " files byte-identical" + (differing ? " (first difference: " + first + ")" : "")};
}

struct Criterion {
  std::string id;
  std::string title;
  Verdict (*run)(const Context&);
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {"c1", "algebraic round-trip", c1},     {"c2", "resonance consistency", c2},
      {"c3", "lumped/TMM equivalence", c3},   {"c4", "gradient correctness", c4},
      {"c5", "desk surrogate quality", c5},   {"c6", "two-target design 150/250", c6},
      {"c7", "surrogate-seeded GA", c7},      {"c8", "four-peak acoustic filter", c8},
      {"c9", "determinism", c9},
  };
  return list;
}

bool report(const Criterion& c, const Context& ctx) {
  Verdict v;
  try {
    v = c.run(ctx);
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  std::cout << (v.passed ? "PASS " : "FAIL ") << c.id << " " << c.title << ": " << v.detail << std::endl;
  return v.passed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  Context ctx;
  std::string which = "all";
  app.add_option("--cli", ctx.cli, "Path to the hrd executable")->required();
  app.add_option("--work", ctx.work, "Work directory")->required();
  app.add_option("--seed", ctx.seed, "Seed for every stage")->capture_default_str();
  app.add_option("criterion", which, "setup, all, or c1..c9")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  ctx.cli = fs::absolute(ctx.cli).string();
  ctx.work = fs::absolute(ctx.work);
  fs::create_directories(ctx.work);

  try {
    if (which == "setup" || which == "all") {
      run_pipeline(ctx, ctx.work / "run1");
      std::cout << "pipeline written to " << (ctx.work / "run1").string() << std::endl;
      if (which == "setup") return 0;
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL setup: " << e.what() << std::endl;
    return 1;
  }

  bool all_ok = true;
  bool found = false;
  for (const auto& c : criteria()) {
    if (which != "all" && which != c.id) continue;
    found = true;
    all_ok = report(c, ctx) && all_ok;
  }
  if (!found) {
    std::cerr << "unknown criterion '" << which << "'\n";
    return 2;
  }
  return all_ok ? 0 : 1;
}
