// Drives the hrd executable as a user would and checks exit codes and files.

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hrd/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hrd_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code = -1;
  std::string err;
};

Run run_hrd(const std::string& args) {
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = "cd '" + scratch().string() + "' && '" HRD_CLI_PATH "' " + args + " > /dev/null 2> '" +
                          err.string() + "'";
  const int rc = std::system(cmd.c_str());
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, hrd::read_file(err)};
}

json read_json(const fs::path& p) { return json::parse(hrd::read_file(scratch() / p)); }

const std::string kGp = "--gp 1,2,6,1,2,6";

}  // namespace

TEST_CASE("version and usage errors") {
  CHECK(run_hrd("--version").code == 0);
  CHECK(run_hrd("frobnicate").code == 1);
  CHECK(run_hrd("stl --gp 1,2,3").code == 1);
  CHECK(run_hrd("stl " + kGp + " --eep 1,1,1e-9,1,1,1e-9").code == 1);
  CHECK(run_hrd("--format xml stl " + kGp).code == 1);
  CHECK(run_hrd("stl --gp 6,2,6,1,2,6").code == 1); // neck wider than the cavity
}

TEST_CASE("stl writes identical numbers as csv and json") {
  REQUIRE(run_hrd("--output-dir s_csv stl " + kGp).code == 0);
  REQUIRE(run_hrd("--output-dir s_json --format json stl " + kGp).code == 0);
  const auto j = read_json("s_json/stl_spectrum.json");
  const auto text = hrd::read_file(scratch() / "s_csv/stl_spectrum.csv");
  const auto& f = j.at("data").at("frequency_hz");
  const auto& v = j.at("data").at("stl_db");
  REQUIRE(f.size() == 500);
  std::string rebuilt = "frequency_hz,stl_db\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    rebuilt += hrd::format_double(f[i].get<double>()) + "," + hrd::format_double(v[i].get<double>()) + "\n";
  }
  CHECK(rebuilt == text);
  const auto rep = read_json("s_csv/stl_report.json");
  CHECK(rep.at("tool") == "hrd");
  CHECK(rep.at("command") == "stl");
  CHECK(rep.at("resonances").is_object());
}

TEST_CASE("single-branch tmm equals stl") {
  hrd::write_file(scratch() / "one.txt", "cross_section = 0.01\nbranch_gp a1=1 l1=2 h1=6 a2=1 l2=2 h2=6\n");
  REQUIRE(run_hrd("--output-dir t1 tmm --network one.txt").code == 0);
  REQUIRE(run_hrd("--output-dir s1 stl " + kGp).code == 0);
  auto a = hrd::read_file(scratch() / "t1/tmm_spectrum.csv");
  auto b = hrd::read_file(scratch() / "s1/stl_spectrum.csv");
  CHECK(std::count(a.begin(), a.end(), '\n') == std::count(b.begin(), b.end(), '\n'));
  // Values agree to round-off; compare numerically.
  std::size_t pa = a.find('\n') + 1;
  std::size_t pb = b.find('\n') + 1;
  double worst = 0.0;
  while (pa < a.size() && pb < b.size()) {
    const auto ea = a.find('\n', pa);
    const auto eb = b.find('\n', pb);
    const auto la = hrd::split(std::string_view(a).substr(pa, ea - pa), ',');
    const auto lb = hrd::split(std::string_view(b).substr(pb, eb - pb), ',');
    worst = std::max(worst, std::abs(hrd::parse_double(la[1], "a", 0) - hrd::parse_double(lb[1], "b", 0)));
    pa = ea + 1;
    pb = eb + 1;
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("malformed and empty networks") {
  hrd::write_file(scratch() / "bad.txt", "cross_section = 0.01\nsegment length=0.1\nbranch_gp a1=1 l1=oops\n");
  const auto r = run_hrd("tmm --network bad.txt");
  CHECK(r.code == 1);
  CHECK(r.err.find("bad.txt:3") != std::string::npos);
  hrd::write_file(scratch() / "empty.txt", "# nothing\n");
  CHECK(run_hrd("tmm --network empty.txt").code == 1);
  CHECK(run_hrd("tmm --network missing.txt").code != 0);
}

TEST_CASE("constants file") {
  hrd::write_file(scratch() / "air.txt", "air_density = 1.2\nsound_speed = 340\n");
  REQUIRE(run_hrd("--constants-file air.txt --output-dir air stl " + kGp).code == 0);
  CHECK(read_json("air/stl_report.json").at("config").at("constants").at("sound_speed") == 340.0);
  hrd::write_file(scratch() / "air_bad.txt", "air_density = 1.2\nwarp_factor = 9\n");
  CHECK(run_hrd("--constants-file air_bad.txt stl " + kGp).code == 1);
}

TEST_CASE("data, training, design and optimization end to end") {
  REQUIRE(run_hrd("--seed 3 --output-dir g gen-data --samples-per-group 4 --max-attempts-per-group 300").code == 0);
  const auto gen = read_json("g/gen_report.json");
  REQUIRE(gen.at("samples").get<std::size_t>() >= 40);

  CHECK(run_hrd("--output-dir m train --data g/dataset.csv --resume").code == 1);
  REQUIRE(run_hrd("--seed 3 --output-dir m train --data g/dataset.csv --max-epochs 3").code == 0);
  CHECK(fs::exists(scratch() / "m/model.hrdm"));
  CHECK(read_json("m/train_report.json").at("epochs_run").get<std::size_t>() <= 3);

  const auto d = run_hrd("--seed 3 --output-dir d design --model m/model.hrdm --candidates 5 --sensitivity-size 5");
  CHECK((d.code == 0 || d.code == 2));
  if (d.code == 0) CHECK(hrd::read_file(scratch() / "d/design_branch.txt").rfind("branch_gp", 0) == 0);
  CHECK(run_hrd("design --model m/model.hrdm --f1 300 --f2 200").code == 1);
  CHECK(run_hrd("design --model nope.hrdm").code == 2);

  CHECK(run_hrd("optimize --seed-elites 2 --generations 2").code == 1);
  REQUIRE(run_hrd("--seed 3 --output-dir o optimize --population 10 --generations 3").code == 0);
  CHECK(read_json("o/ga_report.json").at("best").is_object());
  REQUIRE(run_hrd("--seed 3 --output-dir o2 optimize --population 10 --generations 3").code == 0);
  CHECK(hrd::read_file(scratch() / "o/ga_trace.csv") == hrd::read_file(scratch() / "o2/ga_trace.csv"));
  REQUIRE(run_hrd("--seed 3 --output-dir p optimize --population 10 --generations 2 --paired 2 --model m/model.hrdm")
              .code == 0);
  CHECK(read_json("p/ga_paired_summary.json").at("pairs").size() == 2);
}

TEST_CASE("check suites and fault injection") {
  CHECK(run_hrd("--output-dir c check gradients --samples 5").code == 0);
  CHECK(run_hrd("--output-dir c check gradients --samples 5 --expect-fail").code == 3);
  CHECK(run_hrd("--output-dir c check roundtrip --samples 50").code == 0);
  CHECK(read_json("c/check_report.json").is_object());
  CHECK(run_hrd("check nonsense").code == 1);
}

TEST_CASE("config file supplies options, flags win") {
  hrd::write_file(scratch() / "run.toml", "seed = 5\nformat = \"json\"\n");
  REQUIRE(run_hrd("--config run.toml --output-dir cfg optimize --population 6 --generations 1").code == 0);
  CHECK(fs::exists(scratch() / "cfg/ga_trace.json"));
  REQUIRE(run_hrd("--config run.toml --format csv --output-dir cfg2 optimize --population 6 --generations 1").code == 0);
  CHECK(fs::exists(scratch() / "cfg2/ga_trace.csv"));
}
