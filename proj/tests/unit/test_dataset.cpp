#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "hrd/dataset.hpp"
#include "hrd/text_io.hpp"

using namespace hrd;
using namespace hrd::data;

namespace {

// Two-sided Kolmogorov-Smirnov statistic against U(lo, hi).
double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = (x[i] - lo) / (hi - lo);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.bins.samples_per_group = 3;
  c.bins.max_attempts_per_group = 400;
  c.target_total = 60;
  c.seed = 42;
  return c;
}

Dataset synthetic(std::size_t n) {
  Dataset d;
  d.grid = {101.0, 1.0, 3};
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.f1 = static_cast<double>(i);
    s.spectrum = {d.grid, {1.0, 2.0, 3.0}};
    d.samples.push_back(s);
  }
  return d;
}

}  // namespace

TEST_CASE("sample_gp is uniform over the box") {
  std::mt19937_64 rng(7);
  const GeometryRanges r;
  std::array<std::vector<double>, 6> cols;
  const std::size_t n = 4000;
  for (std::size_t k = 0; k < n; ++k) {
    const auto gp = sample_gp(rng, r);
    for (std::size_t i = 0; i < 2; ++i) {
      cols[3 * i].push_back(gp.order[i].neck_radius);
      cols[3 * i + 1].push_back(gp.order[i].neck_length);
      cols[3 * i + 2].push_back(gp.order[i].cavity_length);
      CHECK(gp.order[i].cavity_radius == r.cavity_radius);
    }
  }
  const double critical = 1.63 / std::sqrt(static_cast<double>(n)); // alpha = 0.01
  const std::array<Range, 3> box{r.neck_radius, r.neck_length, r.cavity_length};
  for (std::size_t k = 0; k < 6; ++k) CHECK(ks_uniform(cols[k], box[k % 3].lo, box[k % 3].hi) < critical);
}

TEST_CASE("stream seeds are deterministic and distinct") {
  CHECK(stream_seed(1, 2) == stream_seed(1, 2));
  std::set<std::uint64_t> seen;
  for (std::uint64_t c = 0; c < 1000; ++c) seen.insert(stream_seed(9, c));
  CHECK(seen.size() == 1000);
}

TEST_CASE("band bookkeeping") {
  const BinSpec b;
  CHECK(b.band_count() == 10);
  CHECK(b.band_of(100.0) == 0u);
  CHECK(b.band_of(149.999) == 0u);
  CHECK(b.band_of(150.0) == 1u);
  CHECK(b.band_of(600.0) == 9u);
  CHECK_FALSE(b.band_of(99.0).has_value());
  CHECK_FALSE(b.band_of(600.5).has_value());
  const auto groups = candidate_groups(b);
  CHECK(groups.size() == 45);
  for (const auto& g : groups) CHECK(g.first_band < g.second_band);
}

TEST_CASE("filter rejects out-of-box circuits") {
  GeneratorConfig c;
  GeometricParams gp;
  for (auto& g : gp.order) g = {0.001, 0.05, 0.05, 0.127};
  const auto cand = evaluate_candidate(gp, c);
  CHECK(filter_sample(cand, c.eep_ranges) == Rejection::eep_out_of_range);
}

TEST_CASE("generated samples satisfy the corpus invariants") {
  const auto cfg = small_config();
  GenerationReport rep;
  const auto ds = generate_dataset(cfg, &rep);
  REQUIRE(ds.size() > 0);
  CHECK(ds.size() <= cfg.target_total);
  CHECK(rep.accepted == ds.size());
  for (const auto& g : rep.groups) CHECK(g.count <= cfg.bins.samples_per_group);
  for (const auto& s : ds.samples) {
    const auto eep = gp_to_eep(s.gp, cfg.constants);
    CHECK(eep.flat() == s.eep.flat());
    CHECK(cfg.eep_ranges.contains(s.eep));
    CHECK(s.f1 >= 101.0);
    CHECK(s.f2 <= 600.0);
    CHECK(s.f1 < s.f2);
    CHECK(s.stl_f1 > 10.0);
    CHECK(s.stl_f2 > 10.0);
    CHECK(s.spectrum.values == stl_spectrum(s.eep, cfg.cross_section, cfg.constants, cfg.grid).values);
  }
}

TEST_CASE("generation is deterministic across runs and thread counts") {
  auto cfg = small_config();
  const auto a = dataset_to_csv(generate_dataset(cfg));
  cfg.threads = 3;
  CHECK(dataset_to_csv(generate_dataset(cfg)) == a);
  cfg.seed = 43;
  CHECK(dataset_to_csv(generate_dataset(cfg)) != a);
}

TEST_CASE("zero feasible groups is an error") {
  auto cfg = small_config();
  cfg.threshold_db = 500.0;
  cfg.bins.max_attempts_per_group = 5;
  CHECK_THROWS_AS(generate_dataset(cfg), GenerationError);
}

TEST_CASE("dataset CSV round-trips and reports bad lines") {
  const auto ds = generate_dataset(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "hrd_unit_dataset";
  std::filesystem::create_directories(dir);
  write_dataset(ds, dir / "d.csv");
  const auto back = read_dataset(dir / "d.csv");
  CHECK(dataset_to_csv(back) == dataset_to_csv(ds));

  std::string text = read_file(dir / "d.csv");
  const auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
  text.insert(third + 1, "1,2,3\n");
  write_file(dir / "bad.csv", text);
  try {
    (void)read_dataset(dir / "bad.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("split sizes, disjointness and determinism") {
  const auto d = synthetic(1000);
  DatasetSplit sp;
  sp.seed = 5;
  const auto parts = split_dataset(d, sp);
  CHECK(parts.train.size() == 800);
  CHECK(parts.validation.size() == 100);
  CHECK(parts.test.size() == 100);
  std::set<double> ids;
  for (const auto* p : {&parts.train, &parts.validation, &parts.test}) {
    for (const auto& s : p->samples) ids.insert(s.f1);
  }
  CHECK(ids.size() == 1000);
  CHECK(dataset_to_csv(split_dataset(d, sp).test) == dataset_to_csv(parts.test));
  sp.seed = 6;
  CHECK(dataset_to_csv(split_dataset(d, sp).test) != dataset_to_csv(parts.test));

  CHECK_THROWS(split_dataset(Dataset{}, DatasetSplit{}));
  DatasetSplit bad;
  bad.train = 0.9;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("normalization statistics") {
  auto d = synthetic(4);
  for (std::size_t i = 0; i < 4; ++i) d.samples[i].spectrum.values = {static_cast<double>(i), 5.0, 2.0 * i};
  const CircuitRanges box;
  const auto st = compute_normalization(d, box);
  CHECK(st.input_mean[0] == doctest::Approx(1.5));
  CHECK(st.input_std[1] >= NormalizationStats::kMinStd);
  CHECK(st.normalize_input(1, 5.0) == doctest::Approx(0.0));
  CHECK(st.normalize_output(0, box.resistance.hi) == doctest::Approx(1.0));
  CHECK(st.denormalize_output(2, st.normalize_output(2, 3e-9)) == doctest::Approx(3e-9));
}
