#include "hrd/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "hrd/model_io.hpp"
#include "hrd/nn.hpp"

namespace hrd::checks {

namespace {

constexpr std::size_t kMaxExamples = 5;
constexpr double kKinkMargin = 1e-3;

void note(CheckResult& r, const std::string& what) {
  ++r.failures;
  if (r.examples.size() < kMaxExamples) r.examples.push_back(what);
}

double rel_err(double a, double b, double floor = 0.0) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

nn::Tensor random_tensor(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Tensor t(rows, cols);
  for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = n(rng);
  return t;
}

struct TinyProblem {
  nn::MLPModel model;
  nn::Tensor x;
  nn::Tensor y;
  std::uint64_t mask_seed = 0;
};

TinyProblem make_problem(std::mt19937_64& rng) {
  nn::Architecture arch;
  arch.input_width = draw(rng, 2, 6);
  arch.hidden.assign(draw(rng, 1, 3), 0);
  for (auto& w : arch.hidden) w = draw(rng, 2, 6);
  arch.output_width = draw(rng, 1, 4);
  arch.dropout = draw(rng, 0, 1) == 1 ? 0.3 : 0.0;

  TinyProblem p;
  p.model = nn::MLPModel::create(arch, rng());
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& b : p.model.hidden) {
    for (Eigen::Index k = 0; k < b.dense.bias.size(); ++k) {
      b.dense.bias[k] = u(rng);
      b.norm.gamma[k] = 1.0 + u(rng);
      b.norm.beta[k] = u(rng);
    }
  }
  for (Eigen::Index k = 0; k < p.model.output.bias.size(); ++k) p.model.output.bias[k] = u(rng);
  const auto batch = static_cast<Eigen::Index>(draw(rng, 3, 8));
  p.x = random_tensor(rng, batch, static_cast<Eigen::Index>(arch.input_width));
  p.y = random_tensor(rng, batch, static_cast<Eigen::Index>(arch.output_width));
  p.mask_seed = rng();
  return p;
}

double loss_of(const TinyProblem& p, nn::ForwardCache* cache = nullptr) {
  std::mt19937_64 mask(p.mask_seed);
  const nn::Tensor pred = nn::forward(p.model, p.x, nn::Mode::train, &mask, cache);
  return nn::mse_loss(pred, p.y).value;
}

bool near_kink(const nn::ForwardCache& cache) {
  for (const auto& b : cache.blocks) {
    if (b.bn_out.size() > 0 && b.bn_out.cwiseAbs().minCoeff() < kKinkMargin) return true;
  }
  return false;
}

std::string order_label(std::size_t i) { return "order " + std::to_string(i + 1); }

}  // namespace

nlohmann::json CheckResult::to_json() const {
  return {{"name", name},   {"passed", passed},     {"cases", cases},
          {"failures", failures}, {"metrics", metrics}, {"examples", examples}};
}

CheckResult check_gradients(const GradientCheckConfig& config) {
  CheckResult r;
  r.name = "gradients";
  std::mt19937_64 rng(config.seed);
  double worst = 0.0;
  std::size_t resampled = 0;
  std::size_t entries = 0;

  while (r.cases < config.configurations) {
    TinyProblem p = make_problem(rng);
    nn::ForwardCache cache;
    std::mt19937_64 mask(p.mask_seed);
    const nn::Tensor pred = nn::forward(p.model, p.x, nn::Mode::train, &mask, &cache);
    if (near_kink(cache)) {
      ++resampled;
      continue;
    }
    const nn::Loss loss = nn::mse_loss(pred, p.y);
    const nn::Gradients grads = nn::backward(p.model, cache, loss.grad);
    auto params = nn::parameter_spans(p.model);
    const auto gspans = nn::gradient_spans(grads);

    std::vector<std::vector<double>> analytic;
    for (const auto& g : gspans) analytic.emplace_back(g.begin(), g.end());
    if (config.inject_fault) {
      double* target = nullptr;
      for (auto& g : analytic) {
        for (auto& v : g) {
          if (!target || std::abs(v) > std::abs(*target)) target = &v;
        }
      }
      if (target) *target *= 1.01;
    }

    bool case_ok = true;
    for (std::size_t s = 0; s < params.size(); ++s) {
      for (std::size_t k = 0; k < params[s].size(); ++k) {
        double& w = params[s][k];
        const double saved = w;
        w = saved + config.step;
        const double up = loss_of(p);
        w = saved - config.step;
        const double down = loss_of(p);
        w = saved;
        const double numeric = (up - down) / (2.0 * config.step);
        const double e = rel_err(analytic[s][k], numeric, config.floor);
        worst = std::max(worst, e);
        ++entries;
        if (e > config.tolerance && case_ok) {
          case_ok = false;
          std::ostringstream msg;
          msg << "case " << r.cases << " tensor " << s << " entry " << k << ": analytic " << analytic[s][k]
              << " numeric " << numeric << " rel " << e;
          note(r, msg.str());
        }
      }
    }
    ++r.cases;
  }
  r.passed = r.failures == 0;
  r.metrics = {{"worst_relative_error", worst},
               {"tolerance", config.tolerance},
               {"step", config.step},
               {"entries_checked", entries},
               {"resampled_near_relu_kink", resampled}};
  return r;
}

CheckResult check_geometry_recovery(const RoundTripCheckConfig& config) {
  CheckResult r;
  r.name = "geometry-recovery";
  std::mt19937_64 rng(config.seed);
  double worst = 0.0;
  std::size_t no_root = 0;
  std::size_t other_root = 0;
  for (; r.cases < config.samples; ++r.cases) {
    const GeometricParams gp = data::sample_gp(rng, config.ranges);
    const auto eep = gp_to_eep(gp, config.constants);
    GeometricParams back;
    try {
      back = eep_to_gp(eep, config.ranges, config.constants);
    } catch (const InversionError& e) {
      ++no_root;
      note(r, "case " + std::to_string(r.cases) + ": " + e.what());
      continue;
    }
    double case_worst = 0.0;
    for (std::size_t i = 0; i < kOrders; ++i) {
      if (config.inject_fault) back.order[i].neck_radius *= 1.0 + 1e-6;
      const auto& a = gp.order[i];
      const auto& b = back.order[i];
      for (auto [x, y] : {std::pair{a.neck_radius, b.neck_radius}, std::pair{a.neck_length, b.neck_length},
                          std::pair{a.cavity_radius, b.cavity_radius}, std::pair{a.cavity_length, b.cavity_length}}) {
        case_worst = std::max(case_worst, rel_err(x, y));
      }
    }
    worst = std::max(worst, case_worst);
    if (case_worst >= config.tolerance) {
      ++other_root;
      std::ostringstream msg;
      msg << "case " << r.cases << ": worst relative error " << case_worst
          << " (recovered the other preimage of the same circuit)";
      note(r, msg.str());
    }
  }
  r.passed = r.failures == 0;
  r.metrics = {{"worst_relative_error", worst},
               {"tolerance", config.tolerance},
               {"inversion_errors", no_root},
               {"recovered_other_preimage", other_root},
               {"recovered_fraction", 1.0 - static_cast<double>(r.failures) / static_cast<double>(r.cases)}};
  return r;
}

CheckResult check_inversion_consistency(const RoundTripCheckConfig& config) {
  CheckResult r;
  r.name = "inversion-consistency";
  std::mt19937_64 rng(config.seed);
  double worst_forward = 0.0;
  std::size_t ambiguous = 0;
  for (; r.cases < config.samples; ++r.cases) {
    const GeometricParams gp = data::sample_gp(rng, config.ranges);
    const auto eep = gp_to_eep(gp, config.constants);
    bool case_ok = true;
    std::size_t in_range_preimages = 0;
    for (std::size_t i = 0; i < kOrders; ++i) {
      auto pre = order_preimages(eep.order[i], i, gp.order[i].cavity_radius, config.constants);
      if (config.inject_fault) {
        for (auto& g : pre) g.neck_radius *= 1.0 + 1e-6;
      }
      bool found = false;
      for (const auto& g : pre) {
        if (rel_err(g.neck_radius, gp.order[i].neck_radius) < config.tolerance &&
            rel_err(g.neck_length, gp.order[i].neck_length) < config.tolerance &&
            rel_err(g.cavity_length, gp.order[i].cavity_length) < config.tolerance) {
          found = true;
        }
        GeometricParams probe = gp;
        probe.order[i] = g;
        const auto fwd = gp_to_eep(probe, config.constants).order[i];
        const double e = std::max({rel_err(fwd.resistance, eep.order[i].resistance),
                                   rel_err(fwd.inertance, eep.order[i].inertance),
                                   rel_err(fwd.compliance, eep.order[i].compliance)});
        worst_forward = std::max(worst_forward, e);
        if (e >= config.tolerance) case_ok = false;
        if (config.ranges.contains(g)) ++in_range_preimages;
      }
      if (!found) case_ok = false;
      if (!case_ok) {
        note(r, "case " + std::to_string(r.cases) + " " + order_label(i) + ": preimage set inconsistent");
        break;
      }
    }
    if (in_range_preimages > kOrders) ++ambiguous;
  }
  r.passed = r.failures == 0;
  r.metrics = {{"worst_forward_relative_error", worst_forward},
               {"tolerance", config.tolerance},
               {"cases_with_two_in_range_preimages", ambiguous}};
  return r;
}

std::vector<data::Sample> draw_accepted_samples(const data::GeneratorConfig& config, std::size_t count) {
  std::vector<data::Sample> out;
  for (std::uint64_t counter = 0; out.size() < count; ++counter) {
    std::mt19937_64 rng(data::stream_seed(config.seed, counter));
    const auto cand = data::evaluate_candidate(data::sample_gp(rng, config.gp_ranges), config);
    if (data::filter_sample(cand, config.eep_ranges, config.threshold_db) != data::Rejection::accepted) continue;
    data::Sample s;
    s.gp = cand.gp;
    s.eep = cand.eep;
    s.f1 = cand.resonances->first.frequency;
    s.f2 = cand.resonances->second.frequency;
    s.stl_f1 = cand.resonances->first.stl;
    s.stl_f2 = cand.resonances->second.stl;
    out.push_back(std::move(s));
  }
  return out;
}

CheckResult check_resonances(const std::vector<data::Sample>& samples, const ResonanceCheckConfig& config) {
  CheckResult r;
  r.name = "resonances";
  const double load = config.constants.characteristic_impedance() / (2.0 * config.cross_section);
  const auto steps = static_cast<std::size_t>(std::floor((config.band.hi - config.band.lo) / config.sweep_step_hz));
  std::size_t located = 0;
  std::size_t specialization_failures = 0;
  double worst_offset = 0.0;
  double worst_specialization = 0.0;

  for (const auto& s : samples) {
    ++r.cases;
    std::vector<double> res;
    for (const auto& z : reactance_zeros(s.eep, config.band)) {
      if (z.resonance) res.push_back(config.inject_fault ? z.frequency + 0.5 : z.frequency);
    }

    std::vector<double> peaks;
    double prev2 = stl_side_branch(s.eep, config.band.lo, config.cross_section, config.constants);
    double prev = stl_side_branch(s.eep, config.band.lo + config.sweep_step_hz, config.cross_section,
                                  config.constants);
    for (std::size_t k = 2; k <= steps; ++k) {
      const double f = config.band.lo + static_cast<double>(k) * config.sweep_step_hz;
      const double cur = stl_side_branch(s.eep, f, config.cross_section, config.constants);
      if (prev > prev2 && prev > cur) peaks.push_back(f - config.sweep_step_hz);
      prev2 = prev;
      prev = cur;
    }

    bool ok = res.size() == peaks.size() && !res.empty();
    double offset = 0.0;
    if (ok) {
      for (std::size_t k = 0; k < res.size(); ++k) offset = std::max(offset, std::abs(res[k] - peaks[k]));
      ok = offset <= config.location_tolerance_hz;
      worst_offset = std::max(worst_offset, offset);
    }
    if (ok) {
      ++located;
    } else {
      std::ostringstream msg;
      msg << "sample " << (r.cases - 1) << ": " << res.size() << " resonances vs " << peaks.size()
          << " sweep peaks, worst offset " << offset << " Hz";
      note(r, msg.str());
    }

    for (double f : res) {
      const auto z = impedance(s.eep, f);
      const double special = 20.0 * std::log10(1.0 + load / z.real);
      const double e = std::abs(stl_from_impedance(z, config.cross_section, config.constants) - special);
      worst_specialization = std::max(worst_specialization, e);
      if (e >= config.stl_tolerance_db) ++specialization_failures;
    }
  }

  const double fraction = r.cases == 0 ? 0.0 : static_cast<double>(located) / static_cast<double>(r.cases);
  r.passed = r.cases > 0 && fraction >= config.required_fraction && specialization_failures == 0;
  r.metrics = {{"located_fraction", fraction},
               {"required_fraction", config.required_fraction},
               {"worst_location_offset_hz", worst_offset},
               {"location_tolerance_hz", config.location_tolerance_hz},
               {"worst_specialization_error_db", worst_specialization},
               {"specialization_tolerance_db", config.stl_tolerance_db},
               {"specialization_failures", specialization_failures},
               {"sweep_step_hz", config.sweep_step_hz}};
  return r;
}

CheckResult check_model_roundtrip(const ModelRoundTripConfig& config) {
  CheckResult r;
  r.name = "model-roundtrip";
  std::mt19937_64 rng(config.seed);
  for (; r.cases < config.models; ++r.cases) {
    TinyProblem p = make_problem(rng);
    for (auto& b : p.model.hidden) {
      b.norm.running_mean = b.norm.beta;
      b.norm.running_var = b.norm.gamma.cwiseAbs();
    }
    p.model.grid = {1.0, 1.0, p.model.arch.input_width};
    p.model.normalization.input_mean.assign(p.model.arch.input_width, 0.25);
    p.model.normalization.input_std.assign(p.model.arch.input_width, 1.5);
    const std::string text = nn::serialize_model(p.model, {{"case", r.cases}});
    nn::MLPModel back = nn::deserialize_model(text);
    if (config.inject_fault) {
      auto& w = back.hidden.front().dense.weight(0, 0);
      w = std::nextafter(w, w + 1.0);
    }
    auto a = nn::parameter_spans(p.model);
    auto b = nn::parameter_spans(back);
    bool same = a.size() == b.size();
    for (std::size_t s = 0; same && s < a.size(); ++s) {
      same = a[s].size() == b[s].size() && std::equal(a[s].begin(), a[s].end(), b[s].begin());
    }
    for (std::size_t k = 0; same && k < p.model.hidden.size(); ++k) {
      same = p.model.hidden[k].norm.running_mean == back.hidden[k].norm.running_mean &&
             p.model.hidden[k].norm.running_var == back.hidden[k].norm.running_var;
    }
    same = same && nn::forward(p.model, p.x, nn::Mode::infer) == nn::forward(back, p.x, nn::Mode::infer) &&
           nn::serialize_model(back, {{"case", r.cases}}) == text;
    if (!same) note(r, "model " + std::to_string(r.cases) + " changed across serialization");
  }
  r.passed = r.failures == 0;
  return r;
}

}  // namespace hrd::checks
