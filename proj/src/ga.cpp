#include "hrd/ga.hpp"

#include <algorithm>
#include <random>

#include "hrd/parallel.hpp"
#include "hrd/text_io.hpp"

namespace hrd::ga {

namespace {

// Distinct stream for the surrogate candidate synthesis.
constexpr std::uint64_t kSeedSalt = 0x5EEDE11735ULL;

Genome random_genome(std::mt19937_64& rng, const GeometryRanges& ranges) {
  Genome g{};
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Range r = gene_range(ranges, k);
    g[k] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  }
  return g;
}

void evaluate_all(std::vector<Individual>& pop, const ObjectiveSpec& spec, const PhysicalConstants& pc,
                  const GeometryRanges& ranges, const GAConfig& config) {
  parallel_for(pop.size(), config.threads, [&](std::size_t i) {
    pop[i].fitness = objective_j(from_genome(pop[i].genome, ranges.cavity_radius), spec, pc, config.penalty_weight);
  });
}

bool fitter(const Individual& a, const Individual& b) { return a.fitness.penalized < b.fitness.penalized; }

GenerationStats stats_of(std::size_t gen, const std::vector<Individual>& pop, double threshold) {
  const auto best = std::min_element(pop.begin(), pop.end(), fitter);
  const auto feasible = std::count_if(pop.begin(), pop.end(),
                                      [&](const Individual& i) { return i.fitness.feasible(threshold); });
  return {gen, best->fitness.penalized, best->fitness.j, best->fitness.mean_target_stl(),
          static_cast<double>(feasible) / static_cast<double>(pop.size())};
}

}  // namespace

Genome to_genome(const GeometricParams& gp) {
  return {gp.order[0].neck_radius, gp.order[0].neck_length, gp.order[0].cavity_length,
          gp.order[1].neck_radius, gp.order[1].neck_length, gp.order[1].cavity_length};
}

GeometricParams from_genome(const Genome& g, double cavity_radius) {
  GeometricParams gp;
  gp.order[0] = {g[0], g[1], cavity_radius, g[2]};
  gp.order[1] = {g[3], g[4], cavity_radius, g[5]};
  return gp;
}

Range gene_range(const GeometryRanges& ranges, std::size_t gene) {
  switch (gene % 3) {
    case 0: return ranges.neck_radius;
    case 1: return ranges.neck_length;
    default: return ranges.cavity_length;
  }
}

Objective objective_j(const GeometricParams& gp, const ObjectiveSpec& spec, const PhysicalConstants& pc,
                      double penalty_weight) {
  const auto eep = gp_to_eep(gp, pc);
  Objective o;
  o.stl_f1 = stl_side_branch(eep, spec.f1, spec.cross_section, pc);
  o.stl_f2 = stl_side_branch(eep, spec.f2, spec.cross_section, pc);
  o.j = -(o.stl_f1 + o.stl_f2);
  const double shortfall =
      std::max(0.0, spec.threshold_db - o.stl_f1) + std::max(0.0, spec.threshold_db - o.stl_f2);
  o.penalized = o.j + penalty_weight * shortfall;
  return o;
}

void GAConfig::validate() const {
  if (population == 0) throw ConfigError("population must be positive");
  if (elite_seeds > population) throw ConfigError("elite seed count exceeds population size");
  if (tournament == 0) throw ConfigError("tournament size must be positive");
  if (elitism > population) throw ConfigError("elitism exceeds population size");
  for (double p : {crossover_probability, mutation_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must be in [0, 1]");
  }
  if (!(mutation_scale >= 0.0)) throw ConfigError("mutation scale must be non-negative");
  if (!(penalty_weight >= 0.0)) throw ConfigError("penalty weight must be non-negative");
}

nlohmann::json GAConfig::to_json() const {
  return {{"population", population},
          {"generations", generations},
          {"elite_seeds", elite_seeds},
          {"tournament", tournament},
          {"crossover_probability", crossover_probability},
          {"mutation_probability", mutation_probability},
          {"mutation_scale", mutation_scale},
          {"elitism", elitism},
          {"penalty_weight", penalty_weight},
          {"seed", seed}};
}

std::vector<Individual> init_population(const GAConfig& config, const ObjectiveSpec& spec,
                                        const PhysicalConstants& pc, const GeometryRanges& ranges,
                                        const nn::MLPModel* model, InitReport* report) {
  config.validate();
  if (config.elite_seeds > 0 && model == nullptr) {
    throw ConfigError("surrogate elite seeding requires a trained model");
  }

  std::vector<Genome> seeded;
  if (config.elite_seeds > 0) {
    design::DesignTarget target{spec.f1, spec.f2, spec.threshold_db};
    design::DesignOptions opts;
    opts.candidates = config.elite_seeds;
    opts.seed = config.seed ^ kSeedSalt;
    opts.cross_section = spec.cross_section;
    opts.constants = pc;
    opts.gp_ranges = ranges;
    opts.threads = config.threads;
    try {
      auto ranked = design::design(target, *model, opts).ranked;
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.mean_target_stl() > b.mean_target_stl();
      });
      for (const auto& r : ranked) {
        if (seeded.size() == config.elite_seeds) break;
        Genome g = to_genome(r.gp);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = gene_range(ranges, k).clamp(g[k]);
        seeded.push_back(g);
      }
    } catch (const design::NoRealizableDesign&) {
      // fall through: the population is filled with random individuals
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<Genome> genomes;
  for (std::size_t k = 0; k < config.population; ++k) genomes.push_back(random_genome(rng, ranges));
  genomes.resize(config.population - seeded.size());

  std::vector<Individual> pop;
  for (const auto& g : genomes) pop.push_back({g, {}, false});
  for (const auto& g : seeded) pop.push_back({g, {}, true});
  evaluate_all(pop, spec, pc, ranges, config);
  if (report) *report = {genomes.size(), seeded.size()};
  return pop;
}

EvolveResult evolve(std::vector<Individual> population, const GAConfig& config, const ObjectiveSpec& spec,
                    const PhysicalConstants& pc, const GeometryRanges& ranges) {
  config.validate();
  if (population.empty()) throw ConfigError("cannot evolve an empty population");
  std::mt19937_64 rng(config.seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);

  EvolveResult res;
  res.trace.push_back(stats_of(0, population, spec.threshold_db));

  auto tournament = [&](const std::vector<Individual>& pop) -> const Individual& {
    std::size_t best = pick(rng);
    for (std::size_t k = 1; k < config.tournament; ++k) {
      const std::size_t c = pick(rng);
      if (fitter(pop[c], pop[best])) best = c;
    }
    return pop[best];
  };

  const std::size_t n = population.size();
  const std::size_t keep = std::min(config.elitism, n);
  for (std::size_t gen = 1; gen <= config.generations; ++gen) {
    std::vector<Individual> sorted = population;
    std::stable_sort(sorted.begin(), sorted.end(), fitter);

    std::vector<Individual> next(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep));
    std::vector<std::size_t> fresh;
    while (next.size() < n) {
      const Individual& p1 = tournament(population);
      const Individual& p2 = tournament(population);
      Genome c1 = p1.genome;
      Genome c2 = p2.genome;
      if (unit(rng) < config.crossover_probability) {
        for (std::size_t k = 0; k < c1.size(); ++k) {
          if (unit(rng) < 0.5) std::swap(c1[k], c2[k]);
        }
      }
      for (Genome* c : {&c1, &c2}) {
        for (std::size_t k = 0; k < c->size(); ++k) {
          const Range r = gene_range(ranges, k);
          if (unit(rng) < config.mutation_probability) (*c)[k] += config.mutation_scale * r.width() * gauss(rng);
          (*c)[k] = r.clamp((*c)[k]);
        }
      }
      for (const Genome& c : {c1, c2}) {
        if (next.size() == n) break;
        fresh.push_back(next.size());
        next.push_back({c, {}, false});
      }
    }
    parallel_for(fresh.size(), config.threads, [&](std::size_t i) {
      auto& ind = next[fresh[i]];
      ind.fitness = objective_j(from_genome(ind.genome, ranges.cavity_radius), spec, pc, config.penalty_weight);
    });
    population = std::move(next);
    res.trace.push_back(stats_of(gen, population, spec.threshold_db));
  }

  res.best = *std::min_element(population.begin(), population.end(), fitter);
  res.population = std::move(population);
  return res;
}

std::string trace_to_csv(const std::vector<GenerationStats>& trace) {
  std::string out = "generation,best_fitness,best_j,best_mean_target_stl_db,feasible_fraction\n";
  for (const auto& t : trace) {
    out += std::to_string(t.generation) + "," + format_double(t.best_fitness) + "," + format_double(t.best_j) + "," +
           format_double(t.best_mean_target_stl) + "," + format_double(t.feasible_fraction) + "\n";
  }
  return out;
}

}  // namespace hrd::ga
