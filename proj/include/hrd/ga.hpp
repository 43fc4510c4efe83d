// Real-coded genetic algorithm over the six free THR dimensions, maximizing
// the summed STL at two target frequencies subject to a minimum STL at each.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "hrd/acoustics.hpp"
#include "hrd/design.hpp"
#include "hrd/nn.hpp"

namespace hrd::ga {

// Genome order: a1, l1, h1, a2, l2, h2 (m).
using Genome = std::array<double, 6>;

Genome to_genome(const GeometricParams& gp);
GeometricParams from_genome(const Genome& g, double cavity_radius);
Range gene_range(const GeometryRanges& ranges, std::size_t gene);

struct ObjectiveSpec {
  double f1 = 150.0;
  double f2 = 250.0;
  double threshold_db = 10.0;
  double cross_section = 0.01;
};

struct Objective {
  double j = 0.0;         // -(t(f1) + t(f2))
  double penalized = 0.0; // j + weight * shortfall
  double stl_f1 = 0.0;
  double stl_f2 = 0.0;

  double mean_target_stl() const { return 0.5 * (stl_f1 + stl_f2); }
  bool feasible(double threshold) const { return stl_f1 >= threshold && stl_f2 >= threshold; }
};

Objective objective_j(const GeometricParams& gp, const ObjectiveSpec& spec, const PhysicalConstants& pc,
                      double penalty_weight = 1000.0);

struct Individual {
  Genome genome{};
  Objective fitness;
  bool surrogate_seeded = false;
};

struct GAConfig {
  std::size_t population = 50;
  std::size_t generations = 50;
  std::size_t elite_seeds = 0;
  std::size_t tournament = 3;
  double crossover_probability = 0.9;
  double mutation_probability = 0.1;
  double mutation_scale = 0.05; // fraction of each gene's range
  std::size_t elitism = 2;
  double penalty_weight = 1000.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct InitReport {
  std::size_t random = 0;
  std::size_t seeded = 0;
};

// Random individuals are drawn first from the config seed; with elite_seeds > 0
// the first (population - elite_seeds) of that same stream are kept and the
// surrogate designs are appended. Throws ConfigError if seeds are requested
// without a model.
std::vector<Individual> init_population(const GAConfig& config, const ObjectiveSpec& spec,
                                        const PhysicalConstants& pc, const GeometryRanges& ranges,
                                        const nn::MLPModel* model, InitReport* report = nullptr);

struct GenerationStats {
  std::size_t generation = 0;
  double best_fitness = 0.0;
  double best_j = 0.0;
  double best_mean_target_stl = 0.0;
  double feasible_fraction = 0.0;
};

struct EvolveResult {
  std::vector<Individual> population;
  std::vector<GenerationStats> trace; // generation 0 is the initial population
  Individual best;
};

EvolveResult evolve(std::vector<Individual> population, const GAConfig& config, const ObjectiveSpec& spec,
                    const PhysicalConstants& pc, const GeometryRanges& ranges);

std::string trace_to_csv(const std::vector<GenerationStats>& trace);

}  // namespace hrd::ga
