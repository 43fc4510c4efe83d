// Fully-connected surrogate: spectrum (normalized) -> circuit (normalized).
//
// Layer stack per hidden width: dense -> batchnorm -> ReLU -> dropout, then a
// linear dense output. Dropout is inverted (scaled at train time), so infer
// mode is a plain deterministic function of the parameters.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hrd/acoustics.hpp"
#include "hrd/dataset.hpp"

namespace hrd::nn {

// Row-major (rows = batch) dense matrix.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Architecture {
  std::size_t input_width = 500;
  std::vector<std::size_t> hidden{450, 250, 220};
  std::size_t output_width = 6;
  double dropout = 0.1;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9; // running = momentum * running + (1 - momentum) * batch

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct Dense {
  Tensor weight; // in x out
  RowVector bias;
};

struct BatchNorm {
  RowVector gamma;
  RowVector beta;
  RowVector running_mean;
  RowVector running_var;
};

struct HiddenBlock {
  Dense dense;
  BatchNorm norm;
};

struct MLPModel {
  Architecture arch;
  std::vector<HiddenBlock> hidden;
  Dense output;
  // Attached by training; used by predict().
  data::NormalizationStats normalization;
  SpectrumGrid grid;

  // He-uniform weights, zero biases, unit batchnorm scale.
  static MLPModel create(const Architecture& arch, std::uint64_t seed);
  std::size_t parameter_count() const;
};

enum class Mode { train, infer };

struct BlockCache {
  Tensor input;     // dense input
  Tensor xhat;      // normalized pre-activation
  RowVector inv_std;
  RowVector batch_mean;
  RowVector batch_var; // biased
  Tensor bn_out;    // gamma * xhat + beta
  Tensor mask;      // dropout scale per element, empty when no dropout
};

struct ForwardCache {
  const MLPModel* model = nullptr;
  Mode mode = Mode::infer;
  std::vector<BlockCache> blocks;
  Tensor output_input;
};

struct Gradients {
  struct DenseGrad {
    Tensor weight;
    RowVector bias;
  };
  struct BlockGrad {
    DenseGrad dense;
    RowVector gamma;
    RowVector beta;
  };
  std::vector<BlockGrad> hidden;
  DenseGrad output;

  static Gradients zeros_like(const MLPModel& model);
};

// Train mode uses batch statistics and, when dropout_rng is non-null, samples
// dropout masks from it; a null rng keeps every unit. Infer mode uses the
// running statistics and ignores dropout_rng.
Tensor forward(const MLPModel& model, const Tensor& batch, Mode mode,
               std::mt19937_64* dropout_rng = nullptr, ForwardCache* cache = nullptr);

// Exact reverse-mode gradients for the batch recorded in cache.
Gradients backward(const MLPModel& model, const ForwardCache& cache, const Tensor& output_grad);

// Folds the batch statistics recorded in cache into the running statistics.
void update_running_stats(MLPModel& model, const ForwardCache& cache);

struct Loss {
  double value = 0.0;
  Tensor grad;
};

Loss mse_loss(const Tensor& pred, const Tensor& target);

// Parameters and gradients flattened into matching, ordered spans.
std::vector<std::span<double>> parameter_spans(MLPModel& model);
std::vector<std::span<const double>> gradient_spans(const Gradients& grads);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam. Throws TrainingError on a non-finite gradient before
// touching any parameter.
void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads);

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve; // epoch 0 is the untrained model
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

// Mini-batch training with early stopping; model ends holding the parameters
// of the best validation epoch.
TrainResult fit(MLPModel& model, const Tensor& train_x, const Tensor& train_y, const Tensor& val_x,
                const Tensor& val_y, const TrainConfig& config);

// Infer-mode MSE, evaluated in fixed-size chunks.
double evaluate_mse(const MLPModel& model, const Tensor& x, const Tensor& y);

struct Tensors {
  Tensor x;
  Tensor y;
};

Tensors make_tensors(const data::Dataset& dataset, const data::NormalizationStats& stats);

EquivalentElectricalParams predict(const MLPModel& model, const StlSpectrum& spectrum);
std::vector<EquivalentElectricalParams> predict(const MLPModel& model,
                                                const std::vector<StlSpectrum>& spectra);

}  // namespace hrd::nn
