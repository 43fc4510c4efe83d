#include "hrd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hrd::nn {

namespace {

constexpr std::size_t kEvalChunk = 1024;

void init_dense(Dense& d, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  d.weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = dist(rng);
  d.bias = RowVector::Zero(static_cast<Eigen::Index>(out));
}

std::span<double> span_of(Tensor& t) { return {t.data(), static_cast<std::size_t>(t.size())}; }
std::span<double> span_of(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> span_of(const Tensor& t) { return {t.data(), static_cast<std::size_t>(t.size())}; }
std::span<const double> span_of(const RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Tensor dense_forward(const Dense& d, const Tensor& x) {
  Tensor y = x * d.weight;
  y.rowwise() += d.bias;
  return y;
}

}  // namespace

void Architecture::validate() const {
  if (input_width == 0 || output_width == 0) throw ShapeError("layer widths must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ShapeError("hidden widths must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!(bn_epsilon > 0.0)) throw std::invalid_argument("batchnorm epsilon must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw std::invalid_argument("batchnorm momentum must be in [0, 1)");
}

MLPModel MLPModel::create(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  MLPModel m;
  m.arch = arch;
  std::mt19937_64 rng(seed);
  std::size_t in = arch.input_width;
  for (auto width : arch.hidden) {
    HiddenBlock b;
    init_dense(b.dense, in, width, rng);
    const auto w = static_cast<Eigen::Index>(width);
    b.norm.gamma = RowVector::Ones(w);
    b.norm.beta = RowVector::Zero(w);
    b.norm.running_mean = RowVector::Zero(w);
    b.norm.running_var = RowVector::Ones(w);
    m.hidden.push_back(std::move(b));
    in = width;
  }
  init_dense(m.output, in, arch.output_width, rng);
  return m;
}

std::size_t MLPModel::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(output.weight.size() + output.bias.size());
  for (const auto& b : hidden) {
    n += static_cast<std::size_t>(b.dense.weight.size() + b.dense.bias.size() + b.norm.gamma.size() +
                                  b.norm.beta.size());
  }
  return n;
}

Gradients Gradients::zeros_like(const MLPModel& model) {
  Gradients g;
  for (const auto& b : model.hidden) {
    BlockGrad bg;
    bg.dense.weight = Tensor::Zero(b.dense.weight.rows(), b.dense.weight.cols());
    bg.dense.bias = RowVector::Zero(b.dense.bias.size());
    bg.gamma = RowVector::Zero(b.norm.gamma.size());
    bg.beta = RowVector::Zero(b.norm.beta.size());
    g.hidden.push_back(std::move(bg));
  }
  g.output.weight = Tensor::Zero(model.output.weight.rows(), model.output.weight.cols());
  g.output.bias = RowVector::Zero(model.output.bias.size());
  return g;
}

Tensor forward(const MLPModel& model, const Tensor& batch, Mode mode, std::mt19937_64* dropout_rng,
               ForwardCache* cache) {
  if (static_cast<std::size_t>(batch.cols()) != model.arch.input_width) {
    throw ShapeError("input has " + std::to_string(batch.cols()) + " columns, model expects " +
                     std::to_string(model.arch.input_width));
  }
  if (batch.rows() == 0) throw ShapeError("empty batch");
  if (cache) {
    cache->model = &model;
    cache->mode = mode;
    cache->blocks.clear();
  }

  const double eps = model.arch.bn_epsilon;
  const double keep = 1.0 - model.arch.dropout;
  const bool drop = mode == Mode::train && dropout_rng != nullptr && model.arch.dropout > 0.0;
  const double n = static_cast<double>(batch.rows());

  Tensor h = batch;
  for (const auto& block : model.hidden) {
    BlockCache bc;
    Tensor z = dense_forward(block.dense, h);
    Tensor xhat;
    if (mode == Mode::train) {
      bc.batch_mean = z.colwise().sum() / n;
      z.rowwise() -= bc.batch_mean;
      bc.batch_var = z.array().square().colwise().sum() / n;
      bc.inv_std = (bc.batch_var.array() + eps).rsqrt();
      xhat = z.array().rowwise() * bc.inv_std.array();
    } else {
      const RowVector inv = (block.norm.running_var.array() + eps).rsqrt();
      z.rowwise() -= block.norm.running_mean;
      xhat = z.array().rowwise() * inv.array();
    }
    Tensor y = xhat.array().rowwise() * block.norm.gamma.array();
    y.rowwise() += block.norm.beta;

    Tensor a = y.cwiseMax(0.0);
    if (drop) {
      bc.mask.resize(a.rows(), a.cols());
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < bc.mask.size(); ++i) {
        bc.mask.data()[i] = u(*dropout_rng) < keep ? 1.0 / keep : 0.0;
      }
      a.array() *= bc.mask.array();
    }

    if (cache) {
      bc.input = std::move(h);
      bc.xhat = std::move(xhat);
      bc.bn_out = std::move(y);
      cache->blocks.push_back(std::move(bc));
    }
    h = std::move(a);
  }

  Tensor out = dense_forward(model.output, h);
  if (cache) cache->output_input = std::move(h);
  return out;
}

Gradients backward(const MLPModel& model, const ForwardCache& cache, const Tensor& output_grad) {
  if (cache.model != &model || cache.mode != Mode::train || cache.blocks.size() != model.hidden.size()) {
    throw std::invalid_argument("backward needs the cache of a train-mode forward on this model");
  }
  if (output_grad.rows() != cache.output_input.rows() ||
      static_cast<std::size_t>(output_grad.cols()) != model.arch.output_width) {
    throw ShapeError("output gradient shape does not match the cached batch");
  }

  Gradients g;
  g.hidden.resize(model.hidden.size());
  const double n = static_cast<double>(output_grad.rows());

  g.output.weight = cache.output_input.transpose() * output_grad;
  g.output.bias = output_grad.colwise().sum();
  Tensor grad = output_grad * model.output.weight.transpose();

  for (std::size_t k = model.hidden.size(); k-- > 0;) {
    const auto& block = model.hidden[k];
    const auto& bc = cache.blocks[k];
    auto& bg = g.hidden[k];

    if (bc.mask.size() != 0) grad.array() *= bc.mask.array();
    grad.array() *= (bc.bn_out.array() > 0.0).cast<double>();

    bg.gamma = (grad.array() * bc.xhat.array()).colwise().sum();
    bg.beta = grad.colwise().sum();

    // d xhat, then through the batch statistics.
    Tensor dxhat = grad.array().rowwise() * block.norm.gamma.array();
    const RowVector sum_dxhat = dxhat.colwise().sum();
    const RowVector sum_dxhat_xhat = (dxhat.array() * bc.xhat.array()).colwise().sum();
    Tensor dz = n * dxhat;
    dz.rowwise() -= sum_dxhat;
    dz.array() -= bc.xhat.array().rowwise() * sum_dxhat_xhat.array();
    dz.array().rowwise() *= (bc.inv_std.array() / n);

    bg.dense.weight = bc.input.transpose() * dz;
    bg.dense.bias = dz.colwise().sum();
    if (k > 0) grad = dz * block.dense.weight.transpose();
  }
  return g;
}

void update_running_stats(MLPModel& model, const ForwardCache& cache) {
  if (cache.model != &model || cache.mode != Mode::train) {
    throw std::invalid_argument("running statistics need a train-mode cache of this model");
  }
  const double mom = model.arch.bn_momentum;
  for (std::size_t k = 0; k < model.hidden.size(); ++k) {
    auto& norm = model.hidden[k].norm;
    const auto& bc = cache.blocks[k];
    const double n = static_cast<double>(bc.input.rows());
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    norm.running_mean = mom * norm.running_mean + (1.0 - mom) * bc.batch_mean;
    norm.running_var = mom * norm.running_var + (1.0 - mom) * unbias * bc.batch_var;
  }
}

Loss mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("prediction and target shapes differ");
  }
  if (pred.size() == 0) throw ShapeError("empty loss input");
  const double count = static_cast<double>(pred.size());
  Loss l;
  const Tensor diff = pred - target;
  l.value = diff.squaredNorm() / count;
  l.grad = (2.0 / count) * diff;
  return l;
}

std::vector<std::span<double>> parameter_spans(MLPModel& model) {
  std::vector<std::span<double>> out;
  for (auto& b : model.hidden) {
    out.push_back(span_of(b.dense.weight));
    out.push_back(span_of(b.dense.bias));
    out.push_back(span_of(b.norm.gamma));
    out.push_back(span_of(b.norm.beta));
  }
  out.push_back(span_of(model.output.weight));
  out.push_back(span_of(model.output.bias));
  return out;
}

std::vector<std::span<const double>> gradient_spans(const Gradients& grads) {
  std::vector<std::span<const double>> out;
  for (const auto& b : grads.hidden) {
    out.push_back(span_of(b.dense.weight));
    out.push_back(span_of(b.dense.bias));
    out.push_back(span_of(b.gamma));
    out.push_back(span_of(b.beta));
  }
  out.push_back(span_of(grads.output.weight));
  out.push_back(span_of(grads.output.bias));
  return out;
}

void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) throw ShapeError("parameter and gradient lists differ");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (params[k].size() != grads[k].size()) throw ShapeError("parameter and gradient sizes differ");
    for (double g : grads[k]) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient encountered; aborting training");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  const auto& hp = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
      params[k][i] -= hp.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (patience == 0) throw std::invalid_argument("patience must be at least 1");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be at least 1");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

double evaluate_mse(const MLPModel& model, const Tensor& x, const Tensor& y) {
  if (x.rows() != y.rows() || x.rows() == 0) throw ShapeError("evaluation set is empty or misaligned");
  double total = 0.0;
  for (Eigen::Index start = 0; start < x.rows(); start += kEvalChunk) {
    const Eigen::Index len = std::min<Eigen::Index>(kEvalChunk, x.rows() - start);
    const Tensor pred = forward(model, x.middleRows(start, len), Mode::infer);
    total += (pred - y.middleRows(start, len)).squaredNorm();
  }
  return total / static_cast<double>(y.size());
}

TrainResult fit(MLPModel& model, const Tensor& train_x, const Tensor& train_y, const Tensor& val_x,
                const Tensor& val_y, const TrainConfig& config) {
  config.validate();
  if (train_x.rows() == 0 || val_x.rows() == 0) throw TrainingError("training and validation parts must be non-empty");
  if (train_x.rows() != train_y.rows() || val_x.rows() != val_y.rows()) throw ShapeError("inputs and targets misaligned");

  std::mt19937_64 rng(config.seed);
  AdamState adam{config.adam, {}, {}, 0};
  TrainResult result;

  result.best_val_mse = evaluate_mse(model, val_x, val_y);
  result.curve.push_back({0, evaluate_mse(model, train_x, train_y), result.best_val_mse});
  MLPModel best = model;

  const auto n = static_cast<std::size_t>(train_x.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Tensor bx(0, train_x.cols());
  Tensor by(0, train_y.cols());
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      bx.resize(static_cast<Eigen::Index>(len), train_x.cols());
      by.resize(static_cast<Eigen::Index>(len), train_y.cols());
      for (std::size_t r = 0; r < len; ++r) {
        bx.row(static_cast<Eigen::Index>(r)) = train_x.row(order[start + r]);
        by.row(static_cast<Eigen::Index>(r)) = train_y.row(order[start + r]);
      }
      ForwardCache cache;
      const Tensor pred = forward(model, bx, Mode::train, &rng, &cache);
      const Loss loss = mse_loss(pred, by);
      if (!std::isfinite(loss.value)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
      const Gradients grads = backward(model, cache, loss.grad);
      update_running_stats(model, cache);
      adam_step(adam, parameter_spans(model), gradient_spans(grads));
      loss_sum += loss.value;
      ++batches;
    }

    const double val = evaluate_mse(model, val_x, val_y);
    if (!std::isfinite(val)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.curve.push_back({epoch, loss_sum / static_cast<double>(batches), val});
    if (val < result.best_val_mse) {
      result.best_val_mse = val;
      result.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model = std::move(best);
  return result;
}

Tensors make_tensors(const data::Dataset& dataset, const data::NormalizationStats& stats) {
  const auto rows = static_cast<Eigen::Index>(dataset.size());
  const auto width = static_cast<Eigen::Index>(stats.input_width());
  Tensors t{Tensor(rows, width), Tensor(rows, 6)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& s = dataset.samples[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(s.spectrum.values.size()) != width) throw ShapeError("spectrum width mismatch");
    for (Eigen::Index k = 0; k < width; ++k) {
      t.x(r, k) = stats.normalize_input(static_cast<std::size_t>(k), s.spectrum.values[static_cast<std::size_t>(k)]);
    }
    const auto e = s.eep.flat();
    for (Eigen::Index k = 0; k < 6; ++k) {
      t.y(r, k) = stats.normalize_output(static_cast<std::size_t>(k), e[static_cast<std::size_t>(k)]);
    }
  }
  return t;
}

std::vector<EquivalentElectricalParams> predict(const MLPModel& model,
                                                const std::vector<StlSpectrum>& spectra) {
  const auto& stats = model.normalization;
  if (stats.input_width() != model.arch.input_width || model.arch.output_width != 6) {
    throw std::invalid_argument("model has no normalization statistics attached");
  }
  const auto width = static_cast<Eigen::Index>(model.arch.input_width);
  Tensor x(static_cast<Eigen::Index>(spectra.size()), width);
  for (std::size_t r = 0; r < spectra.size(); ++r) {
    const auto& s = spectra[r];
    if (!(s.grid == model.grid) || static_cast<Eigen::Index>(s.values.size()) != width) {
      throw ShapeError("spectrum grid does not match the model's training grid");
    }
    for (Eigen::Index k = 0; k < width; ++k) {
      x(static_cast<Eigen::Index>(r), k) =
          stats.normalize_input(static_cast<std::size_t>(k), s.values[static_cast<std::size_t>(k)]);
    }
  }
  std::vector<EquivalentElectricalParams> out;
  out.reserve(spectra.size());
  if (spectra.empty()) return out;
  const Tensor y = forward(model, x, Mode::infer);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    std::array<double, 6> v{};
    for (std::size_t k = 0; k < 6; ++k) {
      v[k] = stats.output[k].clamp(stats.denormalize_output(k, y(r, static_cast<Eigen::Index>(k))));
    }
    out.push_back(EquivalentElectricalParams::from_flat(v));
  }
  return out;
}

EquivalentElectricalParams predict(const MLPModel& model, const StlSpectrum& spectrum) {
  return predict(model, std::vector<StlSpectrum>{spectrum}).front();
}

}  // namespace hrd::nn
