#include "dsdf/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "dsdf/errors.hpp"
#include "dsdf/kernels.hpp"

namespace dsdf::nn {
namespace {

// Keeps sigmoid outputs strictly inside (0, 1) in double precision.
constexpr double kSigmoidEdge = 1e-15;

std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

double sigmoid(double x) {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, kSigmoidEdge, 1.0 - kSigmoidEdge);
}

namespace {

void apply_activation(Activation act, std::span<double> values) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Sigmoid:
      for (double& v : values) v = sigmoid(v);
      break;
  }
}

// Turns dL/d(post-activation) into dL/d(pre-activation) in place.
void activation_backward(Activation act, std::span<const double> post, std::span<double> grad) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (post[i] <= 0.0) grad[i] = 0.0;
      }
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= post[i] * (1.0 - post[i]);
      break;
  }
}

// Raw network inputs (observation histories, states) are mostly zeros; the
// first layer walks only the nonzero entries of such rows.
constexpr double kSparseDensity = 0.3;

double density(const Matrix& m) {
  if (m.data().empty()) return 1.0;
  std::size_t nz = 0;
  for (double v : m.data()) nz += v != 0.0;
  return static_cast<double>(nz) / static_cast<double>(m.data().size());
}

// Positions and values of the nonzero entries of row (branch-free compaction).
void nonzeros(std::span<const double> row, std::vector<std::uint32_t>& idx, std::vector<double>& coef) {
  idx.resize(row.size());
  coef.resize(row.size());
  std::size_t n = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    idx[n] = static_cast<std::uint32_t>(i);
    coef[n] = row[i];
    n += row[i] != 0.0;
  }
  idx.resize(n);
  coef.resize(n);
}

std::vector<double> transposed(const double* w, std::size_t out, std::size_t in) {
  std::vector<double> t(in * out);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) t[i * out + o] = w[o * in + i];
  }
  return t;
}

// Below this many rows the needed weight columns are copied per row instead of
// transposing the whole matrix; both feed the same kernel call, so results are
// identical either way.
constexpr std::size_t kTransposeRows = 16;

// y = x * w^T, choosing per row between the dense kernel and a walk over the
// nonzero entries; each row's result depends only on that row.
void sparse_aware_first_layer(const Matrix& x, const double* w, const LayerShape& layer, Matrix& y) {
  const auto& k = kernels::active();
  const std::size_t limit = static_cast<std::size_t>(kSparseDensity * static_cast<double>(layer.in));
  std::vector<double> wt, cols, coef, dense_in, dense_out;
  std::vector<std::uint32_t> idx, local;
  std::vector<std::size_t> dense_rows;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    nonzeros(row, idx, coef);
    auto out = y.row(r);
    if (idx.size() > limit) {
      dense_rows.push_back(r);
      continue;
    }
    std::fill(out.begin(), out.end(), 0.0);
    if (x.rows() >= kTransposeRows) {
      if (wt.empty()) wt = transposed(w, layer.out, layer.in);
      k.gather_axpy(wt.data(), layer.out, idx.data(), coef.data(), idx.size(), out.data(), layer.out);
      continue;
    }
    cols.resize(idx.size() * layer.out);
    local.resize(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      local[j] = static_cast<std::uint32_t>(j);
      for (std::size_t o = 0; o < layer.out; ++o) cols[j * layer.out + o] = w[o * layer.in + idx[j]];
    }
    k.gather_axpy(cols.data(), layer.out, local.data(), coef.data(), idx.size(), out.data(), layer.out);
  }
  if (dense_rows.empty()) return;
  // gemm_nt is row independent, so dense rows can go through it together.
  dense_in.resize(dense_rows.size() * layer.in);
  dense_out.resize(dense_rows.size() * layer.out);
  for (std::size_t j = 0; j < dense_rows.size(); ++j) {
    const auto row = x.row(dense_rows[j]);
    std::copy(row.begin(), row.end(), dense_in.begin() + static_cast<std::ptrdiff_t>(j * layer.in));
  }
  k.gemm_nt(dense_in.data(), w, dense_out.data(), dense_rows.size(), layer.in, layer.out);
  for (std::size_t j = 0; j < dense_rows.size(); ++j) {
    const auto src = dense_out.begin() + static_cast<std::ptrdiff_t>(j * layer.out);
    std::copy(src, src + static_cast<std::ptrdiff_t>(layer.out), y.row(dense_rows[j]).begin());
  }
}

// dw += dy^T * x for mostly-zero x.
void sparse_weight_grad(const Matrix& dy, const Matrix& x, double* dw, const LayerShape& layer) {
  const auto& k = kernels::active();
  std::vector<double> dwt(layer.in * layer.out, 0.0), coef;
  std::vector<std::uint32_t> idx;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    nonzeros(x.row(r), idx, coef);
    k.scatter_axpy(dwt.data(), layer.out, idx.data(), coef.data(), idx.size(), dy.row(r).data(), layer.out);
  }
  for (std::size_t o = 0; o < layer.out; ++o) {
    for (std::size_t i = 0; i < layer.in; ++i) dw[o * layer.in + i] += dwt[i * layer.out + o];
  }
}

std::vector<std::size_t> layer_offsets(std::span<const LayerShape> layers) {
  std::vector<std::size_t> offsets;
  offsets.reserve(layers.size());
  std::size_t at = 0;
  for (const auto& l : layers) {
    offsets.push_back(at);
    at += l.in * l.out + l.out;
  }
  return offsets;
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Identity:
      return "identity";
    case Activation::Relu:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ConfigError("matrix data length != rows * cols");
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::vector<LayerShape> chain(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                              Activation hidden_act, Activation out_act) {
  std::vector<LayerShape> layers;
  std::size_t prev = in;
  for (std::size_t h : hidden) {
    layers.push_back({prev, h, hidden_act});
    prev = h;
  }
  layers.push_back({prev, out, out_act});
  return layers;
}

std::size_t param_count(std::span<const LayerShape> layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.in * l.out + l.out;
  return n;
}

void validate_shapes(std::span<const LayerShape> layers) {
  if (layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in == 0 || layers[l].out == 0) throw ConfigError("zero-width layer");
    if (l > 0 && layers[l - 1].out != layers[l].in) {
      throw ConfigError("layer " + std::to_string(l) + " input width " +
                        std::to_string(layers[l].in) + " does not match previous output " +
                        std::to_string(layers[l - 1].out));
    }
  }
}

Mlp::Mlp(std::vector<LayerShape> layers)
    : Mlp(layers, std::vector<double>(nn::param_count(layers), 0.0)) {}

Mlp::Mlp(std::vector<LayerShape> layers, std::vector<double> params)
    : layers_(std::move(layers)), params_(std::move(params)), revision_(next_revision()) {
  validate_shapes(layers_);
  if (params_.size() != nn::param_count(layers_)) {
    throw ConfigError("parameter vector length does not match layer shapes");
  }
  offsets_ = layer_offsets(layers_);
}

Mlp Mlp::glorot(std::vector<LayerShape> layers, std::mt19937_64& rng) {
  Mlp net(std::move(layers));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& s = net.shape(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : net.weights(l)) w = dist(rng);
  }
  return net;
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

void Mlp::touch() { revision_ = next_revision(); }

std::span<double> Mlp::params() {
  touch();
  return params_;
}

std::span<const double> Mlp::weights(std::size_t l) const {
  return {params_.data() + offsets_[l], layers_[l].in * layers_[l].out};
}

std::span<double> Mlp::weights(std::size_t l) {
  touch();
  return {params_.data() + offsets_[l], layers_[l].in * layers_[l].out};
}

std::span<const double> Mlp::bias(std::size_t l) const {
  return {params_.data() + offsets_[l] + layers_[l].in * layers_[l].out, layers_[l].out};
}

std::span<double> Mlp::bias(std::size_t l) {
  touch();
  return {params_.data() + offsets_[l] + layers_[l].in * layers_[l].out, layers_[l].out};
}

Matrix forward_batch(std::span<const LayerShape> layers, std::span<const double> params,
                     const Matrix& input, Tape* tape) {
  if (layers.empty() || input.cols() != layers.front().in) {
    throw ConfigError("input width " + std::to_string(input.cols()) +
                      " does not match network input " +
                      std::to_string(layers.empty() ? 0 : layers.front().in));
  }
  if (params.size() != param_count(layers)) {
    throw ConfigError("parameter span length does not match layer shapes");
  }
  const auto& k = kernels::active();
  const std::size_t rows = input.rows();
  if (tape) {
    tape->shapes.assign(layers.begin(), layers.end());
    tape->activations.clear();
    tape->activations.reserve(layers.size() + 1);
    tape->activations.push_back(input);
  }
  Matrix current;
  const Matrix* in = &input;
  std::size_t offset = 0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& layer = layers[li];
    const double* w = params.data() + offset;
    const double* b = w + layer.in * layer.out;
    Matrix next(rows, layer.out);
    if (li == 0) {
      sparse_aware_first_layer(*in, w, layer, next);
    } else {
      k.gemm_nt(in->data().data(), w, next.data().data(), rows, layer.in, layer.out);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      auto out = next.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) out[o] += b[o];
      apply_activation(layer.act, out);
    }
    offset += layer.in * layer.out + layer.out;
    if (tape) tape->activations.push_back(next);
    current = std::move(next);
    in = &current;
  }
  return current;
}

Gradients backward_batch(std::span<const LayerShape> layers, std::span<const double> params,
                         const Tape& tape, const Matrix& output_grad, bool want_input_grad) {
  if (tape.shapes.size() != layers.size() ||
      !std::equal(layers.begin(), layers.end(), tape.shapes.begin()) ||
      tape.activations.size() != layers.size() + 1) {
    throw UsageError("tape was recorded for a different network");
  }
  const std::size_t rows = tape.activations.front().rows();
  if (output_grad.rows() != rows || output_grad.cols() != layers.back().out) {
    throw UsageError("output gradient shape does not match the recorded forward pass");
  }
  const auto& k = kernels::active();
  const auto offsets = layer_offsets(layers);
  Gradients grads;
  grads.params.assign(params.size(), 0.0);

  Matrix delta = output_grad;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const Matrix& post = tape.activations[li + 1];
    const Matrix& in = tape.activations[li];
    for (std::size_t r = 0; r < rows; ++r) activation_backward(layer.act, post.row(r), delta.row(r));

    double* gw = grads.params.data() + offsets[li];
    double* gb = gw + layer.in * layer.out;
    if (li == 0 && density(in) < kSparseDensity) {
      sparse_weight_grad(delta, in, gw, layer);
    } else {
      k.gemm_tn(delta.data().data(), in.data().data(), gw, rows, layer.in, layer.out);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto d = delta.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) gb[o] += d[o];
    }
    if (li > 0 || want_input_grad) {
      Matrix prev(rows, layer.in);
      k.gemm_nn(delta.data().data(), params.data() + offsets[li], prev.data().data(), rows,
                layer.in, layer.out);
      delta = std::move(prev);
    }
  }
  if (want_input_grad) grads.input = std::move(delta);
  return grads;
}

Matrix infer(const Mlp& net, const Matrix& input) {
  return forward_batch(net.shapes(), net.params(), input, nullptr);
}

std::vector<double> infer(const Mlp& net, std::span<const double> input) {
  Matrix x(1, input.size(), std::vector<double>(input.begin(), input.end()));
  Matrix y = infer(net, x);
  return {y.data().begin(), y.data().end()};
}

BatchForward forward(const Mlp& net, const Matrix& input) {
  BatchForward result;
  result.output = forward_batch(net.shapes(), net.params(), input, &result.tape);
  result.tape.revision = net.revision();
  return result;
}

VectorForward forward(const Mlp& net, std::span<const double> input) {
  Matrix x(1, input.size(), std::vector<double>(input.begin(), input.end()));
  BatchForward batch = forward(net, x);
  return {{batch.output.data().begin(), batch.output.data().end()}, std::move(batch.tape)};
}

Gradients backward(const Mlp& net, const Tape& tape, const Matrix& output_grad,
                   bool want_input_grad) {
  if (tape.revision != 0 && tape.revision != net.revision()) {
    throw UsageError("stale tape: network parameters changed since the forward pass");
  }
  return backward_batch(net.shapes(), net.params(), tape, output_grad, want_input_grad);
}

Gradients backward(const Mlp& net, const Tape& tape, std::span<const double> output_grad) {
  Matrix g(1, output_grad.size(), std::vector<double>(output_grad.begin(), output_grad.end()));
  return backward(net, tape, g, true);
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

double compare_gradients(const Mlp& net, std::span<const double> input, const LossFn& loss,
                         const Gradients& analytic, double step) {
  std::vector<double> scratch(net.output_dim());
  auto eval = [&](const Mlp& n, std::span<const double> x) {
    return loss(infer(n, x), scratch);
  };

  double worst = 0.0;
  Mlp probe = net;
  auto params = probe.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = eval(probe, input);
    params[i] = saved - step;
    const double down = eval(probe, input);
    params[i] = saved;
    worst = std::max(worst, relative_error(analytic.params[i], (up - down) / (2.0 * step)));
  }
  if (!analytic.input.empty()) {
    std::vector<double> x(input.begin(), input.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + step;
      const double up = eval(net, x);
      x[i] = saved - step;
      const double down = eval(net, x);
      x[i] = saved;
      worst = std::max(worst, relative_error(analytic.input(0, i), (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

double grad_check(const Mlp& net, std::span<const double> input, const LossFn& loss, double step) {
  VectorForward fwd = forward(net, input);
  std::vector<double> dout(net.output_dim());
  loss(fwd.output, dout);
  Gradients g = backward(net, fwd.tape, dout);
  return compare_gradients(net, input, loss, g, step);
}

OptimizerState::OptimizerState(std::size_t param_count, AdamConfig config)
    : config_(config), m_(param_count, 0.0), v_(param_count, 0.0) {
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void optimizer_step(std::span<double> params, std::span<const double> grads,
                    OptimizerState& state) {
  if (params.size() != grads.size() || grads.size() != state.m_.size()) {
    throw ConfigError("optimizer shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient at parameter " + std::to_string(i));
    }
  }
  ++state.step_;
  const auto& cfg = state.config_;
  const double t = static_cast<double>(state.step_);
  const kernels::AdamCoeffs c{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                              1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t)};
  kernels::active().adam(params.data(), grads.data(), state.m_.data(), state.v_.data(),
                         params.size(), c);
}

void optimizer_step(Mlp& net, std::span<const double> grads, OptimizerState& state) {
  optimizer_step(net.params(), grads, state);
}

nlohmann::json to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : net.shapes()) {
    layers.push_back({{"in", s.in}, {"out", s.out}, {"activation", to_string(s.act)}});
  }
  return {{"layers", layers}, {"params", std::vector<double>(net.params().begin(), net.params().end())}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    std::vector<LayerShape> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                        activation_from_string(l.at("activation").get<std::string>())});
    }
    return Mlp(std::move(layers), j.at("params").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network checkpoint: ") + e.what());
  }
}

nlohmann::json to_json(const OptimizerState& state) {
  const auto& c = state.config_;
  return {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
          {"step", state.step_}, {"m", state.m_}, {"v", state.v_}};
}

OptimizerState optimizer_from_json(const nlohmann::json& j) {
  try {
    AdamConfig c{j.at("lr").get<double>(), j.at("beta1").get<double>(),
                 j.at("beta2").get<double>(), j.at("eps").get<double>()};
    OptimizerState s(j.at("m").size(), c);
    s.m_ = j.at("m").get<std::vector<double>>();
    s.v_ = j.at("v").get<std::vector<double>>();
    s.step_ = j.at("step").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed optimizer checkpoint: ") + e.what());
  }
}

}  // namespace dsdf::nn
