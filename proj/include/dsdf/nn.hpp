#pragma once
// Minimal dense MLP substrate: batched forward passes with a tape, reverse-mode
// gradients, finite-difference checking and an Adam optimiser.
//
// Parameters of an Mlp live in one contiguous vector. Layer l occupies
// [weights (out x in, row-major) | bias (out)] starting at offset(l). The same
// layout is used by hyper-generated networks, which run directly over a
// borrowed parameter span.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dsdf::nn {

enum class Activation { Identity, Relu, Sigmoid };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double value);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::Identity;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Logistic function clamped to [1e-15, 1 - 1e-15].
double sigmoid(double x);

// in -> hidden... -> out, hidden layers share one activation.
std::vector<LayerShape> chain(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                              Activation hidden_act, Activation out_act);

std::size_t param_count(std::span<const LayerShape> layers);

// Throws ConfigError if consecutive layers do not chain or a size is zero.
void validate_shapes(std::span<const LayerShape> layers);

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<LayerShape> layers);
  Mlp(std::vector<LayerShape> layers, std::vector<double> params);

  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(std::vector<LayerShape> layers, std::mt19937_64& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t param_count() const { return params_.size(); }
  std::span<const LayerShape> shapes() const { return layers_; }
  const LayerShape& shape(std::size_t l) const { return layers_[l]; }

  std::span<const double> params() const { return params_; }
  std::span<double> params();
  std::span<const double> weights(std::size_t l) const;
  std::span<double> weights(std::size_t l);
  std::span<const double> bias(std::size_t l) const;
  std::span<double> bias(std::size_t l);

  // Changes whenever mutable access to the parameters is handed out, so a
  // tape recorded earlier can be recognised as stale.
  std::uint64_t revision() const { return revision_; }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.layers_ == b.layers_ && a.params_ == b.params_;
  }

 private:
  void touch();

  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t revision_ = 0;
};

// Cached activations of a batched forward pass. activations[0] is the input,
// activations[l + 1] the post-activation output of layer l.
struct Tape {
  std::uint64_t revision = 0;
  std::vector<LayerShape> shapes;
  std::vector<Matrix> activations;
};

struct Gradients {
  std::vector<double> params;  // same layout as Mlp::params()
  Matrix input;                // dL/dinput, empty when not requested
};

// Raw primitives over borrowed parameters.
Matrix forward_batch(std::span<const LayerShape> layers, std::span<const double> params,
                     const Matrix& input, Tape* tape);
Gradients backward_batch(std::span<const LayerShape> layers, std::span<const double> params,
                         const Tape& tape, const Matrix& output_grad, bool want_input_grad);

struct BatchForward {
  Matrix output;
  Tape tape;
};

struct VectorForward {
  std::vector<double> output;
  Tape tape;
};

Matrix infer(const Mlp& net, const Matrix& input);
std::vector<double> infer(const Mlp& net, std::span<const double> input);
BatchForward forward(const Mlp& net, const Matrix& input);
VectorForward forward(const Mlp& net, std::span<const double> input);
Gradients backward(const Mlp& net, const Tape& tape, const Matrix& output_grad,
                   bool want_input_grad = true);
Gradients backward(const Mlp& net, const Tape& tape, std::span<const double> output_grad);

// |a - b| / max(|a|, |b|, 1e-6)
double relative_error(double analytic, double numeric);

// Loss over a single output vector; writes dL/doutput into grad, returns L.
using LossFn = std::function<double(std::span<const double> output, std::span<double> grad)>;

// Worst relative error between the supplied gradients and central finite
// differences of the loss, over every parameter and input coordinate.
double compare_gradients(const Mlp& net, std::span<const double> input, const LossFn& loss,
                         const Gradients& analytic, double step = 1e-5);

double grad_check(const Mlp& net, std::span<const double> input, const LossFn& loss,
                  double step = 1e-5);

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(std::size_t param_count, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  std::size_t size() const { return m_.size(); }

 private:
  friend void optimizer_step(std::span<double>, std::span<const double>, OptimizerState&);
  friend nlohmann::json to_json(const OptimizerState&);
  friend OptimizerState optimizer_from_json(const nlohmann::json&);

  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_ = 0;
};

// Throws TrainingError on a non-finite gradient entry (parameters untouched).
void optimizer_step(std::span<double> params, std::span<const double> grads,
                    OptimizerState& state);
void optimizer_step(Mlp& net, std::span<const double> grads, OptimizerState& state);

// Checkpoint format: {"layers":[{"in","out","activation"}...],"params":[...]}
nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OptimizerState& state);
OptimizerState optimizer_from_json(const nlohmann::json& j);

}  // namespace dsdf::nn
