#include "dsdf/mixer.hpp"

#include <array>
#include <cmath>

#include "dsdf/errors.hpp"

namespace dsdf::mixer {
namespace {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }
double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_inputs(const MixingNet& net, const nn::Matrix& q, const nn::Matrix& states) {
  if (q.cols() != net.agents) throw ConfigError("mixer expects one utility per agent");
  if (q.rows() != states.rows()) throw ConfigError("mixer q/state row mismatch");
  if (net.kind == MixerKind::Qmix && states.cols() != net.state_dim) {
    throw ConfigError("mixer state width mismatch");
  }
}

}  // namespace

MixingNet MixingNet::qmix(std::size_t agents, std::size_t state_dim, std::size_t embed,
                          std::mt19937_64& rng) {
  using nn::Activation;
  MixingNet net;
  net.kind = MixerKind::Qmix;
  net.agents = agents;
  net.state_dim = state_dim;
  net.embed = embed;
  net.hyper_w1 = nn::Mlp::glorot({{state_dim, agents * embed, Activation::Identity}}, rng);
  net.hyper_b1 = nn::Mlp::glorot({{state_dim, embed, Activation::Identity}}, rng);
  net.hyper_w2 = nn::Mlp::glorot({{state_dim, embed, Activation::Identity}}, rng);
  net.hyper_b2 = nn::Mlp::glorot(
      {{state_dim, embed, Activation::Relu}, {embed, 1, Activation::Identity}}, rng);
  return net;
}

MixingNet MixingNet::sum(std::size_t agents, std::size_t state_dim) {
  MixingNet net;
  net.kind = MixerKind::Sum;
  net.agents = agents;
  net.state_dim = state_dim;
  net.embed = 0;
  return net;
}

std::vector<nn::Mlp*> MixingNet::parts() {
  if (kind == MixerKind::Sum) return {};
  return {&hyper_w1, &hyper_b1, &hyper_w2, &hyper_b2};
}

std::vector<const nn::Mlp*> MixingNet::parts() const {
  if (kind == MixerKind::Sum) return {};
  return {&hyper_w1, &hyper_b1, &hyper_w2, &hyper_b2};
}

std::size_t MixingNet::param_count() const {
  std::size_t n = 0;
  for (const auto* p : parts()) n += p->param_count();
  return n;
}

MixForward mix_forward(const MixingNet& net, const nn::Matrix& q, const nn::Matrix& states) {
  check_inputs(net, q, states);
  const std::size_t rows = q.rows();
  MixForward out;
  out.q_tot.assign(rows, 0.0);
  out.tape.q = q;
  if (net.kind == MixerKind::Sum) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (double v : q.row(r)) out.q_tot[r] += v;
    }
    return out;
  }

  auto w1 = nn::forward(net.hyper_w1, states);
  auto b1 = nn::forward(net.hyper_b1, states);
  auto w2 = nn::forward(net.hyper_w2, states);
  auto b2 = nn::forward(net.hyper_b2, states);

  const std::size_t m = net.embed;
  nn::Matrix pre(rows, m), hidden(rows, m);
  for (std::size_t r = 0; r < rows; ++r) {
    auto qr = q.row(r);
    auto w1r = w1.output.row(r);
    auto b1r = b1.output.row(r);
    auto w2r = w2.output.row(r);
    double total = b2.output(r, 0);
    for (std::size_t j = 0; j < m; ++j) {
      double h = b1r[j];
      for (std::size_t i = 0; i < net.agents; ++i) h += qr[i] * std::abs(w1r[i * m + j]);
      pre(r, j) = h;
      hidden(r, j) = elu(h);
      total += hidden(r, j) * std::abs(w2r[j]);
    }
    out.q_tot[r] = total;
  }
  out.tape.w1_raw = std::move(w1.output);
  out.tape.w2_raw = std::move(w2.output);
  out.tape.hidden_pre = std::move(pre);
  out.tape.hidden = std::move(hidden);
  out.tape.hyper = {std::move(w1.tape), std::move(b1.tape), std::move(w2.tape), std::move(b2.tape)};
  return out;
}

std::vector<double> mix_batch(const MixingNet& net, const nn::Matrix& q, const nn::Matrix& states) {
  return mix_forward(net, q, states).q_tot;
}

double mix(const MixingNet& net, std::span<const double> q, std::span<const double> state) {
  nn::Matrix qm(1, q.size(), std::vector<double>(q.begin(), q.end()));
  nn::Matrix sm(1, state.size(), std::vector<double>(state.begin(), state.end()));
  return mix_batch(net, qm, sm).front();
}

MixGradients mix_backward(const MixingNet& net, const MixTape& tape, std::span<const double> q_tot_grad,
                          bool want_param_grads) {
  const std::size_t rows = tape.q.rows();
  if (q_tot_grad.size() != rows) throw UsageError("mixer gradient length mismatch");
  MixGradients out;
  out.q = nn::Matrix(rows, net.agents);
  if (net.kind == MixerKind::Sum) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < net.agents; ++i) out.q(r, i) = q_tot_grad[r];
    }
    return out;
  }
  if (tape.hyper.size() != 4) throw UsageError("mixer tape is incomplete");

  const std::size_t m = net.embed;
  nn::Matrix d_w1(rows, net.agents * m), d_b1(rows, m), d_w2(rows, m), d_b2(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = q_tot_grad[r];
    auto qr = tape.q.row(r);
    auto w1r = tape.w1_raw.row(r);
    auto w2r = tape.w2_raw.row(r);
    d_b2(r, 0) = g;
    for (std::size_t j = 0; j < m; ++j) {
      d_w2(r, j) = g * tape.hidden(r, j) * sign(w2r[j]);
      const double d_pre = g * std::abs(w2r[j]) * elu_grad(tape.hidden_pre(r, j));
      d_b1(r, j) = d_pre;
      for (std::size_t i = 0; i < net.agents; ++i) {
        const double w = w1r[i * m + j];
        d_w1(r, i * m + j) = d_pre * qr[i] * sign(w);
        out.q(r, i) += d_pre * std::abs(w);
      }
    }
  }
  if (want_param_grads) {
    const std::array<const nn::Matrix*, 4> grads = {&d_w1, &d_b1, &d_w2, &d_b2};
    const auto nets = net.parts();
    for (std::size_t p = 0; p < 4; ++p) {
      out.params.push_back(nn::backward(*nets[p], tape.hyper[p], *grads[p], false).params);
    }
  }
  return out;
}

nlohmann::json to_json(const MixingNet& net) {
  nlohmann::json j = {{"kind", net.kind == MixerKind::Qmix ? "qmix" : "sum"},
                      {"agents", net.agents},
                      {"state_dim", net.state_dim},
                      {"embed", net.embed}};
  if (net.kind == MixerKind::Qmix) {
    j["hyper_w1"] = nn::to_json(net.hyper_w1);
    j["hyper_b1"] = nn::to_json(net.hyper_b1);
    j["hyper_w2"] = nn::to_json(net.hyper_w2);
    j["hyper_b2"] = nn::to_json(net.hyper_b2);
  }
  return j;
}

MixingNet mixer_from_json(const nlohmann::json& j) {
  try {
    MixingNet net;
    const auto kind = j.at("kind").get<std::string>();
    net.agents = j.at("agents").get<std::size_t>();
    net.state_dim = j.at("state_dim").get<std::size_t>();
    net.embed = j.at("embed").get<std::size_t>();
    if (kind == "sum") {
      net.kind = MixerKind::Sum;
      return net;
    }
    if (kind != "qmix") throw ConfigError("unknown mixer kind '" + kind + "'");
    net.hyper_w1 = nn::mlp_from_json(j.at("hyper_w1"));
    net.hyper_b1 = nn::mlp_from_json(j.at("hyper_b1"));
    net.hyper_w2 = nn::mlp_from_json(j.at("hyper_w2"));
    net.hyper_b2 = nn::mlp_from_json(j.at("hyper_b2"));
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed mixer checkpoint: ") + e.what());
  }
}

}  // namespace dsdf::mixer
