#include "dsdf/gamma_dsdf.hpp"

#include <algorithm>
#include <cmath>

#include "dsdf/errors.hpp"
#include "dsdf/kernels.hpp"

namespace dsdf::gamma {

std::vector<nn::LayerShape> GammaNetShape::layers() const {
  return {{agents * obs_dim, hidden, nn::Activation::Relu},
          {hidden, agents, nn::Activation::Sigmoid}};
}

GammaHyperNet::GammaHyperNet(GammaNetShape shape, std::size_t state_dim, std::size_t hyper_hidden,
                             std::mt19937_64& rng)
    : shape_(shape),
      hyper_(nn::Mlp::glorot({{state_dim, hyper_hidden, nn::Activation::Relu},
                              {hyper_hidden, shape.param_count(), nn::Activation::Identity}},
                             rng)) {}

GammaHyperNet::GammaHyperNet(GammaNetShape shape, nn::Mlp hyper)
    : shape_(shape), hyper_(std::move(hyper)) {
  if (hyper_.output_dim() != shape_.param_count()) {
    throw ConfigError("hypernetwork output length does not match gamma-network parameter count");
  }
  if (hyper_.layer_count() != 2 || hyper_.shape(0).act != nn::Activation::Relu ||
      hyper_.shape(1).act != nn::Activation::Identity) {
    throw ConfigError("gamma hypernetwork must be state -> relu hidden -> linear parameters");
  }
}

nn::Mlp& GammaHyperNet::mutable_hyper() {
  if (frozen_) throw UsageError("gamma hypernetwork is frozen");
  return hyper_;
}

nn::Mlp materialize_params(const GammaNetShape& shape, std::span<const double> params) {
  if (params.size() != shape.param_count()) {
    throw ConfigError("generated parameter vector has length " + std::to_string(params.size()) +
                      ", gamma network needs " + std::to_string(shape.param_count()));
  }
  return nn::Mlp(shape.layers(), std::vector<double>(params.begin(), params.end()));
}

nn::Mlp materialize(const GammaHyperNet& net, std::span<const double> state) {
  return materialize_params(net.shape(), nn::infer(net.hyper(), state));
}

std::vector<double> predict_gammas(const nn::Mlp& gamma_net, std::span<const double> obs_concat) {
  return nn::infer(gamma_net, obs_concat);
}

namespace {

// Positions inside the generated gamma-network parameter vector.
struct GammaLayout {
  std::size_t in, hidden, agents;
  std::size_t w1(std::size_t j, std::size_t k) const { return j * in + k; }
  std::size_t b1(std::size_t j) const { return hidden * in + j; }
  std::size_t w2(std::size_t a, std::size_t j) const { return hidden * in + hidden + a * hidden + j; }
  std::size_t b2(std::size_t a) const { return hidden * in + hidden + agents * hidden + a; }
};

GammaLayout layout_of(const GammaNetShape& s) { return {s.agents * s.obs_dim, s.hidden, s.agents}; }

// Generated parameters that do not multiply an observation entry: first-layer
// biases, then per agent the output bias and output weights.
std::vector<std::uint32_t> dense_positions(const GammaLayout& lay) {
  std::vector<std::uint32_t> idx;
  for (std::size_t j = 0; j < lay.hidden; ++j) idx.push_back(static_cast<std::uint32_t>(lay.b1(j)));
  for (std::size_t a = 0; a < lay.agents; ++a) {
    idx.push_back(static_cast<std::uint32_t>(lay.b2(a)));
    for (std::size_t j = 0; j < lay.hidden; ++j) idx.push_back(static_cast<std::uint32_t>(lay.w2(a, j)));
  }
  return idx;
}

std::size_t dense_b2(const GammaLayout& lay, std::size_t a) { return lay.hidden + a * (lay.hidden + 1); }

// Copies rows idx of a (stride width) into a contiguous block.
void gather_rows(const double* a, std::size_t width, const std::uint32_t* idx, std::size_t n,
                 std::vector<double>& out) {
  out.resize(n * width);
  for (std::size_t j = 0; j < n; ++j) {
    std::copy(a + idx[j] * width, a + (idx[j] + 1) * width, out.begin() + static_cast<std::ptrdiff_t>(j * width));
  }
}

struct Columns {
  std::vector<std::size_t> begin;
  std::vector<std::uint32_t> row;
  std::vector<double> value;
};

Columns columns_of(const nn::Matrix& x) {
  Columns c;
  c.begin.assign(x.cols() + 1, 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto o = x.row(r);
    for (std::size_t k = 0; k < o.size(); ++k) c.begin[k + 1] += o[k] != 0.0;
  }
  for (std::size_t k = 0; k < x.cols(); ++k) c.begin[k + 1] += c.begin[k];
  c.row.resize(c.begin.back());
  c.value.resize(c.begin.back());
  std::vector<std::size_t> fill(c.begin.begin(), c.begin.end() - 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto o = x.row(r);
    for (std::size_t k = 0; k < o.size(); ++k) {
      if (o[k] == 0.0) continue;
      c.row[fill[k]] = static_cast<std::uint32_t>(r);
      c.value[fill[k]++] = o[k];
    }
  }
  return c;
}

}  // namespace

GammaBatch predict_gammas_batch(const GammaHyperNet& net, const nn::Matrix& states,
                                const nn::Matrix& obs_concat, bool keep_tapes) {
  const auto& shape = net.shape();
  const nn::Mlp& hyper = net.hyper();
  if (states.rows() != obs_concat.rows()) throw ConfigError("gamma batch row mismatch");
  if (obs_concat.cols() != shape.agents * shape.obs_dim) {
    throw ConfigError("gamma network expects concatenated observations of all agents");
  }
  if (states.cols() != hyper.input_dim()) throw ConfigError("gamma hypernetwork state size mismatch");
  const auto& k = kernels::active();
  const GammaLayout lay = layout_of(shape);
  const std::size_t rows = states.rows();
  const std::size_t width = hyper.shape(0).out;
  const double* wh = hyper.weights(1).data();
  const auto bh = hyper.bias(1);

  GammaBatch out;
  out.gammas = nn::Matrix(rows, shape.agents);
  nn::Matrix hidden(rows, width);
  k.gemm_nt(states.data().data(), hyper.weights(0).data(), hidden.data().data(), rows, hyper.input_dim(),
            width);
  const auto b0 = hyper.bias(0);
  for (std::size_t r = 0; r < rows; ++r) {
    auto h = hidden.row(r);
    for (std::size_t u = 0; u < width; ++u) h[u] = std::max(0.0, h[u] + b0[u]);
  }

  const auto didx = dense_positions(lay);
  std::vector<double> block;
  gather_rows(wh, width, didx.data(), didx.size(), block);
  nn::Matrix dense(rows, didx.size());
  k.gemm_nt(hidden.data().data(), block.data(), dense.data().data(), rows, width, didx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    auto d = dense.row(r);
    for (std::size_t p = 0; p < didx.size(); ++p) d[p] += bh[didx[p]];
  }

  nn::Matrix pre(rows, lay.hidden);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(dense.row(r).begin(), lay.hidden, pre.row(r).begin());
  }
  Columns cols = columns_of(obs_concat);
  std::vector<std::uint32_t> fidx(lay.hidden);
  std::vector<double> hk, prod;
  for (std::size_t f = 0; f < lay.in; ++f) {
    const std::size_t cb = cols.begin[f], n = cols.begin[f + 1] - cb;
    if (n == 0) continue;
    for (std::size_t j = 0; j < lay.hidden; ++j) fidx[j] = static_cast<std::uint32_t>(lay.w1(j, f));
    gather_rows(wh, width, fidx.data(), lay.hidden, block);
    gather_rows(hidden.data().data(), width, cols.row.data() + cb, n, hk);
    prod.resize(n * lay.hidden);
    k.gemm_nt(hk.data(), block.data(), prod.data(), n, width, lay.hidden);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cols.value[cb + i];
      auto z = pre.row(cols.row[cb + i]);
      const double* g = prod.data() + i * lay.hidden;
      for (std::size_t j = 0; j < lay.hidden; ++j) z[j] += (g[j] + bh[fidx[j]]) * v;
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const auto z = pre.row(r);
    const auto d = dense.row(r);
    for (std::size_t a = 0; a < lay.agents; ++a) {
      const double* g = d.data() + dense_b2(lay, a);
      double y = g[0];
      for (std::size_t j = 0; j < lay.hidden; ++j) y += g[j + 1] * (z[j] > 0.0 ? z[j] : 0.0);
      out.gammas(r, a) = nn::sigmoid(y);
    }
  }
  if (keep_tapes) {
    out.has_tapes = true;
    out.states = states;
    out.hyper_hidden = std::move(hidden);
    out.gamma_pre = std::move(pre);
    out.dense = std::move(dense);
    out.col_begin = std::move(cols.begin);
    out.col_row = std::move(cols.row);
    out.col_value = std::move(cols.value);
  }
  return out;
}

std::vector<double> hyper_backward(const GammaHyperNet& net, const GammaBatch& batch,
                                   const nn::Matrix& gamma_grad) {
  const std::size_t rows = batch.gammas.rows();
  if (!batch.has_tapes) throw UsageError("gamma batch was computed without tapes");
  if (gamma_grad.rows() != rows || gamma_grad.cols() != net.shape().agents) {
    throw UsageError("gamma gradient shape mismatch");
  }
  const nn::Mlp& hyper = net.hyper();
  const GammaLayout lay = layout_of(net.shape());
  const std::size_t width = hyper.shape(0).out;
  const auto& k = kernels::active();

  std::vector<double> grad(hyper.param_count(), 0.0);
  const double* base = hyper.params().data();
  double* dw0 = grad.data() + (hyper.weights(0).data() - base);
  double* db0 = grad.data() + (hyper.bias(0).data() - base);
  double* dwh = grad.data() + (hyper.weights(1).data() - base);
  double* dbh = grad.data() + (hyper.bias(1).data() - base);
  const double* wh = hyper.weights(1).data();

  const auto didx = dense_positions(lay);
  nn::Matrix ddense(rows, didx.size());
  nn::Matrix dz(rows, lay.hidden);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto gr = gamma_grad.row(r);
    const auto z = batch.gamma_pre.row(r);
    const auto d = batch.dense.row(r);
    auto dd = ddense.row(r);
    auto dzr = dz.row(r);
    for (std::size_t a = 0; a < lay.agents; ++a) {
      const double g = batch.gammas(r, a);
      const double dout = gr[a] * g * (1.0 - g);
      const std::size_t o = dense_b2(lay, a);
      dd[o] = dout;
      for (std::size_t j = 0; j < lay.hidden; ++j) {
        if (z[j] <= 0.0) continue;
        dd[o + 1 + j] = dout * z[j];
        dzr[j] += dout * d[o + 1 + j];
      }
    }
    std::copy_n(dzr.begin(), lay.hidden, dd.begin());
  }

  nn::Matrix dhidden(rows, width);
  std::vector<double> block, dblock;
  gather_rows(wh, width, didx.data(), didx.size(), block);
  k.gemm_nn(ddense.data().data(), block.data(), dhidden.data().data(), rows, width, didx.size());
  dblock.assign(didx.size() * width, 0.0);
  k.gemm_tn(ddense.data().data(), batch.hyper_hidden.data().data(), dblock.data(), rows, width, didx.size());
  for (std::size_t p = 0; p < didx.size(); ++p) {
    k.axpy(1.0, dblock.data() + p * width, dwh + didx[p] * width, width);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const auto dd = ddense.row(r);
    for (std::size_t p = 0; p < didx.size(); ++p) dbh[didx[p]] += dd[p];
  }

  std::vector<std::uint32_t> fidx(lay.hidden);
  std::vector<double> hk, coef, dhk;
  for (std::size_t f = 0; f < lay.in; ++f) {
    const std::size_t cb = batch.col_begin[f], n = batch.col_begin[f + 1] - cb;
    if (n == 0) continue;
    for (std::size_t j = 0; j < lay.hidden; ++j) fidx[j] = static_cast<std::uint32_t>(lay.w1(j, f));
    coef.resize(n * lay.hidden);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = batch.col_value[cb + i];
      const auto dzr = dz.row(batch.col_row[cb + i]);
      for (std::size_t j = 0; j < lay.hidden; ++j) {
        coef[i * lay.hidden + j] = dzr[j] * v;
        dbh[fidx[j]] += dzr[j] * v;
      }
    }
    gather_rows(batch.hyper_hidden.data().data(), width, batch.col_row.data() + cb, n, hk);
    dblock.assign(lay.hidden * width, 0.0);
    k.gemm_tn(coef.data(), hk.data(), dblock.data(), n, width, lay.hidden);
    for (std::size_t j = 0; j < lay.hidden; ++j) {
      k.axpy(1.0, dblock.data() + j * width, dwh + fidx[j] * width, width);
    }
    gather_rows(wh, width, fidx.data(), lay.hidden, block);
    dhk.resize(n * width);
    k.gemm_nn(coef.data(), block.data(), dhk.data(), n, width, lay.hidden);
    for (std::size_t i = 0; i < n; ++i) {
      k.axpy(1.0, dhk.data() + i * width, dhidden.row(batch.col_row[cb + i]).data(), width);
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const auto h = batch.hyper_hidden.row(r);
    auto dh = dhidden.row(r);
    for (std::size_t u = 0; u < width; ++u) {
      if (h[u] <= 0.0) dh[u] = 0.0;
      db0[u] += dh[u];
    }
  }
  k.gemm_tn(dhidden.data().data(), batch.states.data().data(), dw0, rows, hyper.input_dim(), width);
  return grad;
}

bool convergence_check(const std::vector<std::vector<double>>& history, const ConvergenceConfig& cfg) {
  if (history.size() >= cfg.max_updates) return true;
  const std::size_t half = cfg.window / 2;
  if (half == 0 || history.size() < cfg.window) return false;
  const std::size_t agents = history.back().size();
  const std::size_t end = history.size();
  for (std::size_t i = 0; i < agents; ++i) {
    double recent = 0.0, previous = 0.0;
    for (std::size_t u = end - half; u < end; ++u) recent += history[u][i];
    for (std::size_t u = end - 2 * half; u < end - half; ++u) previous += history[u][i];
    if (std::abs(recent - previous) / static_cast<double>(half) >= cfg.tolerance) return false;
  }
  return true;
}

nlohmann::json to_json(const GammaHyperNet& net) {
  return {{"agents", net.shape_.agents},
          {"obs_dim", net.shape_.obs_dim},
          {"hidden", net.shape_.hidden},
          {"frozen", net.frozen_},
          {"updates", net.updates_},
          {"hyper", nn::to_json(net.hyper_)}};
}

GammaHyperNet gamma_hyper_from_json(const nlohmann::json& j) {
  try {
    GammaNetShape shape{j.at("agents").get<std::size_t>(), j.at("obs_dim").get<std::size_t>(),
                        j.at("hidden").get<std::size_t>()};
    GammaHyperNet net(shape, nn::mlp_from_json(j.at("hyper")));
    net.frozen_ = j.at("frozen").get<bool>();
    net.updates_ = j.at("updates").get<std::size_t>();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed gamma hypernetwork checkpoint: ") + e.what());
  }
}

}  // namespace dsdf::gamma
