#include "subpop/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "subpop/rng.hpp"

namespace subpop::models {

double glm_partition(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double glm_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double glm_a2(double z) {
  const double s = glm_sigmoid(z);
  return s * (1.0 - s);
}

LossGrad glm_loss_grad(const GlmModel& m, const double* x, double y, double w) {
  double z = 0.0;
  for (std::size_t k = 0; k < m.theta.size(); ++k) z += m.theta[k] * x[k];
  LossGrad out;
  out.value = w * (glm_partition(z) - y * z);
  out.grad.resize(m.theta.size());
  const double coeff = w * (glm_sigmoid(z) - y);
  for (std::size_t k = 0; k < m.theta.size(); ++k) out.grad[k] = coeff * x[k];
  return out;
}

MlpModel MlpModel::init(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpModel: need at least input and output layers");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw std::invalid_argument("MlpModel: zero-width layer");
  MlpModel m;
  m.layer_sizes = layer_sizes;
  rng::SplitMix64 gen(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t k = 0; k < fan_out * fan_in; ++k)
      m.params.push_back(gen.uniform(-bound, bound));
    for (std::size_t k = 0; k < fan_out; ++k) m.params.push_back(0.0);
  }
  return m;
}

std::size_t MlpModel::param_count() const {
  std::size_t c = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    c += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return c;
}

namespace {

// Activations per layer; activations[0] is the input copy, the last entry is
// the softmax output.
std::vector<std::vector<double>> mlp_forward_full(const MlpModel& m, const double* x) {
  const std::size_t layers = m.layer_sizes.size();
  std::vector<std::vector<double>> act(layers);
  act[0].assign(x, x + m.layer_sizes[0]);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const std::size_t in = m.layer_sizes[l], out = m.layer_sizes[l + 1];
    std::vector<double>& a = act[l + 1];
    a.assign(out, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      double z = m.params[off + out * in + r];  // bias
      const double* wrow = &m.params[off + r * in];
      for (std::size_t c = 0; c < in; ++c) z += wrow[c] * act[l][c];
      a[r] = z;
    }
    off += out * (in + 1);
    if (l + 2 < layers) {
      for (double& v : a) v = std::tanh(v);
    } else {
      // softmax, stabilized by the max logit
      const double mx = *std::max_element(a.begin(), a.end());
      double denom = 0.0;
      for (double& v : a) {
        v = std::exp(v - mx);
        denom += v;
      }
      for (double& v : a) v /= denom;
    }
  }
  return act;
}

}  // namespace

std::vector<double> mlp_forward(const MlpModel& m, const double* x) {
  return mlp_forward_full(m, x).back();
}

LossGrad mlp_loss_grad(const MlpModel& m, const double* x, const std::vector<double>& soft_label,
                       double w) {
  const std::size_t layers = m.layer_sizes.size();
  if (soft_label.size() != m.layer_sizes.back())
    throw std::invalid_argument("mlp_loss_grad: label size mismatch");
  const auto act = mlp_forward_full(m, x);
  const std::vector<double>& p = act.back();

  LossGrad out;
  out.grad.assign(m.params.size(), 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (soft_label[k] != 0.0) loss -= soft_label[k] * std::log(std::max(p[k], 1e-300));
  out.value = w * loss;

  // delta at the output logits of layer l+1
  std::vector<double> delta(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) delta[k] = w * (p[k] - soft_label[k]);

  // Walk layers backward; recompute each layer's parameter offset as we go.
  std::vector<std::size_t> offsets(layers - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    offsets[l] = off;
    off += m.layer_sizes[l + 1] * (m.layer_sizes[l] + 1);
  }
  for (std::size_t l = layers - 1; l-- > 0;) {
    const std::size_t in = m.layer_sizes[l], outw = m.layer_sizes[l + 1];
    const std::size_t base = offsets[l];
    for (std::size_t r = 0; r < outw; ++r) {
      const double dz = delta[r];
      double* grow = &out.grad[base + r * in];
      for (std::size_t c = 0; c < in; ++c) grow[c] = dz * act[l][c];
      out.grad[base + outw * in + r] = dz;
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t c = 0; c < in; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < outw; ++r) s += m.params[base + r * in + c] * delta[r];
      prev[c] = s * (1.0 - act[l][c] * act[l][c]);  // tanh'
    }
    delta = std::move(prev);
  }
  return out;
}

std::size_t input_dim(const Model& m) {
  return std::visit(
      [](const auto& mm) -> std::size_t {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>)
          return mm.theta.size();
        else
          return mm.layer_sizes.front();
      },
      m);
}

int class_count(const Model& m) {
  return std::visit(
      [](const auto& mm) -> int {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>)
          return 2;
        else
          return static_cast<int>(mm.layer_sizes.back());
      },
      m);
}

std::size_t param_count(const Model& m) {
  return std::visit(
      [](const auto& mm) -> std::size_t {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>)
          return mm.theta.size();
        else
          return mm.params.size();
      },
      m);
}

std::vector<double>& params(Model& m) {
  return std::visit(
      [](auto& mm) -> std::vector<double>& {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>)
          return mm.theta;
        else
          return mm.params;
      },
      m);
}

const std::vector<double>& params(const Model& m) {
  return params(const_cast<Model&>(m));
}

LossGrad soft_loss_grad(const Model& m, const double* x, const std::vector<double>& soft_label,
                        double w) {
  return std::visit(
      [&](const auto& mm) -> LossGrad {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          if (soft_label.size() != 2) throw std::invalid_argument("glm labels are binary");
          return glm_loss_grad(mm, x, soft_label[1], w);
        } else {
          return mlp_loss_grad(mm, x, soft_label, w);
        }
      },
      m);
}

LossGrad loss_grad(const Model& m, const double* x, int y, double w) {
  const int k = class_count(m);
  if (y < 0 || y >= k) throw std::invalid_argument("loss_grad: label out of range");
  return std::visit(
      [&](const auto& mm) -> LossGrad {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          return glm_loss_grad(mm, x, static_cast<double>(y), w);
        } else {
          std::vector<double> onehot(static_cast<std::size_t>(k), 0.0);
          onehot[static_cast<std::size_t>(y)] = 1.0;
          return mlp_loss_grad(mm, x, onehot, w);
        }
      },
      m);
}

LossGrad rmix_loss_grad(const Model& m, const std::vector<double>& x_tilde, int y_i, int y_j,
                        double lambda, double w_i, double w_j) {
  const LossGrad li = loss_grad(m, x_tilde.data(), y_i, w_i * lambda);
  LossGrad out = loss_grad(m, x_tilde.data(), y_j, w_j * (1.0 - lambda));
  out.value += li.value;
  for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += li.grad[k];
  return out;
}

LossGrad prop1_loss_grad(const Model& m, const std::vector<double>& x_tilde, int y_i, int y_j,
                         double lambda, double w_i, double w_j) {
  const double w_bar = w_i * lambda + w_j * (1.0 - lambda);
  if (!(w_bar > 0.0)) throw std::invalid_argument("prop1_loss_grad: collapsed weight must be > 0");
  const int k = class_count(m);
  if (y_i < 0 || y_i >= k || y_j < 0 || y_j >= k)
    throw std::invalid_argument("prop1_loss_grad: label out of range");
  std::vector<double> y_bar(static_cast<std::size_t>(k), 0.0);
  y_bar[static_cast<std::size_t>(y_i)] += w_i * lambda / w_bar;
  y_bar[static_cast<std::size_t>(y_j)] += w_j * (1.0 - lambda) / w_bar;
  return soft_loss_grad(m, x_tilde.data(), y_bar, w_bar);
}

int predict(const Model& m, const double* x) {
  return std::visit(
      [&](const auto& mm) -> int {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          double z = 0.0;
          for (std::size_t k = 0; k < mm.theta.size(); ++k) z += mm.theta[k] * x[k];
          return z > 0.0 ? 1 : 0;
        } else {
          const std::vector<double> p = mlp_forward(mm, x);
          std::size_t best = 0;
          for (std::size_t k = 1; k < p.size(); ++k)
            if (p[k] > p[best]) best = k;  // strict: ties stay at the lower index
          return static_cast<int>(best);
        }
      },
      m);
}

std::vector<int> predict_all(const Model& m, const data::LabeledDataset& ds) {
  if (ds.d != input_dim(m)) throw std::invalid_argument("predict_all: dimension mismatch");
  std::vector<int> out(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) out[i] = predict(m, ds.row(i));
  return out;
}

data::LabeledDataset augment_with_bias(const data::LabeledDataset& ds) {
  data::LabeledDataset out = ds;
  out.d = ds.d + 1;
  out.features.clear();
  out.features.reserve(out.n * out.d);
  for (std::size_t i = 0; i < ds.n; ++i) {
    out.features.insert(out.features.end(), ds.row(i), ds.row(i) + ds.d);
    out.features.push_back(1.0);
  }
  return out;
}

void save_model(const Model& m, const std::string& path) {
  nlohmann::json j;
  std::visit(
      [&j](const auto& mm) {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, GlmModel>) {
          j["type"] = "glm";
          j["theta"] = mm.theta;
        } else {
          j["type"] = "mlp";
          j["layer_sizes"] = mm.layer_sizes;
          j["params"] = mm.params;
        }
      },
      m);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << j.dump(2) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  const std::string type = j.at("type").get<std::string>();
  if (type == "glm") {
    GlmModel m;
    m.theta = j.at("theta").get<std::vector<double>>();
    return m;
  }
  if (type == "mlp") {
    MlpModel m;
    m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    m.params = j.at("params").get<std::vector<double>>();
    if (m.params.size() != m.param_count())
      throw std::runtime_error("load_model: parameter count mismatch in " + path);
    return m;
  }
  throw std::runtime_error("load_model: unknown model type '" + type + "' in " + path);
}

}  // namespace subpop::models
