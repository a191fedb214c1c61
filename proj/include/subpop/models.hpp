#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "subpop/data.hpp"

namespace subpop::models {

// Binary logistic GLM: loss A(theta'x) - y * theta'x with A(z) = log(1+e^z).
// theta covers whatever input dimension it is given; when a bias is wanted the
// caller augments the features with a constant-1 column (see augment_with_bias).
struct GlmModel {
  std::vector<double> theta;
};

// Fully-connected net, tanh hidden layers, softmax output. Parameters are
// flattened layer by layer: W (out x in, row-major) then b (out).
struct MlpModel {
  std::vector<std::size_t> layer_sizes;  // [d, hidden..., class_count]
  std::vector<double> params;

  static MlpModel init(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);
  std::size_t param_count() const;
};

using Model = std::variant<GlmModel, MlpModel>;

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the model's parameter vector
};

// Numerically stable pieces of the logistic partition function.
double glm_partition(double z);  // A(z)
double glm_sigmoid(double z);    // A'(z)
double glm_a2(double z);         // A''(z)

// Weighted per-sample loss/gradient; y may be a soft label in [0,1] for the
// GLM and a distribution over classes for the MLP.
LossGrad glm_loss_grad(const GlmModel& m, const double* x, double y, double w);
LossGrad mlp_loss_grad(const MlpModel& m, const double* x, const std::vector<double>& soft_label,
                       double w);
std::vector<double> mlp_forward(const MlpModel& m, const double* x);  // class probabilities

std::size_t input_dim(const Model& m);
int class_count(const Model& m);
std::size_t param_count(const Model& m);
std::vector<double>& params(Model& m);
const std::vector<double>& params(const Model& m);

// Hard-label convenience wrapper over the soft-label paths.
LossGrad loss_grad(const Model& m, const double* x, int y, double w);
LossGrad soft_loss_grad(const Model& m, const double* x, const std::vector<double>& soft_label,
                        double w);

// Reweighted pair loss w_i*lambda*l(x~, y_i) + w_j*(1-lambda)*l(x~, y_j),
// evaluated as two independent passes.
LossGrad rmix_loss_grad(const Model& m, const std::vector<double>& x_tilde, int y_i, int y_j,
                        double lambda, double w_i, double w_j);

// Same quantity through the collapsed form: w_bar * l(x~, y_bar) with
// w_bar = w_i*lambda + w_j*(1-lambda) and y_bar the w-weighted soft label.
// Agrees with rmix_loss_grad to floating-point roundoff.
LossGrad prop1_loss_grad(const Model& m, const std::vector<double>& x_tilde, int y_i, int y_j,
                         double lambda, double w_i, double w_j);

// Argmax class; ties resolve to the lower index (GLM: theta'x > 0 -> 1).
int predict(const Model& m, const double* x);
std::vector<int> predict_all(const Model& m, const data::LabeledDataset& ds);

// Copy of ds with a constant-1 feature appended (bias column for the GLM).
data::LabeledDataset augment_with_bias(const data::LabeledDataset& ds);

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace subpop::models
