#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "subpop/data.hpp"
#include "subpop/evalreport.hpp"
#include "subpop/mixing.hpp"
#include "subpop/models.hpp"
#include "subpop/weighting.hpp"

namespace subpop::training {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
};

enum class PartnerRule {
  uniform,    // partner drawn uniformly with replacement from the mini-batch
  same_cell,  // partner from the same (label, group) cell; self when alone
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  SgdConfig sgd;
  mixing::MixPolicy mix;
  PartnerRule partner = PartnerRule::uniform;
  // When the p >= sigma branch fires, the literal reading steps on the
  // partner (x_j, y_j, w_j); this switch steps on (x_i, y_i, w_i) instead.
  bool no_mix_uses_self = false;
  std::uint64_t seed = 0;

  void validate(std::size_t d) const;
};

// One fully realized pair for a step: loss contribution
// w_i * lambda * l(x~, y_i) + w_j * (1 - lambda) * l(x~, y_j).
struct MixedBatchItem {
  std::vector<double> x_tilde;
  int y_i = 0;
  int y_j = 0;
  double lambda = 1.0;
  double w_i = 1.0;
  double w_j = 1.0;
};

// Batch-mean loss/gradient followed by an SGD momentum update
// (v <- momentum*v + g; params <- params - lr*v). Returns the batch-mean loss.
// Exposed separately so tests can feed hand-set draws.
double sgd_step(models::Model& model, const std::vector<MixedBatchItem>& batch,
                const SgdConfig& sgd, std::vector<double>& velocity);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::vector<double> group_train_acc;
  std::optional<evalreport::Metrics> val;
};

struct TrainResult {
  models::Model model;  // parameters after the final epoch
  std::vector<models::Model> checkpoints;
  std::vector<EpochRecord> records;
};

// Reweighted-mixup trainer. Per sample slot: draw a partner per cfg.partner,
// draw p ~ U(0,1); if p < sigma draw (lambda, mask) from the policy and mix,
// otherwise take the lambda = 0 branch. Single-threaded and fully determined
// by cfg.seed. weights must be positive, one per train sample, or empty for
// uniform. val, when given, is evaluated after every epoch.
TrainResult train_rmix(const data::LabeledDataset& train, const data::LabeledDataset* val,
                       const std::vector<double>& weights, const TrainConfig& cfg,
                       models::Model init);

// Plain per-sample ERM (no pairing, no mixing) that also records the per-epoch
// misclassification bits of every training sample.
struct TrajectoryResult {
  TrainResult train;
  weighting::TrajectoryLog trajectory;
};
TrajectoryResult train_erm_with_trajectory(const data::LabeledDataset& train,
                                           const data::LabeledDataset* val, const TrainConfig& cfg,
                                           models::Model init);

enum class BaselineKind { erm, iw, mixup, igmix };

// Baselines share the train_rmix code path: erm = sigma 0 + uniform weights,
// iw = sigma 0 + supplied weights, mixup = sigma 1 + uniform weights,
// igmix = sigma 1 + uniform weights + same-cell partners.
TrainResult train_baseline(BaselineKind kind, const data::LabeledDataset& train,
                           const data::LabeledDataset* val, const std::vector<double>& weights,
                           const TrainConfig& cfg, models::Model init);

}  // namespace subpop::training
