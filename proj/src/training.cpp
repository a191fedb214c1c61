#include "subpop/training.hpp"

#include <numeric>
#include <stdexcept>

#include "subpop/rng.hpp"

namespace subpop::training {

void TrainConfig::validate(std::size_t d) const {
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(sgd.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0))
    throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
  mix.validate(d);
}

double sgd_step(models::Model& model, const std::vector<MixedBatchItem>& batch,
                const SgdConfig& sgd, std::vector<double>& velocity) {
  if (batch.empty()) throw std::invalid_argument("sgd_step: empty batch");
  if (velocity.size() != models::param_count(model))
    throw std::invalid_argument("sgd_step: velocity size mismatch");

  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> grad(velocity.size(), 0.0);
  for (const MixedBatchItem& item : batch) {
    const models::LossGrad lg = models::rmix_loss_grad(model, item.x_tilde, item.y_i, item.y_j,
                                                       item.lambda, item.w_i, item.w_j);
    loss += lg.value;
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += lg.grad[k];
  }
  loss *= inv;

  std::vector<double>& p = models::params(model);
  for (std::size_t k = 0; k < p.size(); ++k) {
    velocity[k] = sgd.momentum * velocity[k] + grad[k] * inv;
    p[k] -= sgd.lr * velocity[k];
  }
  return loss;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, rng::SplitMix64& gen) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = gen.next_below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Per-group train accuracy; falls back to labels-as-groups when the dataset
// carries no group info.
std::vector<double> per_group_accuracy(const data::LabeledDataset& ds,
                                       const std::vector<int>& preds) {
  const bool grouped = ds.has_groups();
  const int buckets = grouped ? ds.group_count : ds.class_count;
  std::vector<double> correct(static_cast<std::size_t>(buckets), 0.0);
  std::vector<double> total(static_cast<std::size_t>(buckets), 0.0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::size_t b = static_cast<std::size_t>(grouped ? ds.groups[i] : ds.labels[i]);
    total[b] += 1.0;
    if (preds[i] == ds.labels[i]) correct[b] += 1.0;
  }
  std::vector<double> acc(total.size(), 0.0);
  for (std::size_t b = 0; b < total.size(); ++b)
    acc[b] = total[b] > 0.0 ? correct[b] / total[b] : 0.0;
  return acc;
}

void check_inputs(const data::LabeledDataset& train, const data::LabeledDataset* val,
                  const std::vector<double>& weights, const TrainConfig& cfg,
                  const models::Model& init) {
  if (train.n == 0) throw std::invalid_argument("train: empty dataset");
  cfg.validate(train.d);
  if (models::input_dim(init) != train.d)
    throw std::invalid_argument("train: model input dimension mismatch");
  if (models::class_count(init) < train.class_count)
    throw std::invalid_argument("train: model has fewer classes than the data");
  if (!weights.empty()) {
    if (weights.size() != train.n) throw std::invalid_argument("train: weight count mismatch");
    for (double w : weights)
      if (!(w > 0.0)) throw std::invalid_argument("train: weights must be positive");
  }
  if (val) {
    if (val->d != train.d) throw std::invalid_argument("train: val dimension mismatch");
    if (val->n == 0) throw std::invalid_argument("train: empty val set");
  }
}

void finish_epoch(const data::LabeledDataset& train, const data::LabeledDataset* val,
                  const models::Model& model, std::size_t epoch, double mean_loss,
                  TrainResult& result) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.train_loss = mean_loss;
  rec.group_train_acc = per_group_accuracy(train, models::predict_all(model, train));
  if (val) rec.val = evalreport::evaluate(*val, models::predict_all(model, *val));
  result.records.push_back(std::move(rec));
  result.checkpoints.push_back(model);
}

}  // namespace

TrainResult train_rmix(const data::LabeledDataset& train, const data::LabeledDataset* val,
                       const std::vector<double>& weights, const TrainConfig& cfg,
                       models::Model init) {
  check_inputs(train, val, weights, cfg, init);
  if (cfg.partner == PartnerRule::same_cell && !train.has_groups())
    throw std::invalid_argument("train_rmix: same_cell partners need group annotations");

  TrainResult result;
  result.model = std::move(init);
  std::vector<double> velocity(models::param_count(result.model), 0.0);
  rng::SplitMix64 gen(cfg.seed);

  auto weight_of = [&weights](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled_indices(train.n, gen);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < train.n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, train.n - start);
      std::vector<MixedBatchItem> batch;
      batch.reserve(len);
      for (std::size_t s = 0; s < len; ++s) {
        const std::size_t i = order[start + s];

        std::size_t j;
        if (cfg.partner == PartnerRule::uniform) {
          j = order[start + gen.next_below(len)];
        } else {
          // same (label, group) cell within the batch; self when alone
          std::vector<std::size_t> cell;
          for (std::size_t t = 0; t < len; ++t) {
            const std::size_t c = order[start + t];
            if (train.labels[c] == train.labels[i] && train.groups[c] == train.groups[i])
              cell.push_back(c);
          }
          j = cell.empty() ? i : cell[gen.next_below(cell.size())];
        }

        MixedBatchItem item;
        item.y_i = train.labels[i];
        item.y_j = train.labels[j];
        item.w_i = weight_of(i);
        item.w_j = weight_of(j);

        const double p = gen.next_double();
        if (p < cfg.mix.sigma) {
          const mixing::MixDraw draw = mixing::draw_mix(cfg.mix, train.d, gen);
          item.lambda = draw.lambda;
          item.x_tilde = mixing::mix_inputs(draw.mask, train.row(i), train.row(j));
        } else if (cfg.no_mix_uses_self) {
          item.lambda = 0.0;
          item.y_j = item.y_i;
          item.w_j = item.w_i;
          item.x_tilde.assign(train.row(i), train.row(i) + train.d);
        } else {
          // literal lambda = 0 branch: the step lands on (x_j, y_j, w_j)
          item.lambda = 0.0;
          item.x_tilde.assign(train.row(j), train.row(j) + train.d);
        }
        batch.push_back(std::move(item));
      }
      loss_sum += sgd_step(result.model, batch, cfg.sgd, velocity);
      ++steps;
    }
    finish_epoch(train, val, result.model, epoch, loss_sum / static_cast<double>(steps), result);
  }
  return result;
}

TrajectoryResult train_erm_with_trajectory(const data::LabeledDataset& train,
                                           const data::LabeledDataset* val, const TrainConfig& cfg,
                                           models::Model init) {
  check_inputs(train, val, {}, cfg, init);

  TrajectoryResult out;
  out.trajectory = weighting::TrajectoryLog(train.n);
  out.train.model = std::move(init);
  std::vector<double> velocity(models::param_count(out.train.model), 0.0);
  rng::SplitMix64 gen(cfg.seed);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled_indices(train.n, gen);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < train.n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, train.n - start);
      std::vector<MixedBatchItem> batch;
      batch.reserve(len);
      for (std::size_t s = 0; s < len; ++s) {
        const std::size_t i = order[start + s];
        MixedBatchItem item;
        item.x_tilde.assign(train.row(i), train.row(i) + train.d);
        item.y_i = item.y_j = train.labels[i];
        item.lambda = 1.0;  // w_j * (1-lambda) term vanishes; pure (x_i, y_i) step
        batch.push_back(std::move(item));
      }
      loss_sum += sgd_step(out.train.model, batch, cfg.sgd, velocity);
      ++steps;
    }
    const std::vector<int> preds = models::predict_all(out.train.model, train);
    out.trajectory.record_epoch(train.labels, preds);
    finish_epoch(train, val, out.train.model, epoch, loss_sum / static_cast<double>(steps),
                 out.train);
  }
  return out;
}

TrainResult train_baseline(BaselineKind kind, const data::LabeledDataset& train,
                           const data::LabeledDataset* val, const std::vector<double>& weights,
                           const TrainConfig& cfg, models::Model init) {
  TrainConfig adjusted = cfg;
  std::vector<double> w = weights;
  switch (kind) {
    case BaselineKind::erm:
      adjusted.mix.sigma = 0.0;
      w.clear();
      break;
    case BaselineKind::iw:
      if (weights.empty()) throw std::invalid_argument("train_baseline: iw requires weights");
      adjusted.mix.sigma = 0.0;
      break;
    case BaselineKind::mixup:
      adjusted.mix.sigma = 1.0;
      w.clear();
      break;
    case BaselineKind::igmix:
      adjusted.mix.sigma = 1.0;
      adjusted.partner = PartnerRule::same_cell;
      w.clear();
      break;
  }
  return train_rmix(train, val, w, adjusted, std::move(init));
}

}  // namespace subpop::training
