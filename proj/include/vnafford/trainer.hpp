#pragma once

// Two-stage training.
//
// Stage A trains the encoder, the scoring head and the proposal head jointly:
// binary cross-entropy on interaction outcomes (each batch balanced 1:1 by
// downsampling negatives, every positive seen every epoch) plus a
// minimum-over-k geodesic loss on positive records. Online collection with
// the partially trained model is interleaved at a fixed cadence.
//
// Stage B freezes everything but the affordance head and regresses it with an
// L1 loss onto detached targets: for each point, the mean of the top-j scores
// the frozen scoring head assigns to K proposals of the frozen proposal head.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vnafford/datagen.hpp"
#include "vnafford/dataset.hpp"
#include "vnafford/errors.hpp"
#include "vnafford/evalkit.hpp"
#include "vnafford/heads.hpp"
#include "vnafford/rng.hpp"
#include "vnafford/vn.hpp"

namespace vnaff {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7], with zero
// gradient where the clamp is active.
template <typename S>
S loss_scoring(const VecX<S>& pred, const std::vector<int>& labels, VecX<S>* grad = nullptr) {
  if (int(pred.size()) != int(labels.size()))
    throw ShapeMismatchError("loss_scoring: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(labels.size()) + " labels");
  if (pred.size() == 0) throw std::invalid_argument("loss_scoring: empty batch");
  const S lo = S(1e-7), hi = S(1) - S(1e-7);
  const S inv_n = S(1) / S(pred.size());
  if (grad) grad->setZero(pred.size());
  S total = 0;
  for (int i = 0; i < int(pred.size()); ++i) {
    const S p = std::clamp(pred[i], lo, hi);
    const int y = labels[size_t(i)];
    total += y ? -std::log(p) : -std::log(S(1) - p);
    if (grad && pred[i] > lo && pred[i] < hi)
      (*grad)[i] = (y ? -S(1) / p : S(1) / (S(1) - p)) * inv_n;
  }
  return total * inv_n;
}

template <typename S>
struct ProposalLossResult {
  S value = 0;
  int argmin = -1;
  Mat3<S> grad_argmin = Mat3<S>::Zero();  // d value / d candidates[argmin]
};

// Minimum over the candidates of the geodesic angle to the truth; the
// gradient flows only through the argmin candidate (lowest index on ties).
template <typename S>
ProposalLossResult<S> loss_proposal(const std::vector<Mat3<S>>& candidates, const Mat3<S>& truth) {
  if (candidates.empty()) throw std::invalid_argument("loss_proposal: empty candidate set");
  ProposalLossResult<S> out;
  S best = std::numeric_limits<S>::infinity();
  for (int j = 0; j < int(candidates.size()); ++j) {
    GeodesicToTarget<S> g;
    S v = g.forward(candidates[size_t(j)], truth);
    if (v < best) {
      best = v;
      out.argmin = j;
    }
  }
  out.value = best;
  GeodesicToTarget<S> g;
  g.forward(candidates[size_t(out.argmin)], truth);
  out.grad_argmin = g.backward(S(1));
  return out;
}

// Detached supervision target for the affordance head at one point: draw
// k_aff proposals, score the valid ones, return the mean of the top_j scores.
template <typename S>
S affordance_target(Model<S>& model, const EncoderOutput<S>& enc, int point, int k_aff, int top_j,
                    Rng& rng) {
  if (top_j < 1 || top_j > k_aff)
    throw std::invalid_argument("affordance_target: need 1 <= top_j <= k_aff");
  ScalarField<S> z = model.draw_noise(k_aff, rng);
  std::vector<int> pts(size_t(k_aff), point);
  ProposalBatch<S> props = model.proposal_head().forward(enc, pts, z);
  std::vector<int> vpts;
  std::vector<Mat3<S>> vrots;
  for (int j = 0; j < k_aff; ++j)
    if (props.valid[size_t(j)]) {
      vpts.push_back(point);
      vrots.push_back(props.rotations[size_t(j)]);
    }
  if (int(vrots.size()) < top_j)
    throw NoValidProposalError("affordance target at point " + std::to_string(point) + ": only " +
                               std::to_string(vrots.size()) + " valid proposals");
  ScalarField<S> scores = model.scoring_head().forward(enc, vpts, vrots);
  std::vector<S> vals(static_cast<size_t>(scores.cols()));
  for (int j = 0; j < int(scores.cols()); ++j) vals[size_t(j)] = scores(0, j);
  std::partial_sort(vals.begin(), vals.begin() + top_j, vals.end(), std::greater<S>());
  S sum = 0;
  for (int j = 0; j < top_j; ++j) sum += vals[size_t(j)];
  return sum / S(top_j);
}

// Mean absolute error between predictions and detached targets.
template <typename S>
S loss_affordance(const VecX<S>& pred, const VecX<S>& target, VecX<S>* grad = nullptr) {
  if (pred.size() != target.size())
    throw ShapeMismatchError("loss_affordance: " + std::to_string(pred.size()) + " vs " +
                             std::to_string(target.size()));
  if (pred.size() == 0) throw std::invalid_argument("loss_affordance: empty batch");
  const S inv_n = S(1) / S(pred.size());
  if (grad) grad->setZero(pred.size());
  S total = 0;
  for (int i = 0; i < int(pred.size()); ++i) {
    const S d = pred[i] - target[i];
    total += std::abs(d);
    if (grad) (*grad)[i] = (d > S(0) ? inv_n : (d < S(0) ? -inv_n : S(0)));
  }
  return total * inv_n;
}

// ---------------------------------------------------------------------------
// Config and metrics
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  int batch = 32;
  int epochs_a = 20;
  int epochs_b = 10;
  int k_prop = 5;
  int k_aff = 20;
  int top_j = 3;
  int online_per_epoch = 256;
  int online_after_epoch = 2;  // first online batch lands in epoch online_after_epoch + 1
  int online_total_cap = 1000;
  int n_points = 256;  // cloud size for online renders
  std::uint64_t seed = 1;
  std::string precision = "float32";

  void validate() const {
    if (lr <= 0 || batch < 2 || epochs_a < 0 || epochs_b < 0 || k_prop < 1 || k_aff < 1 ||
        top_j < 1 || top_j > k_aff || online_per_epoch < 0 || online_total_cap < 0 || n_points < 64)
      throw LoadError("train config failed validation");
    if (precision != "float32" && precision != "float64")
      throw LoadError("train config precision must be float32 or float64");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"lr", c.lr},
                        {"batch", c.batch},
                        {"epochs_a", c.epochs_a},
                        {"epochs_b", c.epochs_b},
                        {"k_prop", c.k_prop},
                        {"k_aff", c.k_aff},
                        {"top_j", c.top_j},
                        {"online_per_epoch", c.online_per_epoch},
                        {"online_after_epoch", c.online_after_epoch},
                        {"online_total_cap", c.online_total_cap},
                        {"n_points", c.n_points},
                        {"seed", c.seed},
                        {"precision", c.precision}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.epochs_a = j.value("epochs_a", c.epochs_a);
    c.epochs_b = j.value("epochs_b", c.epochs_b);
    c.k_prop = j.value("k_prop", c.k_prop);
    c.k_aff = j.value("k_aff", c.k_aff);
    c.top_j = j.value("top_j", c.top_j);
    c.online_per_epoch = j.value("online_per_epoch", c.online_per_epoch);
    c.online_after_epoch = j.value("online_after_epoch", c.online_after_epoch);
    c.online_total_cap = j.value("online_total_cap", c.online_total_cap);
    c.n_points = j.value("n_points", c.n_points);
    c.seed = j.value("seed", c.seed);
    c.precision = j.value("precision", c.precision);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("train config field error: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open train config: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw LoadError("train config is not valid JSON: " + path);
  return train_config_from_json(j);
}

struct MetricsRow {
  std::string stage;  // "A" or "B"
  int epoch = 0;      // 1-based within its stage
  std::optional<double> loss_scoring;
  std::optional<double> loss_proposal;
  std::optional<double> loss_affordance;
  std::optional<double> heldout_f1;
  std::optional<double> online_pos_rate;
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write metrics: " + path);
  out << "stage,epoch,loss_scoring,loss_proposal,loss_affordance,heldout_f1,online_pos_rate\n";
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", *v);
    return std::string(buf);
  };
  for (const MetricsRow& r : rows)
    out << r.stage << ',' << r.epoch << ',' << cell(r.loss_scoring) << ',' << cell(r.loss_proposal)
        << ',' << cell(r.loss_affordance) << ',' << cell(r.heldout_f1) << ','
        << cell(r.online_pos_rate) << '\n';
  if (!out) throw LoadError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
struct PoolRecord {
  const DatasetInstance* inst = nullptr;
  int point = 0;
  Mat3<S> orientation = Mat3<S>::Identity();
  int result = 0;
};

// Batch indices grouped by instance in first-appearance order, so every
// group runs one encoder pass.
template <typename S>
std::vector<std::pair<const DatasetInstance*, std::vector<int>>> group_by_instance(
    const std::vector<PoolRecord<S>>& pool, const std::vector<int>& batch) {
  std::vector<std::pair<const DatasetInstance*, std::vector<int>>> groups;
  for (int idx : batch) {
    const DatasetInstance* inst = pool[size_t(idx)].inst;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == inst; });
    if (it == groups.end()) {
      groups.emplace_back(inst, std::vector<int>{idx});
    } else {
      it->second.push_back(idx);
    }
  }
  return groups;
}

inline void shuffle_indices(std::vector<int>& v, Rng& rng) {
  for (int i = int(v.size()) - 1; i > 0; --i)
    std::swap(v[size_t(i)], v[size_t(rng.uniform_index(std::uint64_t(i) + 1))]);
}

// Random order that keeps each instance's members contiguous, so a batch
// slice touches few distinct clouds and therefore few encoder passes.
template <typename S>
std::vector<int> instance_coherent_order(const std::vector<PoolRecord<S>>& pool,
                                         const std::vector<int>& members, Rng& rng) {
  std::vector<const DatasetInstance*> seen;
  std::vector<std::vector<int>> groups;
  for (int idx : members) {
    const DatasetInstance* inst = pool[size_t(idx)].inst;
    auto it = std::find(seen.begin(), seen.end(), inst);
    if (it == seen.end()) {
      seen.push_back(inst);
      groups.push_back({idx});
    } else {
      groups[size_t(it - seen.begin())].push_back(idx);
    }
  }
  std::vector<int> group_order(int(groups.size()), 0);
  for (size_t i = 0; i < group_order.size(); ++i) group_order[i] = int(i);
  shuffle_indices(group_order, rng);
  std::vector<int> out;
  out.reserve(members.size());
  for (int gi : group_order) {
    shuffle_indices(groups[size_t(gi)], rng);
    out.insert(out.end(), groups[size_t(gi)].begin(), groups[size_t(gi)].end());
  }
  return out;
}

}  // namespace detail

template <typename S>
std::vector<MetricsRow> train(Model<S>& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.records.empty())
    throw TrainingInfeasibleError("training dataset is empty");
  {
    const int pos = data.n_positive();
    if (pos == 0 || pos == int(data.records.size()))
      throw TrainingInfeasibleError("training dataset has a single outcome class (" +
                                    std::to_string(pos) + " of " +
                                    std::to_string(data.records.size()) + " positive)");
  }

  Rng root(cfg.seed);
  std::vector<MetricsRow> rows;

  // Held-out split: 10% of the offline records, never trained on.
  std::vector<int> order(data.records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  {
    Rng split_rng = root.fork(salt_of("split"));
    detail::shuffle_indices(order, split_rng);
  }
  const int n_hold = int(data.records.size()) / 10;
  std::vector<InteractionRecord> holdout;
  for (int i = 0; i < n_hold; ++i) holdout.push_back(data.records[size_t(order[size_t(i)])]);

  std::vector<detail::PoolRecord<S>> pool;
  for (size_t i = size_t(n_hold); i < order.size(); ++i) {
    const InteractionRecord& r = data.records[size_t(order[i])];
    pool.push_back({&data.instances[size_t(r.instance)], r.point_index,
                    r.orientation.m.template cast<S>(), r.result});
  }
  {
    int pos = 0;
    for (const auto& r : pool) pos += r.result;
    if (pos == 0 || pos == int(pool.size()))
      throw TrainingInfeasibleError("training split has a single outcome class after holdout");
  }
  std::vector<std::unique_ptr<DatasetInstance>> online_instances;

  Adam<S> adam(cfg.lr);
  const int d = model.config().enc.d;
  const int d_inv = model.config().enc.d_inv;
  int online_total = 0;

  std::vector<ObjectSpec> online_specs;
  for (const DatasetInstance& inst : data.instances) online_specs.push_back(inst.state.spec);

  for (int epoch = 1; epoch <= cfg.epochs_a; ++epoch) {
    MetricsRow row;
    row.stage = "A";
    row.epoch = epoch;

    if (epoch > cfg.online_after_epoch && online_total < cfg.online_total_cap &&
        cfg.online_per_epoch > 0) {
      const int take = std::min(cfg.online_per_epoch, cfg.online_total_cap - online_total);
      CollectOptions opt;
      opt.n_points = cfg.n_points;
      opt.poses = pose_setting_from_string(data.pose_setting);
      Rng online_rng = root.fork(salt_of("online")).fork(std::uint64_t(epoch));
      Dataset od = collect_online(model, online_specs, take, data.primitive, online_rng, opt);
      row.online_pos_rate = od.positive_rate();
      online_total += int(od.records.size());
      for (DatasetInstance& inst : od.instances)
        online_instances.push_back(std::make_unique<DatasetInstance>(std::move(inst)));
      // od.records reference od.instances by index; instances were moved into
      // owned storage in the same order, offset by the previous count.
      const size_t base = online_instances.size() - od.instances.size();
      for (const InteractionRecord& r : od.records)
        pool.push_back({online_instances[base + size_t(r.instance)].get(), r.point_index,
                        r.orientation.m.template cast<S>(), r.result});
    }

    std::vector<int> positives, negatives;
    for (int i = 0; i < int(pool.size()); ++i)
      (pool[size_t(i)].result ? positives : negatives).push_back(i);
    Rng epoch_rng = root.fork(salt_of("epoch")).fork(std::uint64_t(epoch));
    positives = detail::instance_coherent_order(pool, positives, epoch_rng);
    negatives = detail::instance_coherent_order(pool, negatives, epoch_rng);

    // Every record of the larger class appears once per epoch; the smaller
    // class cycles so batches stay balanced 1:1 and no positive is skipped.
    const int half = std::max(1, cfg.batch / 2);
    const int driver = int(std::max(positives.size(), negatives.size()));
    const int n_batches = (driver + half - 1) / half;
    double score_loss_sum = 0.0;
    long score_count = 0;
    double prop_loss_sum = 0.0;
    long prop_count = 0;
    size_t pos_cursor = 0, neg_cursor = 0;
    Rng prop_rng_base = root.fork(salt_of("prop")).fork(std::uint64_t(epoch));

    for (int b = 0; b < n_batches; ++b) {
      const int m = std::min(half, driver - b * half);
      std::vector<int> batch;
      for (int j = 0; j < m; ++j) {
        batch.push_back(positives[pos_cursor]);
        pos_cursor = (pos_cursor + 1) % positives.size();
      }
      const size_t n_pos_batch = batch.size();
      for (int j = 0; j < m; ++j) {
        batch.push_back(negatives[neg_cursor]);
        neg_cursor = (neg_cursor + 1) % negatives.size();
      }
      const S inv_batch = S(1) / S(batch.size());
      const S inv_pos = n_pos_batch ? S(1) / S(n_pos_batch) : S(0);

      zero_grads(model.params());
      auto groups = detail::group_by_instance(pool, batch);
      for (auto& [inst, members] : groups) {
        EncoderOutput<S> enc = model.encode(inst->cloud);
        VNTensor<S> g_eqv;
        g_eqv.resize(enc.eqv.n, d);
        g_eqv.m.setZero();
        ScalarField<S> g_inv = ScalarField<S>::Zero(d_inv, enc.inv.cols());

        std::vector<int> pts;
        std::vector<Mat3<S>> rots;
        std::vector<int> labels;
        for (int idx : members) {
          pts.push_back(pool[size_t(idx)].point);
          rots.push_back(pool[size_t(idx)].orientation);
          labels.push_back(pool[size_t(idx)].result);
        }
        ScalarField<S> preds = model.scoring_head().forward(enc, pts, rots);
        VecX<S> pred_vec = preds.row(0).transpose();
        VecX<S> grad_vec;
        {
          // The loss helper averages over its own input; rescale so the batch
          // mean spans groups.
          VecX<S> g;
          S unscaled = loss_scoring(pred_vec, labels, &g);
          score_loss_sum += double(unscaled) * double(members.size());
          score_count += long(members.size());
          grad_vec = g * (S(members.size()) * inv_batch);
        }
        model.scoring_head().backward(grad_vec.transpose(), g_eqv, g_inv);

        for (int idx : members) {
          if (!pool[size_t(idx)].result) continue;
          Rng prop_rng = prop_rng_base.fork(std::uint64_t(idx));
          ScalarField<S> z = model.draw_noise(cfg.k_prop, prop_rng);
          std::vector<int> ppts(size_t(cfg.k_prop), pool[size_t(idx)].point);
          ProposalBatch<S> props = model.proposal_head().forward(enc, ppts, z);
          std::vector<Mat3<S>> cands;
          std::vector<int> cand_slot;
          for (int j = 0; j < cfg.k_prop; ++j)
            if (props.valid[size_t(j)]) {
              cands.push_back(props.rotations[size_t(j)]);
              cand_slot.push_back(j);
            }
          if (cands.empty()) continue;
          ProposalLossResult<S> pl = loss_proposal(cands, pool[size_t(idx)].orientation);
          prop_loss_sum += double(pl.value);
          ++prop_count;
          std::vector<Mat3<S>> g_rots(size_t(cfg.k_prop), Mat3<S>::Zero());
          std::vector<char> active(size_t(cfg.k_prop), 0);
          g_rots[size_t(cand_slot[size_t(pl.argmin)])] = pl.grad_argmin * inv_pos;
          active[size_t(cand_slot[size_t(pl.argmin)])] = 1;
          model.proposal_head().backward(g_rots, active, g_eqv);
        }

        model.encoder_backward(g_eqv, g_inv);
      }
      adam.step(model.params());
    }

    if (score_count) row.loss_scoring = score_loss_sum / double(score_count);
    if (prop_count) row.loss_proposal = prop_loss_sum / double(prop_count);
    try {
      row.heldout_f1 = eval_f1(model, data.instances, holdout);
    } catch (const UndefinedMetricError&) {
    }
    rows.push_back(row);
  }

  // Stage B. Targets are computed once from the frozen stage-A weights, as is
  // each instance's invariant feature field.
  if (cfg.epochs_b > 0) {
    std::vector<const DatasetInstance*> insts;
    for (const DatasetInstance& inst : data.instances) insts.push_back(&inst);
    for (const auto& up : online_instances) insts.push_back(up.get());

    ParamList<S> aff_params;
    model.affordance_head().collect(aff_params);
    Adam<S> adam_b(cfg.lr);

    std::vector<ScalarField<S>> inv_cache(insts.size());
    std::vector<VecX<S>> targets(insts.size());
    Rng target_base = root.fork(salt_of("target"));
    for (size_t i = 0; i < insts.size(); ++i) {
      EncoderOutput<S> enc = model.encode(insts[i]->cloud);
      inv_cache[i] = enc.inv;
      const int n = insts[i]->cloud.n();
      targets[i].resize(n);
      Rng inst_rng = target_base.fork(std::uint64_t(i));
      for (int p = 0; p < n; ++p) {
        Rng point_rng = inst_rng.fork(std::uint64_t(p));
        targets[i][p] = affordance_target(model, enc, p, cfg.k_aff, cfg.top_j, point_rng);
      }
    }

    std::vector<std::pair<int, int>> pairs;
    for (size_t i = 0; i < insts.size(); ++i)
      for (int p = 0; p < insts[i]->cloud.n(); ++p) pairs.emplace_back(int(i), p);

    for (int epoch = 1; epoch <= cfg.epochs_b; ++epoch) {
      std::vector<int> idx(pairs.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
      Rng epoch_rng = root.fork(salt_of("epoch_b")).fork(std::uint64_t(epoch));
      detail::shuffle_indices(idx, epoch_rng);

      double loss_sum = 0.0;
      long count = 0;
      for (size_t start = 0; start < idx.size(); start += size_t(cfg.batch)) {
        const size_t end = std::min(idx.size(), start + size_t(cfg.batch));
        const int b = int(end - start);
        ScalarField<S> in(d_inv, b);
        VecX<S> target(b);
        for (int j = 0; j < b; ++j) {
          auto [i, p] = pairs[size_t(idx[start + size_t(j)])];
          in.col(j) = inv_cache[size_t(i)].col(p);
          target[j] = targets[size_t(i)][p];
        }
        zero_grads(aff_params);
        ScalarField<S> pred = model.affordance_head().forward(in);
        VecX<S> grad;
        S value = loss_affordance(VecX<S>(pred.row(0).transpose()), target, &grad);
        loss_sum += double(value) * double(b);
        count += b;
        model.affordance_head().backward(grad.transpose());
        adam_b.step(aff_params);
      }

      MetricsRow row;
      row.stage = "B";
      row.epoch = epoch;
      if (count) row.loss_affordance = loss_sum / double(count);
      rows.push_back(row);
    }
  }

  return rows;
}

}  // namespace vnaff
