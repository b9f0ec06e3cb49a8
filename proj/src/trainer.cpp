// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "mpolstm/error.hpp"
#include "mpolstm/training.hpp"

namespace mpolstm {

namespace {

constexpr std::uint64_t kInitStream = 0x5eed1417c0ffee01ULL;
constexpr std::size_t kEvalBatch = 250;

struct Dataset {
  TaskKind kind = TaskKind::kClassification;
  std::vector<Sequence> inputs;
  std::vector<int> labels;
  std::vector<Sequence> targets;
  std::size_t size() const { return inputs.size(); }
};

Dataset load(const SyntheticTask& task, std::size_t first, std::size_t count) {
  Dataset d;
  d.kind = task.kind;
  if (task.kind == TaskKind::kClassification) {
    auto set = gen_classification(task, first, count);
    d.inputs = std::move(set.sequences);
    d.labels = std::move(set.labels);
  } else {
    auto set = gen_regression(task, first, count);
    d.inputs = std::move(set.noisy);
    d.targets = std::move(set.clean);
  }
  return d;
}

std::vector<Matrix> stack_steps(const std::vector<Sequence>& seqs, std::span<const std::size_t> idx) {
  const std::size_t T = seqs.front().size(), D = seqs.front().front().size();
  std::vector<Matrix> out(T, Matrix(idx.size(), D));
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t t = 0; t < T; ++t) std::copy(seqs[idx[r]][t].begin(), seqs[idx[r]][t].end(), out[t].row(r).begin());
  return out;
}

struct HeadPass {
  double loss = 0.0;           // mean over the batch
  double correct = 0.0;        // classification only
  double squared_error = 0.0;  // regression only, summed
  std::vector<Matrix> dh;      // per step, empty matrix = no cotangent
  Matrix dw;
  std::vector<double> db;
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Softplus, stable for large |z|.
double log1pexp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

HeadPass head_pass(const ReadoutParams& head, const BatchTrace& tr, const Dataset& data,
                   std::span<const std::size_t> idx, bool want_grad) {
  const std::size_t B = idx.size(), T = tr.h.size(), H = head.w.cols();
  HeadPass out;
  out.dh.assign(T, Matrix());
  if (want_grad) {
    out.dw = Matrix(head.w.rows(), H);
    out.db.assign(head.b.size(), 0.0);
  }
  const double inv_b = 1.0 / static_cast<double>(B);

  if (data.kind == TaskKind::kClassification) {
    const Matrix& h = tr.h.back();
    Matrix dh(B, H);
    for (std::size_t r = 0; r < B; ++r) {
      double z = head.b[0];
      for (std::size_t j = 0; j < H; ++j) z += head.w(0, j) * h(r, j);
      const double y = data.labels[idx[r]];
      out.loss += (log1pexp(z) - y * z) * inv_b;
      out.correct += ((z > 0.0) == (y > 0.5)) ? 1.0 : 0.0;
      if (!want_grad) continue;
      const double dz = (sigmoid(z) - y) * inv_b;
      out.db[0] += dz;
      for (std::size_t j = 0; j < H; ++j) {
        out.dw(0, j) += dz * h(r, j);
        dh(r, j) = dz * head.w(0, j);
      }
    }
    if (want_grad) out.dh.back() = std::move(dh);
    return out;
  }

  const std::size_t D = head.w.rows();
  const double scale = 1.0 / static_cast<double>(B * T * D);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix pred = matmul_nt(tr.h[t], head.w);
    Matrix dpred(B, D);
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t d = 0; d < D; ++d) {
        const double e = pred(r, d) + head.b[d] - data.targets[idx[r]][t][d];
        out.squared_error += e * e;
        dpred(r, d) = 2.0 * e * scale;
      }
    if (!want_grad) continue;
    const Matrix dw = matmul_tn(dpred, tr.h[t]);
    for (std::size_t e = 0; e < dw.size(); ++e) out.dw.storage()[e] += dw.storage()[e];
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t d = 0; d < D; ++d) out.db[d] += dpred(r, d);
    out.dh[t] = matmul(dpred, head.w);
  }
  out.loss = out.squared_error * scale;
  return out;
}

LstmParams effective_cell(const TrainedModel& m) { return m.method == Method::kMpo ? m.mpo.to_dense() : m.dense; }

struct PassTotals {
  double loss = 0.0;  // mean per sequence
  double metric = 0.0;
};

PassTotals full_pass(const TrainedModel& model, const Dataset& data) {
  const LstmParams cell = effective_cell(model);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double loss = 0.0, correct = 0.0, sse = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += kEvalBatch) {
    const std::span<const std::size_t> part(idx.data() + s, std::min(kEvalBatch, idx.size() - s));
    const BatchTrace tr = lstm_batch_forward(cell, stack_steps(data.inputs, part));
    const HeadPass hp = head_pass(model.readout, tr, data, part, false);
    loss += hp.loss * static_cast<double>(part.size());
    correct += hp.correct;
    sse += hp.squared_error;
  }
  const double n = static_cast<double>(data.size());
  PassTotals out;
  out.loss = loss / n;
  if (data.kind == TaskKind::kClassification) {
    out.metric = correct / n;
  } else {
    const double cells = n * static_cast<double>(data.targets.front().size() * data.targets.front().front().size());
    out.metric = sse / cells;
  }
  return out;
}

ReadoutParams init_readout(TaskKind kind, std::size_t H, std::size_t D, std::mt19937_64& rng) {
  const std::size_t out = kind == TaskKind::kClassification ? 1 : D;
  ReadoutParams r{Matrix(out, H), std::vector<double>(out, 0.0)};
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(H + out)));
  for (double& v : r.w.storage()) v = normal(rng);
  return r;
}

std::vector<std::span<double>> parameter_views(TrainedModel& m) {
  std::vector<std::span<double>> v;
  if (m.method == Method::kMpo) {
    for (std::size_t k = 0; k < m.mpo.w.num_cores(); ++k) v.push_back(m.mpo.w.core_values(k));
    for (std::size_t k = 0; k < m.mpo.u.num_cores(); ++k) v.push_back(m.mpo.u.core_values(k));
    v.push_back(m.mpo.b);
  } else {
    v.push_back(m.dense.w_x.data());
    v.push_back(m.dense.w_h.data());
    v.push_back(m.dense.b);
  }
  v.push_back(m.readout.w.data());
  v.push_back(m.readout.b);
  return v;
}

std::size_t recurrent_parameter_count(const TrainedModel& m) {
  switch (m.method) {
    case Method::kMpo:
      return m.mpo.parameter_count();
    case Method::kPruning:
      return m.mask->kept();
    case Method::kDense:
      break;
  }
  return m.dense.w_x.size() + m.dense.w_h.size();
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kDense:
      return "dense";
    case Method::kMpo:
      return "mpo";
    case Method::kPruning:
      return "pruning";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "dense") return Method::kDense;
  if (s == "mpo") return Method::kMpo;
  if (s == "pruning") return Method::kPruning;
  throw ConfigError("unknown method '" + s + "'");
}

SyntheticTask trial_task(const SyntheticTask& task, std::uint64_t seed) {
  SyntheticTask t = task;
  t.seed = task.seed ^ (seed * 0x9e3779b97f4a7c15ULL);
  return t;
}

double evaluate(const TrainedModel& model, const SyntheticTask& task) {
  return full_pass(model, load(task, task.train_size, task.test_size)).metric;
}

TrainOutcome train(const TrialSpec& spec, const SyntheticTask& task, const TrainConfig& config, std::uint64_t seed,
                   const TrainedModel* warm_start) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t H = config.hidden_dim, X = task.input_dim;
  TrainOutcome out;
  TrialResult& res = out.result;
  res.rate = spec.rate;
  res.method = spec.method;
  res.seed = seed;
  const std::size_t dense_count = dense_lstm_count(X, H);

  std::mt19937_64 rng(seed ^ kInitStream);
  TrainedModel& model = out.model;
  model.method = spec.method;
  switch (spec.method) {
    case Method::kDense:
      model.dense = LstmParams::glorot(X, H, rng);
      model.readout = init_readout(task.kind, H, X, rng);
      break;
    case Method::kMpo: {
      const BondChoice bonds = bonds_for_target(spec.rate, config.x_factors, config.h_factors, config.bond_search);
      res.d_w = bonds.d_w;
      res.d_u = bonds.d_u;
      model.mpo = MpoLstmParams::random(GateFusedPlan::uniform(config.x_factors, config.h_factors, bonds.d_w),
                                        GateFusedPlan::uniform(config.h_factors, config.h_factors, bonds.d_u), rng);
      model.readout = init_readout(task.kind, H, X, rng);
      if (model.mpo.input_dim() != X || model.mpo.hidden_dim() != H) {
        throw ExtentError("factor lists do not match the task and hidden dimensions");
      }
      break;
    }
    case Method::kPruning: {
      if (!(spec.rate >= 1.0)) throw PlanningError("pruning rate must be >= 1");
      TrainOutcome base;
      if (!warm_start) {
        base = train(TrialSpec{Method::kDense, 1.0}, task, config, seed);
        if (base.result.failed) {
          res.failed = true;
          res.error = "dense pre-training failed: " + base.result.error;
          return out;
        }
        warm_start = &base.model;
      }
      if (warm_start->method != Method::kDense) throw ConfigError("pruning must start from a dense model");
      model.dense = warm_start->dense;
      model.readout = warm_start->readout;
      model.mask = magnitude_prune(model.dense, 1.0 - 1.0 / spec.rate);
      apply_mask_in_place(model.dense, *model.mask);
      // Keep the shuffling stream independent of whether pre-training ran here.
      rng.seed(seed ^ kInitStream ^ 0x9d1ULL);
      break;
    }
  }
  if (model.method != Method::kMpo && (model.dense.input_dim() != X || model.dense.hidden_dim() != H)) {
    throw ExtentError("cell dimensions do not match the task");
  }
  res.parameter_count = recurrent_parameter_count(model);
  res.ratio_actual = static_cast<double>(dense_count) / static_cast<double>(res.parameter_count);

  const SyntheticTask data = trial_task(task, seed);
  const Dataset train_set = load(data, 0, data.train_size);
  res.epoch_loss.push_back(full_pass(model, train_set).loss);

  auto views = parameter_views(model);
  std::vector<std::size_t> sizes;
  for (auto v : views) sizes.push_back(v.size());
  AdamState adam(config.adam, sizes);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs && !res.failed; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(config.batch_size, order.size() - s));
      const LstmParams cell = effective_cell(model);
      const BatchTrace tr = lstm_batch_forward(cell, stack_steps(train_set.inputs, idx));
      HeadPass hp = head_pass(model.readout, tr, train_set, idx, true);
      if (!std::isfinite(hp.loss)) {
        res.failed = true;
        res.error = "non-finite training loss";
        break;
      }
      epoch_loss += hp.loss * static_cast<double>(idx.size());
      BatchGrads bg = lstm_batch_backward(cell, tr, hp.dh);

      std::vector<DenseTensor> core_grads;
      std::vector<std::span<double>> grads;
      if (model.method == Method::kMpo) {
        core_grads = reconstruct_grad(model.mpo.w, bg.w_x);
        auto gu = reconstruct_grad(model.mpo.u, bg.w_h);
        std::move(gu.begin(), gu.end(), std::back_inserter(core_grads));
        for (auto& g : core_grads) grads.push_back(g.data());
      } else {
        grads.push_back(bg.w_x.data());
        grads.push_back(bg.w_h.data());
      }
      grads.push_back(bg.b);
      grads.push_back(hp.dw.data());
      grads.push_back(hp.db);

      clip_global_norm(grads, config.clip_norm);
      std::vector<std::span<const double>> cgrads(grads.begin(), grads.end());
      try {
        adam_step(adam, views, cgrads);
      } catch (const NumericError& e) {
        res.failed = true;
        res.error = e.what();
        break;
      }
      if (model.mask) apply_mask_in_place(model.dense, *model.mask);
    }
    if (!res.failed) res.epoch_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));
  }

  if (!res.failed) {
    res.metric = evaluate(model, data);
    if (!std::isfinite(res.metric)) {
      res.failed = true;
      res.error = "non-finite evaluation metric";
    }
  }
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace mpolstm
