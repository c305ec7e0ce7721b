#pragma once

// Optimization loop: decoupled-weight-decay Adam over the tunable parameter
// set only, joint cross-entropy over the two pathway heads, per-step metric
// records and best-validation parameter snapshots.

#include <functional>
#include <optional>

#include "sa2vp/data.hpp"
#include "sa2vp/metrics.hpp"
#include "sa2vp/ops.hpp"
#include "sa2vp/params.hpp"

namespace sa2vp {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int64_t batch_size = 64;
  int64_t epochs = 20;
  double lambda = 0.7;    // weight of the base-pathway loss
  bool cosine_lr = false; // constant lr by default
  double grad_clip = 0.0; // 0 disables clipping
  uint64_t seed = 0;

  void validate() const {
    check(learning_rate > 0, ErrKind::validation, "learning_rate must be positive");
    check(weight_decay >= 0, ErrKind::validation, "weight_decay must be >= 0");
    check(batch_size > 0, ErrKind::validation, "batch_size must be positive");
    check(epochs > 0, ErrKind::validation, "epochs must be positive");
    check(lambda >= 0 && lambda <= 1, ErrKind::validation, "lambda must be in [0,1]");
    check(grad_clip >= 0, ErrKind::validation, "grad_clip must be >= 0");
  }
};

template <typename T>
class AdamW {
 public:
  AdamW(const ParamList<T>& tunable, double lr, double weight_decay)
      : lr_(lr), weight_decay_(weight_decay) {
    for (const auto& p : tunable) {
      check(p.tensor.requires_grad(), ErrKind::validation,
            "optimizer given frozen parameter " + p.name);
      Slot s;
      s.param = p.tensor;
      s.decay = p.decay;
      s.m.assign(static_cast<size_t>(p.tensor.numel()), T(0));
      s.v.assign(static_cast<size_t>(p.tensor.numel()), T(0));
      slots_.push_back(std::move(s));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t steps() const { return step_; }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

  // Global-norm gradient clip; no-op when max_norm <= 0.
  void clip_gradients(double max_norm) {
    if (max_norm <= 0) return;
    double sq = 0;
    for (auto& s : slots_)
      if (s.param.has_grad())
        for (T g : s.param.grad()) sq += static_cast<double>(g) * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    T f = static_cast<T>(max_norm / norm);
    for (auto& s : slots_)
      if (s.param.has_grad())
        for (T& g : s.param.grad_mut()) g *= f;
  }

  void step() {
    ++step_;
    for (auto& s : slots_) {
      if (!s.param.has_grad()) detail::ensure_grad(*s.param.node());
      kernels::adamw_step(s.param.data(), s.param.grad().data(), s.m.data(), s.v.data(),
                          s.param.numel(), static_cast<T>(lr_), T(0.9), T(0.999), T(1e-8),
                          s.decay ? static_cast<T>(weight_decay_) : T(0), step_);
    }
  }

 private:
  struct Slot {
    Tensor<T> param;
    bool decay = true;
    std::vector<T> m, v;
  };
  std::vector<Slot> slots_;
  double lr_;
  double weight_decay_;
  int64_t step_ = 0;
};

// lambda * CE(base) + (1 - lambda) * CE(prompt). Both terms are always
// evaluated, so boundary lambdas yield exact-zero gradients for the silenced
// head rather than a missing graph.
template <typename T>
Tensor<T> joint_loss(const Tensor<T>& base_logits, const Tensor<T>& prompt_logits,
                     const std::vector<int64_t>& labels, T lambda) {
  check(lambda >= T(0) && lambda <= T(1), ErrKind::validation, "lambda must be in [0,1]");
  check(base_logits.shape() == prompt_logits.shape(), ErrKind::shape,
        "joint_loss: logit shapes differ");
  auto base = cross_entropy(base_logits, labels);
  auto prompt = cross_entropy(prompt_logits, labels);
  return add(scale(base, lambda), scale(prompt, T(1) - lambda));
}

// Forward interface used by the training loop; prompt_logits is undefined for
// single-head models.
template <typename T>
struct ForwardResult {
  Tensor<T> base_logits;
  Tensor<T> prompt_logits;
};

template <typename T>
using ForwardFn = std::function<ForwardResult<T>(const Tensor<T>& images)>;

template <typename T>
Tensor<T> batch_images(const data::Dataset& ds, const std::vector<int64_t>& indices,
                       const std::vector<data::Sample>& split) {
  int64_t b = static_cast<int64_t>(indices.size());
  auto out = Tensor<T>::zeros({b, ds.channels, ds.height, ds.width});
  int64_t n = ds.channels * ds.height * ds.width;
  for (int64_t i = 0; i < b; ++i) {
    const auto& px = split[static_cast<size_t>(indices[static_cast<size_t>(i)])].pixels;
    for (int64_t j = 0; j < n; ++j)
      out.values()[i * n + j] = static_cast<T>(px[static_cast<size_t>(j)]);
  }
  return out;
}

struct EvalResult {
  double accuracy = 0;         // base-pathway logits decide
  double prompt_accuracy = 0;  // diagnostic; 0 when single-head
  double loss_base = 0;
  double loss_prompt = 0;
  std::vector<int64_t> per_class_correct;
  std::vector<int64_t> per_class_total;
};

template <typename T>
double batch_accuracy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
  int64_t rows = logits.dim(0), classes = logits.dim(1);
  int64_t correct = 0;
  for (int64_t r = 0; r < rows; ++r) {
    int64_t best = 0;
    for (int64_t c = 1; c < classes; ++c)
      if (logits.values()[r * classes + c] > logits.values()[r * classes + best]) best = c;
    if (best == labels[static_cast<size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows);
}

// Pure: no tape, no parameter mutation; repeated calls give identical results.
template <typename T>
EvalResult evaluate(const ForwardFn<T>& forward, const data::Dataset& ds,
                    const std::vector<data::Sample>& split, int64_t batch_size) {
  check(!split.empty(), ErrKind::validation, "evaluate: empty dataset split");
  EvalResult res;
  res.per_class_correct.assign(static_cast<size_t>(ds.num_classes), 0);
  res.per_class_total.assign(static_cast<size_t>(ds.num_classes), 0);
  int64_t n = static_cast<int64_t>(split.size());
  double base_loss_sum = 0, prompt_loss_sum = 0;
  int64_t base_correct = 0, prompt_correct = 0;
  for (int64_t start = 0; start < n; start += batch_size) {
    int64_t stop = std::min(n, start + batch_size);
    std::vector<int64_t> idx;
    std::vector<int64_t> labels;
    for (int64_t i = start; i < stop; ++i) {
      idx.push_back(i);
      labels.push_back(split[static_cast<size_t>(i)].label);
    }
    auto images = batch_images<T>(ds, idx, split);
    auto out = forward(images);
    int64_t rows = stop - start;
    base_loss_sum += static_cast<double>(cross_entropy(out.base_logits, labels).item()) * rows;
    for (int64_t r = 0; r < rows; ++r) {
      int64_t classes = out.base_logits.dim(1);
      int64_t best = 0;
      for (int64_t c = 1; c < classes; ++c)
        if (out.base_logits.values()[r * classes + c] >
            out.base_logits.values()[r * classes + best])
          best = c;
      int64_t truth = labels[static_cast<size_t>(r)];
      res.per_class_total[static_cast<size_t>(truth)]++;
      if (best == truth) {
        ++base_correct;
        res.per_class_correct[static_cast<size_t>(truth)]++;
      }
    }
    if (out.prompt_logits.defined()) {
      prompt_loss_sum +=
          static_cast<double>(cross_entropy(out.prompt_logits, labels).item()) * rows;
      prompt_correct += static_cast<int64_t>(
          std::lround(batch_accuracy(out.prompt_logits, labels) * static_cast<double>(rows)));
    }
  }
  res.accuracy = static_cast<double>(base_correct) / static_cast<double>(n);
  res.prompt_accuracy = static_cast<double>(prompt_correct) / static_cast<double>(n);
  res.loss_base = base_loss_sum / static_cast<double>(n);
  res.loss_prompt = prompt_loss_sum / static_cast<double>(n);
  return res;
}

struct TrainResult {
  double best_val_accuracy = 0;
  int64_t best_epoch = -1;
  double final_train_loss = 0;
  int64_t steps = 0;
};

// Trains the tunable subset of `params`. Validation runs once per epoch; the
// best-validation parameter values are restored before returning. A NaN loss
// aborts with a numeric error carrying the step state.
template <typename T>
TrainResult train_model(const ForwardFn<T>& forward, const ParamList<T>& params,
                        const data::Dataset& ds, const TrainConfig& cfg,
                        MetricsWriter* metrics) {
  cfg.validate();
  check(!ds.train.empty(), ErrKind::validation, "train_model: empty training split");
  auto tunable = tunable_of(params);
  check(!tunable.empty(), ErrKind::validation, "train_model: no tunable parameters");
  AdamW<T> opt(tunable, cfg.learning_rate, cfg.weight_decay);
  Rng rng = Rng::derive(cfg.seed, "train.shuffle");

  std::vector<std::vector<T>> best_values;
  TrainResult result;
  int64_t step = 0;
  bool dual_head = false;
  T lambda = static_cast<T>(cfg.lambda);

  std::vector<int64_t> order(ds.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_lr)
      opt.set_lr(cfg.learning_rate * 0.5 *
                 (1.0 + std::cos(M_PI * static_cast<double>(epoch) / cfg.epochs)));
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int64_t> idx(order.begin() + start, order.begin() + stop);
      std::vector<int64_t> labels;
      labels.reserve(idx.size());
      for (int64_t i : idx) labels.push_back(ds.train[static_cast<size_t>(i)].label);
      auto images = batch_images<T>(ds, idx, ds.train);

      Tape<T> tape;
      double loss_base = 0, loss_prompt = 0, loss_all = 0, acc = 0;
      {
        typename Tape<T>::Scope scope(tape);
        auto out = forward(images);
        Tensor<T> loss;
        dual_head = out.prompt_logits.defined();
        if (out.prompt_logits.defined()) {
          auto lb = cross_entropy(out.base_logits, labels);
          auto lp = cross_entropy(out.prompt_logits, labels);
          loss = add(scale(lb, lambda), scale(lp, T(1) - lambda));
          loss_base = static_cast<double>(lb.item());
          loss_prompt = static_cast<double>(lp.item());
        } else {
          loss = cross_entropy(out.base_logits, labels);
          loss_base = static_cast<double>(loss.item());
        }
        loss_all = static_cast<double>(loss.item());
        acc = batch_accuracy(out.base_logits, labels);
        if (!std::isfinite(loss_all))
          fail_numeric("train_model: non-finite loss at step " + std::to_string(step) +
                       " (base=" + std::to_string(loss_base) +
                       ", prompt=" + std::to_string(loss_prompt) + "); aborting");
        tape.backward(loss);
      }
      opt.clip_gradients(cfg.grad_clip);
      opt.step();
      opt.zero_grad();
      ++step;
      result.final_train_loss = loss_all;
      if (metrics) metrics->row(step, "train", loss_base, loss_prompt, loss_all, acc);
    }

    if (!ds.val.empty()) {
      auto ev = evaluate(forward, ds, ds.val, cfg.batch_size);
      double loss_all = dual_head
                            ? cfg.lambda * ev.loss_base + (1 - cfg.lambda) * ev.loss_prompt
                            : ev.loss_base;
      if (metrics) metrics->row(step, "val", ev.loss_base, ev.loss_prompt, loss_all, ev.accuracy);
      if (ev.accuracy > result.best_val_accuracy || result.best_epoch < 0) {
        result.best_val_accuracy = ev.accuracy;
        result.best_epoch = epoch;
        best_values.clear();
        for (const auto& p : tunable)
          best_values.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
      }
    }
  }
  if (!best_values.empty())
    for (size_t i = 0; i < tunable.size(); ++i)
      std::copy(best_values[i].begin(), best_values[i].end(),
                tunable[i].tensor.values().begin());
  result.steps = step;
  return result;
}

}  // namespace sa2vp
