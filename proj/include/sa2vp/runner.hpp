#pragma once

// End-to-end run flows shared by the CLI and the acceptance suite: pretrain,
// prompt-tune under any method, evaluate a checkpoint, similarity-map
// analysis and the parameter census.

#include <iostream>
#include <memory>

#include "sa2vp/census.hpp"
#include "sa2vp/checkpoint.hpp"
#include "sa2vp/config.hpp"
#include "sa2vp/metrics.hpp"
#include "sa2vp/prompting.hpp"
#include "sa2vp/training.hpp"

namespace sa2vp {

// Method-specific model bundle behind one forward closure.
template <typename T>
struct ModelBundle {
  ForwardFn<T> forward;
  ParamList<T> params;
  ParameterPartition partition;
  std::shared_ptr<DualPathwayModel<T>> dual;          // set for sa2vp
  std::shared_ptr<SequentialPromptModel<T>> seq;      // set for sequential
  std::shared_ptr<BackboneClassifier<T>> classifier;  // set otherwise
};

// Builds the model for cfg.method with freshly initialized prompt-side
// parameters. When `pretrained` is non-empty the backbone weights are loaded
// from it; tuning methods then freeze the backbone.
template <typename T>
ModelBundle<T> build_model(RunConfig& cfg, const std::filesystem::path& pretrained) {
  cfg.validate();
  Rng rng = Rng::derive(cfg.seed, "model.init");
  ModelBundle<T> bundle;
  switch (cfg.method) {
    case Method::sa2vp: {
      PromptingConfig pc = cfg.prompting_config();
      pc.validate(cfg.backbone);
      cfg.prompt_layers = pc.prompt_layers;  // resolved lists go back into the echo
      cfg.interaction_layers = pc.interaction_layers;
      auto m = std::make_shared<DualPathwayModel<T>>(cfg.backbone, pc, cfg.num_classes, rng);
      if (!pretrained.empty()) load_checkpoint_into(pretrained, m->named_params(), "backbone.");
      bundle.partition = m->freeze_for_prompt_tuning();
      bundle.forward = [m](const Tensor<T>& images) {
        auto out = m->forward(images);
        return ForwardResult<T>{out.base_logits, out.prompt_logits};
      };
      bundle.params = m->named_params();
      bundle.dual = m;
      break;
    }
    case Method::sequential: {
      auto m = std::make_shared<SequentialPromptModel<T>>(cfg.backbone, cfg.num_prompt_tokens,
                                                          cfg.num_classes, rng);
      if (!pretrained.empty()) load_checkpoint_into(pretrained, m->named_params(), "backbone.");
      bundle.partition = m->freeze_for_prompt_tuning();
      bundle.forward = [m](const Tensor<T>& images) {
        return ForwardResult<T>{m->forward(images), Tensor<T>()};
      };
      bundle.params = m->named_params();
      bundle.seq = m;
      break;
    }
    case Method::head_only:
    case Method::full_finetune: {
      auto m = std::make_shared<BackboneClassifier<T>>(cfg.backbone, cfg.num_classes, rng);
      if (!pretrained.empty()) load_checkpoint_into(pretrained, m->named_params(), "backbone.");
      if (cfg.method == Method::head_only) m->freeze_backbone();
      bundle.partition = partition_of(m->named_params());
      bundle.forward = [m](const Tensor<T>& images) {
        return ForwardResult<T>{m->forward(images), Tensor<T>()};
      };
      bundle.params = m->named_params();
      bundle.classifier = m;
      break;
    }
  }
  return bundle;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_io("cannot write " + path.string());
  f << text;
}

struct RunOutcome {
  double val_accuracy = 0;
  double test_accuracy = 0;
  double prompt_test_accuracy = 0;
  CensusReport census;
  std::filesystem::path checkpoint;
};

// Pretraining: everything tunable, trained on the configured dataset
// (task_a unless overridden), checkpoint + metrics + config echo written to
// out_dir.
template <typename T>
RunOutcome run_pretrain(RunConfig cfg, const std::filesystem::path& out_dir) {
  cfg.dataset = cfg.dataset == "folder" ? cfg.dataset : "task_a";
  cfg.method = Method::full_finetune;
  cfg.out_dir = out_dir.string();
  auto ds = cfg.load_dataset();
  if (cfg.dataset == "folder") cfg.backbone.num_pretrain_classes = ds.num_classes;
  cfg.num_classes = cfg.backbone.num_pretrain_classes;
  auto bundle = build_model<T>(cfg, {});

  write_text(out_dir / "config_resolved.cfg", cfg.echo());
  MetricsWriter metrics(out_dir / "metrics.csv");
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto result = train_model<T>(bundle.forward, bundle.params, ds, tc, &metrics);

  RunOutcome outcome;
  outcome.val_accuracy = result.best_val_accuracy;
  auto ev = evaluate<T>(bundle.forward, ds, ds.test, tc.batch_size);
  outcome.test_accuracy = ev.accuracy;
  metrics.row(result.steps, "test", ev.loss_base, ev.loss_prompt, ev.loss_base, ev.accuracy);
  outcome.census = census_from(infos_of(bundle.params));
  outcome.checkpoint = out_dir / "checkpoint.bin";
  save_checkpoint<T>(outcome.checkpoint, bundle.params, cfg.to_map());
  return outcome;
}

// Prompt tuning (or head-only / full fine-tune) from a pretrained checkpoint.
template <typename T>
RunOutcome run_tune(RunConfig cfg, const std::filesystem::path& pretrained,
                    const std::filesystem::path& out_dir) {
  cfg.out_dir = out_dir.string();
  auto ds = cfg.load_dataset();
  check(ds.num_classes == cfg.num_classes || cfg.dataset == "folder", ErrKind::validation,
        "dataset class count disagrees with num_classes");
  if (cfg.dataset == "folder") cfg.num_classes = ds.num_classes;
  auto bundle = build_model<T>(cfg, pretrained);

  RunOutcome outcome;
  outcome.census = census_from(infos_of(bundle.params));
  write_text(out_dir / "config_resolved.cfg", cfg.echo());
  write_text(out_dir / "census.txt", outcome.census.to_string());
  std::cout << "tuned/total: ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", outcome.census.tuned_percent());
  std::cout << buf << " (" << outcome.census.total_tunable << " of " << outcome.census.total()
            << ")\n";

  MetricsWriter metrics(out_dir / "metrics.csv");
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.lambda = cfg.lambda;
  auto result = train_model<T>(bundle.forward, bundle.params, ds, tc, &metrics);

  outcome.val_accuracy = result.best_val_accuracy;
  auto ev = evaluate<T>(bundle.forward, ds, ds.test, tc.batch_size);
  outcome.test_accuracy = ev.accuracy;
  outcome.prompt_test_accuracy = ev.prompt_accuracy;
  double test_all = bundle.dual ? cfg.lambda * ev.loss_base + (1 - cfg.lambda) * ev.loss_prompt
                                : ev.loss_base;
  metrics.row(result.steps, "test", ev.loss_base, ev.loss_prompt, test_all, ev.accuracy);
  outcome.checkpoint = out_dir / "checkpoint.bin";
  save_checkpoint<T>(outcome.checkpoint, bundle.params, cfg.to_map());
  return outcome;
}

// Rebuilds the model a checkpoint was saved from (config echo) and loads all
// parameter values. Returns the bundle plus the restored config.
template <typename T>
ModelBundle<T> restore_model(const std::filesystem::path& checkpoint, RunConfig& cfg_out) {
  CheckpointInfo info = read_checkpoint_info(checkpoint);
  cfg_out = RunConfig::from_map(info.config);
  auto bundle = build_model<T>(cfg_out, {});
  load_checkpoint_into(checkpoint, bundle.params);
  return bundle;
}

template <typename T>
EvalResult run_eval(const std::filesystem::path& checkpoint, const std::string& split_override) {
  RunConfig cfg;
  auto bundle = restore_model<T>(checkpoint, cfg);
  auto ds = cfg.load_dataset();
  const std::string split = split_override.empty() ? cfg.eval_split : split_override;
  const auto& samples = split == "val" ? ds.val : (split == "train" ? ds.train : ds.test);
  return evaluate<T>(bundle.forward, ds, samples, cfg.train.batch_size);
}

// Similarity analysis on a tuned sa2vp checkpoint: forward one image, pick
// the max-norm final base token, write its cosine similarity against every
// token of the first prompt map.
template <typename T>
SimilarityMap run_analyze(const std::filesystem::path& checkpoint,
                          const std::filesystem::path& image_path,
                          const std::filesystem::path& out_file) {
  RunConfig cfg;
  auto bundle = restore_model<T>(checkpoint, cfg);
  check(bundle.dual != nullptr, ErrKind::validation,
        "analyze requires an sa2vp checkpoint, got method " + method_name(cfg.method));

  Tensor<T> image;
  if (!image_path.empty()) {
    std::vector<double> px;
    int64_t ch, h, w;
    if (!data::read_pnm(image_path, px, ch, h, w))
      fail_io("cannot decode image " + image_path.string());
    check(ch == cfg.backbone.channels, ErrKind::validation, "image channel count mismatch");
    if (h != cfg.backbone.image_size || w != cfg.backbone.image_size)
      px = data::resize_nearest(px, ch, h, w, cfg.backbone.image_size);
    image = Tensor<T>::zeros({1, ch, cfg.backbone.image_size, cfg.backbone.image_size});
    for (size_t i = 0; i < px.size(); ++i) image.values()[static_cast<int64_t>(i)] = static_cast<T>(px[i]);
  } else {
    auto ds = cfg.load_dataset();
    check(!ds.test.empty(), ErrKind::validation, "analyze: dataset has no test samples");
    image = batch_images<T>(ds, {0}, ds.test);
  }

  typename DualPathwayModel<T>::Trace trace;
  bundle.dual->forward(image, &trace);
  auto final_tokens = reshape(trace.base_final, {bundle.dual->base_grid().count(),
                                                 cfg.backbone.embed_dim});
  int64_t first_layer = bundle.dual->prompting_config().prompt_layers.front();
  auto map = cosine_similarity_map(final_tokens, bundle.dual->base_grid(),
                                   bundle.dual->prompt_map(first_layer),
                                   bundle.dual->prompt_grid());
  if (!out_file.empty()) write_matrix(out_file, map.grid.h, map.grid.w, map.values);
  return map;
}

}  // namespace sa2vp
