// Command-line driver: pretrain, tune, eval, analyze, census.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "sa2vp/runner.hpp"

using namespace sa2vp;

namespace {

struct Overrides {
  std::string method;
  long long seed = -1;
  int window = 0;
  double gamma = std::nan("");
  double lambda = std::nan("");
  long long bottleneck = -1;
  long long scale = -1;
  int deep = 0, shallow = 0;
  int global_attention = 0;
  std::string out;

  void apply(RunConfig& cfg) const {
    if (!method.empty()) cfg.set("method", method);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (window > 0) cfg.set("c", std::to_string(window));
    if (!std::isnan(gamma)) cfg.gamma = gamma;
    if (!std::isnan(lambda)) cfg.lambda = lambda;
    if (bottleneck >= 0) cfg.bottleneck = bottleneck;
    if (scale >= 1) cfg.scale = scale;
    if (deep) cfg.deep = true;
    if (shallow) cfg.deep = false;
    if (global_attention) cfg.global_attention = true;
    if (!out.empty()) cfg.out_dir = out;
  }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--method", ov.method, "sa2vp | sequential | head_only | full_finetune");
  cmd->add_option("--seed", ov.seed, "RNG seed override");
  cmd->add_option("--c", ov.window, "cross-attention window width (odd)");
  cmd->add_option("--gamma", ov.gamma, "fusion weight");
  cmd->add_option("--lambda", ov.lambda, "base-pathway loss weight");
  cmd->add_option("--t", ov.bottleneck, "adapter bottleneck width");
  cmd->add_option("--scale", ov.scale, "prompt map scale factor");
  cmd->add_flag("--deep", ov.deep, "prompt maps at multiple depths");
  cmd->add_flag("--shallow", ov.shallow, "prompt map at the first layer only");
  cmd->add_flag("--global-attention", ov.global_attention,
                "replace windowed attention with global attention");
  cmd->add_option("--out", ov.out, "output directory");
}

RunConfig load_config(const std::string& config_path, const Overrides& ov) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  ov.apply(cfg);
  return cfg;
}

Precision checkpoint_precision(const std::string& path) {
  return read_checkpoint_info(path).dtype == "f32" ? Precision::f32 : Precision::f64;
}

template <typename Fn>
void with_precision(Precision p, Fn&& fn) {
  if (p == Precision::f64)
    fn(double{});
  else
    fn(float{});
}

void print_eval(const EvalResult& ev, const std::vector<std::string>& class_names) {
  std::printf("accuracy: %.4f\n", ev.accuracy);
  if (ev.prompt_accuracy > 0) std::printf("prompt-head accuracy: %.4f\n", ev.prompt_accuracy);
  for (size_t k = 0; k < ev.per_class_total.size(); ++k) {
    double acc = ev.per_class_total[k] == 0
                     ? 0.0
                     : static_cast<double>(ev.per_class_correct[k]) / ev.per_class_total[k];
    const char* name = k < class_names.size() ? class_names[k].c_str() : "?";
    std::printf("  class %-14s %4lld/%-4lld  %.4f\n", name,
                static_cast<long long>(ev.per_class_correct[k]),
                static_cast<long long>(ev.per_class_total[k]), acc);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatially aligned visual prompt tuning"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, image_path, split;
  Overrides ov;

  auto* pretrain = app.add_subcommand("pretrain", "train the backbone on the pretraining task");
  pretrain->add_option("--config", config_path, "run configuration file");
  add_override_flags(pretrain, ov);

  auto* tune = app.add_subcommand("tune", "prompt-tune a pretrained checkpoint");
  tune->add_option("--config", config_path, "run configuration file");
  tune->add_option("--checkpoint", checkpoint_path, "pretrained checkpoint")->required();
  add_override_flags(tune, ov);

  auto* eval = app.add_subcommand("eval", "evaluate a tuned checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
  eval->add_option("--split", split, "train | val | test (default: config eval_split)");
  eval->add_option("--out", ov.out, "directory for eval.txt (optional)");

  auto* analyze = app.add_subcommand("analyze", "similarity map between image and prompt tokens");
  analyze->add_option("--checkpoint", checkpoint_path, "tuned sa2vp checkpoint")->required();
  analyze->add_option("--image", image_path, "PPM/PGM image (default: first test sample)");
  analyze->add_option("--out", ov.out, "output directory");

  auto* census = app.add_subcommand("census", "parameter accounting for a checkpoint");
  census->add_option("--checkpoint", checkpoint_path, "checkpoint to count")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      RunConfig cfg = load_config(config_path, ov);
      std::filesystem::path out = cfg.out_dir;
      with_precision(cfg.precision, [&](auto tag) {
        using T = decltype(tag);
        auto outcome = run_pretrain<T>(cfg, out);
        std::printf("pretrain: best val accuracy %.4f, test accuracy %.4f\n",
                    outcome.val_accuracy, outcome.test_accuracy);
        std::printf("checkpoint: %s\n", outcome.checkpoint.string().c_str());
      });
    } else if (tune->parsed()) {
      RunConfig cfg = load_config(config_path, ov);
      std::filesystem::path out = cfg.out_dir;
      with_precision(cfg.precision, [&](auto tag) {
        using T = decltype(tag);
        auto outcome = run_tune<T>(cfg, checkpoint_path, out);
        std::printf("tune[%s]: best val accuracy %.4f, test accuracy %.4f\n",
                    method_name(cfg.method).c_str(), outcome.val_accuracy,
                    outcome.test_accuracy);
        std::printf("checkpoint: %s\n", outcome.checkpoint.string().c_str());
      });
    } else if (eval->parsed()) {
      with_precision(checkpoint_precision(checkpoint_path), [&](auto tag) {
        using T = decltype(tag);
        RunConfig cfg;
        auto bundle = restore_model<T>(checkpoint_path, cfg);
        auto ds = cfg.load_dataset();
        const auto& samples = split == "val" ? ds.val : (split == "train" ? ds.train : ds.test);
        auto ev = evaluate<T>(bundle.forward, ds, samples, cfg.train.batch_size);
        print_eval(ev, ds.class_names);
        if (!ov.out.empty()) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "accuracy %.6f\n", ev.accuracy);
          write_text(std::filesystem::path(ov.out) / "eval.txt", buf);
        }
      });
    } else if (analyze->parsed()) {
      with_precision(checkpoint_precision(checkpoint_path), [&](auto tag) {
        using T = decltype(tag);
        std::filesystem::path out_file =
            ov.out.empty() ? std::filesystem::path("similarity.txt")
                           : std::filesystem::path(ov.out) / "similarity.txt";
        auto map = run_analyze<T>(checkpoint_path, image_path, out_file);
        std::printf("salient token: (%lld, %lld)\n", static_cast<long long>(map.salient.row),
                    static_cast<long long>(map.salient.col));
        std::printf("similarity map: %s\n", out_file.string().c_str());
      });
    } else if (census->parsed()) {
      CheckpointInfo info = read_checkpoint_info(checkpoint_path);
      auto report = census_from(infos_of_checkpoint(info));
      std::printf("%s", report.to_string().c_str());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrKind::numeric ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
