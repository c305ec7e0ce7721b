#pragma once

// Declarative run configuration: a flat "key = value" document plus CLI
// overrides. Unknown keys are rejected so a typo cannot silently change an
// ablation. resolve() fills defaults; echo() serializes every key back in a
// fixed order, sufficient to re-run bit-identically.

#include <filesystem>
#include <map>
#include <string>

#include "sa2vp/data.hpp"
#include "sa2vp/prompting.hpp"
#include "sa2vp/training.hpp"
#include "sa2vp/vit.hpp"

namespace sa2vp {

enum class Method { sa2vp, sequential, head_only, full_finetune };
enum class Precision { f64, f32 };

std::string method_name(Method m);
Method method_from(const std::string& name);

struct RunConfig {
  Method method = Method::sa2vp;
  Precision precision = Precision::f64;
  uint64_t seed = 0;
  std::string out_dir = "runs/out";

  BackboneConfig backbone;

  // prompting (sa2vp)
  int window = 3;
  double gamma = 0.1;
  double lambda = 0.7;
  int64_t bottleneck = 0;  // 0 -> d/8
  int64_t scale = 1;
  bool deep = true;
  std::vector<int64_t> prompt_layers;       // empty -> resolved defaults
  std::vector<int64_t> interaction_layers;  // empty -> all layers
  bool global_attention = false;
  bool adapter_enabled = true;
  bool prompt_queries_first = true;

  // sequential baseline
  int64_t num_prompt_tokens = 16;

  // training
  TrainConfig train;

  // data
  std::string dataset = "task_b";  // task_a | task_b | folder
  std::string data_folder;
  int64_t num_classes = 4;
  int64_t samples_per_class = 250;
  double noise_level = 0.0;
  std::string eval_split = "test";

  PromptingConfig prompting_config() const;
  data::SyntheticTaskSpec task_spec(data::TaskVariant variant) const;
  data::Dataset load_dataset() const;

  void validate() const;

  // Canonical serialization: every key, fixed order.
  std::string echo() const;
  std::map<std::string, std::string> to_map() const;

  static RunConfig from_map(const std::map<std::string, std::string>& kv);
  static RunConfig from_file(const std::filesystem::path& path);

  // Applies one key (file line or CLI override); unknown keys throw.
  void set(const std::string& key, const std::string& value);
};

// Parses a flat key=value document ('#' comments, blank lines allowed).
std::map<std::string, std::string> parse_kv_document(const std::string& text);

}  // namespace sa2vp
