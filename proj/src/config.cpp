#include "sa2vp/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sa2vp {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t x = std::stoll(v, &pos);
    check(pos == v.size(), ErrKind::validation, "");
    return x;
  } catch (...) {
    fail_validation("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    check(pos == v.size(), ErrKind::validation, "");
    return x;
  } catch (...) {
    fail_validation("config key '" + key + "': expected real, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  fail_validation("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  if (v.empty() || v == "auto" || v == "all") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

std::string int_list_str(const std::vector<int64_t>& v, const std::string& empty_word) {
  if (v.empty()) return empty_word;
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string real_str(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::sa2vp: return "sa2vp";
    case Method::sequential: return "sequential";
    case Method::head_only: return "head_only";
    case Method::full_finetune: return "full_finetune";
  }
  return "?";
}

Method method_from(const std::string& name) {
  if (name == "sa2vp") return Method::sa2vp;
  if (name == "sequential") return Method::sequential;
  if (name == "head_only") return Method::head_only;
  if (name == "full_finetune") return Method::full_finetune;
  fail_validation("unknown method '" + name +
                  "' (expected sa2vp | sequential | head_only | full_finetune)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "method") method = method_from(value);
  else if (key == "precision") {
    if (value == "f64") precision = Precision::f64;
    else if (value == "f32") precision = Precision::f32;
    else fail_validation("config key 'precision': expected f64 or f32, got '" + value + "'");
  }
  else if (key == "seed") seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "out_dir") out_dir = value;
  else if (key == "image_size") backbone.image_size = parse_int(key, value);
  else if (key == "patch_size") backbone.patch_size = parse_int(key, value);
  else if (key == "channels") backbone.channels = parse_int(key, value);
  else if (key == "embed_dim") backbone.embed_dim = parse_int(key, value);
  else if (key == "num_layers") backbone.num_layers = parse_int(key, value);
  else if (key == "num_heads") backbone.num_heads = parse_int(key, value);
  else if (key == "mlp_ratio") backbone.mlp_ratio = parse_real(key, value);
  else if (key == "num_pretrain_classes") backbone.num_pretrain_classes = parse_int(key, value);
  else if (key == "c") window = static_cast<int>(parse_int(key, value));
  else if (key == "gamma") gamma = parse_real(key, value);
  else if (key == "lambda") lambda = parse_real(key, value);
  else if (key == "t") bottleneck = parse_int(key, value);
  else if (key == "scale") scale = parse_int(key, value);
  else if (key == "prompt_mode") {
    if (value == "deep") deep = true;
    else if (value == "shallow") deep = false;
    else fail_validation("config key 'prompt_mode': expected deep or shallow");
  }
  else if (key == "prompt_layers") prompt_layers = parse_int_list(key, value);
  else if (key == "interaction_layers") interaction_layers = parse_int_list(key, value);
  else if (key == "global_attention") global_attention = parse_bool(key, value);
  else if (key == "adapter") adapter_enabled = parse_bool(key, value);
  else if (key == "interaction_order") {
    if (value == "prompt_first") prompt_queries_first = true;
    else if (value == "base_first") prompt_queries_first = false;
    else fail_validation("config key 'interaction_order': expected prompt_first or base_first");
  }
  else if (key == "p") num_prompt_tokens = parse_int(key, value);
  else if (key == "learning_rate") train.learning_rate = parse_real(key, value);
  else if (key == "weight_decay") train.weight_decay = parse_real(key, value);
  else if (key == "batch_size") train.batch_size = parse_int(key, value);
  else if (key == "epochs") train.epochs = parse_int(key, value);
  else if (key == "lr_schedule") {
    if (value == "constant") train.cosine_lr = false;
    else if (value == "cosine") train.cosine_lr = true;
    else fail_validation("config key 'lr_schedule': expected constant or cosine");
  }
  else if (key == "grad_clip") train.grad_clip = parse_real(key, value);
  else if (key == "dataset") {
    check(value == "task_a" || value == "task_b" || value == "folder", ErrKind::validation,
          "config key 'dataset': expected task_a | task_b | folder");
    dataset = value;
  }
  else if (key == "data_folder") data_folder = value;
  else if (key == "num_classes") num_classes = parse_int(key, value);
  else if (key == "samples_per_class") samples_per_class = parse_int(key, value);
  else if (key == "noise_level") noise_level = parse_real(key, value);
  else if (key == "eval_split") {
    check(value == "val" || value == "test", ErrKind::validation,
          "config key 'eval_split': expected val or test");
    eval_split = value;
  }
  else fail_validation("unknown config key '" + key + "'");
}

std::map<std::string, std::string> parse_kv_document(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, ErrKind::validation,
          "config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line +
              "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), ErrKind::validation,
          "config line " + std::to_string(lineno) + ": empty key");
    check(!kv.count(key), ErrKind::validation, "duplicate config key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  for (const auto& [k, v] : kv) cfg.set(k, v);
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail_io("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_map(parse_kv_document(ss.str()));
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["method"] = method_name(method);
  kv["precision"] = precision == Precision::f64 ? "f64" : "f32";
  kv["seed"] = std::to_string(seed);
  kv["out_dir"] = out_dir;
  kv["image_size"] = std::to_string(backbone.image_size);
  kv["patch_size"] = std::to_string(backbone.patch_size);
  kv["channels"] = std::to_string(backbone.channels);
  kv["embed_dim"] = std::to_string(backbone.embed_dim);
  kv["num_layers"] = std::to_string(backbone.num_layers);
  kv["num_heads"] = std::to_string(backbone.num_heads);
  kv["mlp_ratio"] = real_str(backbone.mlp_ratio);
  kv["num_pretrain_classes"] = std::to_string(backbone.num_pretrain_classes);
  kv["c"] = std::to_string(window);
  kv["gamma"] = real_str(gamma);
  kv["lambda"] = real_str(lambda);
  kv["t"] = std::to_string(bottleneck);
  kv["scale"] = std::to_string(scale);
  kv["prompt_mode"] = deep ? "deep" : "shallow";
  kv["prompt_layers"] = int_list_str(prompt_layers, "auto");
  kv["interaction_layers"] = int_list_str(interaction_layers, "all");
  kv["global_attention"] = global_attention ? "true" : "false";
  kv["adapter"] = adapter_enabled ? "on" : "off";
  kv["interaction_order"] = prompt_queries_first ? "prompt_first" : "base_first";
  kv["p"] = std::to_string(num_prompt_tokens);
  kv["learning_rate"] = real_str(train.learning_rate);
  kv["weight_decay"] = real_str(train.weight_decay);
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["epochs"] = std::to_string(train.epochs);
  kv["lr_schedule"] = train.cosine_lr ? "cosine" : "constant";
  kv["grad_clip"] = real_str(train.grad_clip);
  kv["dataset"] = dataset;
  kv["data_folder"] = data_folder;
  kv["num_classes"] = std::to_string(num_classes);
  kv["samples_per_class"] = std::to_string(samples_per_class);
  kv["noise_level"] = real_str(noise_level);
  kv["eval_split"] = eval_split;
  return kv;
}

std::string RunConfig::echo() const {
  // Fixed key order: to_map is an ordered map, so iteration is canonical.
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

PromptingConfig RunConfig::prompting_config() const {
  PromptingConfig cfg;
  cfg.window = window;
  cfg.gamma = gamma;
  cfg.lambda = lambda;
  cfg.bottleneck = bottleneck;
  cfg.scale = scale;
  cfg.deep = deep;
  cfg.prompt_layers = prompt_layers;
  cfg.interaction_layers = interaction_layers;
  cfg.global_attention = global_attention;
  cfg.adapter_enabled = adapter_enabled;
  cfg.prompt_queries_first = prompt_queries_first;
  return cfg;
}

data::SyntheticTaskSpec RunConfig::task_spec(data::TaskVariant variant) const {
  data::SyntheticTaskSpec spec;
  spec.variant = variant;
  spec.image_size = backbone.image_size;
  spec.cell = backbone.patch_size;
  spec.num_classes =
      variant == data::TaskVariant::task_a_pretrain ? backbone.num_pretrain_classes : num_classes;
  spec.samples_per_class = samples_per_class;
  spec.seed = seed;
  spec.noise_level = noise_level;
  return spec;
}

data::Dataset RunConfig::load_dataset() const {
  if (dataset == "task_a") return data::generate(task_spec(data::TaskVariant::task_a_pretrain));
  if (dataset == "task_b") return data::generate(task_spec(data::TaskVariant::task_b_transfer));
  check(!data_folder.empty(), ErrKind::validation,
        "dataset = folder requires data_folder to be set");
  return data::load_folder(data_folder, backbone.image_size);
}

void RunConfig::validate() const {
  backbone.validate();
  train.validate();
  check(lambda >= 0 && lambda <= 1, ErrKind::validation, "lambda must be in [0,1]");
  if (method == Method::sa2vp) {
    check(window >= 1 && window % 2 == 1, ErrKind::validation,
          "method sa2vp requires an odd window width c");
    PromptingConfig pc = prompting_config();
    pc.validate(backbone);  // resolves and checks layer lists, t, scale
  }
  if (method == Method::sequential)
    check(num_prompt_tokens >= 1, ErrKind::validation, "sequential method requires p >= 1");
  if (dataset == "folder")
    check(!data_folder.empty(), ErrKind::validation, "dataset = folder requires data_folder");
  check(num_classes >= 2, ErrKind::validation, "num_classes must be >= 2");
}

}  // namespace sa2vp
