#include "sa2vp/census.hpp"

#include <cstdio>
#include <map>

namespace sa2vp {

CensusReport census_from(const std::vector<ParamInfo>& infos) {
  CensusReport report;
  std::map<std::string, CensusReport::Row> by_ns;
  for (const auto& info : infos) {
    std::string ns = info.name.substr(0, info.name.find('.'));
    auto& row = by_ns[ns];
    row.ns = ns;
    int64_t n = numel_of(info.shape);
    if (info.tunable) {
      row.tunable += n;
      report.total_tunable += n;
    } else {
      row.frozen += n;
      report.total_frozen += n;
    }
  }
  for (auto& [_, row] : by_ns) report.rows.push_back(row);
  return report;
}

std::string CensusReport::to_string() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %14s %14s\n", "namespace", "frozen", "tunable");
  out += buf;
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %14lld %14lld\n", row.ns.c_str(),
                  static_cast<long long>(row.frozen), static_cast<long long>(row.tunable));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "total: %lld  tunable: %lld  tuned/total: %.2f%%\n",
                static_cast<long long>(total()), static_cast<long long>(total_tunable),
                tuned_percent());
  out += buf;
  return out;
}

std::vector<ParamInfo> enumerate_dual_pathway_params(const BackboneConfig& bb,
                                                     PromptingConfig cfg, int64_t classes) {
  bb.validate();
  cfg.validate(bb);
  std::vector<ParamInfo> out;
  int64_t d = bb.embed_dim;
  int64_t hidden = bb.mlp_hidden();
  out.push_back({"backbone.patch.w", {bb.patch_dim(), d}, false});
  out.push_back({"backbone.patch.b", {d}, false});
  out.push_back({"backbone.pos_embed", {bb.tokens(), d}, false});
  for (int64_t l = 0; l < bb.num_layers; ++l) {
    std::string base = "backbone.layers." + std::to_string(l);
    out.push_back({base + ".attn.wq", {d, d}, false});
    out.push_back({base + ".attn.wk", {d, d}, false});
    out.push_back({base + ".attn.wv", {d, d}, false});
    out.push_back({base + ".attn.wo", {d, d}, false});
    out.push_back({base + ".attn.bo", {d}, false});
    out.push_back({base + ".ln1.g", {d}, false});
    out.push_back({base + ".ln1.b", {d}, false});
    out.push_back({base + ".mlp.w1", {d, hidden}, false});
    out.push_back({base + ".mlp.b1", {hidden}, false});
    out.push_back({base + ".mlp.w2", {hidden, d}, false});
    out.push_back({base + ".mlp.b2", {d}, false});
    out.push_back({base + ".ln2.g", {d}, false});
    out.push_back({base + ".ln2.b", {d}, false});
  }
  int64_t ps = bb.grid_side() / cfg.scale;
  for (size_t i = 0; i < cfg.prompt_layers.size(); ++i) {
    int64_t l = cfg.prompt_layers[i];
    out.push_back({"prompt.maps." + std::to_string(l), {ps * ps, d}, true});
    if (i > 0) out.push_back({"prompt.scale." + std::to_string(l), {d}, true});
  }
  int64_t t = cfg.resolved_bottleneck(d);
  for (int64_t l : cfg.interaction_layers) {
    std::string base = "prompt.adapters." + std::to_string(l);
    for (const char* dir : {".query_base", ".query_prompt"}) {
      out.push_back({base + dir + ".ln.g", {d}, true});
      out.push_back({base + dir + ".ln.b", {d}, true});
      out.push_back({base + dir + ".w_down", {d, t}, true});
      out.push_back({base + dir + ".w_up", {t, d}, true});
    }
  }
  out.push_back({"head.base.w", {d, classes}, true});
  out.push_back({"head.base.b", {classes}, true});
  out.push_back({"head.prompt.w", {d, classes}, true});
  out.push_back({"head.prompt.b", {classes}, true});
  return out;
}

std::vector<ParamInfo> infos_of_checkpoint(const CheckpointInfo& info) {
  std::vector<ParamInfo> out;
  out.reserve(info.entries.size());
  for (const auto& e : info.entries) out.push_back({e.name, e.shape, e.tunable});
  return out;
}

}  // namespace sa2vp
