#pragma once

// Parameter accounting. Census rows come from a fresh traversal of whatever
// parameter description is at hand (live model, checkpoint table, or a
// shape-only enumeration); nothing is cached incrementally.

#include <string>
#include <vector>

#include "sa2vp/checkpoint.hpp"
#include "sa2vp/params.hpp"
#include "sa2vp/prompting.hpp"

namespace sa2vp {

struct ParamInfo {
  std::string name;
  Shape shape;
  bool tunable = false;
};

struct CensusReport {
  struct Row {
    std::string ns;  // leading name segment
    int64_t frozen = 0;
    int64_t tunable = 0;
  };
  std::vector<Row> rows;
  int64_t total_frozen = 0;
  int64_t total_tunable = 0;

  int64_t total() const { return total_frozen + total_tunable; }
  double tuned_percent() const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(total_tunable) / total();
  }
  std::string to_string() const;
};

CensusReport census_from(const std::vector<ParamInfo>& infos);

// Shape-only enumeration of the dual-pathway model's parameters under the
// prompt-tuning partition (backbone frozen, prompt side tunable). Must agree
// with DualPathwayModel::named_params name for name and shape for shape;
// a test pins that correspondence.
std::vector<ParamInfo> enumerate_dual_pathway_params(const BackboneConfig& bb,
                                                     PromptingConfig cfg, int64_t classes);

std::vector<ParamInfo> infos_of_checkpoint(const CheckpointInfo& info);

template <typename T>
std::vector<ParamInfo> infos_of(const ParamList<T>& params) {
  std::vector<ParamInfo> out;
  out.reserve(params.size());
  for (const auto& p : params)
    out.push_back({p.name, p.tensor.shape(), p.tensor.requires_grad()});
  return out;
}

}  // namespace sa2vp
