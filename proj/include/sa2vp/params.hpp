#pragma once

#include <string>
#include <vector>

#include "sa2vp/tensor.hpp"

namespace sa2vp {

// A registered model parameter. `decay` marks participation in weight decay;
// scaling vectors opt out so decay cannot silence deep-mode injection.
template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Frozen/tunable split by name. The two sets are disjoint and cover every
// registered parameter.
struct ParameterPartition {
  std::vector<std::string> frozen;
  std::vector<std::string> tunable;
};

template <typename T>
ParameterPartition partition_of(const ParamList<T>& params) {
  ParameterPartition part;
  for (const auto& p : params)
    (p.tensor.requires_grad() ? part.tunable : part.frozen).push_back(p.name);
  return part;
}

template <typename T>
ParamList<T> tunable_of(const ParamList<T>& params) {
  ParamList<T> out;
  for (const auto& p : params)
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

inline double fan_in_bound(int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <typename T>
void fill_uniform(const Tensor<T>& t, Rng& rng, double bound) {
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace sa2vp
