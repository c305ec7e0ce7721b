#pragma once

// Spatially aligned visual prompting around a frozen backbone. Two pathways
// run the same encoder layers: the prompt pathway starts from a learned 2D
// prompt token map, the base pathway from the image tokens. At every
// interaction layer each pathway's tokens attend to a small window of the
// other pathway's map (projections reused from that layer's frozen
// self-attention), the result passes a bottleneck adapter and is folded back
// with weight gamma. Deeper prompt maps are injected through per-channel
// scaling vectors.

#include <algorithm>
#include <optional>

#include "sa2vp/vit.hpp"
#include "sa2vp/window.hpp"

namespace sa2vp {

struct PromptingConfig {
  int window = 3;                // c, odd
  double gamma = 0.1;            // fusion weight
  double lambda = 0.7;           // loss weight on the base head
  int64_t bottleneck = 0;        // t; 0 resolves to embed_dim / 8
  int64_t scale = 1;             // s: prompt grid = image grid / s
  bool deep = true;              // multiple prompt maps vs first layer only
  std::vector<int64_t> prompt_layers;       // resolved by validate() when empty
  std::vector<int64_t> interaction_layers;  // resolved to all layers when empty
  bool global_attention = false;            // ablation: window -> whole map
  bool adapter_enabled = true;              // ablation: bypass the adapter
  bool prompt_queries_first = true;         // interaction order within a layer

  int64_t resolved_bottleneck(int64_t embed_dim) const {
    return bottleneck > 0 ? bottleneck : std::max<int64_t>(1, embed_dim / 8);
  }

  void validate(const BackboneConfig& bb) {
    check(window >= 1 && window % 2 == 1, ErrKind::validation, "window width c must be odd");
    check(lambda >= 0.0 && lambda <= 1.0, ErrKind::validation, "lambda must be in [0,1]");
    check(scale >= 1, ErrKind::validation, "scale must be >= 1");
    check(bb.grid_side() % scale == 0, ErrKind::validation,
          "token grid side " + std::to_string(bb.grid_side()) + " not divisible by scale " +
              std::to_string(scale));
    int64_t t = resolved_bottleneck(bb.embed_dim);
    check(t >= 1 && t <= bb.embed_dim / 4, ErrKind::validation,
          "adapter bottleneck t must satisfy 1 <= t <= d/4");
    if (prompt_layers.empty()) {
      if (deep) {
        // Three depths spread over the encoder, the first at layer 0.
        int64_t third = std::max<int64_t>(1, bb.num_layers / 3);
        for (int64_t l : {int64_t(0), third, 2 * third})
          if (l < bb.num_layers) prompt_layers.push_back(l);
      } else {
        prompt_layers = {0};
      }
    }
    if (!deep) prompt_layers.resize(1);
    std::sort(prompt_layers.begin(), prompt_layers.end());
    prompt_layers.erase(std::unique(prompt_layers.begin(), prompt_layers.end()),
                        prompt_layers.end());
    for (int64_t l : prompt_layers)
      check(l >= 0 && l < bb.num_layers, ErrKind::validation, "prompt layer out of range");
    check(prompt_layers.front() == 0, ErrKind::validation, "first prompt layer must be 0");
    if (interaction_layers.empty())
      for (int64_t l = 0; l < bb.num_layers; ++l) interaction_layers.push_back(l);
    for (int64_t l : interaction_layers)
      check(l >= 0 && l < bb.num_layers, ErrKind::validation,
            "interaction layer " + std::to_string(l) + " >= num_layers");
  }
};

// Bottleneck adapter applied to cross-attention output: LN -> ReLU -> d->t
// projection -> t->d projection. No biases on the projections.
template <typename T>
struct PromptAdapter {
  Tensor<T> ln_g, ln_b, w_down, w_up;
  int64_t t = 0;

  PromptAdapter() = default;
  PromptAdapter(int64_t d, int64_t bottleneck, Rng& rng, bool relax_bottleneck = false) {
    if (!relax_bottleneck)
      check(bottleneck >= 1 && bottleneck <= d / 4, ErrKind::validation,
            "adapter bottleneck t must satisfy 1 <= t <= d/4");
    t = bottleneck;
    ln_g = Tensor<T>::full({d}, T(1), true);
    ln_b = Tensor<T>::zeros({d}, true);
    w_down = Tensor<T>::zeros({d, t}, true);
    fill_uniform(w_down, rng, fan_in_bound(d));
    w_up = Tensor<T>::zeros({t, d}, true);
    fill_uniform(w_up, rng, fan_in_bound(t));
  }

  Tensor<T> apply(const Tensor<T>& o) const {
    auto h = relu(layer_norm(o, ln_g, ln_b, static_cast<T>(kLayerNormEps)));
    return matmul(matmul(h, w_down), w_up);
  }

  ParamList<T> named_params(const std::string& prefix) const {
    return {{prefix + ".ln.g", ln_g, true},
            {prefix + ".ln.b", ln_b, true},
            {prefix + ".w_down", w_down, true},
            {prefix + ".w_up", w_up, true}};
  }
};

// Weighted fusion of an adapted prompt feature into pathway features.
template <typename T>
Tensor<T> fuse_prompted(const Tensor<T>& f, const Tensor<T>& o, T gamma) {
  return add(f, scale(o, gamma));
}

// Cross attention in which query token i attends only to kv tokens
// windows[i]. Projections come from the frozen layer; multi-head split
// matches the backbone. Output includes the +query residual.
template <typename T>
Tensor<T> windowed_cross_attention(const Tensor<T>& query_map, const Tensor<T>& kv_map,
                                   const std::vector<std::vector<int64_t>>& windows,
                                   const LayerWeights<T>& lw, int64_t heads) {
  check(query_map.ndim() == 3 && kv_map.ndim() == 3, ErrKind::shape,
        "cross attention expects [B, N, d] maps");
  int64_t b = query_map.dim(0);
  int64_t nq = query_map.dim(1);
  int64_t d = query_map.dim(2);
  check(static_cast<int64_t>(windows.size()) == nq, ErrKind::validation,
        "one window per query token required");
  auto qf = fold_heads(matmul(query_map, lw.wq), heads);
  auto kf = fold_heads(matmul(kv_map, lw.wk), heads);
  auto vf = fold_heads(matmul(kv_map, lw.wv), heads);
  T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads)));

  std::vector<Tensor<T>> ctx;
  ctx.reserve(static_cast<size_t>(nq));
  for (int64_t i = 0; i < nq; ++i) {
    check(!windows[static_cast<size_t>(i)].empty(), ErrKind::validation,
          "empty attention window");
    auto qi = index_select(qf, 1, {i});
    auto kw = index_select(kf, 1, windows[static_cast<size_t>(i)]);
    auto vw = index_select(vf, 1, windows[static_cast<size_t>(i)]);
    auto attn = softmax(scale(bmm_nt(qi, kw), inv_sqrt), -1);
    ctx.push_back(bmm(attn, vw));
  }
  auto merged = unfold_heads(concat(ctx, 1), b);
  return add(merged, query_map);
}

// Ablation variant: every query attends to the full kv map.
template <typename T>
Tensor<T> global_cross_attention(const Tensor<T>& query_map, const Tensor<T>& kv_map,
                                 const LayerWeights<T>& lw, int64_t heads) {
  int64_t b = query_map.dim(0);
  int64_t d = query_map.dim(2);
  auto qf = fold_heads(matmul(query_map, lw.wq), heads);
  auto kf = fold_heads(matmul(kv_map, lw.wk), heads);
  auto vf = fold_heads(matmul(kv_map, lw.wv), heads);
  T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads)));
  auto attn = softmax(scale(bmm_nt(qf, kf), inv_sqrt), -1);
  return add(unfold_heads(bmm(attn, vf), b), query_map);
}

// One direction of bilateral interaction: attend, adapt, gamma-fuse.
// `windows` empty selects global attention; `adapter` null bypasses it.
template <typename T>
Tensor<T> interact(const Tensor<T>& features, const Tensor<T>& kv_map,
                   const std::vector<std::vector<int64_t>>& windows, const LayerWeights<T>& lw,
                   int64_t heads, const PromptAdapter<T>* adapter, T gamma) {
  auto attended = windows.empty() ? global_cross_attention(features, kv_map, lw, heads)
                                  : windowed_cross_attention(features, kv_map, windows, lw, heads);
  auto adapted = adapter ? adapter->apply(attended) : attended;
  return fuse_prompted(features, adapted, gamma);
}

// Average-pools an [h*w, d] grid by an integer factor; used to carry the
// frozen positional embeddings onto scaled prompt grids.
template <typename T>
Tensor<T> avg_pool_grid(const Tensor<T>& grid, int64_t side, int64_t s) {
  check(grid.ndim() == 2 && grid.dim(0) == side * side, ErrKind::shape,
        "avg_pool_grid: grid/side mismatch");
  check(side % s == 0, ErrKind::validation, "avg_pool_grid: side not divisible by scale");
  if (s == 1) return Tensor<T>::from(grid.shape(), {grid.values().begin(), grid.values().end()});
  int64_t d = grid.dim(1);
  int64_t ps = side / s;
  auto out = Tensor<T>::zeros({ps * ps, d});
  T inv = T(1) / static_cast<T>(s * s);
  for (int64_t r = 0; r < ps; ++r)
    for (int64_t c = 0; c < ps; ++c)
      for (int64_t j = 0; j < d; ++j) {
        T acc = 0;
        for (int64_t dr = 0; dr < s; ++dr)
          for (int64_t dc = 0; dc < s; ++dc)
            acc += grid.values()[((r * s + dr) * side + (c * s + dc)) * d + j];
        out.values()[(r * ps + c) * d + j] = acc * inv;
      }
  return out;
}

// Learnable prompt map: uniform noise plus the (pooled) frozen positional
// embeddings, folded in once at construction.
template <typename T>
Tensor<T> init_prompt_map(const Tensor<T>& pos_embed, int64_t side, int64_t s,
                          double noise_bound, Rng& rng) {
  check(s >= 1, ErrKind::validation, "prompt map scale must be >= 1");
  check(side % s == 0, ErrKind::validation,
        "token grid side " + std::to_string(side) + " not divisible by scale " +
            std::to_string(s));
  auto pooled = avg_pool_grid(pos_embed, side, s);
  auto map = Tensor<T>::zeros(pooled.shape(), true);
  for (int64_t i = 0; i < map.numel(); ++i)
    map.values()[i] = pooled.values()[i] + static_cast<T>(rng.uniform(-noise_bound, noise_bound));
  return map;
}

// ---------------------------------------------------------------------------
// Dual-pathway model.
// ---------------------------------------------------------------------------

template <typename T>
class DualPathwayModel {
 public:
  struct Output {
    Tensor<T> base_logits;
    Tensor<T> prompt_logits;
  };

  // Per-layer features captured right after the bilateral interaction,
  // before the next block mixes tokens. Used by locality and equivariance
  // checks and by the similarity-map analysis.
  struct Trace {
    std::vector<Tensor<T>> base_after_interact;
    std::vector<Tensor<T>> prompt_after_interact;
    Tensor<T> base_final;
    Tensor<T> prompt_final;
  };

  DualPathwayModel() = default;

  DualPathwayModel(const BackboneConfig& bb_cfg, PromptingConfig cfg, int64_t classes, Rng& rng)
      : backbone_(bb_cfg, rng), cfg_(std::move(cfg)) {
    cfg_.validate(backbone_.config());
    const auto& bb = backbone_.config();
    int64_t d = bb.embed_dim;
    int64_t side = bb.grid_side();
    base_grid_ = {side, side};
    prompt_grid_ = {side / cfg_.scale, side / cfg_.scale};

    double noise = 1.0 / std::sqrt(static_cast<double>(d));
    for (int64_t l : cfg_.prompt_layers) {
      PromptLayer pl;
      pl.layer = l;
      pl.map = init_prompt_map(backbone_.pos_embed(), side, cfg_.scale, noise, rng);
      if (l != cfg_.prompt_layers.front()) pl.scale_e = Tensor<T>::full({d}, T(1), true);
      prompt_layers_.push_back(std::move(pl));
    }
    int64_t t = cfg_.resolved_bottleneck(d);
    for (int64_t l : cfg_.interaction_layers) {
      InteractionAdapters ia;
      ia.layer = l;
      ia.query_base = PromptAdapter<T>(d, t, rng);
      ia.query_prompt = PromptAdapter<T>(d, t, rng);
      adapters_.push_back(std::move(ia));
    }
    base_head_ = LinearHead<T>(d, classes, rng);
    prompt_head_ = LinearHead<T>(d, classes, rng);

    if (!cfg_.global_attention) {
      windows_prompt_queries_ = build_windows(prompt_grid_, base_grid_, cfg_.window);
      windows_base_queries_ = build_windows(base_grid_, prompt_grid_, cfg_.window);
    }
  }

  Output forward(const Tensor<T>& images, Trace* trace = nullptr) const {
    const auto& bb = backbone_.config();
    int64_t batch = images.dim(0);
    auto base = backbone_.patchify(images);
    auto prompt = expand_front(prompt_layers_.front().map, batch);
    T gamma = static_cast<T>(cfg_.gamma);

    for (int64_t l = 0; l < bb.num_layers; ++l) {
      const auto& lw = backbone_.layer(l);
      base = backbone_.encoder_layer(base, lw);
      prompt = backbone_.encoder_layer(prompt, lw);

      if (const auto* ia = adapters_for(l)) {
        if (cfg_.prompt_queries_first) {
          auto p2 = interact(prompt, base, windows_prompt_queries_, lw, bb.num_heads,
                             adapter_or_null(ia->query_base), gamma);
          base = interact(base, p2, windows_base_queries_, lw, bb.num_heads,
                          adapter_or_null(ia->query_prompt), gamma);
          prompt = p2;
        } else {
          auto b2 = interact(base, prompt, windows_base_queries_, lw, bb.num_heads,
                             adapter_or_null(ia->query_prompt), gamma);
          prompt = interact(prompt, b2, windows_prompt_queries_, lw, bb.num_heads,
                            adapter_or_null(ia->query_base), gamma);
          base = b2;
        }
      }
      if (trace) {
        trace->base_after_interact.push_back(base);
        trace->prompt_after_interact.push_back(prompt);
      }
      if (const auto* pl = injection_for(l)) prompt = add(prompt, mul(pl->map, pl->scale_e));
    }
    if (trace) {
      trace->base_final = base;
      trace->prompt_final = prompt;
    }
    return {base_head_.forward(mean_axis(base, 1)), prompt_head_.forward(mean_axis(prompt, 1))};
  }

  // Freezes every backbone parameter; prompt maps, adapters, scaling vectors
  // and both heads stay tunable. Safe to call repeatedly.
  ParameterPartition freeze_for_prompt_tuning() {
    backbone_.set_trainable(false);
    return partition_of(named_params());
  }

  ParamList<T> named_params() const {
    auto out = backbone_.named_params("backbone");
    for (const auto& pl : prompt_layers_) {
      out.push_back({"prompt.maps." + std::to_string(pl.layer), pl.map, true});
      if (pl.scale_e.defined())
        out.push_back({"prompt.scale." + std::to_string(pl.layer), pl.scale_e, false});
    }
    for (const auto& ia : adapters_) {
      std::string base = "prompt.adapters." + std::to_string(ia.layer);
      for (auto& p : ia.query_base.named_params(base + ".query_base")) out.push_back(p);
      for (auto& p : ia.query_prompt.named_params(base + ".query_prompt")) out.push_back(p);
    }
    for (auto& p : base_head_.named_params("head.base")) out.push_back(p);
    for (auto& p : prompt_head_.named_params("head.prompt")) out.push_back(p);
    return out;
  }

  ViTBackbone<T>& backbone() { return backbone_; }
  const ViTBackbone<T>& backbone() const { return backbone_; }
  const PromptingConfig& prompting_config() const { return cfg_; }
  GridDims base_grid() const { return base_grid_; }
  GridDims prompt_grid() const { return prompt_grid_; }
  LinearHead<T>& base_head() { return base_head_; }
  LinearHead<T>& prompt_head() { return prompt_head_; }

  const Tensor<T>& prompt_map(int64_t layer) const {
    for (const auto& pl : prompt_layers_)
      if (pl.layer == layer) return pl.map;
    fail_validation("no prompt map at layer " + std::to_string(layer));
  }
  Tensor<T>& scale_vector(int64_t layer) {
    for (auto& pl : prompt_layers_)
      if (pl.layer == layer && pl.scale_e.defined()) return pl.scale_e;
    fail_validation("no scaling vector at layer " + std::to_string(layer));
  }

 private:
  struct PromptLayer {
    int64_t layer = 0;
    Tensor<T> map;      // [hp*wp, d]
    Tensor<T> scale_e;  // undefined for the first prompt layer
  };
  struct InteractionAdapters {
    int64_t layer = 0;
    PromptAdapter<T> query_base;    // prompt tokens query the base map
    PromptAdapter<T> query_prompt;  // base tokens query the prompt map
  };

  const InteractionAdapters* adapters_for(int64_t layer) const {
    for (const auto& ia : adapters_)
      if (ia.layer == layer) return &ia;
    return nullptr;
  }
  const PromptLayer* injection_for(int64_t layer) const {
    for (const auto& pl : prompt_layers_)
      if (pl.layer == layer && pl.scale_e.defined()) return &pl;
    return nullptr;
  }
  const PromptAdapter<T>* adapter_or_null(const PromptAdapter<T>& a) const {
    return cfg_.adapter_enabled ? &a : nullptr;
  }

  ViTBackbone<T> backbone_;
  PromptingConfig cfg_;
  GridDims base_grid_, prompt_grid_;
  std::vector<PromptLayer> prompt_layers_;
  std::vector<InteractionAdapters> adapters_;
  LinearHead<T> base_head_, prompt_head_;
  std::vector<std::vector<int64_t>> windows_prompt_queries_;  // empty => global
  std::vector<std::vector<int64_t>> windows_base_queries_;
};

// ---------------------------------------------------------------------------
// Sequential prompting baseline: p learned tokens prefixed to the flattened
// image sequence, frozen backbone, head over the mean of the image tokens.
// ---------------------------------------------------------------------------

template <typename T>
class SequentialPromptModel {
 public:
  SequentialPromptModel() = default;

  SequentialPromptModel(const BackboneConfig& bb_cfg, int64_t num_prompts, int64_t classes,
                        Rng& rng)
      : backbone_(bb_cfg, rng), num_prompts_(num_prompts) {
    check(num_prompts >= 1, ErrKind::validation, "sequential baseline needs p >= 1 tokens");
    prompt_tokens_ = Tensor<T>::zeros({num_prompts, bb_cfg.embed_dim}, true);
    fill_uniform(prompt_tokens_, rng, fan_in_bound(bb_cfg.embed_dim));
    head_ = LinearHead<T>(bb_cfg.embed_dim, classes, rng);
  }

  Tensor<T> forward(const Tensor<T>& images) const {
    int64_t n = backbone_.config().tokens();
    auto tokens = backbone_.patchify(images);
    auto prefix = expand_front(prompt_tokens_, images.dim(0));
    auto seq = backbone_.encode(concat<T>({prefix, tokens}, 1));
    std::vector<int64_t> image_positions(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) image_positions[static_cast<size_t>(i)] = num_prompts_ + i;
    auto image_out = index_select(seq, 1, image_positions);
    return head_.forward(mean_axis(image_out, 1));
  }

  ParameterPartition freeze_for_prompt_tuning() {
    backbone_.set_trainable(false);
    return partition_of(named_params());
  }

  ParamList<T> named_params() const {
    auto out = backbone_.named_params("backbone");
    out.push_back({"baseline.prompt_tokens", prompt_tokens_, true});
    for (auto& p : head_.named_params("head.main")) out.push_back(p);
    return out;
  }

  ViTBackbone<T>& backbone() { return backbone_; }
  Tensor<T>& prompt_tokens() { return prompt_tokens_; }
  LinearHead<T>& head() { return head_; }

 private:
  ViTBackbone<T> backbone_;
  int64_t num_prompts_ = 0;
  Tensor<T> prompt_tokens_;
  LinearHead<T> head_;
};

// ---------------------------------------------------------------------------
// Similarity-map analysis: cosine similarity between the most salient final
// base token (largest norm) and every token of a prompt map.
// ---------------------------------------------------------------------------

struct SimilarityMap {
  GridDims grid;
  GridPos salient;  // coordinate in the base grid
  std::vector<double> values;  // row-major, grid.count() entries
};

template <typename T>
GridPos select_salient_token(const Tensor<T>& base_tokens, GridDims grid) {
  check(base_tokens.ndim() == 2 && base_tokens.dim(0) == grid.count(), ErrKind::shape,
        "salient token selection expects [h*w, d] tokens");
  int64_t d = base_tokens.dim(1);
  int64_t best = 0;
  double best_norm = -1;
  for (int64_t i = 0; i < grid.count(); ++i) {
    double n = 0;
    for (int64_t j = 0; j < d; ++j) {
      double v = base_tokens.values()[i * d + j];
      n += v * v;
    }
    if (n > best_norm) {
      best_norm = n;
      best = i;
    }
  }
  return {best / grid.w, best % grid.w};
}

template <typename T>
SimilarityMap cosine_similarity_map(const Tensor<T>& base_tokens, GridDims base_grid,
                                    const Tensor<T>& prompt_map, GridDims prompt_grid) {
  check(prompt_map.ndim() == 2 && prompt_map.dim(0) == prompt_grid.count(), ErrKind::shape,
        "cosine_similarity_map expects [hp*wp, d] prompt map");
  int64_t d = base_tokens.dim(1);
  check(prompt_map.dim(1) == d, ErrKind::shape, "token dims differ");
  SimilarityMap out;
  out.grid = prompt_grid;
  out.salient = select_salient_token(base_tokens, base_grid);
  const T* s = base_tokens.data() + (out.salient.row * base_grid.w + out.salient.col) * d;
  double sn = 0;
  for (int64_t j = 0; j < d; ++j) sn += static_cast<double>(s[j]) * s[j];
  sn = std::sqrt(sn);
  out.values.resize(static_cast<size_t>(prompt_grid.count()));
  for (int64_t i = 0; i < prompt_grid.count(); ++i) {
    const T* p = prompt_map.data() + i * d;
    double dot = 0, pn = 0;
    for (int64_t j = 0; j < d; ++j) {
      dot += static_cast<double>(s[j]) * p[j];
      pn += static_cast<double>(p[j]) * p[j];
    }
    double denom = sn * std::sqrt(pn);
    out.values[static_cast<size_t>(i)] = denom > 0 ? dot / denom : 0.0;
  }
  return out;
}

}  // namespace sa2vp
