#pragma once

// Compact Vision Transformer: patch embedding with learned absolute grid
// positional embeddings, pre-norm encoder blocks, mean-pooled classification.
// There is no class token; both classification heads pool the final token map,
// which keeps every token spatially addressable.

#include <string>

#include "sa2vp/ops.hpp"
#include "sa2vp/params.hpp"

namespace sa2vp {

inline constexpr double kLayerNormEps = 1e-5;

struct BackboneConfig {
  int64_t image_size = 32;
  int64_t patch_size = 8;
  int64_t channels = 1;
  int64_t embed_dim = 64;
  int64_t num_layers = 6;
  int64_t num_heads = 4;
  double mlp_ratio = 4.0;
  int64_t num_pretrain_classes = 8;

  int64_t grid_side() const { return image_size / patch_size; }
  int64_t tokens() const { return grid_side() * grid_side(); }
  int64_t head_dim() const { return embed_dim / num_heads; }
  int64_t mlp_hidden() const { return static_cast<int64_t>(embed_dim * mlp_ratio); }
  int64_t patch_dim() const { return channels * patch_size * patch_size; }

  void validate() const {
    check(image_size > 0 && patch_size > 0 && channels > 0, ErrKind::validation,
          "backbone: sizes must be positive");
    check(image_size % patch_size == 0, ErrKind::validation,
          "backbone: image_size must be divisible by patch_size");
    check(embed_dim % num_heads == 0, ErrKind::validation,
          "backbone: embed_dim must be divisible by num_heads");
    check(num_layers > 0 && num_pretrain_classes > 0, ErrKind::validation,
          "backbone: num_layers and num_pretrain_classes must be positive");
  }
};

template <typename T>
struct LayerWeights {
  Tensor<T> wq, wk, wv;      // d x d, bias-free so cross attention can reuse them verbatim
  Tensor<T> wo, bo;          // attention output projection
  Tensor<T> ln1_g, ln1_b;
  Tensor<T> w1, b1, w2, b2;  // MLP
  Tensor<T> ln2_g, ln2_b;
};

// Splits [B, N, d] into per-head batches [B*H, N, d/H] and back.
template <typename T>
Tensor<T> fold_heads(const Tensor<T>& x, int64_t heads) {
  int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  int64_t dh = d / heads;
  auto r = reshape(x, {b, n, heads, dh});
  auto p = permute(r, {0, 2, 1, 3});
  return reshape(p, {b * heads, n, dh});
}

template <typename T>
Tensor<T> unfold_heads(const Tensor<T>& x, int64_t batch) {
  int64_t bh = x.dim(0), n = x.dim(1), dh = x.dim(2);
  int64_t heads = bh / batch;
  auto r = reshape(x, {batch, heads, n, dh});
  auto p = permute(r, {0, 2, 1, 3});
  return reshape(p, {batch, n, heads * dh});
}

template <typename T>
class ViTBackbone {
 public:
  ViTBackbone() = default;

  ViTBackbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    int64_t d = cfg.embed_dim;
    patch_w_ = Tensor<T>::zeros({cfg.patch_dim(), d}, true);
    fill_uniform(patch_w_, rng, fan_in_bound(cfg.patch_dim()));
    patch_b_ = Tensor<T>::zeros({d}, true);
    pos_embed_ = Tensor<T>::zeros({cfg.tokens(), d}, true);
    fill_uniform(pos_embed_, rng, 0.02);
    layers_.resize(static_cast<size_t>(cfg.num_layers));
    for (auto& lw : layers_) {
      lw.wq = Tensor<T>::zeros({d, d}, true);
      lw.wk = Tensor<T>::zeros({d, d}, true);
      lw.wv = Tensor<T>::zeros({d, d}, true);
      lw.wo = Tensor<T>::zeros({d, d}, true);
      for (auto* w : {&lw.wq, &lw.wk, &lw.wv, &lw.wo}) fill_uniform(*w, rng, fan_in_bound(d));
      lw.bo = Tensor<T>::zeros({d}, true);
      lw.ln1_g = Tensor<T>::full({d}, T(1), true);
      lw.ln1_b = Tensor<T>::zeros({d}, true);
      int64_t hidden = cfg.mlp_hidden();
      lw.w1 = Tensor<T>::zeros({d, hidden}, true);
      fill_uniform(lw.w1, rng, fan_in_bound(d));
      lw.b1 = Tensor<T>::zeros({hidden}, true);
      lw.w2 = Tensor<T>::zeros({hidden, d}, true);
      fill_uniform(lw.w2, rng, fan_in_bound(hidden));
      lw.b2 = Tensor<T>::zeros({d}, true);
      lw.ln2_g = Tensor<T>::full({d}, T(1), true);
      lw.ln2_b = Tensor<T>::zeros({d}, true);
    }
  }

  const BackboneConfig& config() const { return cfg_; }
  const LayerWeights<T>& layer(int64_t l) const { return layers_[static_cast<size_t>(l)]; }
  const Tensor<T>& pos_embed() const { return pos_embed_; }

  // Image -> token map with positional embeddings added. Token (gy, gx) is
  // the projection of pixel block [gy*p,(gy+1)*p) x [gx*p,(gx+1)*p).
  Tensor<T> patchify(const Tensor<T>& images) const {
    check(images.ndim() == 4 && images.dim(1) == cfg_.channels &&
              images.dim(2) == cfg_.image_size && images.dim(3) == cfg_.image_size,
          ErrKind::validation,
          "patchify: expected images [B," + std::to_string(cfg_.channels) + "," +
              std::to_string(cfg_.image_size) + "," + std::to_string(cfg_.image_size) +
              "], got " + shape_str(images.shape()));
    int64_t b = images.dim(0);
    auto rows = im2col(images, cfg_.patch_size);
    auto proj = add(matmul(rows, patch_w_), patch_b_);
    auto tokens = reshape(proj, {b, cfg_.tokens(), cfg_.embed_dim});
    return add(tokens, pos_embed_);
  }

  Tensor<T> encoder_layer(const Tensor<T>& x, const LayerWeights<T>& lw) const {
    check(x.ndim() == 3 && x.dim(2) == cfg_.embed_dim, ErrKind::shape,
          "encoder_layer: token dim mismatch");
    int64_t b = x.dim(0);
    T eps = static_cast<T>(kLayerNormEps);

    auto h = layer_norm(x, lw.ln1_g, lw.ln1_b, eps);
    auto qf = fold_heads(matmul(h, lw.wq), cfg_.num_heads);
    auto kf = fold_heads(matmul(h, lw.wk), cfg_.num_heads);
    auto vf = fold_heads(matmul(h, lw.wv), cfg_.num_heads);
    T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg_.head_dim())));
    auto attn = softmax(scale(bmm_nt(qf, kf), inv_sqrt), -1);
    auto ctx = unfold_heads(bmm(attn, vf), b);
    auto x1 = add(x, add(matmul(ctx, lw.wo), lw.bo));

    auto h2 = layer_norm(x1, lw.ln2_g, lw.ln2_b, eps);
    auto m = matmul(relu(add(matmul(h2, lw.w1), lw.b1)), lw.w2);
    return add(x1, add(m, lw.b2));
  }

  Tensor<T> encode(Tensor<T> tokens) const {
    for (const auto& lw : layers_) tokens = encoder_layer(tokens, lw);
    return tokens;
  }

  void set_trainable(bool trainable) {
    for (auto& p : named_params("backbone")) p.tensor.set_requires_grad(trainable);
  }

  ParamList<T> named_params(const std::string& prefix) const {
    ParamList<T> out;
    out.push_back({prefix + ".patch.w", patch_w_, true});
    out.push_back({prefix + ".patch.b", patch_b_, true});
    out.push_back({prefix + ".pos_embed", pos_embed_, true});
    for (size_t l = 0; l < layers_.size(); ++l) {
      const auto& lw = layers_[l];
      std::string base = prefix + ".layers." + std::to_string(l);
      out.push_back({base + ".attn.wq", lw.wq, true});
      out.push_back({base + ".attn.wk", lw.wk, true});
      out.push_back({base + ".attn.wv", lw.wv, true});
      out.push_back({base + ".attn.wo", lw.wo, true});
      out.push_back({base + ".attn.bo", lw.bo, true});
      out.push_back({base + ".ln1.g", lw.ln1_g, true});
      out.push_back({base + ".ln1.b", lw.ln1_b, true});
      out.push_back({base + ".mlp.w1", lw.w1, true});
      out.push_back({base + ".mlp.b1", lw.b1, true});
      out.push_back({base + ".mlp.w2", lw.w2, true});
      out.push_back({base + ".mlp.b2", lw.b2, true});
      out.push_back({base + ".ln2.g", lw.ln2_g, true});
      out.push_back({base + ".ln2.b", lw.ln2_b, true});
    }
    return out;
  }

 private:
  BackboneConfig cfg_;
  Tensor<T> patch_w_, patch_b_, pos_embed_;
  std::vector<LayerWeights<T>> layers_;
};

template <typename T>
struct LinearHead {
  Tensor<T> w, b;

  LinearHead() = default;
  LinearHead(int64_t d, int64_t classes, Rng& rng) {
    w = Tensor<T>::zeros({d, classes}, true);
    fill_uniform(w, rng, fan_in_bound(d));
    b = Tensor<T>::zeros({classes}, true);
  }

  Tensor<T> forward(const Tensor<T>& pooled) const { return add(matmul(pooled, w), b); }

  ParamList<T> named_params(const std::string& prefix) const {
    return {{prefix + ".w", w, true}, {prefix + ".b", b, true}};
  }
};

// Backbone plus a single linear head over the mean-pooled final map. Covers
// pretraining (everything trainable), head-only tuning and full fine-tuning.
template <typename T>
class BackboneClassifier {
 public:
  BackboneClassifier() = default;
  BackboneClassifier(const BackboneConfig& cfg, int64_t classes, Rng& rng)
      : backbone_(cfg, rng), head_(cfg.embed_dim, classes, rng) {}

  Tensor<T> forward(const Tensor<T>& images) const {
    auto tokens = backbone_.encode(backbone_.patchify(images));
    return head_.forward(mean_axis(tokens, 1));
  }

  ViTBackbone<T>& backbone() { return backbone_; }
  const ViTBackbone<T>& backbone() const { return backbone_; }
  LinearHead<T>& head() { return head_; }

  void freeze_backbone() { backbone_.set_trainable(false); }

  ParamList<T> named_params() const {
    auto out = backbone_.named_params("backbone");
    auto h = head_.named_params("head.main");
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

 private:
  ViTBackbone<T> backbone_;
  LinearHead<T> head_;
};

}  // namespace sa2vp
