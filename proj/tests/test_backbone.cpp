#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "sa2vp/vit.hpp"
#include "support/testing.hpp"

using namespace sa2vp;
using sa2vp::testing::random_tensor;

using D = double;

namespace {
BackboneConfig toy_config() {
  BackboneConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.channels = 1;
  cfg.embed_dim = 64;
  cfg.num_layers = 2;  // enough for structure tests, cheap
  cfg.num_heads = 4;
  cfg.mlp_ratio = 4.0;
  cfg.num_pretrain_classes = 4;
  return cfg;
}
}  // namespace

TEST_CASE("config geometry: token grid sides and counts") {
  BackboneConfig a;
  a.image_size = 32;
  a.patch_size = 16;
  CHECK(a.grid_side() == 2);
  CHECK(a.tokens() == 4);

  BackboneConfig b;
  b.image_size = 224;
  b.patch_size = 16;
  b.channels = 3;
  b.embed_dim = 768;
  b.num_heads = 12;
  b.num_layers = 12;
  CHECK(b.grid_side() == 14);
  CHECK(b.tokens() == 196);

  BackboneConfig bad;
  bad.image_size = 30;
  bad.patch_size = 8;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("patchify: zero image and zero projection bias leaves the positional embeddings") {
  auto cfg = toy_config();
  Rng rng(5);
  ViTBackbone<D> bb(cfg, rng);
  auto images = Tensor<D>::zeros({2, 1, 32, 32});
  auto tokens = bb.patchify(images);
  REQUIRE(tokens.shape() == Shape{2, 16, 64});
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t i = 0; i < 16 * 64; ++i)
      CHECK(tokens.values()[b * 16 * 64 + i] == bb.pos_embed().values()[i]);
}

TEST_CASE("patchify rejects wrong image sizes") {
  auto cfg = toy_config();
  Rng rng(5);
  ViTBackbone<D> bb(cfg, rng);
  CHECK_THROWS_AS(bb.patchify(Tensor<D>::zeros({1, 1, 16, 16})), Error);
  CHECK_THROWS_AS(bb.patchify(Tensor<D>::zeros({1, 3, 32, 32})), Error);
}

TEST_CASE("encoder layer with zeroed output projections is the identity") {
  auto cfg = toy_config();
  Rng rng(7);
  ViTBackbone<D> bb(cfg, rng);
  // zero the residual write-backs of layer 0
  auto params = bb.named_params("backbone");
  for (auto& p : params)
    if (p.name == "backbone.layers.0.attn.wo" || p.name == "backbone.layers.0.attn.bo" ||
        p.name == "backbone.layers.0.mlp.w2" || p.name == "backbone.layers.0.mlp.b2")
      for (auto& v : p.tensor.values()) v = 0.0;
  auto x = random_tensor<D>(rng, {2, 16, 64});
  auto y = bb.encoder_layer(x, bb.layer(0));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("single token: attention over a singleton contributes exactly its value path") {
  auto cfg = toy_config();
  Rng rng(11);
  ViTBackbone<D> bb(cfg, rng);
  // Zero the MLP write-back so only the attention half acts.
  auto params = bb.named_params("backbone");
  for (auto& p : params)
    if (p.name == "backbone.layers.0.mlp.w2" || p.name == "backbone.layers.0.mlp.b2")
      for (auto& v : p.tensor.values()) v = 0.0;
  const auto& lw = bb.layer(0);
  auto x = random_tensor<D>(rng, {1, 1, 64});
  auto y = bb.encoder_layer(x, lw);
  // softmax over one key is 1, so ctx = LN(x) Wv and out = x + ctx Wo + bo
  auto h = layer_norm(x, lw.ln1_g, lw.ln1_b, kLayerNormEps);
  auto expect = add(x, add(matmul(matmul(h, lw.wv), lw.wo), lw.bo));
  CHECK(sa2vp::testing::max_abs_diff(y, expect) < 1e-12);
}

TEST_CASE("token permutation equivariance of an encoder layer") {
  auto cfg = toy_config();
  Rng rng(13);
  ViTBackbone<D> bb(cfg, rng);
  auto x = random_tensor<D>(rng, {1, 16, 64});
  std::vector<int64_t> perm{5, 3, 0, 1, 2, 4, 7, 6, 10, 9, 8, 11, 15, 14, 13, 12};
  auto y_then_perm = index_select(bb.encoder_layer(x, bb.layer(0)), 1, perm);
  auto perm_then_y = bb.encoder_layer(index_select(x, 1, perm), bb.layer(0));
  CHECK(sa2vp::testing::max_abs_diff(y_then_perm, perm_then_y) < 1e-10);
}

TEST_CASE("classifier produces finite logits with near-uniform loss at init") {
  auto cfg = toy_config();
  Rng rng(17);
  BackboneClassifier<D> model(cfg, cfg.num_pretrain_classes, rng);
  Rng drng(18);
  auto images = random_tensor<D>(drng, {8, 1, 32, 32}, 0.0, 1.0);
  auto logits = model.forward(images);
  REQUIRE(logits.shape() == Shape{8, 4});
  for (auto v : logits.values()) CHECK(std::isfinite(v));
  std::vector<int64_t> labels{0, 1, 2, 3, 0, 1, 2, 3};
  double loss = cross_entropy(logits, labels).item();
  CHECK(std::fabs(loss - std::log(4.0)) < 0.3);
}

TEST_CASE("freezing is idempotent, partitions correctly, and does not change values") {
  auto cfg = toy_config();
  Rng rng(19);
  BackboneClassifier<D> model(cfg, 4, rng);
  Rng drng(20);
  auto images = random_tensor<D>(drng, {2, 1, 32, 32}, 0.0, 1.0);
  auto before = model.forward(images);

  model.freeze_backbone();
  auto part1 = partition_of(model.named_params());
  model.freeze_backbone();
  auto part2 = partition_of(model.named_params());
  CHECK(part1.frozen == part2.frozen);
  CHECK(part1.tunable == part2.tunable);
  CHECK(part1.tunable == std::vector<std::string>{"head.main.w", "head.main.b"});
  for (const auto& name : part1.frozen) CHECK(name.rfind("backbone.", 0) == 0);

  auto after = model.forward(images);
  for (int64_t i = 0; i < before.numel(); ++i) CHECK(before.values()[i] == after.values()[i]);
}

TEST_CASE("distinct model instances evaluate concurrently from different threads") {
  auto cfg = toy_config();
  Rng rng_a(29), rng_b(31);
  BackboneClassifier<D> a(cfg, 4, rng_a), b(cfg, 4, rng_b);
  Rng drng(32);
  auto images = random_tensor<D>(drng, {2, 1, 32, 32}, 0.0, 1.0);
  auto expect_a = a.forward(images);
  auto expect_b = b.forward(images);

  Tensor<D> got_a, got_b;
  std::thread ta([&] { got_a = a.forward(images); });
  std::thread tb([&] { got_b = b.forward(images); });
  ta.join();
  tb.join();
  CHECK(sa2vp::testing::max_abs_diff(got_a, expect_a) == 0.0);
  CHECK(sa2vp::testing::max_abs_diff(got_b, expect_b) == 0.0);
}

TEST_CASE("frozen backbone gets no gradients through a full backward pass") {
  auto cfg = toy_config();
  Rng rng(23);
  BackboneClassifier<D> model(cfg, 4, rng);
  model.freeze_backbone();
  Rng drng(24);
  auto images = random_tensor<D>(drng, {2, 1, 32, 32}, 0.0, 1.0);
  Tape<D> tape;
  {
    Tape<D>::Scope scope(tape);
    tape.backward(cross_entropy(model.forward(images), {0, 1}));
  }
  for (const auto& p : model.named_params()) {
    if (p.name.rfind("backbone.", 0) == 0)
      CHECK(!p.tensor.has_grad());
    else
      CHECK(p.tensor.has_grad());
  }
}
