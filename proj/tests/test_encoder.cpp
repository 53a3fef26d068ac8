#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "courant/encoder.hpp"
#include "support/testutil.hpp"

using namespace courant;

namespace {

EncoderConfig small_cfg(std::int64_t d_f = 2, std::int64_t globals = 0) {
  EncoderConfig c;
  c.levels = 2;
  c.latent_dim = 16;
  c.heads = 2;
  c.ffn_mult = 2;
  c.self_attn_loops = 1;
  c.num_anchors = 4;
  c.feature_dim = d_f;
  c.coord_dim = 2;
  c.global_dim = globals;
  return c;
}

AnchorSet make_anchors(std::mt19937_64& rng, std::int64_t l, std::int64_t d,
                       std::int64_t levels, bool gwa) {
  auto a = AnchorSet::create(Tensor::randn({l, 2}, rng), gwa ? levels : 0, false, d, rng,
                             false);
  a.sigma0 = 1.0;
  return a;
}

void zero_by_suffix(const ParamList& ps, const std::vector<std::string>& pieces) {
  for (const auto& [name, t] : ps) {
    for (const auto& p : pieces) {
      if (name.find(p) != std::string::npos) {
        Tensor tt = t;
        std::fill(tt.data().begin(), tt.data().end(), 0.0);
      }
    }
  }
}

}  // namespace

TEST_CASE("build_kv layout") {
  std::mt19937_64 rng(1);
  auto emb = RffEmbedding::create(8, 2, rng);
  const Tensor coords = Tensor::randn({3, 2}, rng);
  const Tensor feats = Tensor::randn({3, 2}, rng);

  // no global vector: tokens are [gamma(x), f]
  const Tensor kv = build_kv(coords, feats, {}, emb);
  CHECK(kv.rows() == 3);
  CHECK(kv.cols() == 10);
  const Tensor g0 = emb.embed(coords);
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 8; ++j) CHECK(kv.at(i, j) == g0.at(i, j));
    for (std::int64_t j = 0; j < 2; ++j) CHECK(kv.at(i, 8 + j) == feats.at(i, j));
  }

  // zero global vector leaves tokens unchanged
  const Tensor kvz = build_kv(coords, feats, Tensor::zeros({1, 8}), emb);
  for (std::int64_t i = 0; i < kv.numel(); ++i)
    CHECK(kv.data()[static_cast<std::size_t>(i)] == kvz.data()[static_cast<std::size_t>(i)]);

  // g is added to the embedded block only
  const Tensor g = Tensor::full({1, 8}, 0.5);
  const Tensor kvg = build_kv(coords, feats, g, emb);
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 8; ++j)
      CHECK(kvg.at(i, j) == doctest::Approx(g0.at(i, j) + 0.5).epsilon(1e-15));
    for (std::int64_t j = 0; j < 2; ++j) CHECK(kvg.at(i, 8 + j) == feats.at(i, j));
  }

  // feature-free clouds produce pure coordinate embeddings
  const Tensor pure = build_kv(coords, {}, {}, emb);
  CHECK(pure.cols() == 8);

  CHECK_THROWS_AS(build_kv(coords, Tensor::randn({2, 2}, rng), {}, emb), ContractError);
}

TEST_CASE("init_queries per mode") {
  std::mt19937_64 rng(2);
  auto emb = RffEmbedding::create(16, 2, rng);

  auto cfg = small_cfg();
  auto enc = Encoder::create(cfg, rng);
  auto anchors = make_anchors(rng, 4, 16, cfg.levels, false);
  // anchored mode embeds the anchor positions; an anchor at the origin maps
  // to ones then zeros
  for (std::int64_t c = 0; c < 2; ++c) anchors.positions0.at(0, c) = 0.0;
  const Tensor q = enc.init_queries(anchors, emb);
  for (std::int64_t j = 0; j < 8; ++j) CHECK(q.at(0, j) == 1.0);
  for (std::int64_t j = 8; j < 16; ++j) CHECK(q.at(0, j) == 0.0);

  auto cfg_abs = small_cfg();
  cfg_abs.query_mode = QueryMode::AbstractLearned;
  auto enc_abs = Encoder::create(cfg_abs, rng);
  const Tensor qa = enc_abs.init_queries(anchors, emb);
  ParamList ps;
  enc_abs.collect("encoder", ps);
  bool found = false;
  for (auto& [name, t] : ps)
    if (name == "encoder.abstract_queries") {
      found = true;
      for (std::int64_t i = 0; i < t.numel(); ++i)
        CHECK(qa.data()[static_cast<std::size_t>(i)] == t.data()[static_cast<std::size_t>(i)]);
    }
  CHECK(found);
}

TEST_CASE("learned-anchored mode: gradient reaches anchor positions") {
  std::mt19937_64 rng(3);
  auto emb = RffEmbedding::create(16, 2, rng);
  auto cfg = small_cfg();
  cfg.query_mode = QueryMode::LearnedAnchored;
  auto enc = Encoder::create(cfg, rng);
  auto anchors = AnchorSet::create(Tensor::randn({4, 2}, rng), 0, false, 16, rng,
                                   /*learned_positions=*/true);
  const Tensor coords = Tensor::randn({6, 2}, rng);
  const Tensor feats = Tensor::randn({6, 2}, rng);
  anchors.positions0.zero_grad();
  {
    Tape tape;
    const Tensor z = enc.encode(coords, feats, {}, anchors, emb);
    tape.backward(mean(z));
  }
  double gnorm = 0;
  for (double g : anchors.positions0.grad()) gnorm += std::abs(g);
  CHECK(gnorm > 0.0);
}

TEST_CASE("zero output projections reduce encode to the identity on queries") {
  std::mt19937_64 rng(4);
  auto emb = RffEmbedding::create(16, 2, rng);
  auto cfg = small_cfg();
  auto enc = Encoder::create(cfg, rng);
  auto anchors = make_anchors(rng, 4, 16, cfg.levels, false);

  ParamList ps;
  enc.collect("encoder", ps);
  zero_by_suffix(ps, {".o_proj.", ".ca_ffn.l2.", ".ffn.l2."});

  const Tensor coords = Tensor::randn({9, 2}, rng);
  const Tensor feats = Tensor::randn({9, 2}, rng);
  const Tensor z = enc.encode(coords, feats, {}, anchors, emb);
  const Tensor q0 = enc.init_queries(anchors, emb);
  REQUIRE(z.shape() == q0.shape());
  for (std::int64_t i = 0; i < z.numel(); ++i)
    CHECK(z.data()[static_cast<std::size_t>(i)] == q0.data()[static_cast<std::size_t>(i)]);
}

TEST_CASE("encode is permutation-invariant over input points") {
  std::mt19937_64 rng(5);
  auto emb = RffEmbedding::create(16, 2, rng);
  auto cfg = small_cfg();
  auto enc = Encoder::create(cfg, rng);
  auto anchors = make_anchors(rng, 4, 16, cfg.levels, false);

  const std::int64_t n = 12;
  Tensor coords = Tensor::randn({n, 2}, rng);
  Tensor feats = Tensor::randn({n, 2}, rng);
  const Tensor z = enc.encode(coords, feats, {}, anchors, emb);

  std::vector<std::int64_t> perm(n);
  for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pc = Tensor::zeros({n, 2}), pf = Tensor::zeros({n, 2});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < 2; ++c) {
      pc.at(i, c) = coords.at(perm[static_cast<std::size_t>(i)], c);
      pf.at(i, c) = feats.at(perm[static_cast<std::size_t>(i)], c);
    }
  const Tensor zp = enc.encode(pc, pf, {}, anchors, emb);
  for (std::int64_t i = 0; i < z.numel(); ++i)
    CHECK(std::abs(z.data()[static_cast<std::size_t>(i)] -
                   zp.data()[static_cast<std::size_t>(i)]) < 1e-9);
}

TEST_CASE("latent bottleneck: output is always L x d") {
  std::mt19937_64 rng(6);
  auto emb = RffEmbedding::create(16, 2, rng);
  auto cfg = small_cfg();
  auto enc = Encoder::create(cfg, rng);
  auto anchors = make_anchors(rng, 4, 16, cfg.levels, false);
  for (std::int64_t n : {1, 5, 16, 64}) {
    const Tensor z = enc.encode(Tensor::randn({n, 2}, rng), Tensor::randn({n, 2}, rng), {},
                                anchors, emb);
    CHECK(z.rows() == 4);
    CHECK(z.cols() == 16);
    CHECK(all_finite(z.data()));
  }
  CHECK_THROWS_AS(enc.encode({}, {}, {}, anchors, emb), ContractError);
}

TEST_CASE("cross-attention rows are a partition of unity and encode is deterministic") {
  std::mt19937_64 rng(7);
  auto emb = RffEmbedding::create(16, 2, rng);
  auto cfg = small_cfg(2, 3);
  cfg.gwa = true;
  auto enc = Encoder::create(cfg, rng);
  auto anchors = make_anchors(rng, 4, 16, cfg.levels, true);

  const Tensor coords = Tensor::randn({10, 2}, rng);
  const Tensor feats = Tensor::randn({10, 2}, rng);
  const std::vector<double> globals = {0.3, -1.0, 2.0};

  EncoderTrace trace;
  const Tensor z1 = enc.encode(coords, feats, globals, anchors, emb, &trace);
  const Tensor z2 = enc.encode(coords, feats, globals, anchors, emb);
  for (std::int64_t i = 0; i < z1.numel(); ++i)
    CHECK(z1.data()[static_cast<std::size_t>(i)] == z2.data()[static_cast<std::size_t>(i)]);

  REQUIRE(trace.cross.size() == 2);
  for (const auto& level : trace.cross) {
    REQUIRE(level.head_weights.size() == 2);
    for (const auto& w : level.head_weights) {
      for (std::int64_t a = 0; a < w.rows(); ++a) {
        double acc = 0;
        for (std::int64_t k = 0; k < w.cols(); ++k) {
          CHECK(w.at(a, k) >= 0.0);
          acc += w.at(a, k);
        }
        CHECK(std::abs(acc - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("abstract-query mode never reads anchor positions") {
  std::mt19937_64 rng(8);
  auto emb = RffEmbedding::create(16, 2, rng);
  auto cfg = small_cfg();
  cfg.query_mode = QueryMode::AbstractLearned;
  auto enc = Encoder::create(cfg, rng);
  auto anchors = make_anchors(rng, 4, 16, cfg.levels, false);

  const Tensor coords = Tensor::randn({8, 2}, rng);
  const Tensor feats = Tensor::randn({8, 2}, rng);
  const Tensor z1 = enc.encode(coords, feats, {}, anchors, emb);
  for (std::int64_t i = 0; i < anchors.positions0.numel(); ++i)
    anchors.positions0.data()[static_cast<std::size_t>(i)] += 17.0;
  const Tensor z2 = enc.encode(coords, feats, {}, anchors, emb);
  for (std::int64_t i = 0; i < z1.numel(); ++i)
    CHECK(z1.data()[static_cast<std::size_t>(i)] == z2.data()[static_cast<std::size_t>(i)]);
}
