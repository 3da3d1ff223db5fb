#include <doctest.h>

#include <cmath>

#include "prosdd/gradcheck.hpp"
#include "prosdd/model.hpp"
#include "test_util.hpp"

using namespace prosdd;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  return cfg;
}

std::vector<float> random_samples(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> s(n);
  for (auto& v : s) v = float(rng.uniform(-1.0, 1.0));
  return s;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  CHECK(cfg.stride_product() == 320);
  cfg.conv_strides = {5, 4, 4};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("320"), DataError);
  cfg = tiny_config();
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("shape contract 64000 -> 200xH -> 200x448 -> 2 logits") {
  const Model model(tiny_config(), 1);
  ForwardCache cache;
  const auto samples = random_samples(kUtteranceSamples, 2);
  const Mat z = model.encode_latents(samples, cache);
  REQUIRE(z.rows() == 200);
  REQUIRE(z.cols() == 16);
  const Mat h = model.contextualize(z, cache);
  REQUIRE(h.rows() == 200);
  REQUIRE(h.cols() == 16);
  const Mat y = model.project(h);
  REQUIRE(y.cols() == kTargetDim);
  const Vec logits = model.classify(h, cache);
  REQUIRE(logits.size() == 2);

  CHECK_THROWS_AS(model.encode_latents(random_samples(100, 3), cache), DataError);
}

TEST_CASE("all-zero input produces finite outputs") {
  const Model model(tiny_config(), 1);
  ForwardCache cache;
  const Mat z = model.encode_latents(std::vector<float>(kUtteranceSamples, 0.0f), cache);
  const Mat h = model.contextualize(z, cache);
  const Vec logits = model.classify(h, cache);
  CHECK(z.allFinite());
  CHECK(h.allFinite());
  CHECK(model.project(h).allFinite());
  CHECK(logits.allFinite());
}

TEST_CASE("contextualize is sensitive to frame order (positional encodings)") {
  const Model model(tiny_config(), 1);
  ForwardCache cache;
  const Mat z = model.encode_latents(random_samples(kUtteranceSamples, 5), cache);
  Mat z_perm = z;
  z_perm.row(0).swap(z_perm.row(100));
  const Mat h = model.contextualize(z, cache);
  const Mat h_perm = model.contextualize(z_perm, cache);
  // row 50 is untouched by the permutation, yet its output must change
  CHECK((h.row(50) - h_perm.row(50)).norm() > 1e-8);
}

TEST_CASE("eval mode is deterministic, train mode reproducible under a fixed seed") {
  const Model model(tiny_config(), 1);
  ForwardCache c1, c2;
  const Mat z = model.encode_latents(random_samples(kUtteranceSamples, 6), c1);
  const Mat h1 = model.contextualize(z, c1);
  const Mat h2 = model.contextualize(z, c2);
  CHECK((h1 - h2).cwiseAbs().maxCoeff() == 0.0);

  Rng d1(9), d2(9), d3(10);
  ForwardCache t1, t2, t3;
  const Mat a = model.contextualize(z, t1, true, &d1);
  const Mat b = model.contextualize(z, t2, true, &d2);
  const Mat c = model.contextualize(z, t3, true, &d3);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);  // different dropout draw
}

TEST_CASE("project is affine") {
  Model model(tiny_config(), 1);
  const Mat h1 = Mat::Random(200, 16), h2 = Mat::Random(200, 16);
  const Mat zero = Mat::Zero(200, 16);
  const Mat lhs = model.project(h1 + h2) - model.project(h1) - model.project(h2) + model.project(zero);
  CHECK(lhs.cwiseAbs().maxCoeff() < 1e-12);

  model.param("proj.w").value.setZero();
  const Mat y = model.project(h1);
  const auto& b = model.param("proj.b").value;
  for (int t = 0; t < y.rows(); ++t) CHECK((y.row(t) - b.row(0)).norm() == 0.0);
}

TEST_CASE("classifier pooling treats constant rows like a single row") {
  const Model model(tiny_config(), 1);
  Mat h1(1, 16), h200(200, 16);
  h1.setRandom();
  for (int t = 0; t < 200; ++t) h200.row(t) = h1.row(0);
  ForwardCache a, b;
  const Vec l1 = model.classify(h1, a);
  const Vec l200 = model.classify(h200, b);
  CHECK((l1 - l200).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mask vector is H-dimensional and bounded at init") {
  const Model model(tiny_config(), 1);
  const Vec mv = model.mask_vector();
  REQUIRE(mv.size() == 16);
  for (int i = 0; i < mv.size(); ++i) CHECK(std::abs(mv[i]) <= 0.1);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  testutil::TempDir d("model_ckpt");
  const Model model(tiny_config(), 42);
  const auto p1 = d.path / "a.psdm";
  const auto p2 = d.path / "b.psdm";
  save_checkpoint(model, p1);
  const Model back = load_checkpoint(p1);
  REQUIRE(back.params().size() == model.params().size());
  for (size_t i = 0; i < model.params().size(); ++i) {
    CHECK(back.params()[i].name == model.params()[i].name);
    CHECK(back.params()[i].group == model.params()[i].group);
    CHECK((back.params()[i].value - model.params()[i].value).cwiseAbs().maxCoeff() == 0.0);
  }
  save_checkpoint(back, p2);
  CHECK(testutil::same_bytes(p1, p2));

  CHECK_THROWS_AS(load_checkpoint(d.path / "missing.psdm"), DataError);
}

TEST_CASE("grad_check on a sum-of-squares projection loss") {
  Model model(tiny_config(), 7);
  const auto samples = random_samples(20 * 320, 8);
  auto loss_fn = [&](bool with_grad) {
    ForwardCache cache;
    const Mat z = model.encode_latents(samples, cache);
    const Mat h = model.contextualize(z, cache);
    const Mat y = model.project(h);
    const double loss = y.squaredNorm();
    if (with_grad) {
      model.zero_grad();
      const Mat d_h = model.project_backward(2.0 * y, h);
      const Mat d_z = model.contextualize_backward(d_h, cache);
      model.encode_backward(d_z, cache);
    }
    return loss;
  };
  const auto report = grad_check(model, loss_fn, 1e-4, 40, 3);
  CHECK(report.coords_checked > 0);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("full stage losses pass the finite-difference harness") {
  const auto summary = run_gradcheck_harness(40);
  CHECK(summary.stage1.max_rel_error <= 1e-4);
  CHECK(summary.stage2_joint.max_rel_error <= 1e-4);
  CHECK(summary.passed());
}

}  // TEST_SUITE
