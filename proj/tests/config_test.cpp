#include <doctest.h>

#include "prosdd/config.hpp"
#include "test_util.hpp"

using namespace prosdd;

TEST_SUITE("config") {

TEST_CASE("save/load round trip preserves every field") {
  testutil::TempDir d("config_rt");
  RunConfig cfg = default_run_config();
  cfg.corpus.n_speakers = 7;
  cfg.corpus.shift_attacks = {AttackFamily::B_pitch_discontinuity};
  cfg.model.hidden_dim = 32;
  cfg.model.conv_strides = {320, 1, 1, 1, 1};
  cfg.opt.batch_size = 3;
  cfg.opt.global_lr_multiplier = 123.5;
  cfg.mask_fraction_stage2 = 0.11;
  cfg.objective.tau_stage1 = 0.09;
  cfg.weights.beta_late = 0.01;
  cfg.train_seed = 77;

  const auto p = d.path / "run.json";
  save_run_config(cfg, p);
  const RunConfig back = load_run_config(p);
  CHECK(back.corpus.n_speakers == 7);
  REQUIRE(back.corpus.shift_attacks.size() == 1);
  CHECK(back.corpus.shift_attacks[0] == AttackFamily::B_pitch_discontinuity);
  CHECK(back.model.hidden_dim == 32);
  CHECK(back.model.conv_strides == std::vector<int>{320, 1, 1, 1, 1});
  CHECK(back.opt.batch_size == 3);
  CHECK(back.opt.global_lr_multiplier == 123.5);
  CHECK(back.mask_fraction_stage2 == 0.11);
  CHECK(back.objective.tau_stage1 == 0.09);
  CHECK(back.weights.beta_late == 0.01);
  CHECK(back.train_seed == 77);

  // re-saving the loaded config is byte-identical
  const auto p2 = d.path / "run2.json";
  save_run_config(back, p2);
  CHECK(testutil::same_bytes(p, p2));
}

TEST_CASE("unknown keys are rejected, top level and nested") {
  testutil::TempDir d("config_unknown");
  std::ofstream(d.path / "a.json") << R"({"optimzer": {"base_lr": 1}})";
  CHECK_THROWS_WITH_AS(load_run_config(d.path / "a.json"), doctest::Contains("optimzer"),
                       DataError);
  std::ofstream(d.path / "b.json") << R"({"optimizer": {"learning_rate": 1}})";
  CHECK_THROWS_WITH_AS(load_run_config(d.path / "b.json"),
                       doctest::Contains("optimizer.learning_rate"), DataError);
  std::ofstream(d.path / "c.json") << R"({"optimizer": [1,2]})";
  CHECK_THROWS_AS(load_run_config(d.path / "c.json"), DataError);
  CHECK_THROWS_AS(load_run_config(d.path / "missing.json"), DataError);
}

TEST_CASE("dotted overrides reach nested fields") {
  RunConfig cfg = default_run_config();
  apply_override(cfg, "optimizer.batch_size", "3");
  CHECK(cfg.opt.batch_size == 3);
  apply_override(cfg, "corpus.speakers", "5");
  CHECK(cfg.corpus.n_speakers == 5);
  apply_override(cfg, "masking.fraction_stage1", "0.3");
  CHECK(cfg.mask_fraction_stage1 == 0.3);
  apply_override(cfg, "seeds.train", "9");
  CHECK(cfg.train_seed == 9);
  apply_override(cfg, "corpus.shift_attacks", R"(["A","D"])");
  REQUIRE(cfg.corpus.shift_attacks.size() == 2);
  CHECK(cfg.corpus.shift_attacks[0] == AttackFamily::A_flat_pitch);
  CHECK(cfg.corpus.shift_attacks[1] == AttackFamily::D_unnatural_expressive);

  CHECK_THROWS_AS(apply_override(cfg, "optimizer.no_such_knob", "1"), DataError);
  CHECK_THROWS_AS(apply_override(cfg, "nonsense", "1"), DataError);
}

TEST_CASE("only the null augmentation hook is accepted") {
  RunConfig cfg = default_run_config();
  CHECK_THROWS_WITH_AS(apply_override(cfg, "augmentation", "pitch_shift"),
                       doctest::Contains("not implemented"), DataError);
  apply_override(cfg, "augmentation", "none");  // no-op, accepted
  CHECK(cfg.augmentation == "none");
}

TEST_CASE("presets are internally consistent") {
  const RunConfig desk = desk_run_config();
  CHECK_NOTHROW(desk.model.validate());
  CHECK(desk.corpus.n_speakers >= 2);
  const TrainConfig tc = desk.to_train_config();
  CHECK(tc.opt.batch_size == desk.opt.batch_size);
  CHECK(tc.mask_fraction_stage1 == desk.mask_fraction_stage1);
}

}  // TEST_SUITE
