#include <catch2/catch_amalgamated.hpp>

#include "roifusion/config.hpp"

using namespace roifusion;

TEST_CASE("defaults embed the reference model constants") {
  RunConfig cfg;
  cfg.validate();
  CHECK(cfg.cloud_points == 16384);
  CHECK(cfg.keypoints_pc + cfg.keypoints_img == 256);
  CHECK(cfg.eta == 1.0);
  REQUIRE(cfg.classes.size() == 3);
  CHECK(cfg.classes[0].name == "Car");
  CHECK(cfg.classes[0].h == 1.8);
  CHECK(cfg.classes[0].w == 5.0);
  CHECK(cfg.classes[0].l == 5.0);
  CHECK(cfg.classes[1].w == 1.0);
  CHECK(cfg.classes[2].l == 1.8);
  CHECK(cfg.lr == 0.002);
  CHECK(cfg.lr_drop_epoch == 40);
  CHECK(cfg.epochs == 50);
}

TEST_CASE("empty config text is rejected (keys need sections)") {
  CHECK_THROWS_AS(parse_config("cloud_points = 10\n"), ConfigError);
}

TEST_CASE("config round trip: parse(serialize(parse(x))) == parse(x)") {
  RunConfig cfg = toy_config();
  cfg.eta = 0.75;
  cfg.fusion = FusionStrategy::Max;
  cfg.pool2d_width = cfg.pool3d_width;
  std::string text = serialize_config(cfg);
  RunConfig once = parse_config(text);
  std::string again = serialize_config(once);
  CHECK(text == again);
  RunConfig twice = parse_config(again);
  CHECK(serialize_config(twice) == text);
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK_THROWS_AS(parse_config("[model]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ncloud_points == 3\n"), ConfigError);
}

TEST_CASE("validation catches inconsistent settings") {
  RunConfig cfg = toy_config();
  cfg.eta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = toy_config();
  cfg.angle_bins = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = toy_config();
  cfg.sa_points = {512, 128, 16};  // below keypoints_pc
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = toy_config();
  cfg.fp_mlp = {{16}, {32}, {32}};  // final width != last SA width
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = toy_config();
  cfg.fusion = FusionStrategy::Sum;
  cfg.pool2d_width = cfg.pool3d_width + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("derived SA stage sizes clamp to the keypoint count") {
  RunConfig cfg;
  auto pts = cfg.effective_sa_points();
  REQUIRE(pts.size() == 4);
  CHECK(pts[0] == 4096);
  CHECK(pts[1] == 1024);
  CHECK(pts[2] == 256);
  CHECK(pts[3] == 128);  // N/256 = 64 would fall below M1 = 128
}

TEST_CASE("class table parses custom entries") {
  std::string text =
      "[classes]\n"
      "Car = 1.6, 1.8, 4.2, 0.7\n"
      "Van = 2.0, 1.9, 5.0\n";
  RunConfig cfg = parse_config(text);
  REQUIRE(cfg.classes.size() == 2);
  CHECK(cfg.classes[0].iou == 0.7);
  CHECK(cfg.classes[1].name == "Van");
  CHECK(cfg.classes[1].iou == 0.5);
}

TEST_CASE("comments and whitespace are tolerated") {
  std::string text =
      "# top comment\n"
      "[model]\n"
      "eta = 0.5  # trailing comment\n"
      "\n"
      "[train]\n"
      "epochs = 3\n";
  RunConfig cfg = parse_config(text);
  CHECK(cfg.eta == 0.5);
  CHECK(cfg.epochs == 3);
}

TEST_CASE("fusion strategy names round trip") {
  for (auto s : {FusionStrategy::Concat, FusionStrategy::Sum, FusionStrategy::Max})
    CHECK(fusion_from_name(fusion_strategy_name(s)) == s);
  CHECK_THROWS_AS(fusion_from_name("mean"), ConfigError);
}
