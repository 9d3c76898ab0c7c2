#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "bsa/config.hpp"
#include "bsa/pipeline.hpp"
#include "bsa/viz.hpp"

using namespace bsa;

TEST_CASE("config dump/parse round trip and hashing") {
  PipelineConfig cfg;
  cfg.seed = 777;
  cfg.k = 3;
  cfg.encoder_widths = {4, 8};
  cfg.class_mix = "CN:0.5,A:0.5";
  const std::string text = dump_config(cfg);
  const PipelineConfig back = parse_config_text(text);
  CHECK(back.seed == 777);
  CHECK(back.k == 3);
  CHECK(back.encoder_widths == std::vector<int>{4, 8});
  CHECK(back.class_mix == "CN:0.5,A:0.5");
  CHECK(dump_config(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));

  PipelineConfig other = cfg;
  other.seed = 778;
  CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("config parser rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config_text("[pipeline]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[nowhere]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[tiling]\nk = banana\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[svm]\ngrid = enormous\n"), ConfigError);
  CHECK_NOTHROW(parse_config_text("# comment only\n"));
}

TEST_CASE("class mix parsing") {
  const auto uniform = parse_class_mix("uniform6");
  REQUIRE(uniform.size() == 6);
  CHECK(uniform[0].first == "CN");
  const auto weighted = parse_class_mix("CN:2, A:1");
  REQUIRE(weighted.size() == 2);
  CHECK(weighted[0].second == doctest::Approx(2.0));
  CHECK(weighted[1].first == "A");
  CHECK_THROWS_AS(parse_class_mix("CN"), ConfigError);
}

TEST_CASE("diverging colormap endpoints, center and clamping") {
  CHECK(diverging_color(0.0, 15.0) == std::array<uint8_t, 3>{255, 255, 255});
  CHECK(diverging_color(15.0, 15.0) == std::array<uint8_t, 3>{255, 0, 0});
  CHECK(diverging_color(-15.0, 15.0) == std::array<uint8_t, 3>{0, 0, 255});
  CHECK(diverging_color(20.0, 15.0) == std::array<uint8_t, 3>{255, 0, 0});
  CHECK(diverging_color(-99.0, 15.0) == std::array<uint8_t, 3>{0, 0, 255});
  // halfway to red keeps full red channel, reduces the others
  const auto half = diverging_color(7.5, 15.0);
  CHECK(half[0] == 255);
  CHECK(half[1] == half[2]);
  CHECK(half[1] < 255);
}

TEST_CASE("structure slice renders colors on black background") {
  LabelVolume lv(4, 3, 2, 2);
  lv.at(1, 1, 0) = 1;
  lv.at(2, 1, 0) = 2;
  const std::vector<double> values{0.0, 15.0};
  const RgbImage img = render_structure_slice(lv, values, 2, 0);
  CHECK(img.width == 4);
  CHECK(img.height == 3);
  const uint8_t* bg = img.at(0, 0);
  CHECK((bg[0] == 0 && bg[1] == 0 && bg[2] == 0));
  const uint8_t* white = img.at(1, 1);
  CHECK((white[0] == 255 && white[1] == 255 && white[2] == 255));
  const uint8_t* red = img.at(2, 1);
  CHECK((red[0] == 255 && red[1] == 0 && red[2] == 0));

  CHECK_THROWS_AS(render_structure_slice(lv, values, 2, 5), std::invalid_argument);
  CHECK_THROWS_AS(render_structure_slice(lv, {1.0}, 2, 0), std::invalid_argument);
}

TEST_CASE("ppm writer emits a valid P6 header and payload") {
  RgbImage img(3, 2);
  img.at(0, 0)[0] = 255;
  const auto path = (std::filesystem::temp_directory_path() / "bsa_test.ppm").string();
  write_ppm(img, path);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  CHECK(magic == "P6");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  is.get();  // single whitespace after header
  std::vector<char> payload(3 * 2 * 3);
  is.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  CHECK(is.gcount() == static_cast<std::streamsize>(payload.size()));
  CHECK(static_cast<unsigned char>(payload[0]) == 255);
  std::filesystem::remove(path);
}

TEST_CASE("population summary uses the fixed class order and volume weights") {
  std::vector<StructureFeatures> rows;
  StructureFeatures cn;
  cn.id = "s0";
  cn.age = 50;
  cn.class_id = "CN";
  cn.bsa = {50, 50};
  cn.bsage = {0.0, 0.0};
  cn.volumes = {100, 300};
  StructureFeatures e;
  e.id = "s1";
  e.age = 60;
  e.class_id = "E";
  e.bsa = {70, 62};
  e.bsage = {10.0, 2.0};
  e.volumes = {100, 300};
  StructureFeatures a;
  a.id = "s2";
  a.age = 40;
  a.class_id = "A";
  a.bsa = {52, 44};
  a.bsage = {12.0, 4.0};
  a.volumes = {100, 300};
  rows = {e, cn, a};  // deliberately out of order

  const auto summary = pipeline::population_summary(rows);
  REQUIRE(summary.classes == std::vector<std::string>{"CN", "A", "E"});
  CHECK(summary.mean_brainage[0] == doctest::Approx(0.0));
  // volume-weighted: (10*100 + 2*300) / 400 = 4.0
  CHECK(summary.mean_brainage[2] == doctest::Approx(4.0));
  CHECK(summary.mean_bsage(2, 0) == doctest::Approx(10.0));

  // single subject with zero bsage gives all-zero means
  const auto lone = pipeline::population_summary({cn});
  CHECK(lone.mean_brainage[0] == doctest::Approx(0.0));
  CHECK(lone.median_brainage[0] == doctest::Approx(0.0));
  CHECK(lone.mean_bsage(0, 0) == doctest::Approx(0.0));
  CHECK(lone.mean_bsage(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("feature matrices follow the requested ablation") {
  std::vector<StructureFeatures> rows(2);
  rows[0] = {"s0", 42.0, "CN", {40, 41}, {-2, -1}, {10, 20}};
  rows[1] = {"s1", 60.0, "A", {70, 75}, {10, 15}, {11, 21}};

  const auto bsage = pipeline::feature_matrix(rows, pipeline::FeatureSet::Bsage);
  CHECK(bsage.cols() == 2);
  CHECK(bsage(1, 1) == doctest::Approx(15.0));

  const auto vol = pipeline::feature_matrix(rows, pipeline::FeatureSet::Vol);
  CHECK(vol(0, 1) == doctest::Approx(20.0));

  const auto both = pipeline::feature_matrix(rows, pipeline::FeatureSet::BsageVol);
  CHECK(both.cols() == 4);
  CHECK(both(1, 0) == doctest::Approx(10.0));
  CHECK(both(1, 2) == doctest::Approx(11.0));

  const auto age = pipeline::feature_matrix(rows, pipeline::FeatureSet::TrueAge);
  CHECK(age.cols() == 1);
  CHECK(age(1, 0) == doctest::Approx(60.0));

  const std::vector<double> preds{41.0, 59.0};
  const auto pred = pipeline::feature_matrix(rows, pipeline::FeatureSet::PredAge, &preds);
  CHECK(pred(0, 0) == doctest::Approx(41.0));
  CHECK_THROWS_AS(pipeline::feature_matrix(rows, pipeline::FeatureSet::PredAge), std::invalid_argument);

  CHECK(pipeline::feature_set_from_name("bsage+vol") == pipeline::FeatureSet::BsageVol);
  CHECK_THROWS_AS(pipeline::feature_set_from_name("nope"), ConfigError);
}

TEST_CASE("manifest and prediction csv round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "bsa_test_pipe";
  std::filesystem::create_directories(dir);

  {
    std::ofstream os(dir / "manifest.csv");
    os << "id,age,class,seed\ns0,42.5,CN,123\ns1,60,A,456\n";
  }
  const auto rows = pipeline::read_manifest((dir / "manifest.csv").string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].age == 42.5);
  CHECK(rows[1].seed == 456);

  std::vector<pipeline::PredictionRow> preds(1);
  preds[0] = {"s0", 42.5, "CN", 43.25, "CN", {0.9, 0.1}};
  const auto pred_path = (dir / "pred.csv").string();
  pipeline::write_predictions_csv(pred_path, preds, {"CN", "A"});
  const auto back = pipeline::read_predictions_csv(pred_path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].value == 43.25);
  CHECK(back[0].scores.size() == 2);

  CHECK_THROWS_AS(pipeline::read_manifest((dir / "absent.csv").string()),
                  pipeline::MissingArtifact);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run manifest embeds the resolved config") {
  const auto dir = (std::filesystem::temp_directory_path() / "bsa_test_manifest").string();
  PipelineConfig cfg;
  pipeline::write_run_manifest(dir, cfg, "unit-test", {{"extra", "value"}});
  std::ifstream is(dir + "/run_manifest.txt");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(text.find("command unit-test") != std::string::npos);
  CHECK(text.find("extra value") != std::string::npos);
  CHECK(text.find("config_begin") != std::string::npos);
  CHECK(text.find(dump_config(cfg)) != std::string::npos);
  std::filesystem::remove_all(dir);
}
