#include "doctest.h"

#include <filesystem>

#include "bsa/features.hpp"
#include "bsa/rng.hpp"

using namespace bsa;

namespace {

LabelVolume two_structure_labels() {
  LabelVolume lv(4, 2, 1, 2);
  lv.at(0, 0, 0) = 1;
  lv.at(1, 0, 0) = 1;
  lv.at(2, 0, 0) = 2;
  lv.at(3, 1, 0) = 2;
  return lv;
}

}  // namespace

TEST_CASE("compute_bsa means per structure") {
  const LabelVolume lv = two_structure_labels();
  VolumeF constant(4, 2, 1, 50.0f);
  const BsaValues c = compute_bsa(constant, lv);
  CHECK(c.present[0]);
  CHECK(c.present[1]);
  CHECK(c.mean_age[0] == doctest::Approx(50.0));
  CHECK(c.mean_age[1] == doctest::Approx(50.0));

  VolumeF map(4, 2, 1, 0.0f);
  map.at(0, 0, 0) = 40.0f;
  map.at(1, 0, 0) = 60.0f;
  const BsaValues v = compute_bsa(map, lv);
  CHECK(v.mean_age[0] == doctest::Approx(50.0));
}

TEST_CASE("compute_bsa against an independent accumulation oracle") {
  Rng rng(5);
  VolumeF map(6, 5, 4);
  LabelVolume lv(6, 5, 4, 3);
  for (auto& v : map.data) v = static_cast<float>(rng.uniform(20.0, 90.0));
  for (auto& l : lv.labels) l = static_cast<uint16_t>(rng.uniform_int(0, 3));

  const BsaValues got = compute_bsa(map, lv);
  for (int j = 1; j <= 3; ++j) {
    double sum = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < lv.size(); ++i)
      if (lv.labels[i] == j) {
        sum += map.data[i];
        ++n;
      }
    REQUIRE(n > 0);
    CHECK(got.mean_age[j - 1] == doctest::Approx(sum / n).epsilon(1e-12));
  }
}

TEST_CASE("empty structures are flagged missing, not zeroed") {
  LabelVolume lv(2, 1, 1, 3);
  lv.at(0, 0, 0) = 1;
  lv.at(1, 0, 0) = 3;
  VolumeF map(2, 1, 1, 42.0f);
  const BsaValues v = compute_bsa(map, lv);
  CHECK(v.present[0]);
  CHECK_FALSE(v.present[1]);
  CHECK(v.present[2]);
  CHECK_FALSE(v.all_present());
}

TEST_CASE("structure volumes scale voxel counts") {
  LabelVolume lv(8, 1, 1, 2);
  for (int x = 0; x < 3; ++x) lv.at(x, 0, 0) = 1;
  for (int x = 3; x < 8; ++x) lv.at(x, 0, 0) = 2;
  CHECK(compute_structure_volumes(lv, 1.0) == std::vector<double>{3.0, 5.0});
  CHECK(compute_structure_volumes(lv, 8.0) == std::vector<double>{24.0, 40.0});
}

TEST_CASE("bias correction closed form") {
  Eigen::MatrixXd x(3, 1);
  Eigen::VectorXd y(3);

  x << 1, 2, 3;
  y << 2, 4, 6;
  CHECK(fit_bias_correction(x, y).beta[0] == doctest::Approx(2.0).epsilon(1e-12));

  x << 2, 4, 6;
  y << 1, 2, 3;
  const CorrectionModel halves = fit_bias_correction(x, y);
  CHECK(halves.beta[0] == doctest::Approx(0.5).epsilon(1e-12));
  const auto corrected = apply_bias_correction(halves, {2.0});
  CHECK(corrected[0] == doctest::Approx(1.0));

  x << 1, 2, 3;
  y << 1, 2, 3;
  CHECK(fit_bias_correction(x, y).beta[0] == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(3, 1);
  CHECK_THROWS_AS(fit_bias_correction(zeros, y), std::runtime_error);
}

TEST_CASE("bias correction scale consistency") {
  Rng rng(9);
  const int n = 20, s = 4;
  Eigen::MatrixXd x(n, s);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.uniform(20.0, 90.0);
    for (int j = 0; j < s; ++j) x(i, j) = y[i] * (0.8 + 0.1 * j) + rng.normal();
  }
  const CorrectionModel base = fit_bias_correction(x, y);
  const double c = 2.5;
  const CorrectionModel scaled = fit_bias_correction(c * x, y);
  for (int j = 0; j < s; ++j) {
    CHECK(scaled.beta[j] == doctest::Approx(base.beta[j] / c).epsilon(1e-10));
    // corrected ages identical under rescaling
    const double corrected_base = base.beta[j] * x(0, j);
    const double corrected_scaled = scaled.beta[j] * c * x(0, j);
    CHECK(corrected_scaled == doctest::Approx(corrected_base).epsilon(1e-10));
  }
}

TEST_CASE("exact proportional data recovers the truth") {
  Eigen::VectorXd y(5);
  y << 25, 40, 55, 70, 85;
  for (double a : {0.5, 1.0, 2.0}) {
    Eigen::MatrixXd x = (a * y).eval();
    const CorrectionModel m = fit_bias_correction(x, y);
    CHECK(m.beta[0] == doctest::Approx(1.0 / a).epsilon(1e-12));
    for (int i = 0; i < 5; ++i)
      CHECK(m.beta[0] * x(i, 0) == doctest::Approx(y[i]).epsilon(1e-12));
  }
}

TEST_CASE("fitted slope minimizes the residual among pure scalings") {
  Rng rng(13);
  const int n = 30;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.uniform(20.0, 90.0);
    x(i, 0) = 0.9 * y[i] + 3.0 * rng.normal();
  }
  const double beta = fit_bias_correction(x, y).beta[0];
  auto sse = [&](double b) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += (b * x(i, 0) - y[i]) * (b * x(i, 0) - y[i]);
    return acc;
  };
  const double best = sse(beta);
  for (double delta = -0.2; delta <= 0.2001; delta += 0.01)
    CHECK(best <= sse(beta + delta) + 1e-9);
}

TEST_CASE("bsage is the corrected gap and is translation covariant") {
  CHECK(compute_bsage({70.0, 70.0}, 70.0) == std::vector<double>{0.0, 0.0});
  CHECK(compute_bsage({75.0}, 70.0)[0] == doctest::Approx(5.0));

  const std::vector<double> corrected{60.0, 72.5, 81.0};
  const auto base = compute_bsage(corrected, 65.0);
  std::vector<double> shifted = corrected;
  for (auto& v : shifted) v += 4.0;
  const auto moved = compute_bsage(shifted, 65.0);
  for (size_t j = 0; j < base.size(); ++j) CHECK(moved[j] == doctest::Approx(base[j] + 4.0));

  CHECK_THROWS_AS(compute_bsage(corrected, -1.0), std::invalid_argument);
}

TEST_CASE("global brainage and the weighted-mean identity") {
  const LabelVolume lv = two_structure_labels();
  VolumeF map(4, 2, 1, 70.0f);
  CHECK(global_brainage(map, lv, 70.0) == doctest::Approx(0.0));
  CHECK(global_brainage(map, lv, 60.0) == doctest::Approx(10.0));

  Rng rng(17);
  VolumeF random_map(4, 2, 1);
  for (auto& v : random_map.data) v = static_cast<float>(rng.uniform(30.0, 80.0));
  const BsaValues bsa = compute_bsa(random_map, lv);
  const auto counts = voxel_counts_per_label(lv);
  double weighted = 0.0;
  int64_t total = 0;
  for (size_t j = 0; j < counts.size(); ++j) {
    weighted += bsa.mean_age[j] * static_cast<double>(counts[j]);
    total += counts[j];
  }
  CHECK(global_brainage(random_map, lv, 55.0) ==
        doctest::Approx(weighted / static_cast<double>(total) - 55.0).epsilon(1e-6));

  LabelVolume empty(2, 2, 2, 1);
  VolumeF m2(2, 2, 2, 1.0f);
  CHECK_THROWS_AS(global_brainage(m2, empty, 50.0), std::runtime_error);
}

TEST_CASE("feature csv round trip") {
  std::vector<StructureFeatures> rows(2);
  rows[0] = {"s0", 42.25, "CN", {40.0, 41.5}, {-2.25, -0.75}, {100.0, 200.0}};
  rows[1] = {"s1", 77.0, "A", {80.0, 90.0}, {3.0, 13.0}, {90.0, 210.0}};
  const auto path = (std::filesystem::temp_directory_path() / "bsa_test_features.csv").string();
  write_features_csv(path, rows);
  const auto back = read_features_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "s0");
  CHECK(back[1].class_id == "A");
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].age == rows[i].age);
    CHECK(back[i].bsa == rows[i].bsa);
    CHECK(back[i].bsage == rows[i].bsage);
    CHECK(back[i].volumes == rows[i].volumes);
  }
  std::filesystem::remove(path);
}

TEST_CASE("correction model round trip") {
  CorrectionModel m;
  m.beta = {1.25, 0.75, 1.0};
  const auto path = (std::filesystem::temp_directory_path() / "bsa_test_corr.txt").string();
  save_correction(m, path);
  const CorrectionModel back = load_correction(path);
  CHECK(back.beta == m.beta);
  CHECK_FALSE(back.has_intercept);
  std::filesystem::remove(path);
}

TEST_CASE("missing structures are imputed from the healthy cohort") {
  std::vector<BsaValues> cohort(3);
  for (auto& b : cohort) {
    b.mean_age = {50.0, 60.0};
    b.present = {1, 1};
  }
  cohort[0].mean_age[1] = 58.0;
  cohort[2].present[1] = 0;  // missing for the diseased subject
  cohort[2].mean_age[1] = -1.0;

  const std::vector<std::string> classes{"CN", "CN", "A"};
  const auto log = impute_missing_bsa(cohort, classes, "CN");
  REQUIRE(log.size() == 1);
  CHECK(cohort[2].present[1]);
  CHECK(cohort[2].mean_age[1] == doctest::Approx(59.0));  // mean of 58 and 60
}
