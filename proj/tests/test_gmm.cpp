#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "geohead/gmm.hpp"
#include "geohead/random.hpp"

using namespace geohead;

TEST_CASE("softplus reference values") {
  CHECK(softplus(0.0) == Catch::Approx(std::log(2.0)).margin(1e-6));
  CHECK(softplus(1000.0) == Catch::Approx(1000.0).margin(1e-6));
  CHECK(softplus(-1000.0) >= 0.0);
  CHECK(softplus(-1000.0) <= 1e-12);
  CHECK_THROWS_AS(softplus(std::numeric_limits<double>::quiet_NaN()),
                  std::invalid_argument);
}

TEST_CASE("lower-bounded softplus") {
  CHECK(softplus_lb(-1000.0) == Catch::Approx(kSigmaFloor).margin(1e-9));
  CHECK(softplus_lb(0.0) == Catch::Approx(0.852302).margin(1e-6));
  CHECK(softplus_lb(10.0) == Catch::Approx(10.159200).margin(1e-4));
}

TEST_CASE("activation pair differs by exactly the floor") {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    const double c = rng.uniform(-40, 20);
    CHECK(softplus_lb(c) - softplus(c) == Catch::Approx(kSigmaFloor).margin(1e-12));
    // the floor itself is reachable once softplus underflows next to it
    CHECK(softplus_lb(c) >= kSigmaFloor);
    CHECK(softplus_lb(c) > 0.0);
  }
  CHECK(softplus_lb(-5.0) > kSigmaFloor);
}

TEST_CASE("softmax examples") {
  const std::vector<double> even{0.0, 0.0};
  auto w = softmax(even);
  CHECK(w[0] == Catch::Approx(0.5));
  CHECK(w[1] == Catch::Approx(0.5));

  const std::vector<double> ln2{std::log(2.0), 0.0};
  w = softmax(ln2);
  CHECK(w[0] == Catch::Approx(2.0 / 3.0).margin(1e-9));
  CHECK(w[1] == Catch::Approx(1.0 / 3.0).margin(1e-9));

  const std::vector<double> extreme{1000.0, 0.0};
  w = softmax(extreme);
  CHECK(w[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(w[1] == Catch::Approx(0.0).margin(1e-12));

  CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("softmax shift invariance and normalization") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.index(8);
    std::vector<double> raw(m), shifted(m);
    const double shift = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < m; ++i) {
      raw[i] = rng.uniform(-10, 10);
      shifted[i] = raw[i] + shift;
    }
    const auto a = softmax(raw);
    const auto b = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
      CHECK(a[i] > 0.0);
      CHECK(a[i] < 1.0 + 1e-12);
      sum += a[i];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("gaussian pdf values") {
  // peak height exactly 1 at the lower bound
  CHECK(gaussian_pdf({0, 0}, {{0, 0}, kSigmaFloor, 1.0}) ==
        Catch::Approx(1.0).margin(1e-12));
  // D = 1 at the lower bound: e^{-pi}
  CHECK(gaussian_pdf({0, 0}, {{1, 0}, kSigmaFloor, 1.0}) ==
        Catch::Approx(std::exp(-std::numbers::pi)).margin(1e-6));
  CHECK(gaussian_pdf({0, 0}, {{0, 0}, 1.0, 1.0}) ==
        Catch::Approx(kSigmaFloor).margin(1e-9));
  CHECK_THROWS_AS(gaussian_pdf({0, 0}, {{0, 0}, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_pdf({0, 0}, {{0, 0}, -1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("pdf bounded in [0, 1] whenever sigma is at or above the floor") {
  Rng rng(7);
  for (int i = 0; i < 5000; ++i) {
    const GaussianPeak peak{{rng.uniform(-180, 180), rng.uniform(-90, 90)},
                            kSigmaFloor + rng.uniform(0, 50),
                            1.0};
    const GeoPoint y{rng.uniform(-180, 180), rng.uniform(-90, 90)};
    const double p = gaussian_pdf(y, peak);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("mixture density") {
  const GaussianPeak single{{0, 0}, kSigmaFloor, 1.0};
  const GmmPrediction one{{single}};
  CHECK(gmm_density({0.5, 0.5}, one) ==
        Catch::Approx(gaussian_pdf({0.5, 0.5}, single)).margin(1e-15));

  GmmPrediction twin{{{{2, 3}, 0.7, 0.5}, {{2, 3}, 0.7, 0.5}}};
  const GaussianPeak merged{{2, 3}, 0.7, 1.0};
  CHECK(gmm_density({1, 1}, twin) ==
        Catch::Approx(gaussian_pdf({1, 1}, merged)).margin(1e-12));

  // peaks at D = 0 and D = 1 with sigma at the floor, equal weights
  GmmPrediction pair{{{{0, 0}, kSigmaFloor, 0.5}, {{1, 0}, kSigmaFloor, 0.5}}};
  CHECK(gmm_density({0, 0}, pair) ==
        Catch::Approx(0.5 + 0.5 * std::exp(-std::numbers::pi)).margin(1e-6));
}

TEST_CASE("density is non-increasing in distance for a single peak") {
  const GmmPrediction pred{{{{0, 0}, 2.5, 1.0}}};
  double prev = gmm_density({0, 0}, pred);
  for (double d = 0.5; d <= 40.0; d += 0.5) {
    const double cur = gmm_density({d, 0}, pred);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("prediction validation") {
  GmmPrediction bad_sum{{{{0, 0}, 1.0, 0.5}, {{1, 1}, 1.0, 0.6}}};
  CHECK_THROWS_AS(validate(bad_sum), std::invalid_argument);
  GmmPrediction empty;
  CHECK_THROWS_AS(validate(empty), std::invalid_argument);
  GmmPrediction ok{{{{0, 0}, 1.0, 0.25}, {{1, 1}, 2.0, 0.75}}};
  CHECK_NOTHROW(validate(ok));
}

TEST_CASE("peak sorting order") {
  std::vector<GaussianPeak> peaks{{{5, 1}, 1.0, 0.2},
                                  {{-3, 2}, 1.0, 0.5},
                                  {{-3, -7}, 1.0, 0.2},
                                  {{9, 0}, 1.0, 0.1}};
  sort_peaks(peaks);
  CHECK(peaks[0].weight == 0.5);
  // ties by ascending lon, then lat
  CHECK(peaks[1].mu.lon == -3.0);
  CHECK(peaks[1].mu.lat == -7.0);
  CHECK(peaks[2].mu.lon == 5.0);
  CHECK(peaks[3].weight == 0.1);
}
