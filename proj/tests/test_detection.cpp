#include "doctest.h"

#include <cmath>
#include <random>

#include "rndood/detection.hpp"
#include "rndood/nn.hpp"

using namespace rndood;

namespace {

Image random_image(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> span(0.1, 0.9);
  Image img(c, h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data(i) = span(rng);
  return img;
}

NetworkProfile dense_profile(int in_dim, int out_dim) {
  NetworkProfile p;
  p.name = "test";
  p.input = {1, 2, 2};
  p.layers = {LayerDesc::flatten(), LayerDesc::dense(in_dim, out_dim)};
  return p;
}

// model whose predictor and target are random single-dense-layer networks
RndModel toy_model(std::uint64_t seed, double mu = 0.0) {
  RndModel m;
  m.predictor = init_network(dense_profile(4, 3), seed, false);
  m.targets.push_back(init_network(dense_profile(4, 3), seed + 1, true));
  m.targets.push_back(init_network(dense_profile(4, 3), seed + 2, true));
  m.mu_train = mu;
  return m;
}

}  // namespace

TEST_CASE("uncertainty is the squared feature distance to the first target") {
  // f(x) = (3, 4), g_0(x) = (0, 0) for the all-ones input
  RndModel m;
  m.predictor = init_network(dense_profile(4, 2), 1, false);
  m.targets.push_back(init_network(dense_profile(4, 2), 2, true));
  m.predictor.params.setZero();
  m.targets[0].params.setZero();
  for (int i = 0; i < 4; ++i) {
    m.predictor.params(2 * i) = 0.75;      // first output row -> 3
    m.predictor.params(2 * i + 1) = 1.0;   // second output row -> 4
  }
  Image x(1, 2, 2);
  x.data.setConstant(1.0);
  CHECK(uncertainty(m, x) == doctest::Approx(25.0));
}

TEST_CASE("a predictor copied from the target scores zero everywhere") {
  RndModel m = toy_model(5);
  m.predictor.params = m.targets[0].params;
  for (std::uint64_t s = 0; s < 10; ++s)
    CHECK(uncertainty(m, random_image(1, 2, 2, s)) == doctest::Approx(0.0));
}

TEST_CASE("batched scoring equals per-sample scoring") {
  const RndModel m = toy_model(7);
  Dataset d;
  for (std::uint64_t s = 0; s < 100; ++s)
    d.push_back(random_image(1, 2, 2, s));

  const auto batched = uncertainty_scores(m, d, 16);  // uneven final chunk
  REQUIRE(batched.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    const double solo = uncertainty(m, d.images[i]);
    CHECK(std::abs(batched[i] - solo) <= 1e-6 * std::max(1.0, solo));
    CHECK(batched[i] >= 0.0);
  }
}

TEST_CASE("auxiliary targets never affect the score") {
  RndModel m = toy_model(9);
  Dataset d;
  for (std::uint64_t s = 0; s < 5; ++s) d.push_back(random_image(1, 2, 2, s));
  const auto before = uncertainty_scores(m, d);
  m.targets[1].params.setConstant(1e6);  // vandalize g_1
  const auto after = uncertainty_scores(m, d);
  CHECK(before == after);
}

TEST_CASE("typicality measures distance from the stored train mean") {
  RndModel m = toy_model(11, /*mu=*/4.0);
  Dataset d;
  for (std::uint64_t s = 0; s < 40; ++s) d.push_back(random_image(1, 2, 2, s));

  const auto u = uncertainty_scores(m, d);
  const auto t = typicality_scores(m, d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(t[i] == doctest::Approx(std::abs(u[i] - 4.0)));
    CHECK(typicality_score(m, d.images[i]) == doctest::Approx(t[i]));
  }

  // score is zero exactly when the uncertainty hits the mean
  RndModel centered = m;
  centered.mu_train = u[3];
  CHECK(typicality_score(centered, d.images[3]) == doctest::Approx(0.0));

  // symmetric: means at u - delta and u + delta give the same score
  RndModel lo = m, hi = m;
  lo.mu_train = u[0] - 0.5;
  hi.mu_train = u[0] + 0.5;
  CHECK(typicality_score(lo, d.images[0]) ==
        doctest::Approx(typicality_score(hi, d.images[0])));
}

TEST_CASE("typicality requires a stored mean") {
  RndModel m = toy_model(13, std::nan(""));
  Image x = random_image(1, 2, 2, 1);
  CHECK_THROWS_AS(typicality_score(m, x), std::invalid_argument);
  Dataset d;
  d.push_back(x);
  CHECK_THROWS_AS(typicality_scores(m, d), std::invalid_argument);
}

TEST_CASE("detection rejects models without targets") {
  RndModel empty;
  empty.predictor = init_network(dense_profile(4, 3), 1, false);
  CHECK_THROWS_AS(uncertainty(empty, random_image(1, 2, 2, 1)),
                  std::invalid_argument);
}

TEST_CASE("orthogonal probe reports rows per alpha in order") {
  const RndModel m = toy_model(17);
  Dataset d;
  for (std::uint64_t s = 0; s < 8; ++s) d.push_back(random_image(1, 2, 2, s));

  const auto report = orthogonal_probe(m, d, {5.0, 10.0, 20.0}, 3, 1, 42);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].alpha == 5.0);
  CHECK(report.rows[1].alpha == 10.0);
  CHECK(report.rows[2].alpha == 20.0);
  CHECK(report.blur_k == 1);
  CHECK(report.num_seeds == 3);
  CHECK(report.original_mean > 0.0);
  CHECK(report.blurred_mean > 0.0);

  // deterministic
  const auto again = orthogonal_probe(m, d, {5.0, 10.0, 20.0}, 3, 1, 42);
  CHECK(again.rows[1].mean_uncertainty ==
        report.rows[1].mean_uncertainty);
  CHECK(again.original_mean == report.original_mean);
}

TEST_CASE("a vanishing alpha row approaches the original mean") {
  const RndModel m = toy_model(19);
  Dataset d;
  for (std::uint64_t s = 0; s < 6; ++s) d.push_back(random_image(1, 2, 2, s));
  const auto report = orthogonal_probe(m, d, {1e-6}, 1, 1, 7);
  CHECK(report.rows[0].mean_uncertainty ==
        doctest::Approx(report.original_mean).epsilon(1e-4));
}

TEST_CASE("more probe seeds can only lower the reported minimum") {
  const RndModel m = toy_model(23);
  Dataset d;
  for (std::uint64_t s = 0; s < 6; ++s) d.push_back(random_image(1, 2, 2, s));
  const auto one = orthogonal_probe(m, d, {10.0}, 1, 1, 9);
  const auto four = orthogonal_probe(m, d, {10.0}, 4, 1, 9);
  CHECK(four.rows[0].mean_uncertainty <= one.rows[0].mean_uncertainty);
}

TEST_CASE("orthogonal probe validates its inputs") {
  const RndModel m = toy_model(29);
  Dataset d;
  d.push_back(random_image(1, 2, 2, 1));
  CHECK_THROWS_AS(orthogonal_probe(m, Dataset{}, {5.0}, 1, 1, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(orthogonal_probe(m, d, {}, 1, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(orthogonal_probe(m, d, {5.0}, 0, 1, 0),
                  std::invalid_argument);
}
