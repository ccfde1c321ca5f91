#include "doctest.h"

#include <random>
#include <string>
#include <vector>

#include "rndood/rng.hpp"
#include "rndood/trainer.hpp"

using namespace rndood;

namespace {

Dataset toy_corpus(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    Image img(1, size, size);
    const double fy = 1.0 + static_cast<double>(rng() % 3);
    const double fx = 1.0 + static_cast<double>(rng() % 3);
    const double phase = 2.0 * EIGEN_PI * unit(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img.channel(0)(y, x) =
            0.5 + 0.4 * std::cos(2.0 * EIGEN_PI * (fy * y + fx * x) / size +
                                 phase);
    d.push_back(std::move(img));
  }
  return d;
}

TrainConfig base_config(int b, int epochs, int batch) {
  TrainConfig c;
  c.b_train = b;
  c.epochs = epochs;
  c.batch_size = batch;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("epoch defaults follow the fixed-update rule") {
  CHECK(default_epochs(0) == 100);
  CHECK(default_epochs(1) == 50);
  CHECK(default_epochs(2) == 34);
  CHECK(default_epochs(3) == 25);
  CHECK(default_epochs(4) == 20);
  CHECK_THROWS_AS(default_epochs(-1), std::invalid_argument);
}

TEST_CASE("b_train 0 degenerates to a single-target model") {
  const Dataset d = toy_corpus(40, 8, 1);
  std::vector<StepRecord> log;
  const RndModel m = train(d, base_config(0, 1, 32), &log);
  CHECK(m.targets.size() == 1);
  CHECK(m.targets[0].frozen);
  CHECK(!m.predictor.frozen);
  CHECK(log.size() == 2);  // ceil(40/32) rounds, one dataset
  for (const StepRecord& r : log) CHECK(r.dataset_index == 0);
  CHECK(std::isfinite(m.mu_train));
  CHECK(m.mu_train >= 0.0);
}

TEST_CASE("training drives the primary loss down") {
  const Dataset d = toy_corpus(256, 8, 2);
  std::vector<StepRecord> log;
  const RndModel m = train(d, base_config(0, 5, 128), &log);
  REQUIRE(log.size() == 10);
  CHECK(m.mu_train < log.front().loss);
  CHECK(log.back().loss < log.front().loss);
}

TEST_CASE("identical configs reproduce bit-identical models") {
  const Dataset d = toy_corpus(64, 8, 3);
  TrainConfig c = base_config(1, 2, 32);
  c.specs = {DegradationSpec::svd_blur(4)};
  const RndModel a = train(d, c);
  const RndModel b = train(d, c);
  CHECK(a.predictor.params == b.predictor.params);
  REQUIRE(a.targets.size() == 2);
  for (std::size_t i = 0; i < a.targets.size(); ++i)
    CHECK(a.targets[i].params == b.targets[i].params);
  CHECK(a.mu_train == b.mu_train);
  CHECK(a.fingerprint == b.fingerprint);
}

TEST_CASE("targets are frozen: training length never touches them") {
  const Dataset d = toy_corpus(64, 8, 4);
  TrainConfig c = base_config(1, 1, 32);
  c.specs = {DegradationSpec::svd_blur(3)};
  const RndModel short_run = train(d, c);
  c.epochs = 3;
  const RndModel long_run = train(d, c);

  for (std::size_t i = 0; i < 2; ++i)
    CHECK(param_hash(short_run.targets[i]) ==
          param_hash(long_run.targets[i]));
  CHECK(short_run.predictor.params != long_run.predictor.params);
  // distinct target indices get distinct draws
  CHECK(param_hash(short_run.targets[0]) != param_hash(short_run.targets[1]));
}

TEST_CASE("round-robin gives every dataset equal batch counts in order") {
  const Dataset d = toy_corpus(60, 8, 5);
  TrainConfig c = base_config(2, 2, 32);
  c.specs = {DegradationSpec::svd_blur(2),
             DegradationSpec::geometric(DegradationKind::Invert)};
  std::vector<StepRecord> log;
  train(d, c, &log);

  // ceil(60/32) = 2 rounds per epoch, 2 epochs, 3 datasets
  REQUIRE(log.size() == 12);
  int counts[3] = {0, 0, 0};
  for (std::size_t t = 0; t < log.size(); ++t) {
    CHECK(log[t].dataset_index == static_cast<int>(t % 3));
    ++counts[log[t].dataset_index];
    CHECK(log[t].step == static_cast<long>(t));
  }
  CHECK(counts[0] == 4);
  CHECK(counts[1] == 4);
  CHECK(counts[2] == 4);
}

TEST_CASE("learning rate drops exactly once at the halfway epoch") {
  const Dataset d = toy_corpus(16, 8, 6);

  // 1 round per epoch: the per-update log exposes the epoch schedule directly
  std::vector<StepRecord> log;
  train(d, base_config(0, 4, 16), &log);
  REQUIRE(log.size() == 4);
  CHECK(log[0].lr == 1e-4);
  CHECK(log[1].lr == 1e-4);
  CHECK(log[2].lr == 1e-5);
  CHECK(log[3].lr == 1e-5);

  log.clear();
  train(d, base_config(0, 5, 16), &log);  // ceil(5/2) = 3 epochs at base
  REQUIRE(log.size() == 5);
  for (int t = 0; t < 3; ++t) CHECK(log[static_cast<std::size_t>(t)].lr == 1e-4);
  for (int t = 3; t < 5; ++t) CHECK(log[static_cast<std::size_t>(t)].lr == 1e-5);
}

TEST_CASE("a total-update override replaces the epoch schedule") {
  const Dataset d = toy_corpus(16, 8, 7);
  TrainConfig c = base_config(0, 0, 16);
  c.total_updates = 7;
  std::vector<StepRecord> log;
  train(d, c, &log);
  REQUIRE(log.size() == 7);
  for (int t = 0; t < 4; ++t) CHECK(log[static_cast<std::size_t>(t)].lr == 1e-4);
  for (int t = 4; t < 7; ++t) CHECK(log[static_cast<std::size_t>(t)].lr == 1e-5);
}

TEST_CASE("each dataset trains against its own target") {
  // cosine patterns alone are rank <= 3 and a k=4 blur would zero them;
  // mix in noise so the blurred dataset keeps distinct nonzero content
  Dataset d = toy_corpus(64, 6, 8);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> jitter(0.0, 0.2);
  for (auto& img : d.images) {
    for (Eigen::Index i = 0; i < img.size(); ++i)
      img.data(i) = 0.75 * img.data(i) + jitter(rng);
  }
  TrainConfig c = base_config(1, 100, 32);
  c.base_lr = 1e-3;
  c.anneal_lr = 1e-4;
  c.specs = {DegradationSpec::svd_blur(4)};
  const RndModel m = train(d, c);

  const std::vector<Image> train_batch(d.images.begin(), d.images.begin() + 32);
  const Dataset blurred = apply_degradation(d, c.specs[0]);
  const std::vector<Image> blur_batch(blurred.images.begin(),
                                      blurred.images.begin() + 32);

  const double own_0 = loss_and_grad(m.predictor, m.targets[0], train_batch).loss;
  const double cross_0 = loss_and_grad(m.predictor, m.targets[1], train_batch).loss;
  const double own_1 = loss_and_grad(m.predictor, m.targets[1], blur_batch).loss;
  const double cross_1 = loss_and_grad(m.predictor, m.targets[0], blur_batch).loss;

  CHECK(own_0 < cross_0);
  CHECK(own_1 < cross_1);
}

TEST_CASE("subsample takes the seeded permutation prefix") {
  const Dataset d = toy_corpus(40, 8, 9);
  const std::uint64_t seed = 17;

  const Dataset whole = subsample(d, 1.0, seed);
  REQUIRE(whole.size() == 40);
  for (std::size_t i = 0; i < 40; ++i)
    CHECK(whole.images[i].data == d.images[i].data);

  const Dataset half = subsample(d, 0.5, seed);
  REQUIRE(half.size() == 20);
  const auto perm =
      seeded_permutation(40, derive_seed(seed, seed_stream::kSubsample));
  for (std::size_t i = 0; i < 20; ++i)
    CHECK(half.images[i].data == d.images[static_cast<std::size_t>(perm[i])].data);

  // nested prefixes: the quarter sample is the first half of the half sample
  const Dataset quarter = subsample(d, 0.25, seed);
  REQUIRE(quarter.size() == 10);
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(quarter.images[i].data == half.images[i].data);

  CHECK_THROWS_AS(subsample(d, 0.0, seed), std::invalid_argument);
  CHECK_THROWS_AS(subsample(d, 1.5, seed), std::invalid_argument);
}

TEST_CASE("reduced-data sweep trains one model per fraction") {
  const Dataset d = toy_corpus(64, 8, 10);
  TrainConfig c = base_config(0, 2, 16);
  const auto models = reduced_data_sweep(d, c, {0.5, 1.0});
  REQUIRE(models.size() == 2);
  CHECK(models[0].config.train_fraction == 0.5);
  CHECK(models[1].config.train_fraction == 1.0);
  // the full-fraction run is exactly train()
  const RndModel direct = train(d, c);
  CHECK(models[1].predictor.params == direct.predictor.params);
  // halving the data changes the trajectory
  CHECK(models[0].predictor.params != models[1].predictor.params);

  CHECK_THROWS_AS(reduced_data_sweep(d, c, {}), std::invalid_argument);
}

TEST_CASE("a subsample smaller than one batch is rejected") {
  const Dataset d = toy_corpus(40, 8, 11);
  TrainConfig c = base_config(0, 1, 128);
  c.train_fraction = 0.5;
  CHECK_THROWS_AS(train(d, c), std::invalid_argument);
}

TEST_CASE("divergence aborts with the step index") {
  const Dataset d = toy_corpus(256, 8, 12);
  TrainConfig c = base_config(0, 1, 128);
  c.base_lr = 1e200;
  try {
    train(d, c);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  const Dataset d = toy_corpus(16, 8, 13);
  TrainConfig c = base_config(1, 1, 8);
  CHECK_THROWS_AS(train(d, c), std::invalid_argument);  // missing spec

  c = base_config(0, 1, 0);
  CHECK_THROWS_AS(train(d, c), std::invalid_argument);  // bad batch

  c = base_config(0, 1, 8);
  CHECK_THROWS_AS(train(Dataset{}, c), std::invalid_argument);

  c = base_config(0, 1, 8);
  c.profile = "unknown";
  CHECK_THROWS_AS(train(d, c), std::invalid_argument);

  c = base_config(0, 1, 8);
  c.train_fraction = 0.0;
  CHECK_THROWS_AS(train(d, c), std::invalid_argument);
}

TEST_CASE("fingerprints react to every schedule field") {
  TrainConfig c = base_config(0, 2, 16);
  const std::uint64_t base = config_fingerprint(c);

  TrainConfig t = c;
  t.seed = 12;
  CHECK(config_fingerprint(t) != base);
  t = c;
  t.base_lr = 2e-4;
  CHECK(config_fingerprint(t) != base);
  t = c;
  t.profile = "paper";
  CHECK(config_fingerprint(t) != base);
  t = c;
  t.b_train = 1;
  t.specs = {DegradationSpec::svd_blur(4)};
  CHECK(config_fingerprint(t) != base);
  t.specs = {DegradationSpec::svd_blur(5)};
  const std::uint64_t with_k4 = config_fingerprint(t);
  t.specs = {DegradationSpec::svd_blur(4)};
  CHECK(config_fingerprint(t) != with_k4);

  CHECK(config_fingerprint(c) == base);
}
