#ifndef RNDOOD_TRAINER_HPP
#define RNDOOD_TRAINER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rndood/degradations.hpp"
#include "rndood/image.hpp"
#include "rndood/nn.hpp"

namespace rndood {

/// One predictor trained against b_train+1 frozen targets: target 0 on the
/// original data, target i on the dataset degraded by specs[i-1].
struct TrainConfig {
  std::string profile = "tiny";
  int b_train = 0;
  std::vector<DegradationSpec> specs;  // exactly b_train entries

  int epochs = 0;          // 0 picks the default schedule for b_train
  long total_updates = 0;  // > 0 overrides epochs with a fixed update count
  double base_lr = 1e-4;
  double anneal_lr = 1e-5;  // takes over past the halfway point
  int batch_size = 128;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;  // subsample (before degradations) when < 1
};

/// Epoch defaults keep the total update count at roughly 100 epochs' worth
/// of the plain single-target run: ceil(100 / (b_train + 1)).
int default_epochs(int b_train);

/// Canonical fingerprint of every field, for reproducibility stamps.
std::uint64_t config_fingerprint(const TrainConfig& config);

struct RndModel {
  Network predictor;
  std::vector<Network> targets;  // b_train + 1, all frozen
  double mu_train = 0.0;         // mean train-set loss, for typicality
  std::uint64_t fingerprint = 0;
  TrainConfig config;
};

/// One optimizer update: which dataset fed it, at what loss and rate.
struct StepRecord {
  long step = 0;
  int dataset_index = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// Interleaved round-robin training: every round takes one batch per
/// dataset, each against its own target. An epoch is ceil(n/batch) rounds
/// of the (possibly subsampled) training set; the learning rate is base_lr
/// through epoch ceil(E/2) and anneal_lr afterwards (with a total_updates
/// override, the drop comes after ceil(total/2) updates). Deterministic
/// given the seed; throws std::runtime_error with the step index if the
/// loss goes non-finite.
RndModel train(const Dataset& train_set, const TrainConfig& config,
               std::vector<StepRecord>* step_log = nullptr);

/// One model per fraction, each subsampling with the config seed before
/// degradations are generated. Fractions must lie in (0,1]; a fraction
/// leaving less than one batch is rejected.
std::vector<RndModel> reduced_data_sweep(const Dataset& train_set,
                                         const TrainConfig& config,
                                         const std::vector<double>& fractions);

/// Seeded-permutation prefix: fraction 1 is the identity (original order);
/// otherwise the first floor(fraction*n) entries of the permutation, so
/// smaller fractions are nested subsets of larger ones.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace rndood

#endif  // RNDOOD_TRAINER_HPP
