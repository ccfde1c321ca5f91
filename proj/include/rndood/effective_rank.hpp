#ifndef RNDOOD_EFFECTIVE_RANK_HPP
#define RNDOOD_EFFECTIVE_RANK_HPP

#include <vector>

#include "rndood/image.hpp"

namespace rndood {

/// How per-channel log effective ranks combine into one image value.
/// LogOfMeanRank: image_ler = log2(mean_j 2^ler_j), i.e. the log of the mean
/// per-channel effective rank (default). MeanLog: plain mean of the ler_j.
enum class ChannelAggregate { LogOfMeanRank, MeanLog };

struct EffectiveRankReport {
  std::vector<double> per_channel_ler;  // bits
  double image_ler = 0.0;               // bits
  double effective_rank = 1.0;          // 2^image_ler
  bool degenerate = false;              // some channel had a zero spectrum
};

/// K selection without OOD validation data: equally spaced LER targets
/// between 50% and 100% of the training-set LER, matched against the
/// realized mean LER of K-blurred copies of the dataset.
struct KSelection {
  int b_train = 0;
  double ler_train = 0.0;           // bits, mean over the source dataset
  std::vector<double> targets;      // LER_i for i = 1..b_train
  std::vector<int> chosen_k;        // K_i, non-increasing in i
  std::vector<double> achieved_ler; // realized mean LER at each chosen K
  std::vector<double> sweep_ler;    // realized mean LER for K = 1..min(H,W)-1
  bool degenerate = false;          // zero-spread sweep, selection meaningless
};

/// Per-channel LER = entropy in bits of the normalized singular values.
/// A channel with an all-zero spectrum gets LER 0 and flags the report.
EffectiveRankReport image_ler(
    const Image& image,
    ChannelAggregate aggregate = ChannelAggregate::LogOfMeanRank);

/// Mean image_ler over a non-empty dataset.
double dataset_ler(
    const Dataset& dataset,
    ChannelAggregate aggregate = ChannelAggregate::LogOfMeanRank);

/// LER_i = (0.5 + 0.5*(i-1)/b_train) * ler_train, i = 1..b_train.
std::vector<double> uniform_targets(double ler_train, int b_train);

/// Sweeps K over 1..min(H,W)-1, blurring the whole dataset at each K, and
/// picks per target the K whose realized mean LER is closest (ties toward
/// smaller K, the stronger blur).
KSelection select_k(
    const Dataset& dataset, int b_train,
    ChannelAggregate aggregate = ChannelAggregate::LogOfMeanRank);

}  // namespace rndood

#endif  // RNDOOD_EFFECTIVE_RANK_HPP
