#include "rndood/effective_rank.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rndood/degradations.hpp"
#include "rndood/tensor_linalg.hpp"

namespace rndood {

namespace {

double channel_ler(const ChannelSvd& d, bool* degenerate) {
  if (d.sigma.size() == 0 || d.sigma.maxCoeff() <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;  // rank-0 channel, point-mass convention
  }
  return shannon_entropy_bits(d.sigma);
}

EffectiveRankReport report_from_decomposition(const SingularDecomposition& d,
                                              ChannelAggregate aggregate) {
  EffectiveRankReport r;
  r.per_channel_ler.reserve(d.channels.size());
  for (const ChannelSvd& ch : d.channels)
    r.per_channel_ler.push_back(channel_ler(ch, &r.degenerate));

  const auto n = static_cast<double>(r.per_channel_ler.size());
  if (aggregate == ChannelAggregate::LogOfMeanRank) {
    double mean_rank = 0.0;
    for (double ler : r.per_channel_ler) mean_rank += std::exp2(ler) / n;
    r.effective_rank = mean_rank;
    r.image_ler = std::log2(mean_rank);
  } else {
    double mean_ler = 0.0;
    for (double ler : r.per_channel_ler) mean_ler += ler / n;
    r.image_ler = mean_ler;
    r.effective_rank = std::exp2(mean_ler);
  }
  return r;
}

}  // namespace

EffectiveRankReport image_ler(const Image& image, ChannelAggregate aggregate) {
  return report_from_decomposition(svd(image), aggregate);
}

double dataset_ler(const Dataset& dataset, ChannelAggregate aggregate) {
  if (dataset.empty())
    throw std::invalid_argument("dataset_ler: empty dataset");
  double sum = 0.0;
  for (const Image& img : dataset.images)
    sum += image_ler(img, aggregate).image_ler;
  return sum / static_cast<double>(dataset.size());
}

std::vector<double> uniform_targets(double ler_train, int b_train) {
  if (b_train < 1)
    throw std::invalid_argument("uniform_targets: b_train must be >= 1");
  if (!(ler_train > 0.0))
    throw std::invalid_argument("uniform_targets: ler_train must be > 0");
  std::vector<double> targets(static_cast<std::size_t>(b_train));
  for (int i = 1; i <= b_train; ++i)
    targets[static_cast<std::size_t>(i - 1)] =
        (0.5 + 0.5 * (i - 1) / static_cast<double>(b_train)) * ler_train;
  return targets;
}

KSelection select_k(const Dataset& dataset, int b_train,
                    ChannelAggregate aggregate) {
  if (dataset.empty()) throw std::invalid_argument("select_k: empty dataset");
  if (b_train < 1)
    throw std::invalid_argument("select_k: b_train must be >= 1");
  const int kmax = std::min(dataset.height(), dataset.width()) - 1;
  if (kmax < 1)
    throw std::invalid_argument("select_k: images too small for a K sweep");

  KSelection sel;
  sel.b_train = b_train;
  sel.ler_train = dataset_ler(dataset, aggregate);
  sel.sweep_ler.assign(static_cast<std::size_t>(kmax), 0.0);

  // One decomposition per image, reused across the whole K sweep. The
  // blurred copy is clamped, so its LER needs a fresh decomposition.
  for (const Image& img : dataset.images) {
    const SingularDecomposition d = svd(img);
    for (int k = 1; k <= kmax; ++k)
      sel.sweep_ler[static_cast<std::size_t>(k - 1)] +=
          image_ler(svd_blur(d, k), aggregate).image_ler;
  }
  for (double& v : sel.sweep_ler) v /= static_cast<double>(dataset.size());

  const double spread =
      *std::max_element(sel.sweep_ler.begin(), sel.sweep_ler.end()) -
      *std::min_element(sel.sweep_ler.begin(), sel.sweep_ler.end());
  sel.degenerate = !(sel.ler_train > 0.0) || spread == 0.0;

  if (!sel.degenerate) sel.targets = uniform_targets(sel.ler_train, b_train);
  else sel.targets.assign(static_cast<std::size_t>(b_train), 0.0);

  for (int i = 0; i < b_train; ++i) {
    int best_k = 1;
    double best = std::abs(sel.sweep_ler[0] - sel.targets[static_cast<std::size_t>(i)]);
    for (int k = 2; k <= kmax; ++k) {
      const double err =
          std::abs(sel.sweep_ler[static_cast<std::size_t>(k - 1)] -
                   sel.targets[static_cast<std::size_t>(i)]);
      if (err < best) {  // strict: ties keep the smaller (stronger) K
        best = err;
        best_k = k;
      }
    }
    sel.chosen_k.push_back(best_k);
    sel.achieved_ler.push_back(sel.sweep_ler[static_cast<std::size_t>(best_k - 1)]);
  }
  return sel;
}

}  // namespace rndood
