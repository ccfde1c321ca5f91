#ifndef RNDOOD_DETECTION_HPP
#define RNDOOD_DETECTION_HPP

#include <cstdint>
#include <vector>

#include "rndood/image.hpp"
#include "rndood/trainer.hpp"

namespace rndood {

/// Squared distance between predictor and first-target features. The
/// auxiliary targets never enter the score, whatever b_train was.
double uncertainty(const RndModel& model, const Image& x);

/// Batched scoring; matches the per-sample path to within accumulation
/// noise and is safe to call concurrently on a shared model.
std::vector<double> uncertainty_scores(const RndModel& model,
                                       const Dataset& data,
                                       int batch_size = 256);

/// Absolute distance between the sample's uncertainty and the stored mean
/// training loss. Rejects models without a finite mu_train.
double typicality_score(const RndModel& model, const Image& x);

std::vector<double> typicality_scores(const RndModel& model,
                                      const Dataset& data,
                                      int batch_size = 256);

struct ProbeRow {
  double alpha = 0.0;
  double mean_uncertainty = 0.0;
};

struct OrthogonalProbeReport {
  double original_mean = 0.0;
  double blurred_mean = 0.0;
  int blur_k = 0;
  int num_seeds = 0;
  std::vector<ProbeRow> rows;  // one per alpha, input order
};

/// Mean uncertainty on the dataset, its K-blurred copy, and one row per
/// alpha of orthogonally perturbed copies. Each alpha row reports the
/// smallest mean across num_seeds independent perturbation draws.
OrthogonalProbeReport orthogonal_probe(const RndModel& model,
                                       const Dataset& data,
                                       const std::vector<double>& alphas,
                                       int num_seeds, int blur_k,
                                       std::uint64_t seed);

}  // namespace rndood

#endif  // RNDOOD_DETECTION_HPP
