#include "rndood/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rndood/degradations.hpp"
#include "rndood/rng.hpp"

namespace rndood {

namespace {

void check_model(const RndModel& model) {
  if (model.targets.empty())
    throw std::invalid_argument("detection: model has no target networks");
}

}  // namespace

double uncertainty(const RndModel& model, const Image& x) {
  check_model(model);
  const std::vector<Image> one{x};
  const Eigen::MatrixXd f = forward_columns(model.predictor, one);
  const Eigen::MatrixXd g = forward_columns(model.targets[0], one);
  return (f - g).squaredNorm();
}

std::vector<double> uncertainty_scores(const RndModel& model,
                                       const Dataset& data, int batch_size) {
  check_model(model);
  if (batch_size < 1)
    throw std::invalid_argument("uncertainty_scores: batch_size must be >= 1");
  std::vector<double> scores;
  scores.reserve(data.size());
  std::vector<Image> chunk;
  for (std::size_t start = 0; start < data.size();) {
    const std::size_t stop =
        std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    chunk.assign(data.images.begin() + static_cast<std::ptrdiff_t>(start),
                 data.images.begin() + static_cast<std::ptrdiff_t>(stop));
    const Eigen::MatrixXd f = forward_columns(model.predictor, chunk);
    const Eigen::MatrixXd g = forward_columns(model.targets[0], chunk);
    const Eigen::VectorXd sq = (f - g).colwise().squaredNorm();
    scores.insert(scores.end(), sq.data(), sq.data() + sq.size());
    start = stop;
  }
  return scores;
}

double typicality_score(const RndModel& model, const Image& x) {
  if (!std::isfinite(model.mu_train))
    throw std::invalid_argument("typicality_score: model has no mean train loss");
  return std::abs(uncertainty(model, x) - model.mu_train);
}

std::vector<double> typicality_scores(const RndModel& model,
                                      const Dataset& data, int batch_size) {
  if (!std::isfinite(model.mu_train))
    throw std::invalid_argument("typicality_scores: model has no mean train loss");
  std::vector<double> scores = uncertainty_scores(model, data, batch_size);
  for (double& s : scores) s = std::abs(s - model.mu_train);
  return scores;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

OrthogonalProbeReport orthogonal_probe(const RndModel& model,
                                       const Dataset& data,
                                       const std::vector<double>& alphas,
                                       int num_seeds, int blur_k,
                                       std::uint64_t seed) {
  check_model(model);
  if (data.empty())
    throw std::invalid_argument("orthogonal_probe: empty dataset");
  if (alphas.empty())
    throw std::invalid_argument("orthogonal_probe: no alphas");
  if (num_seeds < 1)
    throw std::invalid_argument("orthogonal_probe: num_seeds must be >= 1");

  OrthogonalProbeReport report;
  report.blur_k = blur_k;
  report.num_seeds = num_seeds;
  report.original_mean = mean_of(uncertainty_scores(model, data));

  Dataset blurred;
  for (const Image& img : data.images) blurred.push_back(svd_blur(img, blur_k));
  report.blurred_mean = mean_of(uncertainty_scores(model, blurred));

  for (double alpha : alphas) {
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < num_seeds; ++s) {
      Dataset perturbed;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const OrthogonalProbeSpec spec{
            alpha, derive_seed(seed, seed_stream::kOrthogonal,
                               (static_cast<std::uint64_t>(s) << 32) | i)};
        perturbed.push_back(orthogonal_perturb(data.images[i], spec));
      }
      best = std::min(best, mean_of(uncertainty_scores(model, perturbed)));
    }
    report.rows.push_back({alpha, best});
  }
  return report;
}

}  // namespace rndood
