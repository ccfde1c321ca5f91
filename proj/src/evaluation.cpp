#include "rndood/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rndood/nn.hpp"
#include "rndood/rng.hpp"

namespace rndood {

namespace {

void check_scores(const std::vector<double>& in_scores,
                  const std::vector<double>& ood_scores) {
  if (in_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("metrics: both score lists must be non-empty");
  for (double s : in_scores)
    if (!std::isfinite(s))
      throw std::invalid_argument("metrics: non-finite in-distribution score");
  for (double s : ood_scores)
    if (!std::isfinite(s))
      throw std::invalid_argument("metrics: non-finite OOD score");
}

}  // namespace

double auroc(const std::vector<double>& in_scores,
             const std::vector<double>& ood_scores) {
  check_scores(in_scores, ood_scores);
  // Walk thresholds upward through the pooled scores. Accepting everything
  // at or below the threshold traces (FPR, TPR) from (0,0) to (1,1); the
  // trapezoid rule on that curve handles tied scores as half-credit.
  std::vector<std::pair<double, int>> pooled;  // score, is_in
  pooled.reserve(in_scores.size() + ood_scores.size());
  for (double s : in_scores) pooled.emplace_back(s, 1);
  for (double s : ood_scores) pooled.emplace_back(s, 0);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const double n_in = static_cast<double>(in_scores.size());
  const double n_ood = static_cast<double>(ood_scores.size());
  double area = 0.0, tpr_prev = 0.0, fpr_prev = 0.0;
  long in_seen = 0, ood_seen = 0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    const double v = pooled[i].first;
    for (; i < pooled.size() && pooled[i].first == v; ++i)
      (pooled[i].second ? in_seen : ood_seen) += 1;
    const double tpr = in_seen / n_in;
    const double fpr = ood_seen / n_ood;
    area += (fpr - fpr_prev) * (tpr + tpr_prev) / 2.0;
    tpr_prev = tpr;
    fpr_prev = fpr;
  }
  // Curve convention: FPR on the x axis is the OOD acceptance rate, so the
  // area computed above is P(in accepted before ood) = P(ood > in) + ...
  return area;
}

double aupr(const std::vector<double>& in_scores,
            const std::vector<double>& ood_scores, PositiveClass positive) {
  check_scores(in_scores, ood_scores);
  // Rank by detection confidence: ascending scores detect in-distribution,
  // descending detect OOD. Tied scores enter as one block so the precision
  // of an all-tied list is the prevalence.
  const bool in_positive = positive == PositiveClass::In;
  std::vector<std::pair<double, int>> pooled;  // score, is_positive
  pooled.reserve(in_scores.size() + ood_scores.size());
  for (double s : in_scores) pooled.emplace_back(s, in_positive ? 1 : 0);
  for (double s : ood_scores) pooled.emplace_back(s, in_positive ? 0 : 1);
  if (in_positive)
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  else
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

  const double n_pos = static_cast<double>(in_positive ? in_scores.size()
                                                       : ood_scores.size());
  double ap = 0.0, recall_prev = 0.0;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    const double v = pooled[i].first;
    for (; i < pooled.size() && pooled[i].first == v; ++i)
      (pooled[i].second ? tp : fp) += 1;
    const double recall = tp / n_pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
  }
  return ap;
}

double tnr_at_tpr(const std::vector<double>& in_scores,
                  const std::vector<double>& ood_scores, double tpr_level) {
  check_scores(in_scores, ood_scores);
  if (!(tpr_level > 0.0) || tpr_level > 1.0)
    throw std::invalid_argument("tnr_at_tpr: level must be in (0,1]");
  std::vector<double> sorted_in = in_scores;
  std::sort(sorted_in.begin(), sorted_in.end());
  const auto n = static_cast<double>(sorted_in.size());
  const auto need = static_cast<std::size_t>(std::ceil(tpr_level * n - 1e-12));
  const double tau = sorted_in[need - 1];
  long rejected = 0;
  for (double s : ood_scores)
    if (s > tau) ++rejected;
  return rejected / static_cast<double>(ood_scores.size());
}

double detection_accuracy(const std::vector<double>& in_scores,
                          const std::vector<double>& ood_scores) {
  check_scores(in_scores, ood_scores);
  std::vector<double> taus;
  taus.reserve(in_scores.size() + ood_scores.size());
  taus.insert(taus.end(), in_scores.begin(), in_scores.end());
  taus.insert(taus.end(), ood_scores.begin(), ood_scores.end());
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  std::vector<double> sorted_in = in_scores, sorted_ood = ood_scores;
  std::sort(sorted_in.begin(), sorted_in.end());
  std::sort(sorted_ood.begin(), sorted_ood.end());

  double best = 0.5;  // accept-nothing threshold: TPR 0, TNR 1
  for (double tau : taus) {
    const auto in_acc = std::upper_bound(sorted_in.begin(), sorted_in.end(), tau) -
                        sorted_in.begin();
    const auto ood_acc =
        std::upper_bound(sorted_ood.begin(), sorted_ood.end(), tau) -
        sorted_ood.begin();
    const double tpr = static_cast<double>(in_acc) / sorted_in.size();
    const double tnr =
        1.0 - static_cast<double>(ood_acc) / sorted_ood.size();
    best = std::max(best, (tpr + tnr) / 2.0);
  }
  return best;
}

EvalReport evaluate(const std::vector<double>& in_scores,
                    const std::vector<double>& ood_scores) {
  EvalReport r;
  r.auroc = auroc(in_scores, ood_scores);
  r.aupr_in = aupr(in_scores, ood_scores, PositiveClass::In);
  r.aupr_out = aupr(in_scores, ood_scores, PositiveClass::Out);
  r.detection_accuracy = detection_accuracy(in_scores, ood_scores);
  r.tnr_at_95tpr = tnr_at_tpr(in_scores, ood_scores, 0.95);
  r.n_in = static_cast<int>(in_scores.size());
  r.n_ood = static_cast<int>(ood_scores.size());
  return r;
}

double linear_probe(const Eigen::MatrixXd& features,
                    const std::vector<int>& labels,
                    const ProbeOptions& options) {
  const auto n = static_cast<int>(features.rows());
  const auto dim = static_cast<int>(features.cols());
  if (n < 2 || dim < 1)
    throw std::invalid_argument("linear_probe: need at least two samples");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("linear_probe: label count mismatch");
  if (!(options.train_fraction > 0.0) || options.train_fraction >= 1.0)
    throw std::invalid_argument("linear_probe: train_fraction must be in (0,1)");

  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("linear_probe: negative label");
    classes = std::max(classes, l + 1);
  }
  {
    std::vector<bool> seen(static_cast<std::size_t>(classes), false);
    int distinct = 0;
    for (int l : labels)
      if (!seen[static_cast<std::size_t>(l)]) {
        seen[static_cast<std::size_t>(l)] = true;
        ++distinct;
      }
    if (distinct < 2)
      throw std::invalid_argument("linear_probe: need at least two classes");
  }

  const std::vector<int> perm =
      seeded_permutation(n, derive_seed(options.seed, seed_stream::kProbe));
  const int n_train =
      std::max(1, static_cast<int>(options.train_fraction * n));
  if (n_train >= n)
    throw std::invalid_argument("linear_probe: no held-out samples");

  Eigen::MatrixXd x_train(dim, n_train);
  std::vector<int> y_train(static_cast<std::size_t>(n_train));
  for (int i = 0; i < n_train; ++i) {
    x_train.col(i) = features.row(perm[static_cast<std::size_t>(i)]).transpose();
    y_train[static_cast<std::size_t>(i)] =
        labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }

  // Zero-initialized head: the very first update already moves along the
  // class-separating direction, so short schedules behave.
  const Eigen::Index n_params = static_cast<Eigen::Index>(classes) * dim + classes;
  Eigen::VectorXd params = Eigen::VectorXd::Zero(n_params);
  AdamState adam(n_params);

  const int epochs = options.sgd_annealed ? 100 : 50;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Eigen::Map<Eigen::MatrixXd> w(params.data(), classes, dim);
    Eigen::Map<Eigen::VectorXd> b(params.data() + w.size(), classes);
    Eigen::MatrixXd logits = w * x_train;
    logits.colwise() += b;
    // Stable softmax per column.
    const Eigen::RowVectorXd col_max = logits.colwise().maxCoeff();
    logits.rowwise() -= col_max;
    Eigen::MatrixXd p = logits.array().exp().matrix();
    const Eigen::RowVectorXd z = p.colwise().sum();
    p.array().rowwise() /= z.array();
    for (int i = 0; i < n_train; ++i)
      p(y_train[static_cast<std::size_t>(i)], i) -= 1.0;
    p /= static_cast<double>(n_train);

    Eigen::VectorXd grad(n_params);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data(), classes, dim);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + gw.size(), classes);
    gw = p * x_train.transpose();
    gb = p.rowwise().sum();

    if (options.sgd_annealed) {
      const double lr = epoch <= 30 ? 0.1 : epoch <= 60 ? 0.01 : 0.001;
      params -= lr * grad;
    } else {
      adam_step(params, grad, adam, 1e-3);
    }
  }

  Eigen::Map<Eigen::MatrixXd> w(params.data(), classes, dim);
  Eigen::Map<Eigen::VectorXd> b(params.data() + w.size(), classes);
  int correct = 0;
  for (int i = n_train; i < n; ++i) {
    const Eigen::VectorXd logit =
        w * features.row(perm[static_cast<std::size_t>(i)]).transpose() + b;
    Eigen::Index arg = 0;
    logit.maxCoeff(&arg);
    if (static_cast<int>(arg) ==
        labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

}  // namespace rndood
