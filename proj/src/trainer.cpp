#include "rndood/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rndood/rng.hpp"

namespace rndood {

int default_epochs(int b_train) {
  if (b_train < 0) throw std::invalid_argument("default_epochs: negative b_train");
  return (100 + b_train) / (b_train + 1);  // ceil(100 / (b+1))
}

std::uint64_t config_fingerprint(const TrainConfig& c) {
  std::ostringstream os;
  os << c.profile << '|' << c.b_train << '|' << c.epochs << '|'
     << c.total_updates << '|' << c.base_lr << '|' << c.anneal_lr << '|'
     << c.batch_size << '|' << c.seed << '|' << c.train_fraction;
  for (const DegradationSpec& s : c.specs)
    os << '|' << to_string(s.kind) << ',' << s.k << ',' << s.keep << ','
       << s.kernel_x << ',' << s.kernel_y << ',' << s.magnitude << ','
       << s.alpha << ',' << s.seed;
  const std::string text = os.str();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : text) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("subsample: fraction must be in (0,1]");
  if (dataset.empty()) throw std::invalid_argument("subsample: empty dataset");
  if (fraction == 1.0) return dataset;
  const int n = static_cast<int>(dataset.size());
  const int keep = std::max(1, static_cast<int>(fraction * n));
  std::vector<int> perm =
      seeded_permutation(n, derive_seed(seed, seed_stream::kSubsample));
  perm.resize(static_cast<std::size_t>(keep));
  return dataset.gather(perm);
}

namespace {

/// Infinite shuffled stream over one dataset: every exhausted permutation is
/// replaced by a fresh one, so every batch comes out full.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::uint64_t seed, int dataset_index)
      : data_(&data), seed_(seed),
        index_(static_cast<std::uint64_t>(dataset_index)) {
    reshuffle();
  }

  std::vector<Image> next(int batch_size) {
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int t = 0; t < batch_size; ++t) {
      if (cursor_ == perm_.size()) {
        ++round_;
        reshuffle();
      }
      out.push_back(data_->images[static_cast<std::size_t>(perm_[cursor_++])]);
    }
    return out;
  }

 private:
  void reshuffle() {
    perm_ = seeded_permutation(
        static_cast<int>(data_->size()),
        derive_seed(seed_, seed_stream::kBatchOrder, (index_ << 40) | round_));
    cursor_ = 0;
  }

  const Dataset* data_;
  std::uint64_t seed_;
  std::uint64_t index_;
  std::uint64_t round_ = 0;
  std::vector<int> perm_;
  std::size_t cursor_ = 0;
};

double mean_train_loss(const Network& predictor, const Network& target,
                       const Dataset& data, int batch_size) {
  double sum = 0.0;
  std::vector<Image> chunk;
  for (std::size_t start = 0; start < data.size();) {
    const std::size_t stop =
        std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    chunk.assign(data.images.begin() + static_cast<std::ptrdiff_t>(start),
                 data.images.begin() + static_cast<std::ptrdiff_t>(stop));
    const Eigen::MatrixXd f = forward_columns(predictor, chunk);
    const Eigen::MatrixXd g = forward_columns(target, chunk);
    sum += (f - g).colwise().squaredNorm().sum();
    start = stop;
  }
  return sum / static_cast<double>(data.size());
}

}  // namespace

RndModel train(const Dataset& train_set, const TrainConfig& config,
               std::vector<StepRecord>* step_log) {
  if (train_set.empty()) throw std::invalid_argument("train: empty train set");
  if (config.b_train < 0)
    throw std::invalid_argument("train: negative b_train");
  if (static_cast<int>(config.specs.size()) != config.b_train)
    throw std::invalid_argument("train: spec count must equal b_train");
  if (config.batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.epochs < 0 || config.total_updates < 0)
    throw std::invalid_argument("train: negative schedule");
  for (const DegradationSpec& s : config.specs) validate_spec(s);

  const Dataset primary =
      subsample(train_set, config.train_fraction, config.seed);
  if (config.train_fraction < 1.0 &&
      static_cast<int>(primary.size()) < config.batch_size)
    throw std::invalid_argument(
        "train: subsampled set smaller than one batch");

  std::vector<Dataset> aux;
  if (config.b_train > 0) aux = build_aux_datasets(primary, config.specs);

  const TensorShape input{primary.channels(), primary.height(),
                          primary.width()};
  RndModel model;
  model.config = config;
  model.fingerprint = config_fingerprint(config);
  model.predictor =
      init_network(profile_by_name(config.profile, input, true),
                   derive_seed(config.seed, seed_stream::kPredictor), false);
  for (int i = 0; i <= config.b_train; ++i)
    model.targets.push_back(init_network(
        profile_by_name(config.profile, input, false),
        derive_seed(config.seed, seed_stream::kTarget,
                    static_cast<std::uint64_t>(i)),
        true));

  const int n_datasets = config.b_train + 1;
  std::vector<BatchStream> streams;
  streams.reserve(static_cast<std::size_t>(n_datasets));
  streams.emplace_back(primary, config.seed, 0);
  for (int i = 0; i < config.b_train; ++i)
    streams.emplace_back(aux[static_cast<std::size_t>(i)], config.seed, i + 1);

  const long rounds_per_epoch =
      (static_cast<long>(primary.size()) + config.batch_size - 1) /
      config.batch_size;
  const int epochs = config.epochs > 0 ? config.epochs
                                       : config.total_updates > 0
                                             ? 0
                                             : default_epochs(config.b_train);
  const long total_updates =
      config.total_updates > 0
          ? config.total_updates
          : static_cast<long>(epochs) * rounds_per_epoch * n_datasets;
  if (total_updates < 1)
    throw std::invalid_argument("train: empty schedule");
  const long updates_per_epoch = rounds_per_epoch * n_datasets;

  AdamState adam(model.predictor.params.size());
  long update = 0;
  while (update < total_updates) {
    for (int j = 0; j < n_datasets && update < total_updates; ++j) {
      double lr;
      if (config.total_updates > 0) {
        lr = update + 1 <= (total_updates + 1) / 2 ? config.base_lr
                                                   : config.anneal_lr;
      } else {
        const long epoch = update / updates_per_epoch + 1;  // 1-based
        lr = epoch <= (epochs + 1) / 2 ? config.base_lr : config.anneal_lr;
      }
      const std::vector<Image> batch =
          streams[static_cast<std::size_t>(j)].next(config.batch_size);
      const LossGrad lg =
          loss_and_grad(model.predictor, model.targets[static_cast<std::size_t>(j)],
                        batch);
      if (!std::isfinite(lg.loss))
        throw std::runtime_error("train: loss diverged at step " +
                                 std::to_string(update));
      adam_step(model.predictor.params, lg.grad, adam, lr);
      if (step_log) step_log->push_back({update, j, lg.loss, lr});
      ++update;
    }
  }

  model.mu_train = mean_train_loss(model.predictor, model.targets[0], primary,
                                   config.batch_size);
  return model;
}

std::vector<RndModel> reduced_data_sweep(const Dataset& train_set,
                                         const TrainConfig& config,
                                         const std::vector<double>& fractions) {
  if (fractions.empty())
    throw std::invalid_argument("reduced_data_sweep: no fractions");
  std::vector<RndModel> models;
  models.reserve(fractions.size());
  for (double f : fractions) {
    TrainConfig c = config;
    c.train_fraction = f;
    models.push_back(train(train_set, c));
  }
  return models;
}

}  // namespace rndood
