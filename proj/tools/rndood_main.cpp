// Command line front end: one subcommand per pipeline stage, plain files in
// and out. Every written artifact gets a `<path>.stamp.json` sibling naming
// the command, its inputs, and the seeds involved, so identical invocations
// can be diffed byte for byte. Exit codes: 0 ok, 2 rejected input, 3
// numerical or I/O failure mid-run.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rndood/data_io.hpp"
#include "rndood/degradations.hpp"
#include "rndood/detection.hpp"
#include "rndood/effective_rank.hpp"
#include "rndood/evaluation.hpp"
#include "rndood/image.hpp"
#include "rndood/nn.hpp"
#include "rndood/trainer.hpp"

namespace {

using nlohmann::json;
using namespace rndood;

constexpr const char* kToolVersion = "0.1.0";

// Relative output paths land under RNDOOD_OUT_DIR when it is set; parent
// directories are created either way.
std::string resolve_out(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv("RNDOOD_OUT_DIR"); dir && *dir)
      p = std::filesystem::path(dir) / p;
  }
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p.string();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : text) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// `inputs` holds every value the output depends on; no timestamps, so a
// rerun writes the identical stamp.
void write_stamp(const std::string& out_path, const std::string& command,
                 json inputs) {
  json stamp;
  stamp["command"] = command;
  stamp["input_hash"] = hex64(fnv1a(inputs.dump()));
  stamp["inputs"] = std::move(inputs);
  stamp["tool_version"] = kToolVersion;
  write_text(out_path + ".stamp.json", stamp.dump(2) + "\n");
}

Dataset load_images(const std::string& path, const std::string& format) {
  if (format == "rndt") return read_dataset(path);
  if (format == "cifar") return read_cifar(path);
  throw std::invalid_argument("unknown dataset format: " + format);
}

TensorDtype dtype_from_string(const std::string& name) {
  if (name == "f32") return TensorDtype::F32;
  if (name == "u8") return TensorDtype::U8;
  throw std::invalid_argument("unknown dtype: " + name);
}

int parse_int(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(what + ": not an integer: " + text);
  }
  if (used != text.size())
    throw std::invalid_argument(what + ": not an integer: " + text);
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string::npos ? text.size() : comma;
    if (end > start) out.push_back(text.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// --param grammar per method: svd/dct take one integer; gauss takes "k" or
// "kxXkY"; geom takes "kind" or "kind:magnitude".
DegradationSpec spec_from_cli(const std::string& method,
                              const std::string& param) {
  if (method == "svd") return DegradationSpec::svd_blur(parse_int(param, "svd"));
  if (method == "dct") return DegradationSpec::dct_blur(parse_int(param, "dct"));
  if (method == "gauss") {
    const std::size_t x = param.find('x');
    const int kx = parse_int(x == std::string::npos ? param : param.substr(0, x),
                             "gauss kernel");
    const int ky = x == std::string::npos
                       ? kx
                       : parse_int(param.substr(x + 1), "gauss kernel");
    return DegradationSpec::gaussian_blur(kx, ky);
  }
  if (method == "geom") {
    const std::size_t colon = param.find(':');
    const std::string name = param.substr(0, colon);
    const DegradationKind kind = degradation_kind_from_string(name);
    if (!is_geometric(kind))
      throw std::invalid_argument("not a geometric kind: " + name);
    int magnitude = 0;
    if (colon != std::string::npos)
      magnitude = parse_int(param.substr(colon + 1), "geom magnitude");
    return DegradationSpec::geometric(kind, magnitude);
  }
  throw std::invalid_argument("unknown blur method: " + method);
}

void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const std::string& k : allowed) known = known || k == item.key();
    if (!known)
      throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
  }
}

DegradationSpec spec_from_json(const json& j) {
  require_keys(j, {"kind", "k", "keep", "kernel", "kernel_x", "kernel_y",
                   "magnitude", "alpha", "seed"},
               "spec");
  DegradationSpec s;
  s.kind = degradation_kind_from_string(j.at("kind").get<std::string>());
  s.k = j.value("k", 0);
  s.keep = j.value("keep", 0);
  const int kernel = j.value("kernel", 1);
  s.kernel_x = j.value("kernel_x", kernel);
  s.kernel_y = j.value("kernel_y", kernel);
  s.magnitude = j.value("magnitude", 0);
  s.alpha = j.value("alpha", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  validate_spec(s);
  return s;
}

json spec_to_json(const DegradationSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  switch (s.kind) {
    case DegradationKind::SvdBlur: j["k"] = s.k; break;
    case DegradationKind::DctBlur: j["keep"] = s.keep; break;
    case DegradationKind::GaussianBlur:
      j["kernel_x"] = s.kernel_x;
      j["kernel_y"] = s.kernel_y;
      break;
    case DegradationKind::OrthogonalNoise:
      j["alpha"] = s.alpha;
      j["seed"] = s.seed;
      break;
    default: j["magnitude"] = s.magnitude; break;
  }
  return j;
}

// Experiment file: training inputs always, evaluation inputs only for
// sweep-k. Unknown keys are rejected rather than silently ignored.
struct Experiment {
  std::string data;
  std::string format = "rndt";
  std::string test_in;
  std::vector<std::string> test_ood;
  std::string metric = "tnr95";
  TrainConfig config;
};

Experiment load_experiment(const std::string& path, bool need_eval) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  json j = json::parse(in);
  require_keys(j,
               {"data", "format", "profile", "b_train", "specs", "epochs",
                "total_updates", "base_lr", "anneal_lr", "batch_size", "seed",
                "train_fraction", "test_in", "test_ood", "metric"},
               "config");

  Experiment e;
  if (!j.contains("data"))
    throw std::invalid_argument("config: missing 'data'");
  e.data = j.at("data").get<std::string>();
  e.format = j.value("format", "rndt");

  TrainConfig& c = e.config;
  c.profile = j.value("profile", c.profile);
  c.b_train = j.value("b_train", c.b_train);
  if (j.contains("specs"))
    for (const json& s : j.at("specs")) c.specs.push_back(spec_from_json(s));
  c.epochs = j.value("epochs", c.epochs);
  c.total_updates = j.value("total_updates", c.total_updates);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.anneal_lr = j.value("anneal_lr", c.anneal_lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.train_fraction = j.value("train_fraction", c.train_fraction);

  if (need_eval) {
    if (!j.contains("test_in"))
      throw std::invalid_argument("config: missing 'test_in'");
    e.test_in = j.at("test_in").get<std::string>();
    if (!j.contains("test_ood"))
      throw std::invalid_argument("config: missing 'test_ood'");
    const json& ood = j.at("test_ood");
    if (ood.is_string())
      e.test_ood.push_back(ood.get<std::string>());
    else
      for (const json& p : ood) e.test_ood.push_back(p.get<std::string>());
    if (e.test_ood.empty())
      throw std::invalid_argument("config: empty 'test_ood'");
    e.metric = j.value("metric", e.metric);
  }
  return e;
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["b_train"] = c.b_train;
  json specs = json::array();
  for (const DegradationSpec& s : c.specs) specs.push_back(spec_to_json(s));
  j["specs"] = std::move(specs);
  j["epochs"] = c.epochs;
  j["total_updates"] = c.total_updates;
  j["base_lr"] = c.base_lr;
  j["anneal_lr"] = c.anneal_lr;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["train_fraction"] = c.train_fraction;
  return j;
}

double pick_metric(const EvalReport& r, const std::string& metric) {
  if (metric == "tnr95") return r.tnr_at_95tpr;
  if (metric == "auroc") return r.auroc;
  if (metric == "detacc") return r.detection_accuracy;
  if (metric == "aupr_in") return r.aupr_in;
  if (metric == "aupr_out") return r.aupr_out;
  throw std::invalid_argument("unknown selection metric: " + metric);
}

json report_to_json(const EvalReport& r) {
  json j;
  j["auroc"] = r.auroc;
  j["tnr_at_95tpr"] = r.tnr_at_95tpr;
  j["detection_accuracy"] = r.detection_accuracy;
  j["aupr_in"] = r.aupr_in;
  j["aupr_out"] = r.aupr_out;
  j["n_in"] = r.n_in;
  j["n_ood"] = r.n_ood;
  return j;
}

Eigen::MatrixXd predictor_features(const RndModel& model, const Dataset& data,
                                   int batch_size = 256) {
  const int n = static_cast<int>(data.size());
  Eigen::MatrixXd features;
  for (int start = 0; start < n; start += batch_size) {
    const int len = std::min(batch_size, n - start);
    const std::vector<Image> batch(data.images.begin() + start,
                                   data.images.begin() + start + len);
    const Eigen::MatrixXd chunk = forward(model.predictor, batch);
    if (features.size() == 0) features.resize(n, chunk.cols());
    features.middleRows(start, len) = chunk;
  }
  return features;
}

// ---- subcommand bodies -------------------------------------------------

struct SynthArgs {
  std::string kind, out, dtype = "f32";
  int n = 0, channels = 1, height = 32, width = 32;
  std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
  const Dataset ds = synth_generate(synth_kind_from_string(a.kind), a.n,
                                    a.channels, a.height, a.width, a.seed);
  const std::string out = resolve_out(a.out);
  write_dataset(out, ds, dtype_from_string(a.dtype));
  write_stamp(out, "synth",
              {{"kind", a.kind},
               {"n", a.n},
               {"channels", a.channels},
               {"height", a.height},
               {"width", a.width},
               {"seed", a.seed},
               {"dtype", a.dtype}});
  std::printf("wrote %s n %d\n", out.c_str(), static_cast<int>(ds.size()));
}

struct BlurArgs {
  std::string method, param, in, out, format = "rndt", dtype = "f32";
};

void run_blur(const BlurArgs& a) {
  const DegradationSpec spec = spec_from_cli(a.method, a.param);
  const Dataset blurred = apply_degradation(load_images(a.in, a.format), spec);
  const std::string out = resolve_out(a.out);
  write_dataset(out, blurred, dtype_from_string(a.dtype));
  write_stamp(out, "blur",
              {{"method", a.method},
               {"param", a.param},
               {"spec", spec_to_json(spec)},
               {"in", a.in},
               {"dtype", a.dtype}});
  std::printf("wrote %s n %d\n", out.c_str(), static_cast<int>(blurred.size()));
}

struct RankArgs {
  std::string in, format = "rndt", aggregate = "log_mean_rank";
};

ChannelAggregate aggregate_from_string(const std::string& name) {
  if (name == "log_mean_rank") return ChannelAggregate::LogOfMeanRank;
  if (name == "mean_log") return ChannelAggregate::MeanLog;
  throw std::invalid_argument("unknown channel aggregate: " + name);
}

void run_effective_rank(const RankArgs& a) {
  const Dataset ds = load_images(a.in, a.format);
  const ChannelAggregate agg = aggregate_from_string(a.aggregate);
  double sum = 0.0;
  int degenerate = 0;
  for (const Image& img : ds.images) {
    const EffectiveRankReport r = image_ler(img, agg);
    sum += r.image_ler;
    degenerate += r.degenerate ? 1 : 0;
  }
  const double ler = sum / static_cast<double>(ds.size());
  std::printf("images %d\n", static_cast<int>(ds.size()));
  std::printf("degenerate %d\n", degenerate);
  std::printf("dataset_ler %.10g\n", ler);
  std::printf("effective_rank %.10g\n", std::exp2(ler));
}

struct SelectKArgs {
  std::string in, format = "rndt", aggregate = "log_mean_rank", out;
  int b = 0;
};

void run_select_k(const SelectKArgs& a) {
  const Dataset ds = load_images(a.in, a.format);
  const KSelection sel = select_k(ds, a.b, aggregate_from_string(a.aggregate));
  std::printf("b_train %d\n", sel.b_train);
  std::printf("ler_train %.10g\n", sel.ler_train);
  for (std::size_t i = 0; i < sel.chosen_k.size(); ++i)
    std::printf("target %zu ler %.10g chosen_k %d achieved %.10g\n", i + 1,
                sel.targets[i], sel.chosen_k[i], sel.achieved_ler[i]);
  std::printf("degenerate %s\n", sel.degenerate ? "true" : "false");

  if (!a.out.empty()) {
    json j;
    j["b_train"] = sel.b_train;
    j["ler_train"] = sel.ler_train;
    j["targets"] = sel.targets;
    j["chosen_k"] = sel.chosen_k;
    j["achieved_ler"] = sel.achieved_ler;
    j["sweep_ler"] = sel.sweep_ler;
    j["degenerate"] = sel.degenerate;
    const std::string out = resolve_out(a.out);
    write_text(out, j.dump(2) + "\n");
    write_stamp(out, "select-k",
                {{"in", a.in}, {"b", a.b}, {"aggregate", a.aggregate}});
    std::printf("wrote %s\n", out.c_str());
  }
}

struct TrainArgs {
  std::string config, out;
  double train_fraction = 0.0;  // 0 keeps the config's value
};

void run_train(const TrainArgs& a) {
  Experiment e = load_experiment(a.config, false);
  if (a.train_fraction != 0.0) e.config.train_fraction = a.train_fraction;
  const Dataset train_set = load_images(e.data, e.format);

  std::vector<StepRecord> log;
  const RndModel model = train(train_set, e.config, &log);
  const std::string out = resolve_out(a.out);
  save_model(out, model);
  write_stamp(out, "train",
              {{"config", a.config},
               {"data", e.data},
               {"resolved", config_to_json(model.config)},
               {"fingerprint", hex64(model.fingerprint)},
               {"seed", model.config.seed}});
  std::printf("updates %zu\n", log.size());
  std::printf("mu_train %.10g\n", model.mu_train);
  std::printf("fingerprint %s\n", hex64(model.fingerprint).c_str());
  std::printf("wrote %s\n", out.c_str());
}

struct ScoreArgs {
  std::string model, data, format = "rndt", scorer = "rnd", out;
  int batch = 256;
};

void run_score(const ScoreArgs& a) {
  const RndModel model = load_model(a.model);
  const Dataset ds = load_images(a.data, a.format);
  std::vector<double> scores;
  if (a.scorer == "rnd")
    scores = uncertainty_scores(model, ds, a.batch);
  else if (a.scorer == "typicality")
    scores = typicality_scores(model, ds, a.batch);
  else
    throw std::invalid_argument("unknown scorer: " + a.scorer);
  const std::string out = resolve_out(a.out);
  write_scores_csv(out, scores);
  write_stamp(out, "score",
              {{"model", a.model},
               {"fingerprint", hex64(model.fingerprint)},
               {"data", a.data},
               {"scorer", a.scorer},
               {"batch", a.batch}});
  std::printf("wrote %s n %d\n", out.c_str(), static_cast<int>(scores.size()));
}

struct EvalArgs {
  std::string in_scores, ood_scores, out;
  bool table_row = false;
};

void run_eval(const EvalArgs& a) {
  const std::vector<double> in = read_scores_csv(a.in_scores);
  const std::vector<std::string> ood_paths = split_list(a.ood_scores);
  if (ood_paths.empty())
    throw std::invalid_argument("eval: no OOD score files");

  std::vector<EvalReport> reports;
  for (const std::string& p : ood_paths)
    reports.push_back(evaluate(in, read_scores_csv(p)));

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    std::printf(
        "ood %s auroc %.10g tnr95 %.10g detacc %.10g aupr_in %.10g "
        "aupr_out %.10g\n",
        ood_paths[i].c_str(), r.auroc, r.tnr_at_95tpr, r.detection_accuracy,
        r.aupr_in, r.aupr_out);
  }

  if (a.table_row) {
    // Table layout: AUROC / TNR@95 / det. acc. / AUPR-in / AUPR-out as
    // percentages, multiple OOD sets slash-joined per column.
    const auto column = [&](double EvalReport::* field) {
      std::string cell;
      for (std::size_t i = 0; i < reports.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * (reports[i].*field));
        if (i) cell += "/";
        cell += buf;
      }
      return cell;
    };
    std::printf("%s %s %s %s %s\n", column(&EvalReport::auroc).c_str(),
                column(&EvalReport::tnr_at_95tpr).c_str(),
                column(&EvalReport::detection_accuracy).c_str(),
                column(&EvalReport::aupr_in).c_str(),
                column(&EvalReport::aupr_out).c_str());
  }

  if (!a.out.empty()) {
    json results = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      json r = report_to_json(reports[i]);
      r["ood_scores"] = ood_paths[i];
      results.push_back(std::move(r));
    }
    json j;
    j["in_scores"] = a.in_scores;
    j["results"] = std::move(results);
    const std::string out = resolve_out(a.out);
    write_text(out, j.dump(2) + "\n");
    write_stamp(out, "eval",
                {{"in_scores", a.in_scores}, {"ood_scores", a.ood_scores}});
    std::printf("wrote %s\n", out.c_str());
  }
}

struct ProbeArgs {
  std::string model, data, format = "rndt", labels;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool annealed = false;
};

void run_probe(const ProbeArgs& a) {
  const RndModel model = load_model(a.model);
  const Dataset ds = load_images(a.data, a.format);
  const std::vector<int> labels = read_labels(a.labels);
  ProbeOptions options;
  options.train_fraction = a.train_fraction;
  options.seed = a.seed;
  options.sgd_annealed = a.annealed;
  const double acc =
      linear_probe(predictor_features(model, ds), labels, options);
  std::printf("accuracy %.10g\n", acc);
}

struct OrthoArgs {
  std::string model, data, format = "rndt", alphas = "5,10,15,20", out;
  int seeds = 20;
  int blur_k = 0;  // 0 falls back to the checkpoint's first svd spec
  std::uint64_t seed = 0;
};

void run_orthogonal_probe(const OrthoArgs& a) {
  const RndModel model = load_model(a.model);
  const Dataset ds = load_images(a.data, a.format);
  std::vector<double> alphas;
  for (const std::string& s : split_list(a.alphas))
    alphas.push_back(std::stod(s));

  int blur_k = a.blur_k;
  if (blur_k == 0) {
    for (const DegradationSpec& s : model.config.specs)
      if (s.kind == DegradationKind::SvdBlur) {
        blur_k = s.k;
        break;
      }
    if (blur_k == 0)
      throw std::invalid_argument(
          "orthogonal-probe: model has no svd_blur spec; pass --blur-k");
  }

  const OrthogonalProbeReport report =
      orthogonal_probe(model, ds, alphas, a.seeds, blur_k, a.seed);
  std::printf("blur_k %d\n", report.blur_k);
  std::printf("seeds %d\n", report.num_seeds);
  std::printf("original %.10g\n", report.original_mean);
  std::printf("blurred %.10g\n", report.blurred_mean);
  for (const ProbeRow& row : report.rows)
    std::printf("alpha %g %.10g\n", row.alpha, row.mean_uncertainty);

  if (!a.out.empty()) {
    json rows = json::array();
    for (const ProbeRow& row : report.rows)
      rows.push_back({{"alpha", row.alpha},
                      {"mean_uncertainty", row.mean_uncertainty}});
    json j;
    j["blur_k"] = report.blur_k;
    j["seeds"] = report.num_seeds;
    j["original"] = report.original_mean;
    j["blurred"] = report.blurred_mean;
    j["rows"] = std::move(rows);
    const std::string out = resolve_out(a.out);
    write_text(out, j.dump(2) + "\n");
    write_stamp(out, "orthogonal-probe",
                {{"model", a.model},
                 {"data", a.data},
                 {"alphas", a.alphas},
                 {"seeds", a.seeds},
                 {"blur_k", blur_k},
                 {"seed", a.seed}});
    std::printf("wrote %s\n", out.c_str());
  }
}

struct SweepArgs {
  std::string config, grid, metric, out;
};

void run_sweep_k(const SweepArgs& a) {
  Experiment e = load_experiment(a.config, true);
  if (e.config.specs.empty() ||
      e.config.specs[0].kind != DegradationKind::SvdBlur)
    throw std::invalid_argument("sweep-k: first spec must be svd_blur");
  const std::string metric = a.metric.empty() ? e.metric : a.metric;

  std::vector<int> grid;
  for (const std::string& s : split_list(a.grid))
    grid.push_back(parse_int(s, "grid"));
  if (grid.empty()) throw std::invalid_argument("sweep-k: empty grid");

  const Dataset train_set = load_images(e.data, e.format);
  const Dataset test_in = load_images(e.test_in, e.format);
  // Validation side: leading slice of the first OOD set, capped at 1000.
  Dataset validation = load_images(e.test_ood[0], e.format);
  const std::size_t cap = std::min<std::size_t>(validation.size(), 1000);
  validation.images.resize(cap);
  validation.labels.clear();

  json per_k = json::array();
  int best_k = 0;
  double best_value = 0.0;
  for (const int k : grid) {
    TrainConfig cfg = e.config;
    cfg.specs[0].k = k;
    const RndModel model = train(train_set, cfg);
    const EvalReport r = evaluate(uncertainty_scores(model, test_in),
                                  uncertainty_scores(model, validation));
    const double value = pick_metric(r, metric);
    std::printf(
        "k %d auroc %.10g tnr95 %.10g detacc %.10g aupr_in %.10g "
        "aupr_out %.10g\n",
        k, r.auroc, r.tnr_at_95tpr, r.detection_accuracy, r.aupr_in,
        r.aupr_out);
    json row = report_to_json(r);
    row["k"] = k;
    row["selection"] = value;
    per_k.push_back(std::move(row));
    if (best_k == 0 || value > best_value) {
      best_k = k;
      best_value = value;
    }
  }
  std::printf("chosen_k %d by %s %.10g\n", best_k, metric.c_str(), best_value);

  if (!a.out.empty()) {
    json j;
    j["metric"] = metric;
    j["grid"] = grid;
    j["chosen_k"] = best_k;
    j["results"] = std::move(per_k);
    const std::string out = resolve_out(a.out);
    write_text(out, j.dump(2) + "\n");
    write_stamp(out, "sweep-k",
                {{"config", a.config}, {"grid", a.grid}, {"metric", metric}});
    std::printf("wrote %s\n", out.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"random-distillation OOD detection pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic corpus");
  s->add_option("--kind", synth.kind,
                "smooth_textures|checker|blobs|highfreq_noise")
      ->required();
  s->add_option("--n", synth.n, "image count")->required();
  s->add_option("--channels", synth.channels, "channels (default 1)");
  s->add_option("--height", synth.height, "rows (default 32)");
  s->add_option("--width", synth.width, "columns (default 32)");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--dtype", synth.dtype, "f32|u8 (default f32)");
  s->add_option("--out", synth.out, "output container")->required();
  s->callback([&] { run_synth(synth); });

  BlurArgs blur;
  CLI::App* b = app.add_subcommand("blur", "apply one degradation");
  b->add_option("--method", blur.method, "svd|dct|gauss|geom")->required();
  b->add_option("--param", blur.param,
                "svd/dct: integer strength; gauss: k or kXxkY; "
                "geom: kind[:magnitude]")
      ->required();
  b->add_option("--in", blur.in, "input container")->required();
  b->add_option("--format", blur.format, "rndt|cifar (default rndt)");
  b->add_option("--dtype", blur.dtype, "f32|u8 (default f32)");
  b->add_option("--out", blur.out, "output container")->required();
  b->callback([&] { run_blur(blur); });

  RankArgs rank;
  CLI::App* r = app.add_subcommand("effective-rank", "dataset LER report");
  r->add_option("--in", rank.in, "input container")->required();
  r->add_option("--format", rank.format, "rndt|cifar (default rndt)");
  r->add_option("--aggregate", rank.aggregate, "log_mean_rank|mean_log");
  r->callback([&] { run_effective_rank(rank); });

  SelectKArgs select;
  CLI::App* k = app.add_subcommand("select-k", "uniform-target K selection");
  k->add_option("--in", select.in, "training container")->required();
  k->add_option("--b", select.b, "number of blurred datasets")->required();
  k->add_option("--format", select.format, "rndt|cifar (default rndt)");
  k->add_option("--aggregate", select.aggregate, "log_mean_rank|mean_log");
  k->add_option("--out", select.out, "optional JSON report");
  k->callback([&] { run_select_k(select); });

  TrainArgs train_args;
  CLI::App* t = app.add_subcommand("train", "train a detector");
  t->add_option("--config", train_args.config, "experiment JSON")->required();
  t->add_option("--train-fraction", train_args.train_fraction,
                "override the config's training subsample fraction");
  t->add_option("--out", train_args.out, "checkpoint path")->required();
  t->callback([&] { run_train(train_args); });

  ScoreArgs score;
  CLI::App* sc = app.add_subcommand("score", "score a dataset");
  sc->add_option("--model", score.model, "checkpoint")->required();
  sc->add_option("--data", score.data, "input container")->required();
  sc->add_option("--format", score.format, "rndt|cifar (default rndt)");
  sc->add_option("--scorer", score.scorer, "rnd|typicality (default rnd)");
  sc->add_option("--batch", score.batch, "scoring batch size (default 256)");
  sc->add_option("--out", score.out, "scores CSV")->required();
  sc->callback([&] { run_score(score); });

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "detection metrics");
  ev->add_option("--in-scores", eval_args.in_scores, "in-distribution CSV")
      ->required();
  ev->add_option("--ood-scores", eval_args.ood_scores,
                 "OOD CSVs, comma separated")
      ->required();
  ev->add_flag("--table-row", eval_args.table_row,
               "print the five metrics as a percent table row");
  ev->add_option("--out", eval_args.out, "optional JSON report");
  ev->callback([&] { run_eval(eval_args); });

  ProbeArgs probe;
  CLI::App* p = app.add_subcommand("probe", "linear probe on features");
  p->add_option("--model", probe.model, "checkpoint")->required();
  p->add_option("--data", probe.data, "input container")->required();
  p->add_option("--format", probe.format, "rndt|cifar (default rndt)");
  p->add_option("--labels", probe.labels, "label container")->required();
  p->add_option("--train-fraction", probe.train_fraction,
                "probe training fraction (default 0.8)");
  p->add_option("--seed", probe.seed, "probe split seed");
  p->add_flag("--annealed", probe.annealed, "use the annealed SGD schedule");
  p->callback([&] { run_probe(probe); });

  OrthoArgs ortho;
  CLI::App* o = app.add_subcommand("orthogonal-probe",
                                   "uncertainty under orthogonal noise");
  o->add_option("--model", ortho.model, "checkpoint")->required();
  o->add_option("--data", ortho.data, "input container")->required();
  o->add_option("--format", ortho.format, "rndt|cifar (default rndt)");
  o->add_option("--alphas", ortho.alphas,
                "noise strengths, percent (default 5,10,15,20)");
  o->add_option("--seeds", ortho.seeds, "draws per alpha (default 20)");
  o->add_option("--blur-k", ortho.blur_k,
                "K for the blurred row (default: model's first svd spec)");
  o->add_option("--seed", ortho.seed, "base noise seed");
  o->add_option("--out", ortho.out, "optional JSON report");
  o->callback([&] { run_orthogonal_probe(ortho); });

  SweepArgs sweep;
  CLI::App* sw = app.add_subcommand("sweep-k", "validation-based K selection");
  sw->add_option("--config", sweep.config, "experiment JSON with test sets")
      ->required();
  sw->add_option("--grid", sweep.grid, "candidate K values, comma separated")
      ->required();
  sw->add_option("--metric", sweep.metric,
                 "tnr95|auroc|detacc|aupr_in|aupr_out (default from config)");
  sw->add_option("--out", sweep.out, "optional JSON report");
  sw->callback([&] { run_sweep_k(sweep); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const json::exception& e) {
    std::cerr << "rndood: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "rndood: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rndood: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
