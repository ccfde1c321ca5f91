#include "rndood/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "../vendor/json.hpp"
#include "rndood/rng.hpp"

namespace rndood {

namespace {

using nlohmann::json;

void append_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(buf, bits);
}

void append_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& path, const char* what) : what_(what) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw std::invalid_argument(std::string(what) + ": cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    data_ = ss.str();
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void expect_magic(const char* magic) {
    if (remaining() < 4 || std::memcmp(data_.data() + pos_, magic, 4) != 0)
      fail("bad magic");
    pos_ += 4;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_ + i]))
           << (8 * i);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i]))
              << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void expect_end() {
    if (remaining() != 0) fail("trailing bytes");
  }

  [[noreturn]] void fail(const char* why) const {
    throw std::invalid_argument(std::string(what_) + ": " + why +
                                " at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated");
  }

  const char* what_;
  std::string data_;
  std::size_t pos_ = 0;
};

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::invalid_argument("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string tensor_header(TensorDtype dtype,
                          const std::vector<std::uint32_t>& dims) {
  std::string buf;
  buf += "RNDT";
  append_u16(buf, 1);
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(dims.size()));
  for (std::uint32_t d : dims) append_u32(buf, d);
  return buf;
}

struct TensorHead {
  TensorDtype dtype;
  std::vector<std::uint64_t> dims;
  std::uint64_t count = 1;
};

TensorHead read_tensor_header(Reader& r) {
  r.expect_magic("RNDT");
  const std::uint16_t version = r.u16();
  if (version != 1) r.fail("unsupported version");
  const std::uint8_t dtype = r.u8();
  if (dtype > 1) r.fail("unknown dtype");
  const std::uint8_t ndim = r.u8();
  if (ndim < 1 || ndim > 8) r.fail("bad rank");
  TensorHead h;
  h.dtype = static_cast<TensorDtype>(dtype);
  for (int i = 0; i < ndim; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0) r.fail("zero dimension");
    h.dims.push_back(d);
    h.count *= d;
  }
  return h;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& dataset,
                   TensorDtype dtype) {
  if (dataset.empty())
    throw std::invalid_argument("write_dataset: empty dataset");
  const std::vector<std::uint32_t> dims{
      static_cast<std::uint32_t>(dataset.size()),
      static_cast<std::uint32_t>(dataset.channels()),
      static_cast<std::uint32_t>(dataset.height()),
      static_cast<std::uint32_t>(dataset.width())};
  std::string buf = tensor_header(dtype, dims);
  for (const Image& img : dataset.images)
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      const double v = img.data(i);
      if (dtype == TensorDtype::U8) {
        if (!(v >= 0.0 && v <= 1.0))
          throw std::invalid_argument(
              "write_dataset: byte container requires values in [0,1]");
        buf.push_back(static_cast<char>(std::lround(v * 255.0)));
      } else {
        append_f32(buf, static_cast<float>(v));
      }
    }
  write_file(path, buf);
}

Dataset read_dataset(const std::string& path) {
  Reader r(path, "dataset container");
  const TensorHead h = read_tensor_header(r);
  if (h.dims.size() != 4) r.fail("expected a rank-4 (count,c,h,w) tensor");
  const auto n = static_cast<std::size_t>(h.dims[0]);
  const auto c = static_cast<int>(h.dims[1]);
  const auto height = static_cast<int>(h.dims[2]);
  const auto width = static_cast<int>(h.dims[3]);
  Dataset out;
  out.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Image img(c, height, width);
    for (Eigen::Index t = 0; t < img.size(); ++t)
      img.data(t) = h.dtype == TensorDtype::U8
                        ? static_cast<double>(r.u8()) / 255.0
                        : static_cast<double>(r.f32());
    out.images.push_back(std::move(img));
  }
  r.expect_end();
  return out;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("write_labels: no labels");
  std::string buf = tensor_header(
      TensorDtype::U8, {static_cast<std::uint32_t>(labels.size())});
  for (int l : labels) {
    if (l < 0 || l > 255)
      throw std::invalid_argument("write_labels: label outside byte range");
    buf.push_back(static_cast<char>(l));
  }
  write_file(path, buf);
}

std::vector<int> read_labels(const std::string& path) {
  Reader r(path, "label container");
  const TensorHead h = read_tensor_header(r);
  if (h.dims.size() != 1) r.fail("expected a rank-1 tensor");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(h.count));
  for (std::uint64_t i = 0; i < h.count; ++i) {
    if (h.dtype == TensorDtype::U8) {
      out.push_back(static_cast<int>(r.u8()));
    } else {
      const double v = static_cast<double>(r.f32());
      const double rounded = std::nearbyint(v);
      if (v < 0.0 || std::abs(v - rounded) > 1e-6) r.fail("non-integral label");
      out.push_back(static_cast<int>(rounded));
    }
  }
  r.expect_end();
  return out;
}

Dataset read_cifar(const std::string& path) {
  Reader r(path, "cifar batch");
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  if (r.remaining() == 0 || r.remaining() % kRecord != 0)
    r.fail("size is not a multiple of 3073");
  const std::size_t n = r.remaining() / kRecord;
  Dataset out;
  out.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = r.u8();
    Image img(3, 32, 32);
    for (Eigen::Index t = 0; t < img.size(); ++t)
      img.data(t) = static_cast<double>(r.u8()) / 255.0;
    out.push_back(std::move(img), label);
  }
  return out;
}

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1)
    throw std::invalid_argument("resize_bilinear: non-positive output shape");
  require_finite(image, "resize_bilinear");
  Image out(image.channels, out_height, out_width);
  const double sy = out_height > 1 ? static_cast<double>(image.height - 1) /
                                         (out_height - 1)
                                   : 0.0;
  const double sx = out_width > 1 ? static_cast<double>(image.width - 1) /
                                        (out_width - 1)
                                  : 0.0;
  for (int j = 0; j < image.channels; ++j) {
    const auto src = image.channel(j);
    auto dst = out.channel(j);
    for (int y = 0; y < out_height; ++y) {
      const double fy = out_height > 1 ? y * sy : (image.height - 1) / 2.0;
      const int y0 = std::min(static_cast<int>(fy), image.height - 1);
      const int y1 = std::min(y0 + 1, image.height - 1);
      const double ty = fy - y0;
      for (int x = 0; x < out_width; ++x) {
        const double fx = out_width > 1 ? x * sx : (image.width - 1) / 2.0;
        const int x0 = std::min(static_cast<int>(fx), image.width - 1);
        const int x1 = std::min(x0 + 1, image.width - 1);
        const double tx = fx - x0;
        dst(y, x) = (1 - ty) * ((1 - tx) * src(y0, x0) + tx * src(y0, x1)) +
                    ty * ((1 - tx) * src(y1, x0) + tx * src(y1, x1));
      }
    }
  }
  return out;
}

std::vector<Dataset> split(const Dataset& dataset,
                           const std::vector<double>& fractions,
                           std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("split: empty dataset");
  if (fractions.empty()) throw std::invalid_argument("split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split: non-positive fraction");
    total += f;
  }
  if (total > 1.0 + 1e-9)
    throw std::invalid_argument("split: fractions sum beyond 1");
  if (fractions.size() == 1 && fractions[0] == 1.0) return {dataset};

  const int n = static_cast<int>(dataset.size());
  const std::vector<int> perm =
      seeded_permutation(n, derive_seed(seed, seed_stream::kSubsample));
  std::vector<Dataset> out;
  int start = 0;
  for (double f : fractions) {
    const int len = static_cast<int>(f * n);
    if (len < 1) throw std::invalid_argument("split: empty slice");
    std::vector<int> idx(perm.begin() + start, perm.begin() + start + len);
    out.push_back(dataset.gather(idx));
    start += len;
  }
  return out;
}

const char* to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::SmoothTextures: return "smooth_textures";
    case SynthKind::Checker: return "checker";
    case SynthKind::Blobs: return "blobs";
    case SynthKind::HighfreqNoise: return "highfreq_noise";
  }
  return "unknown";
}

SynthKind synth_kind_from_string(const std::string& name) {
  for (SynthKind k : {SynthKind::SmoothTextures, SynthKind::Checker,
                      SynthKind::Blobs, SynthKind::HighfreqNoise})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown synthetic corpus kind: " + name);
}

namespace {

void normalize01(Eigen::Map<DynRowMatrix<double>> m) {
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi - lo < 1e-12) {
    m.setConstant(0.5);
    return;
  }
  m = ((m.array() - lo) / (hi - lo)).matrix();
}

void fill_smooth(Eigen::Map<DynRowMatrix<double>> m, std::mt19937_64& rng) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int terms = 3 + static_cast<int>(rng() % 3);
  m.setZero();
  for (int t = 0; t < terms; ++t) {
    int fy = static_cast<int>(rng() % 4), fx = static_cast<int>(rng() % 4);
    if (fy == 0 && fx == 0) fy = 1;
    const double amp = 0.5 + 0.5 * unit(rng);
    const double phase = 2.0 * EIGEN_PI * unit(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        m(y, x) += amp * std::cos(2.0 * EIGEN_PI *
                                      (fy * static_cast<double>(y) / h +
                                       fx * static_cast<double>(x) / w) +
                                  phase);
  }
  normalize01(m);
}

void fill_checker(Eigen::Map<DynRowMatrix<double>> m, std::mt19937_64& rng) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int periods[3] = {2, 4, 8};
  const int py = periods[rng() % 3], px = periods[rng() % 3];
  const int oy = static_cast<int>(rng() % static_cast<std::uint64_t>(py));
  const int ox = static_cast<int>(rng() % static_cast<std::uint64_t>(px));
  const double lo = 0.4 * unit(rng), hi = 0.6 + 0.4 * unit(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m(y, x) = (((y + oy) / py + (x + ox) / px) % 2 == 0) ? lo : hi;
}

void fill_blobs(Eigen::Map<DynRowMatrix<double>> m, std::mt19937_64& rng) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int bumps = 2 + static_cast<int>(rng() % 4);
  m.setZero();
  for (int t = 0; t < bumps; ++t) {
    const double cy = unit(rng) * (h - 1), cx = unit(rng) * (w - 1);
    const double sigma = (0.125 + 0.2 * unit(rng)) * std::min(h, w);
    const double amp = 0.5 + 0.5 * unit(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        m(y, x) += amp * std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) /
                                  (2.0 * sigma * sigma));
  }
  normalize01(m);
}

void fill_noise(Eigen::Map<DynRowMatrix<double>> m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) m(y, x) = unit(rng);
}

}  // namespace

Dataset synth_generate(SynthKind kind, int n, int channels, int height,
                       int width, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1");
  if (channels < 1 || height < 1 || width < 1)
    throw std::invalid_argument("synth_generate: non-positive shape");
  Dataset out;
  out.images.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Image img(channels, height, width);
    for (int c = 0; c < channels; ++c) {
      std::mt19937_64 rng(derive_seed(
          seed, seed_stream::kSynth,
          (static_cast<std::uint64_t>(i) << 8) | static_cast<std::uint64_t>(c)));
      auto m = img.channel(c);
      switch (kind) {
        case SynthKind::SmoothTextures: fill_smooth(m, rng); break;
        case SynthKind::Checker: fill_checker(m, rng); break;
        case SynthKind::Blobs: fill_blobs(m, rng); break;
        case SynthKind::HighfreqNoise: fill_noise(m, rng); break;
      }
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

namespace {

json spec_to_json(const DegradationSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"k", s.k},
              {"keep", s.keep},
              {"kernel_x", s.kernel_x},
              {"kernel_y", s.kernel_y},
              {"magnitude", s.magnitude},
              {"alpha", s.alpha},
              {"seed", s.seed}};
}

DegradationSpec spec_from_json(const json& j) {
  DegradationSpec s;
  s.kind = degradation_kind_from_string(j.at("kind").get<std::string>());
  s.k = j.value("k", 0);
  s.keep = j.value("keep", 0);
  s.kernel_x = j.value("kernel_x", 1);
  s.kernel_y = j.value("kernel_y", 1);
  s.magnitude = j.value("magnitude", 0);
  s.alpha = j.value("alpha", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

}  // namespace

void save_model(const std::string& path, const RndModel& model) {
  if (model.targets.empty())
    throw std::invalid_argument("save_model: model has no targets");
  if (!std::isfinite(model.mu_train))
    throw std::invalid_argument("save_model: non-finite mean train loss");
  const TensorShape in = model.predictor.profile.input;

  json meta{
      {"profile", model.config.profile},
      {"input", {in.channels, in.height, in.width}},
      {"b_train", model.config.b_train},
      {"seed", model.config.seed},
      {"epochs", model.config.epochs},
      {"total_updates", model.config.total_updates},
      {"base_lr", model.config.base_lr},
      {"anneal_lr", model.config.anneal_lr},
      {"batch_size", model.config.batch_size},
      {"train_fraction", model.config.train_fraction},
      {"mu_train", model.mu_train},
      {"fingerprint", model.fingerprint},
      {"predictor_params", model.predictor.params.size()},
      {"target_params", model.targets[0].params.size()},
      {"num_targets", model.targets.size()},
  };
  json specs = json::array();
  for (const DegradationSpec& s : model.config.specs)
    specs.push_back(spec_to_json(s));
  meta["degradations"] = std::move(specs);

  const std::string meta_text = meta.dump();
  std::string buf;
  buf += "RNDC";
  append_u16(buf, 1);
  append_u32(buf, static_cast<std::uint32_t>(meta_text.size()));
  buf += meta_text;
  for (Eigen::Index i = 0; i < model.predictor.params.size(); ++i)
    append_f64(buf, model.predictor.params(i));
  for (const Network& t : model.targets)
    for (Eigen::Index i = 0; i < t.params.size(); ++i)
      append_f64(buf, t.params(i));
  write_file(path, buf);
}

RndModel load_model(const std::string& path) {
  Reader r(path, "checkpoint");
  r.expect_magic("RNDC");
  if (r.u16() != 1) r.fail("unsupported version");
  const std::uint32_t meta_len = r.u32();
  json meta;
  try {
    meta = json::parse(r.bytes(meta_len));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: bad metadata: ") +
                                e.what());
  }

  RndModel model;
  try {
    model.config.profile = meta.at("profile").get<std::string>();
    model.config.b_train = meta.at("b_train").get<int>();
    model.config.seed = meta.at("seed").get<std::uint64_t>();
    model.config.epochs = meta.at("epochs").get<int>();
    model.config.total_updates = meta.at("total_updates").get<long>();
    model.config.base_lr = meta.at("base_lr").get<double>();
    model.config.anneal_lr = meta.at("anneal_lr").get<double>();
    model.config.batch_size = meta.at("batch_size").get<int>();
    model.config.train_fraction = meta.at("train_fraction").get<double>();
    model.mu_train = meta.at("mu_train").get<double>();
    model.fingerprint = meta.at("fingerprint").get<std::uint64_t>();
    for (const json& j : meta.at("degradations"))
      model.config.specs.push_back(spec_from_json(j));

    const auto& in = meta.at("input");
    const TensorShape input{in.at(0).get<int>(), in.at(1).get<int>(),
                            in.at(2).get<int>()};
    const auto num_targets = meta.at("num_targets").get<std::size_t>();
    if (num_targets != static_cast<std::size_t>(model.config.b_train) + 1)
      throw std::invalid_argument("checkpoint: target count mismatch");

    model.predictor.profile =
        profile_by_name(model.config.profile, input, true);
    model.predictor.frozen = false;
    const Eigen::Index np = parameter_count(model.predictor.profile);
    if (np != meta.at("predictor_params").get<Eigen::Index>())
      throw std::invalid_argument("checkpoint: predictor size mismatch");
    model.predictor.params.resize(np);
    for (Eigen::Index i = 0; i < np; ++i) model.predictor.params(i) = r.f64();

    const NetworkProfile tprof =
        profile_by_name(model.config.profile, input, false);
    const Eigen::Index nt = parameter_count(tprof);
    if (nt != meta.at("target_params").get<Eigen::Index>())
      throw std::invalid_argument("checkpoint: target size mismatch");
    for (std::size_t t = 0; t < num_targets; ++t) {
      Network target;
      target.profile = tprof;
      target.frozen = true;
      target.params.resize(nt);
      for (Eigen::Index i = 0; i < nt; ++i) target.params(i) = r.f64();
      model.targets.push_back(std::move(target));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: bad metadata: ") +
                                e.what());
  }
  r.expect_end();
  return model;
}

void write_scores_csv(const std::string& path,
                      const std::vector<double>& scores) {
  std::string buf = "index,score\n";
  char line[64];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", i, scores[i]);
    buf += line;
  }
  write_file(path, buf);
}

std::vector<double> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("scores: cannot open " + path);
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("index,", 0) == 0) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("scores: malformed line " +
                                  std::to_string(line_no) + " in " + path);
    try {
      out.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw std::invalid_argument("scores: bad value on line " +
                                  std::to_string(line_no) + " in " + path);
    }
  }
  if (out.empty())
    throw std::invalid_argument("scores: no rows in " + path);
  return out;
}

}  // namespace rndood
