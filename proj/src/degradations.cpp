#include "rndood/degradations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "rndood/rng.hpp"
#include "rndood/tensor_linalg.hpp"

namespace rndood {

const char* to_string(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::SvdBlur: return "svd_blur";
    case DegradationKind::DctBlur: return "dct_blur";
    case DegradationKind::GaussianBlur: return "gaussian_blur";
    case DegradationKind::Flip: return "flip";
    case DegradationKind::Rotate: return "rotate";
    case DegradationKind::TranslateV: return "translate_v";
    case DegradationKind::TranslateH: return "translate_h";
    case DegradationKind::ShearV: return "shear_v";
    case DegradationKind::ShearH: return "shear_h";
    case DegradationKind::Contrast: return "contrast";
    case DegradationKind::Invert: return "invert";
    case DegradationKind::OrthogonalNoise: return "orthogonal_noise";
  }
  return "unknown";
}

DegradationKind degradation_kind_from_string(const std::string& name) {
  static const std::vector<DegradationKind> kinds = {
      DegradationKind::SvdBlur,     DegradationKind::DctBlur,
      DegradationKind::GaussianBlur, DegradationKind::Flip,
      DegradationKind::Rotate,      DegradationKind::TranslateV,
      DegradationKind::TranslateH,  DegradationKind::ShearV,
      DegradationKind::ShearH,      DegradationKind::Contrast,
      DegradationKind::Invert,      DegradationKind::OrthogonalNoise};
  for (DegradationKind k : kinds)
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown degradation kind: " + name);
}

bool is_geometric(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::Flip:
    case DegradationKind::Rotate:
    case DegradationKind::TranslateV:
    case DegradationKind::TranslateH:
    case DegradationKind::ShearV:
    case DegradationKind::ShearH:
    case DegradationKind::Contrast:
    case DegradationKind::Invert:
      return true;
    default:
      return false;
  }
}

DegradationSpec DegradationSpec::svd_blur(int k) {
  DegradationSpec s;
  s.kind = DegradationKind::SvdBlur;
  s.k = k;
  return s;
}

DegradationSpec DegradationSpec::dct_blur(int keep) {
  DegradationSpec s;
  s.kind = DegradationKind::DctBlur;
  s.keep = keep;
  return s;
}

DegradationSpec DegradationSpec::gaussian_blur(int kx, int ky) {
  DegradationSpec s;
  s.kind = DegradationKind::GaussianBlur;
  s.kernel_x = kx;
  s.kernel_y = ky;
  return s;
}

DegradationSpec DegradationSpec::geometric(DegradationKind kind, int magnitude) {
  DegradationSpec s;
  s.kind = kind;
  s.magnitude = magnitude;
  return s;
}

DegradationSpec DegradationSpec::orthogonal_noise(double alpha,
                                                  std::uint64_t seed) {
  DegradationSpec s;
  s.kind = DegradationKind::OrthogonalNoise;
  s.alpha = alpha;
  s.seed = seed;
  return s;
}

namespace {

bool on_grid(int v, std::initializer_list<int> grid) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

}  // namespace

void validate_spec(const DegradationSpec& spec, bool enforce_grid) {
  switch (spec.kind) {
    case DegradationKind::SvdBlur:
      if (spec.k < 1)
        throw std::invalid_argument("svd_blur: K must be >= 1");
      break;
    case DegradationKind::DctBlur:
      if (spec.keep < 1)
        throw std::invalid_argument("dct_blur: keep must be >= 1");
      break;
    case DegradationKind::GaussianBlur:
      if (spec.kernel_x < 1 || spec.kernel_y < 1 || spec.kernel_x % 2 == 0 ||
          spec.kernel_y % 2 == 0)
        throw std::invalid_argument("gaussian_blur: kernel sizes must be odd and >= 1");
      if (enforce_grid && (!on_grid(spec.kernel_x, {1, 3, 5}) ||
                           !on_grid(spec.kernel_y, {1, 3, 5})))
        throw std::invalid_argument("gaussian_blur: kernel sizes off the {1,3,5} grid");
      break;
    case DegradationKind::TranslateV:
    case DegradationKind::TranslateH:
    case DegradationKind::ShearV:
    case DegradationKind::ShearH:
      if (spec.magnitude < 1)
        throw std::invalid_argument("translate/shear: magnitude must be >= 1");
      if (enforce_grid && !on_grid(spec.magnitude, {4, 8, 12, 16}))
        throw std::invalid_argument("translate/shear: magnitude off the {4,8,12,16} grid");
      break;
    case DegradationKind::OrthogonalNoise:
      if (!(spec.alpha > 0.0))
        throw std::invalid_argument("orthogonal_noise: alpha must be > 0");
      break;
    default:
      break;  // flip/rotate/contrast/invert take no parameters
  }
}

Image svd_blur(const Image& image, int k) {
  require_finite(image, "svd_blur");
  return svd_blur(svd(image), k);
}

Image svd_blur(const SingularDecomposition& decomposition, int k) {
  if (k < 1) throw std::invalid_argument("svd_blur: K must be >= 1");
  if (decomposition.channels.empty())
    throw std::invalid_argument("svd_blur: empty decomposition");
  const int h = static_cast<int>(decomposition.channels.front().left.rows());
  const int w = static_cast<int>(decomposition.channels.front().right.rows());
  Image out(static_cast<int>(decomposition.channels.size()), h, w);
  for (std::size_t j = 0; j < decomposition.channels.size(); ++j) {
    const ChannelSvd& d = decomposition.channels[j];
    out.channel(static_cast<int>(j)) = reconstruct(d, std::max(d.rank - k, 0));
  }
  out.clamp01();
  return out;
}

Image dct_blur(const Image& image, int keep) {
  const int hw = image.height * image.width;
  if (keep < 1 || keep > hw)
    throw std::invalid_argument("dct_blur: keep must be in [1, H*W]");
  require_finite(image, "dct_blur");
  Image out(image.channels, image.height, image.width);
  for (int j = 0; j < image.channels; ++j) {
    Eigen::MatrixXd coeffs = dct2(image.channel(j));
    // Rank coefficients by |value| descending; ties go to the lower flat
    // index in pixel order, y * W + x.
    const int w = image.width;
    std::vector<int> order(static_cast<std::size_t>(hw));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(coeffs(a / w, a % w)) > std::abs(coeffs(b / w, b % w));
    });
    Eigen::MatrixXd pruned = Eigen::MatrixXd::Zero(image.height, image.width);
    for (int t = 0; t < keep; ++t) {
      const int f = order[static_cast<std::size_t>(t)];
      pruned(f / w, f % w) = coeffs(f / w, f % w);
    }
    out.channel(j) = idct2(pruned);
  }
  out.clamp01();
  return out;
}

namespace {

Eigen::VectorXd gaussian_kernel(int k) {
  Eigen::VectorXd g(k);
  if (k == 1) {
    g(0) = 1.0;
    return g;
  }
  const double sigma = 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8;
  const double c = (k - 1) / 2.0;
  for (int i = 0; i < k; ++i)
    g(i) = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
  g /= g.sum();
  return g;
}

// reflect-101 index: ...2 1 | 0 1 2 ... n-1 | n-2 n-3...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

Image gaussian_blur(const Image& image, int kernel_x, int kernel_y) {
  if (kernel_x < 1 || kernel_y < 1 || kernel_x % 2 == 0 || kernel_y % 2 == 0)
    throw std::invalid_argument("gaussian_blur: kernel sizes must be odd and >= 1");
  require_finite(image, "gaussian_blur");
  const Eigen::VectorXd gx = gaussian_kernel(kernel_x);
  const Eigen::VectorXd gy = gaussian_kernel(kernel_y);
  const int h = image.height, w = image.width;
  const int rx = kernel_x / 2, ry = kernel_y / 2;
  Image out(image.channels, h, w);
  Eigen::MatrixXd tmp(h, w);
  for (int j = 0; j < image.channels; ++j) {
    const auto src = image.channel(j);
    for (int y = 0; y < h; ++y)  // horizontal pass
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -rx; t <= rx; ++t)
          acc += gx(t + rx) * src(y, reflect_index(x + t, w));
        tmp(y, x) = acc;
      }
    auto dst = out.channel(j);
    for (int y = 0; y < h; ++y)  // vertical pass
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -ry; t <= ry; ++t)
          acc += gy(t + ry) * tmp(reflect_index(y + t, h), x);
        dst(y, x) = acc;
      }
  }
  out.clamp01();
  return out;
}

namespace {

Image rotate90(const Image& in) {  // counterclockwise
  Image out(in.channels, in.width, in.height);
  for (int j = 0; j < in.channels; ++j) {
    const auto s = in.channel(j);
    auto d = out.channel(j);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) d(y, x) = s(x, in.width - 1 - y);
  }
  return out;
}

Image rotate180(const Image& in) {
  Image out(in.channels, in.height, in.width);
  for (int j = 0; j < in.channels; ++j) {
    const auto s = in.channel(j);
    auto d = out.channel(j);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x)
        d(y, x) = s(in.height - 1 - y, in.width - 1 - x);
  }
  return out;
}

Image flip_horizontal(const Image& in) {
  Image out(in.channels, in.height, in.width);
  for (int j = 0; j < in.channels; ++j)
    out.channel(j) = in.channel(j).rowwise().reverse();
  return out;
}

Image translate(const Image& in, int dy, int dx) {  // zero fill
  Image out(in.channels, in.height, in.width);
  for (int j = 0; j < in.channels; ++j) {
    const auto s = in.channel(j);
    auto d = out.channel(j);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        const int sy = y - dy, sx = x - dx;
        d(y, x) = (sy >= 0 && sy < in.height && sx >= 0 && sx < in.width)
                      ? s(sy, sx)
                      : 0.0;
      }
  }
  return out;
}

// Shear about the image center with integer per-row (per-column) shifts.
Image shear(const Image& in, double slope, bool horizontal) {
  Image out(in.channels, in.height, in.width);
  for (int j = 0; j < in.channels; ++j) {
    const auto s = in.channel(j);
    auto d = out.channel(j);
    if (horizontal) {
      const double cy = (in.height - 1) / 2.0;
      for (int y = 0; y < in.height; ++y) {
        const int shift = static_cast<int>(std::lround(slope * (y - cy)));
        for (int x = 0; x < in.width; ++x) {
          const int sx = x - shift;
          d(y, x) = (sx >= 0 && sx < in.width) ? s(y, sx) : 0.0;
        }
      }
    } else {
      const double cx = (in.width - 1) / 2.0;
      for (int x = 0; x < in.width; ++x) {
        const int shift = static_cast<int>(std::lround(slope * (x - cx)));
        for (int y = 0; y < in.height; ++y) {
          const int sy = y - shift;
          d(y, x) = (sy >= 0 && sy < in.height) ? s(sy, x) : 0.0;
        }
      }
    }
  }
  return out;
}

Image contrast_scale(const Image& in, double factor) {
  Image out(in.channels, in.height, in.width);
  for (int j = 0; j < in.channels; ++j) {
    const double mean = in.channel(j).mean();
    out.channel(j) = ((in.channel(j).array() - mean) * factor + mean).matrix();
  }
  return out;
}

}  // namespace

std::vector<Image> geometric_transform(const Image& image,
                                       DegradationKind kind, int magnitude) {
  require_finite(image, "geometric_transform");
  switch (kind) {
    case DegradationKind::Flip:
      return {flip_horizontal(image)};
    case DegradationKind::Rotate: {
      const Image r90 = rotate90(image);
      return {r90, rotate180(image), rotate90(rotate180(image))};
    }
    case DegradationKind::TranslateV:
      if (magnitude < 1) throw std::invalid_argument("translate_v: magnitude must be >= 1");
      return {translate(image, magnitude, 0), translate(image, -magnitude, 0)};
    case DegradationKind::TranslateH:
      if (magnitude < 1) throw std::invalid_argument("translate_h: magnitude must be >= 1");
      return {translate(image, 0, magnitude), translate(image, 0, -magnitude)};
    case DegradationKind::ShearV: {
      if (magnitude < 1) throw std::invalid_argument("shear_v: magnitude must be >= 1");
      const double slope = static_cast<double>(magnitude) / image.height;
      return {shear(image, slope, false), shear(image, -slope, false)};
    }
    case DegradationKind::ShearH: {
      if (magnitude < 1) throw std::invalid_argument("shear_h: magnitude must be >= 1");
      const double slope = static_cast<double>(magnitude) / image.height;
      return {shear(image, slope, true), shear(image, -slope, true)};
    }
    case DegradationKind::Contrast:
      return {contrast_scale(image, 0.5), contrast_scale(image, 0.25),
              contrast_scale(image, 0.125)};
    case DegradationKind::Invert: {
      Image out(image.channels, image.height, image.width);
      out.data = (1.0 - image.data.array()).matrix();
      return {out};
    }
    default:
      throw std::invalid_argument(std::string("geometric_transform: not a geometric kind: ") +
                                  to_string(kind));
  }
}

Image orthogonal_perturb(const Image& image, const OrthogonalProbeSpec& spec) {
  if (!(spec.alpha > 0.0))
    throw std::invalid_argument("orthogonal_perturb: alpha must be > 0");
  require_finite(image, "orthogonal_perturb");
  const Eigen::VectorXd& x = image.data;
  const double xx = x.squaredNorm();
  if (xx == 0.0)
    throw std::invalid_argument("orthogonal_perturb: zero image");

  Eigen::VectorXd z(x.size()), z_orth;
  std::uint64_t seed = spec.seed;
  for (;;) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
    z_orth = z - (z.dot(x) / xx) * x;
    if (z_orth.norm() >= 1e-12 * z.norm()) break;
    ++seed;  // degenerate draw, take the next stream
  }
  z_orth *= (spec.alpha / 100.0) * std::sqrt(xx) / z_orth.norm();

  Image out = image;
  out.data = x + z_orth;  // deliberately unclamped
  return out;
}

Dataset apply_degradation(const Dataset& dataset, const DegradationSpec& spec) {
  validate_spec(spec);
  Dataset out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Image& img = dataset.images[i];
    const int label = dataset.has_labels() ? dataset.labels[i] : -1;
    try {
      switch (spec.kind) {
        case DegradationKind::SvdBlur:
          out.push_back(svd_blur(img, spec.k), label);
          break;
        case DegradationKind::DctBlur:
          out.push_back(dct_blur(img, spec.keep), label);
          break;
        case DegradationKind::GaussianBlur:
          out.push_back(gaussian_blur(img, spec.kernel_x, spec.kernel_y), label);
          break;
        case DegradationKind::OrthogonalNoise: {
          OrthogonalProbeSpec ospec{spec.alpha,
                                    derive_seed(spec.seed, seed_stream::kOrthogonal, i)};
          out.push_back(orthogonal_perturb(img, ospec), label);
          break;
        }
        default: {
          for (Image& v : geometric_transform(img, spec.kind, spec.magnitude))
            out.push_back(std::move(v), label);
          break;
        }
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("degradation failed at image " +
                                  std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Dataset> build_aux_datasets(const Dataset& dataset,
                                        const std::vector<DegradationSpec>& specs) {
  if (specs.empty())
    throw std::invalid_argument("build_aux_datasets: specs must be non-empty");
  if (dataset.empty())
    throw std::invalid_argument("build_aux_datasets: empty source dataset");
  std::vector<Dataset> out;
  out.reserve(specs.size());
  for (const DegradationSpec& spec : specs)
    out.push_back(apply_degradation(dataset, spec));
  return out;
}

}  // namespace rndood
