#ifndef RNDOOD_DEGRADATIONS_HPP
#define RNDOOD_DEGRADATIONS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rndood/image.hpp"
#include "rndood/tensor_linalg.hpp"

namespace rndood {

enum class DegradationKind {
  SvdBlur,
  DctBlur,
  GaussianBlur,
  Flip,
  Rotate,
  TranslateV,
  TranslateH,
  ShearV,
  ShearH,
  Contrast,
  Invert,
  OrthogonalNoise,
};

const char* to_string(DegradationKind kind);
DegradationKind degradation_kind_from_string(const std::string& name);
bool is_geometric(DegradationKind kind);

/// One auxiliary-dataset transform. Only the fields relevant to `kind` are
/// read: k (svd_blur: discarded singular values), keep (dct_blur), kernel_x/y
/// (gaussian_blur), magnitude (translate/shear, pixels), alpha + seed
/// (orthogonal_noise, percent of signal norm).
struct DegradationSpec {
  DegradationKind kind = DegradationKind::SvdBlur;
  int k = 0;
  int keep = 0;
  int kernel_x = 1;
  int kernel_y = 1;
  int magnitude = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;

  static DegradationSpec svd_blur(int k);
  static DegradationSpec dct_blur(int keep);
  static DegradationSpec gaussian_blur(int kx, int ky);
  static DegradationSpec geometric(DegradationKind kind, int magnitude = 0);
  static DegradationSpec orthogonal_noise(double alpha, std::uint64_t seed);
};

/// Validates the kind-specific parameters; when `enforce_grid` also requires
/// them to sit on the documented hyperparameter grids.
void validate_spec(const DegradationSpec& spec, bool enforce_grid = false);

struct OrthogonalProbeSpec {
  double alpha = 0.0;  // percent of signal norm, > 0
  std::uint64_t seed = 0;
};

/// Zeroes the bottom K nonzero singular values of every channel and clamps
/// the reconstruction to [0,1]. K >= rank yields a zero channel.
Image svd_blur(const Image& image, int k);

/// Same, starting from an already-computed per-channel decomposition (the
/// K-sweep in select_k reuses one decomposition across all K).
Image svd_blur(const SingularDecomposition& decomposition, int k);

/// Keeps the `keep` largest-magnitude DCT coefficients per channel (ties
/// broken toward the lower flat index), inverse-transforms, clamps to [0,1].
Image dct_blur(const Image& image, int keep);

/// Separable Gaussian convolution with reflected borders; sigma per axis is
/// 0.3*((k-1)*0.5 - 1) + 0.8. Kernel 1 on an axis is the identity.
Image gaussian_blur(const Image& image, int kernel_x, int kernel_y);

/// All variants of one geometric kind, in a fixed documented order:
/// flip: {mirror}; rotate: {90, 180, 270}; translate: {+m, -m};
/// shear: {+m/H, -m/H slope about the image center}; contrast: deviations
/// from the channel mean scaled by {0.5, 0.25, 0.125}; invert: {1 - x}.
std::vector<Image> geometric_transform(const Image& image,
                                       DegradationKind kind,
                                       int magnitude = 0);

/// Adds a seeded Gaussian vector orthogonalized against the flattened image,
/// rescaled to alpha% of the image norm. No clamping.
Image orthogonal_perturb(const Image& image, const OrthogonalProbeSpec& spec);

/// One derived dataset per spec. Non-geometric kinds preserve cardinality
/// and order; geometric kinds emit all variants image-major (variant count
/// times the source size). The orthogonal kind derives a per-image seed from
/// spec.seed and the image index.
std::vector<Dataset> build_aux_datasets(const Dataset& dataset,
                                        const std::vector<DegradationSpec>& specs);

/// Single-spec convenience used by the dataset builder and the CLI.
Dataset apply_degradation(const Dataset& dataset, const DegradationSpec& spec);

}  // namespace rndood

#endif  // RNDOOD_DEGRADATIONS_HPP
