#ifndef RNDOOD_TENSOR_LINALG_HPP
#define RNDOOD_TENSOR_LINALG_HPP

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rndood/image.hpp"

namespace rndood {

/// Singular values at or below kRankZeroTol * sigma_max count as zero when
/// deciding the numerical rank of a channel.
inline constexpr double kRankZeroTol = 1e-9;

/// Thin SVD of one image channel: a = left * sigma.asDiagonal() * right^T.
template <typename Scalar>
struct ChannelSvdT {
  DynMatrix<Scalar> left;    // H x m, orthonormal columns
  DynVector<Scalar> sigma;   // m, descending
  DynMatrix<Scalar> right;   // W x m, orthonormal columns
  int rank = 0;              // numerical rank, see kRankZeroTol
};

using ChannelSvd = ChannelSvdT<double>;

/// Per-channel thin SVDs of an image.
struct SingularDecomposition {
  std::vector<ChannelSvd> channels;
};

template <typename Derived>
ChannelSvdT<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (!a.allFinite())
    throw std::invalid_argument("svd: non-finite entries in input matrix");
  Eigen::JacobiSVD<DynMatrix<Scalar>> solver(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ChannelSvdT<Scalar> d;
  d.left = solver.matrixU();
  d.sigma = solver.singularValues();
  d.right = solver.matrixV();
  const Scalar smax = d.sigma.size() > 0 ? d.sigma(0) : Scalar(0);
  d.rank = 0;
  for (Eigen::Index t = 0; t < d.sigma.size(); ++t)
    if (d.sigma(t) > Scalar(kRankZeroTol) * smax) ++d.rank;
  if (smax == Scalar(0)) d.rank = 0;
  return d;
}

inline SingularDecomposition svd(const Image& img) {
  require_finite(img, "svd");
  SingularDecomposition d;
  d.channels.reserve(static_cast<std::size_t>(img.channels));
  for (int j = 0; j < img.channels; ++j)
    d.channels.push_back(svd(img.channel(j)));
  return d;
}

/// Rank-`keep` reconstruction, sum of the leading keep singular triples.
/// keep > rank is clamped to rank; keep = 0 yields the zero matrix.
template <typename Scalar>
DynMatrix<Scalar> reconstruct(const ChannelSvdT<Scalar>& d, int keep) {
  if (keep < 0) throw std::invalid_argument("reconstruct: keep must be >= 0");
  keep = std::min(keep, d.rank);
  const Eigen::Index h = d.left.rows(), w = d.right.rows();
  if (keep == 0) return DynMatrix<Scalar>::Zero(h, w);
  return d.left.leftCols(keep) * d.sigma.head(keep).asDiagonal() *
         d.right.leftCols(keep).transpose();
}

/// Orthonormal type-II DCT matrix of order n.
template <typename Scalar = double>
DynMatrix<Scalar> dct_matrix(int n) {
  if (n < 1) throw std::invalid_argument("dct_matrix: order must be >= 1");
  DynMatrix<Scalar> c(n, n);
  const Scalar pi = Scalar(EIGEN_PI);
  const Scalar s0 = std::sqrt(Scalar(1) / Scalar(n));
  const Scalar sk = std::sqrt(Scalar(2) / Scalar(n));
  for (int k = 0; k < n; ++k)
    for (int t = 0; t < n; ++t)
      c(k, t) = (k == 0 ? s0 : sk) *
                std::cos(pi * Scalar(2 * t + 1) * Scalar(k) / Scalar(2 * n));
  return c;
}

/// Orthonormal 2-D type-II DCT; Parseval holds and idct2 is the exact inverse.
template <typename Derived>
DynMatrix<typename Derived::Scalar> dct2(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (!a.allFinite())
    throw std::invalid_argument("dct2: non-finite entries in input matrix");
  const auto ch = dct_matrix<Scalar>(static_cast<int>(a.rows()));
  const auto cw = dct_matrix<Scalar>(static_cast<int>(a.cols()));
  return ch * a * cw.transpose();
}

template <typename Derived>
DynMatrix<typename Derived::Scalar> idct2(const Eigen::MatrixBase<Derived>& c) {
  using Scalar = typename Derived::Scalar;
  if (!c.allFinite())
    throw std::invalid_argument("idct2: non-finite entries in input matrix");
  const auto ch = dct_matrix<Scalar>(static_cast<int>(c.rows()));
  const auto cw = dct_matrix<Scalar>(static_cast<int>(c.cols()));
  return ch.transpose() * c * cw;
}

/// Entropy in bits of the distribution obtained by normalizing `weights`.
/// Zero weights contribute nothing (0 log 0 = 0); all-zero input is rejected.
template <typename Derived>
double shannon_entropy_bits(const Eigen::MatrixBase<Derived>& weights) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    const double w = static_cast<double>(weights(i));
    if (!std::isfinite(w) || w < 0.0)
      throw std::invalid_argument(
          "shannon_entropy_bits: weights must be finite and nonnegative");
    sum += w;
  }
  if (sum <= 0.0)
    throw std::invalid_argument("shannon_entropy_bits: all-zero weights");
  double h = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    const double p = static_cast<double>(weights(i)) / sum;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

}  // namespace rndood

#endif  // RNDOOD_TENSOR_LINALG_HPP
