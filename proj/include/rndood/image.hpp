#ifndef RNDOOD_IMAGE_HPP
#define RNDOOD_IMAGE_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace rndood {

template <typename Scalar>
using DynMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DynRowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using DynVector = Eigen::Vector<Scalar, Eigen::Dynamic>;

/// C x H x W image, channel-major, row-major pixels within a channel.
/// Values live nominally in [0,1]; only the degradation pipelines clamp.
template <typename Scalar>
struct ImageT {
  int channels = 0;
  int height = 0;
  int width = 0;
  DynVector<Scalar> data;

  ImageT() = default;
  ImageT(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(DynVector<Scalar>::Zero(static_cast<Eigen::Index>(c) * h * w)) {
    if (c < 1 || h < 1 || w < 1)
      throw std::invalid_argument("ImageT: non-positive shape");
  }

  Eigen::Index size() const { return data.size(); }

  Eigen::Map<DynRowMatrix<Scalar>> channel(int j) {
    check_channel(j);
    return {data.data() + static_cast<Eigen::Index>(j) * height * width,
            height, width};
  }
  Eigen::Map<const DynRowMatrix<Scalar>> channel(int j) const {
    check_channel(j);
    return {data.data() + static_cast<Eigen::Index>(j) * height * width,
            height, width};
  }

  bool same_shape(const ImageT& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  void clamp01() { data = data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)); }

 private:
  void check_channel(int j) const {
    if (j < 0 || j >= channels)
      throw std::invalid_argument("ImageT: channel index out of range");
  }
};

using Image = ImageT<double>;

inline void require_finite(const Image& img, const std::string& what) {
  if (!img.data.allFinite())
    throw std::invalid_argument(what + ": non-finite values in input image");
}

/// Uniformly shaped collection of images with optional integer labels
/// (labels are empty or aligned 1:1 with images).
struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;

  bool empty() const { return images.empty(); }
  std::size_t size() const { return images.size(); }
  bool has_labels() const { return !labels.empty(); }

  int channels() const { return front().channels; }
  int height() const { return front().height; }
  int width() const { return front().width; }

  const Image& front() const {
    if (images.empty()) throw std::invalid_argument("Dataset: empty dataset");
    return images.front();
  }

  void push_back(Image img, int label = -1) {
    if (!images.empty() && !images.front().same_shape(img))
      throw std::invalid_argument("Dataset: mixed image shapes");
    if (label >= 0) {
      if (!labels.empty() && labels.size() != images.size())
        throw std::invalid_argument("Dataset: label/image count mismatch");
      labels.push_back(label);
    } else if (!labels.empty()) {
      throw std::invalid_argument("Dataset: missing label for labeled dataset");
    }
    images.push_back(std::move(img));
  }

  Dataset gather(const std::vector<int>& indices) const {
    Dataset out;
    out.images.reserve(indices.size());
    for (int i : indices) {
      if (i < 0 || static_cast<std::size_t>(i) >= images.size())
        throw std::invalid_argument("Dataset: gather index out of range");
      out.images.push_back(images[static_cast<std::size_t>(i)]);
      if (has_labels()) out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    }
    return out;
  }
};

}  // namespace rndood

#endif  // RNDOOD_IMAGE_HPP
