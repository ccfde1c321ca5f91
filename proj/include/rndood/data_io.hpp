#ifndef RNDOOD_DATA_IO_HPP
#define RNDOOD_DATA_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rndood/image.hpp"
#include "rndood/trainer.hpp"

namespace rndood {

/// Tensor container: magic "RNDT", u16 version, u8 dtype (0 unsigned byte,
/// 1 float32), u8 ndim, ndim little-endian u32 dims, row-major payload.
/// Read errors carry the byte offset they were detected at.
enum class TensorDtype : std::uint8_t { U8 = 0, F32 = 1 };

/// Datasets are stored as (count, channels, height, width). Byte payloads
/// scale to [0,1] on read; float payloads pass through. Byte writes round
/// to 1/255 steps and are lossy for values off that grid.
void write_dataset(const std::string& path, const Dataset& dataset,
                   TensorDtype dtype = TensorDtype::F32);
Dataset read_dataset(const std::string& path);

/// Labels ride in a rank-1 container: bytes raw 0..255, floats must be
/// integral.
void write_labels(const std::string& path, const std::vector<int>& labels);
std::vector<int> read_labels(const std::string& path);

/// CIFAR-10 binary batch: 3073-byte records, one label byte then 3x32x32
/// channel-major row-major pixel bytes.
Dataset read_cifar(const std::string& path);

/// Corner-aligned bilinear resampling; identity at the original size.
Image resize_bilinear(const Image& image, int out_height, int out_width);

/// Seeded permutation, then prefix slices of floor(f*n) images each.
/// Slices never overlap; every slice must be non-empty. The single
/// fraction 1.0 returns the dataset unchanged.
std::vector<Dataset> split(const Dataset& dataset,
                           const std::vector<double>& fractions,
                           std::uint64_t seed);

/// Self-contained corpora. smooth_textures: sums of a few low-frequency
/// cosine waves (mid effective rank, the in-distribution stand-in);
/// highfreq_noise: iid uniform pixels (near-full rank); checker and blobs:
/// structured OOD stand-ins.
enum class SynthKind { SmoothTextures, Checker, Blobs, HighfreqNoise };

const char* to_string(SynthKind kind);
SynthKind synth_kind_from_string(const std::string& name);

Dataset synth_generate(SynthKind kind, int n, int channels, int height,
                       int width, std::uint64_t seed);

/// Checkpoint: magic "RNDC", u16 version, u32 metadata length, JSON
/// metadata (profile, shape, schedule, seeds, mean train loss), then raw
/// little-endian f64 parameter blobs, predictor first, targets in order.
void save_model(const std::string& path, const RndModel& model);
RndModel load_model(const std::string& path);

/// Score files: "index,score" header, one row per sample, full precision.
void write_scores_csv(const std::string& path,
                      const std::vector<double>& scores);
std::vector<double> read_scores_csv(const std::string& path);

}  // namespace rndood

#endif  // RNDOOD_DATA_IO_HPP
