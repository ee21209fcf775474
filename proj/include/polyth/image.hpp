#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyth/tensor.hpp"

namespace polyth {

/// 8-bit RGB raster, row-major, interleaved (height x width x 3).
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(std::size_t w, std::size_t h, std::uint8_t fill = 0);
  RawImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px);

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

class PpmError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadHeader, UnsupportedMaxval, Truncated, Io };
  PpmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Binary PPM (P6, maxval 255). Header comments are skipped.
RawImage decode_ppm(std::span<const std::uint8_t> bytes);
/// Writes the canonical header "P6\n<w> <h>\n255\n".
std::vector<std::uint8_t> encode_ppm(const RawImage& img);

RawImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RawImage& img, const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centers and edge clamping:
/// src = (dst + 0.5) * (in / out) - 0.5.
RawImage resize_bilinear(const RawImage& img, std::size_t out_w, std::size_t out_h);

inline constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

/// (byte / 255 - mean_c) / std_c into a 1 x 3 x H x W tensor. The image must
/// already be expected_w x expected_h.
Tensor normalize_to_input(const RawImage& img, std::size_t expected_w = 224, std::size_t expected_h = 224);
/// Same transform written into slot `index` of an N x 3 x H x W batch.
void normalize_into(const RawImage& img, Tensor& batch, std::size_t index);

struct AugmentParams {
  double flip_prob = 0.5;
  double rotation_min_deg = 0.0;
  double rotation_max_deg = 180.0;
  double zoom_min = 0.4;
  double zoom_max = 1.4;

  void validate() const;
};

/// One concrete draw of the random augmentation.
struct AugmentDraw {
  bool flip = false;
  double angle_deg = 0.0;  // counterclockwise
  double zoom = 1.0;       // > 1 magnifies
};

AugmentDraw draw_augment(const AugmentParams& params, std::mt19937_64& rng);

RawImage flip_horizontal(const RawImage& img);

/// Flip, then rotate about the center, then zoom about the center. Rotation
/// and zoom share one bilinear resampling pass; samples outside the source
/// are black.
RawImage apply_augment(const RawImage& img, const AugmentDraw& draw);

RawImage augment(const RawImage& img, const AugmentParams& params, std::mt19937_64& rng);

}  // namespace polyth
