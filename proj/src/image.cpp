#include "polyth/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace polyth {

RawImage::RawImage(std::size_t w, std::size_t h, std::uint8_t fill) : width(w), height(h), pixels(w * h * 3, fill) {
  if (w == 0 || h == 0) throw std::invalid_argument("image: extents must be positive");
}

RawImage::RawImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> px)
    : width(w), height(h), pixels(std::move(px)) {
  if (w == 0 || h == 0) throw std::invalid_argument("image: extents must be positive");
  if (pixels.size() != w * h * 3) {
    throw std::invalid_argument("image: pixel buffer holds " + std::to_string(pixels.size()) + " bytes, expected " +
                                std::to_string(w * h * 3));
  }
}

// ---------------------------------------------------------------------------
// PPM

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> b) : bytes_(b) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw PpmError(PpmError::Kind::Truncated, std::string("ppm: header ends before ") + what);
    std::size_t v = 0, digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (++digits > 9) throw PpmError(PpmError::Kind::BadHeader, std::string("ppm: ") + what + " too large");
      ++pos_;
    }
    if (digits == 0) throw PpmError(PpmError::Kind::BadHeader, std::string("ppm: expected ") + what);
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RawImage decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw PpmError(PpmError::Kind::BadMagic, "ppm: not a binary P6 file");
  }
  HeaderReader h(bytes.subspan(2));
  if (bytes.size() > 2 && !is_space(bytes[2]) && bytes[2] != '#') {
    throw PpmError(PpmError::Kind::BadMagic, "ppm: not a binary P6 file");
  }
  const std::size_t width = h.number("width");
  const std::size_t height = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) throw PpmError(PpmError::Kind::BadHeader, "ppm: zero image extent");
  if (maxval != 255) {
    throw PpmError(PpmError::Kind::UnsupportedMaxval, "ppm: maxval " + std::to_string(maxval) + " is not 255");
  }
  std::size_t pos = 2 + h.pos();
  if (pos >= bytes.size() || !is_space(bytes[pos])) {
    throw PpmError(pos >= bytes.size() ? PpmError::Kind::Truncated : PpmError::Kind::BadHeader,
                   "ppm: missing whitespace after maxval");
  }
  ++pos;
  const std::size_t need = width * height * 3;
  if (bytes.size() - pos < need) {
    throw PpmError(PpmError::Kind::Truncated, "ppm: payload has " + std::to_string(bytes.size() - pos) +
                                                  " bytes, expected " + std::to_string(need));
  }
  return RawImage(width, height, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + need));
}

std::vector<std::uint8_t> encode_ppm(const RawImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

RawImage read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PpmError(PpmError::Kind::Io, "ppm: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const PpmError& e) {
    throw PpmError(e.kind(), path.string() + ": " + e.what());
  }
}

void write_ppm(const RawImage& img, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PpmError(PpmError::Kind::Io, "ppm: cannot create " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw PpmError(PpmError::Kind::Io, "ppm: write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// resampling

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

RawImage resize_bilinear(const RawImage& img, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw std::invalid_argument("resize_bilinear: target extents must be positive");
  RawImage out(out_w, out_h);
  const double scale_x = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double scale_y = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double max_x = static_cast<double>(img.width - 1);
  const double max_y = static_cast<double>(img.height - 1);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = std::clamp((static_cast<double>(y) + 0.5) * scale_y - 0.5, 0.0, max_y);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = std::clamp((static_cast<double>(x) + 0.5) * scale_x - 0.5, 0.0, max_x);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(x, y, c) = to_byte((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization

void normalize_into(const RawImage& img, Tensor& batch, std::size_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != img.height || batch.dim(3) != img.width) {
    throw std::invalid_argument("normalize: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                " does not fit batch " + shape_str(batch.shape()));
  }
  if (index >= batch.dim(0)) throw std::out_of_range("normalize: batch index out of range");
  const std::size_t hw = img.width * img.height;
  double* base = batch.data().data() + index * 3 * hw;
  for (std::size_t c = 0; c < 3; ++c) {
    double* plane = base + c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      plane[p] = (static_cast<double>(img.pixels[p * 3 + c]) / 255.0 - kImageNetMean[c]) / kImageNetStd[c];
    }
  }
}

Tensor normalize_to_input(const RawImage& img, std::size_t expected_w, std::size_t expected_h) {
  if (img.width != expected_w || img.height != expected_h) {
    throw std::invalid_argument("normalize_to_input: image is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + ", expected " + std::to_string(expected_w) + "x" +
                                std::to_string(expected_h) + " (resize first)");
  }
  Tensor t({1, 3, img.height, img.width});
  normalize_into(img, t, 0);
  return t;
}

// ---------------------------------------------------------------------------
// augmentation

void AugmentParams::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw std::invalid_argument("augment: flip_prob outside [0,1]");
  if (!(rotation_min_deg <= rotation_max_deg)) throw std::invalid_argument("augment: empty rotation range");
  if (!(zoom_min > 0.0 && zoom_min <= zoom_max)) throw std::invalid_argument("augment: zoom range must be positive");
}

AugmentDraw draw_augment(const AugmentParams& params, std::mt19937_64& rng) {
  params.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  d.flip = unit(rng) < params.flip_prob;
  d.angle_deg = params.rotation_min_deg + (params.rotation_max_deg - params.rotation_min_deg) * unit(rng);
  d.zoom = params.zoom_min + (params.zoom_max - params.zoom_min) * unit(rng);
  return d;
}

RawImage flip_horizontal(const RawImage& img) {
  RawImage out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

RawImage apply_augment(const RawImage& img, const AugmentDraw& draw) {
  if (!(draw.zoom > 0.0)) throw std::invalid_argument("augment: zoom must be positive");
  const RawImage src = draw.flip ? flip_horizontal(img) : img;
  RawImage out(src.width, src.height);
  const double theta = draw.angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cx = (static_cast<double>(src.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(src.height) - 1.0) / 2.0;
  const auto w = static_cast<std::ptrdiff_t>(src.width);
  const auto h = static_cast<std::ptrdiff_t>(src.height);
  auto pixel = [&](std::ptrdiff_t x, std::ptrdiff_t y, std::size_t c) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return src.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  };
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      // Destination -> undo zoom -> undo counterclockwise rotation -> source.
      const double u = (static_cast<double>(x) - cx) / draw.zoom;
      const double v = (static_cast<double>(y) - cy) / draw.zoom;
      const double sx = cx + cos_t * u - sin_t * v;
      const double sy = cy + sin_t * u + cos_t * v;
      if (sx <= -1.0 || sy <= -1.0 || sx >= static_cast<double>(w) || sy >= static_cast<double>(h)) continue;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
      const double fx = sx - fx0, fy = sy - fy0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * pixel(x0, y0, c) + fx * pixel(x0 + 1, y0, c);
        const double bottom = (1.0 - fx) * pixel(x0, y0 + 1, c) + fx * pixel(x0 + 1, y0 + 1, c);
        out.at(x, y, c) = to_byte((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

RawImage augment(const RawImage& img, const AugmentParams& params, std::mt19937_64& rng) {
  return apply_augment(img, draw_augment(params, rng));
}

}  // namespace polyth
