#pragma once

// Independent reference implementations used only by the tests. Written as
// plain loops over explicit indices; none of them call into the library's
// kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "polyth/image.hpp"
#include "polyth/tensor.hpp"

namespace oracle {

using polyth::Shape;
using polyth::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Six nested loops (plus the batch loop) straight from the definition.
inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t F = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({N, F, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double s = b.empty() ? 0.0 : b[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                s += x.at(n, c, iy, ix) * k.at(f, c, ky, kx);
              }
          out.at(n, f, oy, ox) = s;
        }
  return out;
}

inline Tensor depthwise(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t KH = k.dim(1), KW = k.dim(2);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({N, C, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double s = 0.0;
          for (std::size_t ky = 0; ky < KH; ++ky)
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              s += x.at(n, c, iy, ix) * k[(c * KH + ky) * KW + kx];
            }
          out.at(n, c, oy, ox) = s;
        }
  return out;
}

inline Tensor pointwise(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = w.dim(0);
  Tensor out({N, F, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          double s = b[f];
          for (std::size_t c = 0; c < C; ++c) s += w.at(f, c) * x.at(n, c, y, xx);
          out.at(n, f, y, xx) = s;
        }
  return out;
}

inline Tensor matmul_bias(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t N = x.dim(0), D = x.dim(1), K = w.dim(1);
  Tensor out({N, K});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      double s = b[j];
      for (std::size_t d = 0; d < D; ++d) s += x.at(i, d) * w.at(d, j);
      out.at(i, j) = s;
    }
  return out;
}

// Precision / recall / F1 from raw pairs, without a confusion matrix.
struct BruteF1 {
  std::array<std::optional<double>, 3> per_class;
  double macro = 0.0;
  double accuracy = 0.0;
};

inline BruteF1 brute_f1(std::span<const int> pred, std::span<const int> truth) {
  BruteF1 r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < 3; ++c) {
    std::size_t tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c) ++predicted;
      if (truth[i] == c) ++actual;
      if (pred[i] == c && truth[i] == c) ++tp;
    }
    if (predicted == 0 && actual == 0) continue;
    const double p = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double rc = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double f = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.per_class[c] = f;
    sum += f;
    ++used;
  }
  r.macro = used ? sum / used : 0.0;
  return r;
}

// One scalar Adam parameter, updated with the textbook formulas.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;
  double step(double theta, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Bilinear sample of one channel at destination pixel (dx, dy), half-pixel
// centers, edge clamp, round-half-away.
inline std::uint8_t resize_sample(const polyth::RawImage& img, std::size_t out_w, std::size_t out_h, std::size_t dx,
                                  std::size_t dy, std::size_t c) {
  auto clampd = [](double v, double hi) { return v < 0.0 ? 0.0 : (v > hi ? hi : v); };
  const double sx = clampd((dx + 0.5) * (double(img.width) / out_w) - 0.5, double(img.width - 1));
  const double sy = clampd((dy + 0.5) * (double(img.height) / out_h) - 0.5, double(img.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
  const double bot = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
  const double v = top * (1 - fy) + bot * fy;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

// Color-coded synthetic images: class 0 red-ish, class 1 green-ish, class 2
// blue-ish, each with a random blob and per-pixel noise.
inline polyth::RawImage synthetic_image(int label, std::size_t size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> noise(-30, 30);
  std::uniform_real_distribution<double> pos(0.2, 0.8);
  polyth::RawImage img(size, size);
  const double cx = pos(rng) * size, cy = pos(rng) * size, r = size * 0.25;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const bool inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r;
      for (std::size_t c = 0; c < 3; ++c) {
        int base = 90;
        if (inside) base = static_cast<int>(c) == label ? 220 : 60;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(base + noise(rng), 0, 255));
      }
    }
  return img;
}

// Writes root/{train,val,test}/{class}/img_NNN.ppm with `per_class[split]`
// images per class.
inline void write_synthetic_dataset(const std::filesystem::path& root, std::array<std::size_t, 3> per_class,
                                    std::size_t size, std::uint64_t seed) {
  static const char* splits[] = {"train", "val", "test"};
  static const char* classes[] = {"0_nonplastic", "1_plastic_other", "2_polythene"};
  std::mt19937_64 rng(seed);
  for (int s = 0; s < 3; ++s)
    for (int c = 0; c < 3; ++c) {
      const auto dir = root / splits[s] / classes[c];
      std::filesystem::create_directories(dir);
      for (std::size_t i = 0; i < per_class[s]; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%03zu.ppm", i);
        polyth::write_ppm(synthetic_image(c, size, rng), dir / name);
      }
    }
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("polyth_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
