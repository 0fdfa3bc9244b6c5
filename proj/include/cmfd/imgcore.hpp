#ifndef CMFD_IMGCORE_HPP
#define CMFD_IMGCORE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmfd {

/// Single-channel image, row-major, intensities in [0,1].
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * height, clamp01(fill));
  }

  GrayImage(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw std::invalid_argument("GrayImage: data length != width*height");
    for (double v : data_)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("GrayImage: intensity outside [0,1]");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  /// Writes a pixel, clamping to [0,1].
  void set(int x, int y, double v) noexcept {
    data_[static_cast<std::size_t>(y) * width_ + x] = clamp01(v);
  }

  std::span<const double> pixels() const noexcept { return data_; }

  bool contains(double x, double y) const noexcept {
    return x >= 0.0 && y >= 0.0 && x <= width_ - 1 && y <= height_ - 1;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  static double clamp01(double v) noexcept { return std::clamp(v, 0.0, 1.0); }
  static void check_dims(int w, int h) {
    if (w < 1 || h < 1)
      throw std::invalid_argument("image dimensions must be >= 1");
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

struct Rgb {
  double r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Three-channel image, row-major, each channel in [0,1].
class RgbImage {
 public:
  RgbImage() = default;

  RgbImage(int width, int height, Rgb fill = {})
      : width_(width), height_(height) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("image dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(width) * height, clamp(fill));
  }

  RgbImage(int width, int height, std::vector<Rgb> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("image dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw std::invalid_argument("RgbImage: data length != width*height");
    for (auto& p : data_) p = clamp(p);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  const Rgb& operator()(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int x, int y, Rgb v) noexcept {
    data_[static_cast<std::size_t>(y) * width_ + x] = clamp(v);
  }
  std::span<const Rgb> pixels() const noexcept { return data_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  static Rgb clamp(Rgb p) noexcept {
    return {std::clamp(p.r, 0.0, 1.0), std::clamp(p.g, 0.0, 1.0),
            std::clamp(p.b, 0.0, 1.0)};
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> data_;
};

/// BT.601 luma.
inline GrayImage to_grayscale(const RgbImage& img) {
  GrayImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb& p = img(x, y);
      out.set(x, y, 0.299 * p.r + 0.587 * p.g + 0.114 * p.b);
    }
  return out;
}

inline RgbImage to_rgb(const GrayImage& img) {
  RgbImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double v = img(x, y);
      out.set(x, y, {v, v, v});
    }
  return out;
}

/// Summed-area table. at(x, y) is the sum of I(i, j) over i <= x, j <= y.
/// Stored with one leading row and column of zeros so that lookups at -1
/// need no branches.
class IntegralImage {
 public:
  IntegralImage() = default;

  explicit IntegralImage(const GrayImage& img)
      : width_(img.width()), height_(img.height()),
        stride_(static_cast<std::size_t>(img.width()) + 1),
        table_(stride_ * (static_cast<std::size_t>(img.height()) + 1), 0.0) {
    for (int y = 0; y < height_; ++y) {
      double row = 0.0;
      for (int x = 0; x < width_; ++x) {
        row += img(x, y);
        padded(x + 1, y + 1) = padded(x + 1, y) + row;
      }
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  /// Cumulative sum; coordinates are clamped, anything left of / above the
  /// image reads as 0.
  double at(int x, int y) const noexcept {
    if (x < 0 || y < 0) return 0.0;
    x = std::min(x, width_ - 1);
    y = std::min(y, height_ - 1);
    return table_[static_cast<std::size_t>(y + 1) * stride_ + x + 1];
  }

  /// Continuous integral of the piecewise-constant image over
  /// [-0.5, u] x [-0.5, v], where pixel (i, j) covers [i-0.5, i+0.5]^2.
  /// Exact: the continuous integral is bilinear inside each pixel cell.
  double continuous(double u, double v) const noexcept {
    const double pu = std::clamp(u + 0.5, 0.0, static_cast<double>(width_));
    const double pv = std::clamp(v + 0.5, 0.0, static_cast<double>(height_));
    int iu = static_cast<int>(pu);
    int iv = static_cast<int>(pv);
    if (iu >= width_) iu = width_ - 1;
    if (iv >= height_) iv = height_ - 1;
    const double fu = pu - iu;
    const double fv = pv - iv;
    const double* r0 = &table_[static_cast<std::size_t>(iv) * stride_ + iu];
    const double* r1 = r0 + stride_;
    return (1 - fv) * ((1 - fu) * r0[0] + fu * r0[1]) +
           fv * ((1 - fu) * r1[0] + fu * r1[1]);
  }

 private:
  double& padded(int px, int py) noexcept {
    return table_[static_cast<std::size_t>(py) * stride_ + px];
  }

  int width_ = 0;
  int height_ = 0;
  std::size_t stride_ = 0;
  std::vector<double> table_;
};

inline IntegralImage integral(const GrayImage& img) { return IntegralImage(img); }

/// Sum over the inclusive rectangle [x0,x1] x [y0,y1] intersected with the
/// image. Out-of-image area contributes nothing.
inline double box_sum(const IntegralImage& ii, int x0, int y0, int x1, int y1) noexcept {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, ii.width() - 1);
  y1 = std::min(y1, ii.height() - 1);
  if (x0 > x1 || y0 > y1) return 0.0;
  return ii.at(x1, y1) - ii.at(x0 - 1, y1) - ii.at(x1, y0 - 1) +
         ii.at(x0 - 1, y0 - 1);
}

/// Mean intensity over the continuous square of half-width `half` centred
/// at (x, y), with fractional pixel coverage. The square must lie within
/// [-0.5, w-0.5] x [-0.5, h-0.5].
inline double box_mean(const IntegralImage& ii, double x, double y, double half) noexcept {
  const double x0 = x - half, x1 = x + half, y0 = y - half, y1 = y + half;
  const double s = ii.continuous(x1, y1) - ii.continuous(x0, y1) -
                   ii.continuous(x1, y0) + ii.continuous(x0, y0);
  return s / (4.0 * half * half);
}

/// Gaussian-weighted average of the pixels around a sub-pixel point. The
/// window spans ceil(3 sigma) pixels beyond the pixels bracketing (x, y);
/// weights are normalized over the in-image pixels.
inline double smoothed_intensity(const GrayImage& img, double x, double y, double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("smoothed_intensity: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int xs = std::max(0, static_cast<int>(std::floor(x)) - radius);
  const int xe = std::min(img.width() - 1, static_cast<int>(std::ceil(x)) + radius);
  const int ys = std::max(0, static_cast<int>(std::floor(y)) - radius);
  const int ye = std::min(img.height() - 1, static_cast<int>(std::ceil(y)) + radius);
  const double inv = -1.0 / (2.0 * sigma * sigma);

  std::vector<double> wx(static_cast<std::size_t>(std::max(0, xe - xs + 1)));
  for (int i = xs; i <= xe; ++i) wx[i - xs] = std::exp((i - x) * (i - x) * inv);

  double acc = 0.0, wsum = 0.0;
  for (int j = ys; j <= ye; ++j) {
    const double wy = std::exp((j - y) * (j - y) * inv);
    for (int i = xs; i <= xe; ++i) {
      const double w = wy * wx[i - xs];
      acc += w * img(i, j);
      wsum += w;
    }
  }
  return wsum > 0.0 ? acc / wsum : 0.0;
}

/// Bilinear sample with border clamping.
inline double bilinear(const GrayImage& img, double x, double y) noexcept {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * img(x0, y0) + fx * img(x1, y0)) +
         fy * ((1 - fx) * img(x0, y1) + fx * img(x1, y1));
}

inline Rgb bilinear(const RgbImage& img, double x, double y) noexcept {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
  const double w01 = (1 - fx) * fy, w11 = fx * fy;
  const Rgb &a = img(x0, y0), &b = img(x1, y0), &c = img(x0, y1), &d = img(x1, y1);
  return {w00 * a.r + w10 * b.r + w01 * c.r + w11 * d.r,
          w00 * a.g + w10 * b.g + w01 * c.g + w11 * d.g,
          w00 * a.b + w10 * b.b + w01 * c.b + w11 * d.b};
}

}  // namespace cmfd

#endif  // CMFD_IMGCORE_HPP
