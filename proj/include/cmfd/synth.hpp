#ifndef CMFD_SYNTH_HPP
#define CMFD_SYNTH_HPP

// Forgery and perturbation synthesis with exact ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cmfd/codec.hpp"
#include "cmfd/imgcore.hpp"

namespace cmfd {

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct ForgerySpec {
  Rect src;
  double dst_cx = 0, dst_cy = 0;
  double rotation = 0;  // degrees, applied about the region centre
  double scale = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ForgerySpec&, const ForgerySpec&) = default;
};

enum class RangePolicy {
  experimental,  // rotation in [0, 50], scale 1 or [1.1, 2.0]
  unrestricted,
};

inline void validate(const ForgerySpec& s, RangePolicy policy = RangePolicy::experimental) {
  if (s.src.w < 1 || s.src.h < 1) throw std::invalid_argument("forgery: empty source rect");
  if (!(s.scale > 0)) throw std::invalid_argument("forgery: scale must be > 0");
  if (policy == RangePolicy::unrestricted) return;
  if (!(s.rotation >= 0 && s.rotation <= 50))
    throw std::invalid_argument("forgery: rotation must be within [0, 50] degrees");
  if (!(s.scale == 1.0 || (s.scale >= 1.1 && s.scale <= 2.0)))
    throw std::invalid_argument("forgery: scale must be 1 or within [1.1, 2.0]");
}

/// (x, y) -> (a x + b y + c, d x + e y + f)
struct Affine {
  double a = 1, b = 0, c = 0, d = 0, e = 1, f = 0;
};

struct Point2 {
  double x = 0, y = 0;
};

struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> src_mask;
  std::vector<std::uint8_t> dst_mask;
  Affine dst_to_src;

  bool in_src(int x, int y) const noexcept { return inside(x, y) && src_mask[idx(x, y)]; }
  bool in_dst(int x, int y) const noexcept { return inside(x, y) && dst_mask[idx(x, y)]; }
  Point2 map_to_src(double x, double y) const noexcept {
    return {dst_to_src.a * x + dst_to_src.b * y + dst_to_src.c,
            dst_to_src.d * x + dst_to_src.e * y + dst_to_src.f};
  }

 private:
  bool inside(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t idx(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width + x; }
};

class ForgeryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline double snap(double v) noexcept {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace detail

/// Masks and dst->src correspondence for a forgery on a width x height
/// image. Throws ForgeryError when the region leaves the image or the
/// pasted region overlaps its source.
inline GroundTruth ground_truth_for(int width, int height, const ForgerySpec& spec,
                                    RangePolicy policy = RangePolicy::experimental) {
  validate(spec, policy);
  const Rect& r = spec.src;
  if (r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > height)
    throw ForgeryError("forgery: source rect outside image");

  const double scx = r.x + (r.w - 1) / 2.0, scy = r.y + (r.h - 1) / 2.0;
  const double t = spec.rotation * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);

  // dst = c_d + s R(t) (src - c_s)  <=>  src = c_s + R(-t) (dst - c_d) / s
  GroundTruth gt;
  gt.width = width;
  gt.height = height;
  gt.dst_to_src = {ct / spec.scale, st / spec.scale, 0, -st / spec.scale, ct / spec.scale, 0};
  gt.dst_to_src.c = scx - gt.dst_to_src.a * spec.dst_cx - gt.dst_to_src.b * spec.dst_cy;
  gt.dst_to_src.f = scy - gt.dst_to_src.d * spec.dst_cx - gt.dst_to_src.e * spec.dst_cy;

  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  for (const auto& [qx, qy] : {std::pair{r.x, r.y}, std::pair{r.x + r.w - 1, r.y},
                               std::pair{r.x, r.y + r.h - 1}, std::pair{r.x + r.w - 1, r.y + r.h - 1}}) {
    const double ux = qx - scx, uy = qy - scy;
    const double px = spec.dst_cx + spec.scale * (ct * ux - st * uy);
    const double py = spec.dst_cy + spec.scale * (st * ux + ct * uy);
    minx = std::min(minx, px);
    maxx = std::max(maxx, px);
    miny = std::min(miny, py);
    maxy = std::max(maxy, py);
  }
  if (minx < -1e-9 || miny < -1e-9 || maxx > width - 1 + 1e-9 || maxy > height - 1 + 1e-9)
    throw ForgeryError("forgery: transformed region leaves the image");

  const std::size_t n = static_cast<std::size_t>(width) * height;
  gt.src_mask.assign(n, 0);
  gt.dst_mask.assign(n, 0);
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) gt.src_mask[static_cast<std::size_t>(y) * width + x] = 1;

  const int x0 = std::max(0, static_cast<int>(std::floor(minx)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(maxx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(miny)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(maxy)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Point2 q = gt.map_to_src(x, y);
      if (q.x < r.x - 1e-9 || q.y < r.y - 1e-9 || q.x > r.x + r.w - 1 + 1e-9 ||
          q.y > r.y + r.h - 1 + 1e-9)
        continue;
      const auto i = static_cast<std::size_t>(y) * width + x;
      if (gt.src_mask[i]) throw ForgeryError("forgery: pasted region overlaps its source");
      gt.dst_mask[i] = 1;
    }
  return gt;
}

/// Copies spec.src, rotated and scaled about its centre with bilinear
/// interpolation, onto spec.dst_center with a hard edge.
template <class Image>
std::pair<Image, GroundTruth> apply_copy_move(const Image& img, const ForgerySpec& spec,
                                              RangePolicy policy = RangePolicy::experimental) {
  GroundTruth gt = ground_truth_for(img.width(), img.height(), spec, policy);
  Image out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (!gt.in_dst(x, y)) continue;
      const Point2 q = gt.map_to_src(x, y);
      out.set(x, y, bilinear(img, detail::snap(q.x), detail::snap(q.y)));
    }
  return {std::move(out), std::move(gt)};
}

/// i.i.d. N(0, sigma^2) per pixel (per channel), clamped to [0,1].
inline GrayImage add_gaussian_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (sigma == 0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  GrayImage out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.set(x, y, img(x, y) + nd(rng));
  return out;
}

inline RgbImage add_gaussian_noise(const RgbImage& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (sigma == 0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  RgbImage out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb& p = img(x, y);
      const double r = p.r + nd(rng), g = p.g + nd(rng), b = p.b + nd(rng);
      out.set(x, y, {r, g, b});
    }
  return out;
}

template <class Image>
Image jpeg_recompress(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must be in [1, 100]");
  return jpeg_roundtrip(img, quality);
}

/// Non-repeating texture: multi-scale value noise plus random Gaussian
/// blobs, rescaled to [0.05, 0.95].
inline GrayImage make_texture(std::uint64_t seed, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("texture: bad dimensions");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);

  for (int cell : {64, 32, 16, 8}) {
    const int gw = width / cell + 2, gh = height / cell + 2;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    for (auto& g : grid) g = uni(rng) - 0.5;
    const double amp = cell / 64.0 * 0.6 + 0.15;
    for (int y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) / cell;
      const int gy = static_cast<int>(fy);
      const double ty = fy - gy, sy = ty * ty * (3 - 2 * ty);
      for (int x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) / cell;
        const int gx = static_cast<int>(fx);
        const double tx = fx - gx, sx = tx * tx * (3 - 2 * tx);
        const double* g0 = &grid[static_cast<std::size_t>(gy) * gw + gx];
        const double* g1 = g0 + gw;
        const double v = (1 - sy) * ((1 - sx) * g0[0] + sx * g0[1]) + sy * ((1 - sx) * g1[0] + sx * g1[1]);
        acc[static_cast<std::size_t>(y) * width + x] += amp * v;
      }
    }
  }

  const int blobs = std::max(1, width * height / 200);
  for (int k = 0; k < blobs; ++k) {
    const double cx = uni(rng) * width, cy = uni(rng) * height;
    const double sigma = 1.5 + 5.0 * uni(rng) * uni(rng);
    const double amp = (uni(rng) - 0.5) * 0.9;
    const int rad = static_cast<int>(std::ceil(3 * sigma));
    const double inv = -1.0 / (2 * sigma * sigma);
    for (int y = std::max(0, static_cast<int>(cy) - rad); y <= std::min(height - 1, static_cast<int>(cy) + rad); ++y)
      for (int x = std::max(0, static_cast<int>(cx) - rad); x <= std::min(width - 1, static_cast<int>(cx) + rad); ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        acc[static_cast<std::size_t>(y) * width + x] += amp * std::exp(d2 * inv);
      }
  }

  const auto [lo_it, hi_it] = std::minmax_element(acc.begin(), acc.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  for (auto& v : acc) v = span > 0 ? 0.05 + 0.9 * (v - lo) / span : 0.5;
  return GrayImage(width, height, std::move(acc));
}

}  // namespace cmfd

#endif  // CMFD_SYNTH_HPP
