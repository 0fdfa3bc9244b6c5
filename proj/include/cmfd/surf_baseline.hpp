#ifndef CMFD_SURF_BASELINE_HPP
#define CMFD_SURF_BASELINE_HPP

// 64-dimensional SURF descriptor with Haar-wavelet orientation assignment.
// Only used as the float-descriptor baseline for timing and comparison.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "cmfd/detector.hpp"
#include "cmfd/imgcore.hpp"
#include "cmfd/parallel.hpp"

namespace cmfd {

inline constexpr int kSurfDims = 64;

struct SurfDescriptor {
  std::array<double, kSurfDims> values{};
  int keypoint_index = -1;

  friend bool operator==(const SurfDescriptor&, const SurfDescriptor&) = default;
};

namespace detail {

inline double haar_x(const IntegralImage& ii, int x, int y, int size) noexcept {
  const int h = size / 2;
  return box_sum(ii, x, y - h, x + h - 1, y + h - 1) - box_sum(ii, x - h, y - h, x - 1, y + h - 1);
}

inline double haar_y(const IntegralImage& ii, int x, int y, int size) noexcept {
  const int h = size / 2;
  return box_sum(ii, x - h, y, x + h - 1, y + h - 1) - box_sum(ii, x - h, y - h, x + h - 1, y - 1);
}

inline int iround(double v) noexcept { return static_cast<int>(std::lround(v)); }

}  // namespace detail

/// Reach of the 20-sigma window (rotated) plus Haar support.
inline bool surf_window_fits(const Keypoint& kp, int width, int height) noexcept {
  const double reach = (10.0 * std::numbers::sqrt2 + 2.0) * kp.scale + 1.0;
  return kp.x - reach >= 0 && kp.y - reach >= 0 && kp.x + reach <= width - 1 &&
         kp.y + reach <= height - 1;
}

/// Dominant direction of Gaussian-weighted Haar responses inside a radius of
/// 6 sigma, found with a sliding pi/3 window.
inline double surf_orientation(const IntegralImage& ii, const Keypoint& kp) {
  const double s = kp.scale;
  const int haar = std::max(2, 2 * detail::iround(2.0 * s));
  const double inv = -1.0 / (2.0 * 2.5 * s * 2.5 * s);

  struct Sample {
    double dx, dy, angle;
  };
  std::vector<Sample> samples;
  samples.reserve(109);
  for (int i = -6; i <= 6; ++i)
    for (int j = -6; j <= 6; ++j) {
      if (i * i + j * j >= 36) continue;
      const double ox = i * s, oy = j * s;
      const double w = std::exp((ox * ox + oy * oy) * inv);
      const int px = detail::iround(kp.x + ox), py = detail::iround(kp.y + oy);
      const double dx = w * detail::haar_x(ii, px, py, haar);
      const double dy = w * detail::haar_y(ii, px, py, haar);
      double a = std::atan2(dy, dx);
      if (a < 0) a += 2 * std::numbers::pi;
      samples.push_back({dx, dy, a});
    }

  double best = -1, best_x = 0, best_y = 0;
  constexpr double window = std::numbers::pi / 3;
  for (double a = 0; a < 2 * std::numbers::pi; a += 0.15) {
    const double a2 = a + window;
    double sx = 0, sy = 0;
    for (const auto& smp : samples) {
      const bool in = a2 < 2 * std::numbers::pi
                          ? (smp.angle >= a && smp.angle < a2)
                          : (smp.angle >= a || smp.angle < a2 - 2 * std::numbers::pi);
      if (in) {
        sx += smp.dx;
        sy += smp.dy;
      }
    }
    const double mag = sx * sx + sy * sy;
    if (mag > best) {
      best = mag;
      best_x = sx;
      best_y = sy;
    }
  }
  return (best_x == 0 && best_y == 0) ? 0.0 : std::atan2(best_y, best_x);
}

/// 4x4 subregions over a 20 sigma window, (sum dx, sum |dx|, sum dy,
/// sum |dy|) per subregion, unit L2 norm. A constant patch gives zeros.
inline std::optional<SurfDescriptor> surf_describe(const IntegralImage& ii, const Keypoint& kp,
                                                   int keypoint_index = -1) {
  if (!surf_window_fits(kp, ii.width(), ii.height())) return std::nullopt;
  const double s = kp.scale;
  const double alpha = surf_orientation(ii, kp);
  const double co = std::cos(alpha), si = std::sin(alpha);
  const int haar = std::max(2, 2 * detail::iround(s));
  const double inv = -1.0 / (2.0 * 3.3 * s * 3.3 * s);

  SurfDescriptor d;
  d.keypoint_index = keypoint_index;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double u = (i - 9.5) * s, v = (j - 9.5) * s;
      const int px = detail::iround(kp.x + co * u - si * v);
      const int py = detail::iround(kp.y + si * u + co * v);
      const double w = std::exp((u * u + v * v) * inv);
      const double hx = detail::haar_x(ii, px, py, haar);
      const double hy = detail::haar_y(ii, px, py, haar);
      const double rx = w * (co * hx + si * hy);
      const double ry = w * (-si * hx + co * hy);
      double* cell = &d.values[static_cast<std::size_t>(((j / 5) * 4 + i / 5) * 4)];
      cell[0] += rx;
      cell[1] += std::abs(rx);
      cell[2] += ry;
      cell[3] += std::abs(ry);
    }

  double norm = 0;
  for (double v : d.values) norm += v * v;
  norm = std::sqrt(norm);
  // Flat patches leave only integral-image rounding noise.
  if (norm < 1e-9)
    d.values.fill(0.0);
  else
    for (double& v : d.values) v /= norm;
  return d;
}

inline std::optional<SurfDescriptor> surf_describe(const GrayImage& img, const Keypoint& kp) {
  return surf_describe(IntegralImage(img), kp);
}

inline std::vector<SurfDescriptor> surf_describe_all(const IntegralImage& ii,
                                                     std::span<const Keypoint> kps, int threads = 1) {
  std::vector<std::optional<SurfDescriptor>> slots(kps.size());
  parallel_for(kps.size(), threads, [&](std::size_t i) {
    slots[i] = surf_describe(ii, kps[i], static_cast<int>(i));
  });
  std::vector<SurfDescriptor> out;
  out.reserve(kps.size());
  for (auto& s : slots)
    if (s) out.push_back(*s);
  return out;
}

inline double l2_distance(const SurfDescriptor& a, const SurfDescriptor& b) noexcept {
  double acc = 0;
  for (int k = 0; k < kSurfDims; ++k) {
    const double d = a.values[k] - b.values[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace cmfd

#endif  // CMFD_SURF_BASELINE_HPP
