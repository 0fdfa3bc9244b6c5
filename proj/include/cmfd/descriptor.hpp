#ifndef CMFD_DESCRIPTOR_HPP
#define CMFD_DESCRIPTOR_HPP

// 512-bit binary descriptor over a concentric sampling pattern. Long point
// pairs estimate the characteristic direction, the pattern is rotated by
// it, and each bit is one brightness comparison over a short pair.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "cmfd/detector.hpp"
#include "cmfd/imgcore.hpp"
#include "cmfd/parallel.hpp"

namespace cmfd {

inline constexpr int kDescriptorBits = 512;

enum class Smoothing {
  box,       // integral-image box mean with the Gaussian's variance
  gaussian,  // explicit Gaussian window (smoothed_intensity)
};

struct PatternParams {
  std::vector<double> ring_radii{0.0, 2.9, 4.9, 7.4, 10.8};
  std::vector<int> ring_counts{1, 10, 14, 15, 20};
  double delta_max_coeff = 9.75;
  double delta_min_coeff = 13.67;
  Smoothing smoothing = Smoothing::box;
  int n_rotations = 1024;

  void validate() const {
    if (ring_radii.empty() || ring_radii.size() != ring_counts.size())
      throw std::invalid_argument("pattern: ring radii/counts mismatch");
    for (int n : ring_counts)
      if (n < 1) throw std::invalid_argument("pattern: ring count must be >= 1");
    if (!(delta_max_coeff > 0) || !(delta_min_coeff > delta_max_coeff))
      throw std::invalid_argument("pattern: need 0 < delta_max < delta_min");
    if (n_rotations < 1) throw std::invalid_argument("pattern: n_rotations must be >= 1");
  }
};

struct PatternPoint {
  double radius = 0;
  double angle = 0;
  double smoothing_sigma = 0;

  double x() const noexcept { return radius * std::cos(angle); }
  double y() const noexcept { return radius * std::sin(angle); }
};

struct PointPair {
  int i = 0;  // X
  int j = 0;  // Y
  double distance = 0;
};

struct Vec2 {
  double x = 0, y = 0;
};

struct SamplingPattern {
  double scale = 1.0;
  double delta_max = 0;  // short pairs: distance < delta_max
  double delta_min = 0;  // long pairs:  distance > delta_min
  Smoothing smoothing = Smoothing::box;
  std::vector<PatternPoint> points;
  std::vector<PointPair> short_pairs;  // ascending distance, then (i, j)
  std::vector<PointPair> long_pairs;   // ascending (i, j)
  int n_rotations = 0;
  std::vector<Vec2> rotated_lookup;    // n_rotations x points.size()
  double max_extent = 0;               // outermost radius plus smoothing support

  std::span<const Vec2> rotated(int rotation) const noexcept {
    return {rotated_lookup.data() + static_cast<std::size_t>(rotation) * points.size(),
            points.size()};
  }
};

/// Support half-width of the box that has the variance of a Gaussian with
/// the given sigma.
inline double box_half_width(double sigma) noexcept { return std::sqrt(3.0) * sigma; }

// Integral-image differences leave ~1e-16 noise on flat patches; smaller
// intensity differences and gradients than these count as zero.
inline constexpr double kIntensityEps = 1e-9;
inline constexpr double kGradientEps = 1e-12;

inline SamplingPattern build_pattern(double scale, const PatternParams& params) {
  if (!(scale > 0)) throw std::invalid_argument("build_pattern: scale must be > 0");
  params.validate();

  SamplingPattern pat;
  pat.scale = scale;
  pat.delta_max = params.delta_max_coeff * scale;
  pat.delta_min = params.delta_min_coeff * scale;
  pat.smoothing = params.smoothing;

  for (std::size_t ring = 0; ring < params.ring_radii.size(); ++ring) {
    const int n = params.ring_counts[ring];
    const double r = params.ring_radii[ring] * scale;
    // Sigma grows with the spacing of neighbouring points on the ring.
    const double sigma = r > 0 ? 0.75 * r * std::sin(std::numbers::pi / n) : 0.375 * scale;
    for (int k = 0; k < n; ++k)
      pat.points.push_back({r, 2.0 * std::numbers::pi * k / n, sigma});
  }

  const int npts = static_cast<int>(pat.points.size());
  for (int i = 0; i < npts; ++i)
    for (int j = i + 1; j < npts; ++j) {
      const double d = std::hypot(pat.points[i].x() - pat.points[j].x(),
                                  pat.points[i].y() - pat.points[j].y());
      if (d < pat.delta_max) pat.short_pairs.push_back({i, j, d});
      if (d > pat.delta_min) pat.long_pairs.push_back({i, j, d});
    }
  // Ring symmetry makes many distances equal up to rounding; quantize the
  // key so the order is stable across scales.
  const auto key = [scale](const PointPair& p) {
    return std::make_tuple(std::llround(p.distance / scale * 1e6), p.i, p.j);
  };
  std::sort(pat.short_pairs.begin(), pat.short_pairs.end(),
            [&](const PointPair& a, const PointPair& b) { return key(a) < key(b); });

  pat.n_rotations = params.n_rotations;
  pat.rotated_lookup.resize(static_cast<std::size_t>(pat.n_rotations) * npts);
  for (int rot = 0; rot < pat.n_rotations; ++rot) {
    const double theta = 2.0 * std::numbers::pi * rot / pat.n_rotations;
    for (int k = 0; k < npts; ++k) {
      const auto& pt = pat.points[k];
      pat.rotated_lookup[static_cast<std::size_t>(rot) * npts + k] = {
          pt.radius * std::cos(pt.angle + theta), pt.radius * std::sin(pt.angle + theta)};
    }
  }
  for (const auto& pt : pat.points)
    pat.max_extent = std::max(pat.max_extent, pt.radius + box_half_width(pt.smoothing_sigma));
  return pat;
}

inline SamplingPattern build_pattern(double scale, double delta_max_coeff, double delta_min_coeff) {
  PatternParams params;
  params.delta_max_coeff = delta_max_coeff;
  params.delta_min_coeff = delta_min_coeff;
  return build_pattern(scale, params);
}

/// Pattern magnification at a keypoint: the lowest detector scale maps to
/// the pattern as built.
inline double pattern_factor(const Keypoint& kp) noexcept { return kp.scale / kBaseSigma; }

/// Smoothed intensity I' at an image point.
class IntensitySampler {
 public:
  IntensitySampler(const GrayImage& img, const IntegralImage& ii, Smoothing mode)
      : img_(&img), ii_(&ii), mode_(mode) {}

  double operator()(double x, double y, double sigma) const {
    if (mode_ == Smoothing::gaussian) return smoothed_intensity(*img_, x, y, sigma);
    return box_mean(*ii_, x, y, box_half_width(sigma));
  }

  const GrayImage& image() const noexcept { return *img_; }

 private:
  const GrayImage* img_;
  const IntegralImage* ii_;
  Smoothing mode_;
};

/// g(X, Y) = (X - Y) (I'(X) - I'(Y)) / |X - Y|^2
inline Vec2 local_gradient(Vec2 X, Vec2 Y, double intensity_x, double intensity_y) {
  const double dx = X.x - Y.x, dy = X.y - Y.y;
  const double n2 = dx * dx + dy * dy;
  const double s = (intensity_x - intensity_y) / n2;
  return {dx * s, dy * s};
}

inline Vec2 local_gradient(const GrayImage& img, Vec2 X, Vec2 Y, double sigma_x, double sigma_y) {
  return local_gradient(X, Y, smoothed_intensity(img, X.x, X.y, sigma_x),
                        smoothed_intensity(img, Y.x, Y.y, sigma_y));
}

/// True when every smoothed sample of the pattern at kp stays in the image.
inline bool pattern_fits(const SamplingPattern& pat, const Keypoint& kp, int width, int height) {
  const double reach = pat.max_extent * pattern_factor(kp);
  return kp.x - reach >= 0 && kp.y - reach >= 0 && kp.x + reach <= width - 1 &&
         kp.y + reach <= height - 1;
}

/// Mean local gradient over the long pairs of the unrotated pattern.
inline Vec2 characteristic_gradient(const IntensitySampler& sample, const Keypoint& kp,
                                    const SamplingPattern& pat) {
  const double f = pattern_factor(kp);
  std::vector<double> values(pat.points.size());
  std::vector<Vec2> pos(pat.points.size());
  for (std::size_t k = 0; k < pat.points.size(); ++k) {
    const auto& pt = pat.points[k];
    pos[k] = {kp.x + f * pt.x(), kp.y + f * pt.y()};
    values[k] = sample(pos[k].x, pos[k].y, f * pt.smoothing_sigma);
  }
  Vec2 g;
  for (const auto& pr : pat.long_pairs) {
    const Vec2 lg = local_gradient(pos[pr.i], pos[pr.j], values[pr.i], values[pr.j]);
    g.x += lg.x;
    g.y += lg.y;
  }
  if (!pat.long_pairs.empty()) {
    g.x /= static_cast<double>(pat.long_pairs.size());
    g.y /= static_cast<double>(pat.long_pairs.size());
  }
  return g;
}

/// Characteristic direction in (-pi, pi]; 0 for a zero gradient.
inline double orientation_from_gradient(Vec2 g) noexcept {
  if (std::hypot(g.x, g.y) < kGradientEps) return 0.0;
  const double a = std::atan2(g.y, g.x);
  return a <= -std::numbers::pi ? std::numbers::pi : a;
}

inline double orientation(const IntensitySampler& sample, const Keypoint& kp,
                          const SamplingPattern& pat) {
  return orientation_from_gradient(characteristic_gradient(sample, kp, pat));
}

inline double orientation(const GrayImage& img, const Keypoint& kp, const SamplingPattern& pat) {
  const IntegralImage ii(img);
  return orientation(IntensitySampler(img, ii, pat.smoothing), kp, pat);
}

struct BinaryDescriptor {
  std::array<std::uint64_t, kDescriptorBits / 64> words{};
  int keypoint_index = -1;

  bool bit(int k) const noexcept { return (words[k >> 6] >> (k & 63)) & 1u; }
  void set(int k) noexcept { words[k >> 6] |= std::uint64_t{1} << (k & 63); }

  friend bool operator==(const BinaryDescriptor&, const BinaryDescriptor&) = default;
};

inline int rotation_index(double alpha, int n_rotations) noexcept {
  int idx = static_cast<int>(std::lround(alpha * n_rotations / (2.0 * std::numbers::pi)));
  idx %= n_rotations;
  if (idx < 0) idx += n_rotations;
  return idx;
}

/// Descriptor at kp, or nullopt when the pattern leaves the image.
inline std::optional<BinaryDescriptor> describe(const IntensitySampler& sample, const Keypoint& kp,
                                                const SamplingPattern& pat, int keypoint_index = -1) {
  const GrayImage& img = sample.image();
  if (!pattern_fits(pat, kp, img.width(), img.height())) return std::nullopt;
  if (pat.short_pairs.size() < static_cast<std::size_t>(kDescriptorBits))
    throw std::invalid_argument("describe: pattern has fewer than 512 short pairs");

  const double alpha = orientation(sample, kp, pat);
  const auto rotated = pat.rotated(rotation_index(alpha, pat.n_rotations));
  const double f = pattern_factor(kp);

  std::array<double, 128> values{};
  std::vector<double> overflow;
  double* v = values.data();
  if (pat.points.size() > values.size()) {
    overflow.resize(pat.points.size());
    v = overflow.data();
  }
  for (std::size_t k = 0; k < pat.points.size(); ++k)
    v[k] = sample(kp.x + f * rotated[k].x, kp.y + f * rotated[k].y,
                  f * pat.points[k].smoothing_sigma);

  BinaryDescriptor d;
  d.keypoint_index = keypoint_index;
  for (int k = 0; k < kDescriptorBits; ++k) {
    const auto& pr = pat.short_pairs[k];
    if (v[pr.j] - v[pr.i] > kIntensityEps) d.set(k);
  }
  return d;
}

inline std::optional<BinaryDescriptor> describe(const GrayImage& img, const Keypoint& kp,
                                                const SamplingPattern& pat) {
  const IntegralImage ii(img);
  return describe(IntensitySampler(img, ii, pat.smoothing), kp, pat);
}

/// Describes every keypoint whose pattern fits; output keeps input order and
/// carries the originating keypoint index.
inline std::vector<BinaryDescriptor> describe_all(const GrayImage& img, const IntegralImage& ii,
                                                  std::span<const Keypoint> kps,
                                                  const SamplingPattern& pat, int threads = 1) {
  const IntensitySampler sample(img, ii, pat.smoothing);
  std::vector<std::optional<BinaryDescriptor>> slots(kps.size());
  parallel_for(kps.size(), threads, [&](std::size_t i) {
    slots[i] = describe(sample, kps[i], pat, static_cast<int>(i));
  });
  std::vector<BinaryDescriptor> out;
  out.reserve(kps.size());
  for (auto& s : slots)
    if (s) out.push_back(*s);
  return out;
}

}  // namespace cmfd

#endif  // CMFD_DESCRIPTOR_HPP
