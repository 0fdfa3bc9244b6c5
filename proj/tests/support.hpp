#ifndef CMFD_TESTS_SUPPORT_HPP
#define CMFD_TESTS_SUPPORT_HPP

// Independent reference implementations for tests. Nothing here calls the
// code under test except for plain data types.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "cmfd/descriptor.hpp"
#include "cmfd/imgcore.hpp"
#include "cmfd/matcher.hpp"
#include "cmfd/synth.hpp"

namespace oracle {

inline cmfd::GrayImage random_image(std::uint64_t seed, int w, int h) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  for (auto& v : px) v = u(rng);
  return cmfd::GrayImage(w, h, std::move(px));
}

// Sum of pixels with x' <= x, y' <= y by a double loop.
inline double integral_at(const cmfd::GrayImage& img, int x, int y) {
  double s = 0;
  for (int yy = 0; yy <= y; ++yy)
    for (int xx = 0; xx <= x; ++xx) s += img(xx, yy);
  return s;
}

// Inclusive rectangle sum, pixels outside the image count as zero.
inline double box_sum(const cmfd::GrayImage& img, int x0, int y0, int x1, int y1) {
  double s = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (img.contains(x, y)) s += img(x, y);
  return s;
}

// Weight tables of the second-derivative box masks for filter size L.
struct Masks {
  int size = 0;
  std::vector<double> xx, yy, xy;  // size x size, row-major, centred
};

inline Masks box_masks(int L) {
  Masks m;
  m.size = L;
  const int l = L / 3, half = L / 2;
  m.xx.assign(static_cast<std::size_t>(L) * L, 0.0);
  m.yy = m.xx;
  m.xy = m.xx;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const std::size_t k = static_cast<std::size_t>(dy + half) * L + (dx + half);
      if (std::abs(dy) <= l - 1) m.xx[k] = std::abs(dx) <= (l - 1) / 2 ? -2.0 : 1.0;
      if (std::abs(dx) <= l - 1) m.yy[k] = std::abs(dy) <= (l - 1) / 2 ? -2.0 : 1.0;
      const bool ax = std::abs(dx) >= 1 && std::abs(dx) <= l;
      const bool ay = std::abs(dy) >= 1 && std::abs(dy) <= l;
      if (ax && ay) m.xy[k] = (dx > 0) == (dy < 0) ? 1.0 : -1.0;
    }
  return m;
}

// Determinant of the area-normalized box Hessian by explicit convolution.
inline double hessian_det(const cmfd::GrayImage& img, int x, int y, int L) {
  const Masks m = box_masks(L);
  const int half = L / 2;
  double dxx = 0, dyy = 0, dxy = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      if (!img.contains(x + dx, y + dy)) continue;
      const double v = img(x + dx, y + dy);
      const std::size_t k = static_cast<std::size_t>(dy + half) * L + (dx + half);
      dxx += m.xx[k] * v;
      dyy += m.yy[k] * v;
      dxy += m.xy[k] * v;
    }
  const double a = 1.0 / (static_cast<double>(L) * L);
  return (dxx * a) * (dyy * a) - (0.9 * dxy * a) * (0.9 * dxy * a);
}

inline int hamming(const cmfd::BinaryDescriptor& a, const cmfd::BinaryDescriptor& b) {
  int d = 0;
  for (int k = 0; k < cmfd::kDescriptorBits; ++k) d += a.bit(k) != b.bit(k);
  return d;
}

inline cmfd::BinaryDescriptor random_descriptor(std::mt19937_64& rng) {
  cmfd::BinaryDescriptor d;
  for (auto& w : d.words) w = rng();
  return d;
}

// Brute-force ratio-test matcher: sort every candidate list in full.
inline std::vector<cmfd::MatchPair> knn_match(std::span<const cmfd::BinaryDescriptor> d,
                                              std::span<const cmfd::Keypoint> kps,
                                              const cmfd::MatcherParams& p) {
  const int n = static_cast<int>(d.size());
  std::map<std::pair<int, int>, cmfd::MatchPair> acc;
  for (int q = 0; q < n; ++q) {
    std::vector<std::pair<int, int>> cand;  // (distance, index)
    for (int j = 0; j < n; ++j) {
      if (j == q || std::hypot(kps[j].x - kps[q].x, kps[j].y - kps[q].y) < p.min_pair_distance) continue;
      cand.emplace_back(oracle::hamming(d[q], d[j]), j);
    }
    if (static_cast<int>(cand.size()) < p.k) continue;
    std::sort(cand.begin(), cand.end());
    const double d1 = cand[0].first, d2 = cand[1].first;
    const double ratio = d2 == 0 ? 1.0 : d1 / d2;
    if (ratio > p.rho) continue;
    const auto key = std::minmax(q, cand[0].second);
    auto it = acc.find(key);
    if (it == acc.end())
      acc.emplace(key, cmfd::MatchPair{key.first, key.second, d1, ratio});
    else
      it->second.ratio = std::min(it->second.ratio, ratio);
  }
  std::vector<cmfd::MatchPair> out;
  for (auto& [k, m] : acc) out.push_back(m);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.distance, a.i, a.j) < std::tie(b.distance, b.i, b.j);
  });
  return out;
}

// Rotates an image about (cx, cy) by deg degrees (counter-clockwise in
// image coordinates, i.e. the same sense as the synthesizer).
inline cmfd::GrayImage rotate_about(const cmfd::GrayImage& img, double cx, double cy, double deg) {
  const double t = deg * std::numbers::pi / 180.0, c = std::cos(t), s = std::sin(t);
  cmfd::GrayImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double ux = x - cx, uy = y - cy;
      out.set(x, y, cmfd::bilinear(img, cx + c * ux + s * uy, cy - s * ux + c * uy));
    }
  return out;
}

// Scales an image about (cx, cy) by factor s.
inline cmfd::GrayImage scale_about(const cmfd::GrayImage& img, double cx, double cy, double s) {
  cmfd::GrayImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.set(x, y, cmfd::bilinear(img, cx + (x - cx) / s, cy + (y - cy) / s));
  return out;
}

// Pair validity written out from the definition.
inline bool valid_pair(const cmfd::Keypoint& a, const cmfd::Keypoint& b, const cmfd::GroundTruth& gt, double tol) {
  for (int flip = 0; flip < 2; ++flip) {
    const cmfd::Keypoint& s = flip ? b : a;
    const cmfd::Keypoint& d = flip ? a : b;
    const int sx = static_cast<int>(std::lround(s.x)), sy = static_cast<int>(std::lround(s.y));
    const int dx = static_cast<int>(std::lround(d.x)), dy = static_cast<int>(std::lround(d.y));
    if (sx < 0 || sy < 0 || dx < 0 || dy < 0 || sx >= gt.width || dx >= gt.width || sy >= gt.height ||
        dy >= gt.height)
      continue;
    if (!gt.src_mask[static_cast<std::size_t>(sy) * gt.width + sx]) continue;
    if (!gt.dst_mask[static_cast<std::size_t>(dy) * gt.width + dx]) continue;
    const auto& m = gt.dst_to_src;
    const double qx = m.a * d.x + m.b * d.y + m.c, qy = m.d * d.x + m.e * d.y + m.f;
    if ((qx - s.x) * (qx - s.x) + (qy - s.y) * (qy - s.y) <= tol * tol) return true;
  }
  return false;
}

}  // namespace oracle

#endif  // CMFD_TESTS_SUPPORT_HPP
