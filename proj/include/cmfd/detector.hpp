#ifndef CMFD_DETECTOR_HPP
#define CMFD_DETECTOR_HPP

// Fast-Hessian keypoint detection: box-filter approximations of the
// second-order Gaussian derivatives evaluated on an integral image, a
// response pyramid, 3x3x3 non-maximum suppression and quadratic refinement
// in space and scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmfd/imgcore.hpp"
#include "cmfd/parallel.hpp"

namespace cmfd {

/// Gaussian sigma of the smallest (9x9) box filter.
inline constexpr double kBaseSigma = 1.2;
inline constexpr int kBaseBoxSize = 9;

struct Keypoint {
  double x = 0;
  double y = 0;
  double scale = kBaseSigma;  // sigma in pixels
  double response = 0;        // approximated Hessian determinant
  int octave = 0;
  int layer = 0;
  int laplacian = 1;  // sign of Dxx + Dyy
  // Pyramid sample that won non-maximum suppression.
  int sample_x = 0;
  int sample_y = 0;
};

struct DetectorParams {
  int n_octaves = 4;
  int layers_per_octave = 4;
  double hessian_threshold = 0.0001;
  int initial_step = 1;
  int threads = 1;

  void validate() const {
    if (n_octaves < 1) throw std::invalid_argument("n_octaves must be >= 1");
    if (layers_per_octave < 3)
      throw std::invalid_argument("layers_per_octave must be >= 3");
    if (!(hessian_threshold >= 0))
      throw std::invalid_argument("hessian_threshold must be >= 0");
    if (initial_step < 1) throw std::invalid_argument("initial_step must be >= 1");
  }
};

/// Box size of layer `layer` (0-based) in octave `octave` (0-based):
/// 9 15 21 27 | 15 27 39 51 | 27 51 75 99 | ...
constexpr int box_size_for(int octave, int layer) noexcept {
  return 3 * ((2 << octave) * (layer + 1) + 1);
}

struct HessianResponse {
  double det = 0;
  int laplacian = 1;
};

/// Approximated Hessian determinant Dxx*Dyy - (0.9*Dxy)^2 at pixel (x, y)
/// with an odd box filter of size >= 9. Each response is normalized by the
/// filter area.
inline HessianResponse hessian_response(const IntegralImage& ii, int x, int y, int box_size) {
  if (box_size < 9 || box_size % 2 == 0)
    throw std::invalid_argument("hessian_response: box size must be odd and >= 9");
  const int lobe = box_size / 3;
  const int border = (box_size - 1) / 2;
  const double inv_area = 1.0 / (static_cast<double>(box_size) * box_size);

  const double dxx =
      box_sum(ii, x - border, y - lobe + 1, x + border, y + lobe - 1) -
      3.0 * box_sum(ii, x - lobe / 2, y - lobe + 1, x - lobe / 2 + lobe - 1, y + lobe - 1);
  const double dyy =
      box_sum(ii, x - lobe + 1, y - border, x + lobe - 1, y + border) -
      3.0 * box_sum(ii, x - lobe + 1, y - lobe / 2, x + lobe - 1, y - lobe / 2 + lobe - 1);
  const double dxy = box_sum(ii, x + 1, y - lobe, x + lobe, y - 1) +
                     box_sum(ii, x - lobe, y + 1, x - 1, y + lobe) -
                     box_sum(ii, x - lobe, y - lobe, x - 1, y - 1) -
                     box_sum(ii, x + 1, y + 1, x + lobe, y + lobe);

  const double nxx = dxx * inv_area, nyy = dyy * inv_area, nxy = dxy * inv_area;
  const double wxy = 0.9 * nxy;
  return {nxx * nyy - wxy * wxy, (nxx + nyy) >= 0 ? 1 : -1};
}

struct ResponseLayer {
  int octave = 0;
  int layer = 0;
  int width = 0;   // samples
  int height = 0;  // samples
  int step = 1;    // pixels per sample
  int box_size = kBaseBoxSize;
  double sigma = kBaseSigma;
  std::vector<double> responses;
  std::vector<std::int8_t> laplacian_signs;

  double at(int c, int r) const noexcept {
    return responses[static_cast<std::size_t>(r) * width + c];
  }
};

struct Pyramid {
  int n_octaves = 0;  // octaves actually built
  int layers_per_octave = 0;
  std::vector<ResponseLayer> layers;  // octave-major
  std::string warning;                // non-empty when octaves were dropped

  const ResponseLayer& at(int octave, int layer) const {
    return layers[static_cast<std::size_t>(octave) * layers_per_octave + layer];
  }
};

/// One response layer per (octave, layer). Octaves whose largest filter
/// does not fit the image are dropped and reported in `warning`.
inline Pyramid build_pyramid(const IntegralImage& ii, const DetectorParams& p) {
  p.validate();
  Pyramid pyr;
  pyr.layers_per_octave = p.layers_per_octave;
  const int min_dim = std::min(ii.width(), ii.height());

  for (int o = 0; o < p.n_octaves; ++o) {
    if (box_size_for(o, p.layers_per_octave - 1) > min_dim) {
      pyr.warning = o == 0 ? "image smaller than the smallest filter octave; no responses"
                           : "image too small for octave " + std::to_string(o) +
                                 "; pyramid truncated to " + std::to_string(o) + " octave(s)";
      break;
    }
    const int step = p.initial_step << o;
    for (int l = 0; l < p.layers_per_octave; ++l) {
      ResponseLayer layer;
      layer.octave = o;
      layer.layer = l;
      layer.step = step;
      layer.box_size = box_size_for(o, l);
      layer.sigma = kBaseSigma * layer.box_size / kBaseBoxSize;
      layer.width = (ii.width() - 1) / step + 1;
      layer.height = (ii.height() - 1) / step + 1;
      layer.responses.resize(static_cast<std::size_t>(layer.width) * layer.height);
      layer.laplacian_signs.assign(layer.responses.size(), 1);
      pyr.layers.push_back(std::move(layer));
    }
    ++pyr.n_octaves;
  }

  // Samples whose filter would hang over the border keep response 0.
  parallel_for(pyr.layers.size(), p.threads, [&](std::size_t li) {
    ResponseLayer& layer = pyr.layers[li];
    const int half = (layer.box_size - 1) / 2;
    for (int r = 0; r < layer.height; ++r)
      for (int c = 0; c < layer.width; ++c) {
        const int x = c * layer.step, y = r * layer.step;
        if (x < half || y < half || x + half > ii.width() - 1 || y + half > ii.height() - 1) continue;
        const auto h = hessian_response(ii, x, y, layer.box_size);
        const auto idx = static_cast<std::size_t>(r) * layer.width + c;
        layer.responses[idx] = h.det;
        layer.laplacian_signs[idx] = static_cast<std::int8_t>(h.laplacian);
      }
  });
  return pyr;
}

namespace detail {

/// Sample margin at which the largest filter of the NMS triple centred on
/// `layer` stays inside the image.
inline int nms_border(const Pyramid& pyr, int octave, int layer) {
  const ResponseLayer& top = pyr.at(octave, layer + 1);
  return (top.box_size + 1) / (2 * top.step);
}

inline bool is_strict_max(const Pyramid& pyr, int o, int l, int c, int r) {
  const double v = pyr.at(o, l).at(c, r);
  for (int dl = -1; dl <= 1; ++dl) {
    const ResponseLayer& lay = pyr.at(o, l + dl);
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dl == 0 && dr == 0 && dc == 0) continue;
        if (!(v > lay.at(c + dc, r + dr))) return false;
      }
  }
  return true;
}

inline bool solve3(const std::array<std::array<double, 3>, 3>& a,
                   const std::array<double, 3>& b, std::array<double, 3>& x) {
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  if (std::abs(det) < 1e-30) return false;
  for (int k = 0; k < 3; ++k) {
    auto m = a;
    for (int i = 0; i < 3; ++i) m[i][k] = b[i];
    const double dk = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                      m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                      m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    x[k] = dk / det;
  }
  return true;
}

/// Offset (dx, dy, dlayer) from fitting a 3-D quadratic around a sample.
inline bool quadratic_offset(const Pyramid& pyr, int o, int l, int c, int r,
                             std::array<double, 3>& off) {
  const ResponseLayer& b = pyr.at(o, l - 1);
  const ResponseLayer& m = pyr.at(o, l);
  const ResponseLayer& t = pyr.at(o, l + 1);
  const double v = m.at(c, r);
  const double dx = (m.at(c + 1, r) - m.at(c - 1, r)) / 2;
  const double dy = (m.at(c, r + 1) - m.at(c, r - 1)) / 2;
  const double ds = (t.at(c, r) - b.at(c, r)) / 2;
  const double dxx = m.at(c + 1, r) + m.at(c - 1, r) - 2 * v;
  const double dyy = m.at(c, r + 1) + m.at(c, r - 1) - 2 * v;
  const double dss = t.at(c, r) + b.at(c, r) - 2 * v;
  const double dxy =
      (m.at(c + 1, r + 1) - m.at(c - 1, r + 1) - m.at(c + 1, r - 1) + m.at(c - 1, r - 1)) / 4;
  const double dxs = (t.at(c + 1, r) - t.at(c - 1, r) - b.at(c + 1, r) + b.at(c - 1, r)) / 4;
  const double dys = (t.at(c, r + 1) - t.at(c, r - 1) - b.at(c, r + 1) + b.at(c, r - 1)) / 4;
  const std::array<std::array<double, 3>, 3> hess{{{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}}};
  if (!solve3(hess, {-dx, -dy, -ds}, off)) return false;
  return std::isfinite(off[0]) && std::isfinite(off[1]) && std::isfinite(off[2]);
}

inline constexpr int kMaxRefinementSteps = 5;

}  // namespace detail

/// Refines an NMS winner; returns false when the quadratic fit does not
/// settle within half a sample in every dimension.
inline bool refine_keypoint(const Pyramid& pyr, int o, int l, int c, int r,
                            const DetectorParams& p, Keypoint& kp) {
  const int L = pyr.layers_per_octave;
  const int origin_c = c, origin_r = r, origin_l = l;
  std::array<double, 3> off{};
  bool converged = false;
  for (int step = 0; step < detail::kMaxRefinementSteps; ++step) {
    if (!detail::quadratic_offset(pyr, o, l, c, r, off)) return false;
    if (std::abs(off[0]) < 0.5 && std::abs(off[1]) < 0.5 && std::abs(off[2]) < 0.5) {
      converged = true;
      break;
    }
    // Move one sample towards the fitted extremum and refit.
    c += std::abs(off[0]) >= 0.5 ? (off[0] > 0 ? 1 : -1) : 0;
    r += std::abs(off[1]) >= 0.5 ? (off[1] > 0 ? 1 : -1) : 0;
    l += std::abs(off[2]) >= 0.5 ? (off[2] > 0 ? 1 : -1) : 0;
    if (l < 1 || l > L - 2) return false;
    const int border = detail::nms_border(pyr, o, l);
    const ResponseLayer& m = pyr.at(o, l);
    if (c <= border || r <= border || c >= m.width - 1 - border || r >= m.height - 1 - border)
      return false;
  }
  if (!converged) return false;

  const ResponseLayer& origin = pyr.at(o, origin_l);
  const ResponseLayer& m = pyr.at(o, l);
  const double box_step = pyr.at(o, 1).box_size - pyr.at(o, 0).box_size;
  kp.x = (c + off[0]) * m.step;
  kp.y = (r + off[1]) * m.step;
  kp.scale = std::max(kBaseSigma, kBaseSigma / kBaseBoxSize * (m.box_size + off[2] * box_step));
  kp.response = origin.at(origin_c, origin_r);
  kp.octave = o;
  kp.layer = origin_l;
  kp.sample_x = origin_c;
  kp.sample_y = origin_r;
  kp.laplacian = origin.laplacian_signs[static_cast<std::size_t>(origin_r) * origin.width + origin_c];
  return kp.response >= p.hessian_threshold;
}

/// Keypoints of a prebuilt pyramid, sorted by descending response then
/// (y, x).
inline std::vector<Keypoint> detect_in_pyramid(const Pyramid& pyr, const DetectorParams& p,
                                               int image_width, int image_height) {
  std::vector<std::vector<Keypoint>> per_layer(pyr.layers.size());
  parallel_for(pyr.layers.size(), p.threads, [&](std::size_t li) {
    const int o = static_cast<int>(li) / pyr.layers_per_octave;
    const int l = static_cast<int>(li) % pyr.layers_per_octave;
    if (l < 1 || l > pyr.layers_per_octave - 2) return;
    const ResponseLayer& m = pyr.at(o, l);
    const int border = detail::nms_border(pyr, o, l);
    for (int r = border + 1; r < m.height - 1 - border; ++r)
      for (int c = border + 1; c < m.width - 1 - border; ++c) {
        if (m.at(c, r) < p.hessian_threshold) continue;
        if (!detail::is_strict_max(pyr, o, l, c, r)) continue;
        Keypoint kp;
        if (!refine_keypoint(pyr, o, l, c, r, p, kp)) continue;
        if (kp.x <= 0 || kp.y <= 0 || kp.x >= image_width - 1 || kp.y >= image_height - 1)
          continue;
        per_layer[li].push_back(kp);
      }
  });

  std::vector<Keypoint> out;
  for (auto& v : per_layer) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.scale < b.scale;
  });
  return out;
}

inline std::vector<Keypoint> detect(const IntegralImage& ii, const DetectorParams& p) {
  const Pyramid pyr = build_pyramid(ii, p);
  return detect_in_pyramid(pyr, p, ii.width(), ii.height());
}

inline std::vector<Keypoint> detect(const GrayImage& img, const DetectorParams& p) {
  return detect(integral(img), p);
}

}  // namespace cmfd

#endif  // CMFD_DETECTOR_HPP
