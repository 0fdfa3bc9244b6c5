#ifndef CMFD_ANNOTATE_HPP
#define CMFD_ANNOTATE_HPP

// Match overlay: green circles at matched keypoints, a red line per pair.

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "cmfd/codec.hpp"
#include "cmfd/pipeline.hpp"

namespace cmfd {

struct Annotation {
  cv::Mat image;  // 8-bit BGR
  int lines = 0;
  int circles = 0;
};

template <class Image>
Annotation annotate(const Image& img, const DetectionReport& rep) {
  Annotation out;
  cv::Mat base = detail::to_mat(img);
  if (base.channels() == 1)
    cv::cvtColor(base, out.image, cv::COLOR_GRAY2BGR);
  else
    out.image = base;

  const cv::Scalar green(0, 255, 0), red(0, 0, 255);
  const auto pt = [](const Keypoint& k) {
    return cv::Point(static_cast<int>(std::lround(k.x)), static_cast<int>(std::lround(k.y)));
  };
  for (const auto& p : rep.matched_pairs) {
    cv::line(out.image, pt(p.a), pt(p.b), red, 1, cv::LINE_8);
    ++out.lines;
  }
  std::set<int> drawn;
  for (const auto& p : rep.matched_pairs)
    for (const auto& [id, kp] : {std::pair{p.match.i, p.a}, std::pair{p.match.j, p.b}}) {
      if (!drawn.insert(id).second) continue;
      const int r = std::max(3, static_cast<int>(std::lround(2.0 * kp.scale)));
      cv::circle(out.image, pt(kp), r, green, 1, cv::LINE_8);
      ++out.circles;
    }
  return out;
}

}  // namespace cmfd

#endif  // CMFD_ANNOTATE_HPP
