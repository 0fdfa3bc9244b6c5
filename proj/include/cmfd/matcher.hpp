#ifndef CMFD_MATCHER_HPP
#define CMFD_MATCHER_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cmfd/descriptor.hpp"
#include "cmfd/detector.hpp"
#include "cmfd/parallel.hpp"
#include "cmfd/surf_baseline.hpp"

namespace cmfd {

struct MatcherParams {
  double rho = 0.4;
  double min_pair_distance = 10.0;  // px
  int k = 2;
  int threads = 1;

  void validate() const {
    if (!(rho > 0 && rho <= 1)) throw std::invalid_argument("rho must be in (0, 1]");
    if (!(min_pair_distance >= 0))
      throw std::invalid_argument("min_pair_distance must be >= 0");
    if (k < 2) throw std::invalid_argument("k must be >= 2");
  }
};

/// A within-image correspondence; indices refer to the descriptor array.
struct MatchPair {
  int i = 0;  // i < j
  int j = 0;
  double distance = 0;  // Hamming bits for binary descriptors
  double ratio = 0;     // nearest / second-nearest distance

  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

inline int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) noexcept {
  int d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

namespace detail {

struct Candidate {
  int query = -1;
  int nearest = -1;
  double d1 = 0;
  double d2 = 0;
};

/// 0/0 (three or more identical descriptors) is treated as fully ambiguous.
inline double neighbour_ratio(double d1, double d2) noexcept {
  if (d2 > 0) return d1 / d2;
  return 1.0;
}

}  // namespace detail

/// Exhaustive kNN ratio-test matching of descriptors against themselves.
/// positions[n] is the image location of descs[n]; neighbours closer than
/// min_pair_distance (the query included) are not eligible.
template <class Descriptor, class Distance>
std::vector<MatchPair> knn_match_with(std::span<const Descriptor> descs,
                                      std::span<const Vec2> positions, const MatcherParams& p,
                                      Distance&& dist) {
  p.validate();
  if (descs.size() != positions.size())
    throw std::invalid_argument("knn_match: descriptors and keypoints differ in length");
  const int n = static_cast<int>(descs.size());
  const double min_d2 = p.min_pair_distance * p.min_pair_distance;

  std::vector<detail::Candidate> cand(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), p.threads, [&](std::size_t qi) {
    const int q = static_cast<int>(qi);
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    int best = -1, eligible = 0;
    for (int j = 0; j < n; ++j) {
      const double dx = positions[j].x - positions[q].x;
      const double dy = positions[j].y - positions[q].y;
      if (j == q || dx * dx + dy * dy < min_d2) continue;
      ++eligible;
      const double d = dist(descs[q], descs[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (eligible >= p.k) cand[qi] = {q, best, d1, d2};
  });

  std::map<std::pair<int, int>, MatchPair> accepted;
  for (const auto& c : cand) {
    if (c.query < 0) continue;
    const double ratio = detail::neighbour_ratio(c.d1, c.d2);
    if (ratio > p.rho) continue;
    const auto key = std::minmax(c.query, c.nearest);
    auto [it, inserted] = accepted.try_emplace(key, MatchPair{key.first, key.second, c.d1, ratio});
    if (!inserted && ratio < it->second.ratio) it->second.ratio = ratio;
  }

  std::vector<MatchPair> out;
  out.reserve(accepted.size());
  for (auto& [key, m] : accepted) out.push_back(m);
  std::stable_sort(out.begin(), out.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  return out;
}

inline std::vector<Vec2> positions_of(std::span<const Keypoint> kps) {
  std::vector<Vec2> out;
  out.reserve(kps.size());
  for (const auto& k : kps) out.push_back({k.x, k.y});
  return out;
}

/// Hamming kNN; descs[n] and kps[n] describe the same point.
inline std::vector<MatchPair> knn_match(std::span<const BinaryDescriptor> descs,
                                        std::span<const Keypoint> kps, const MatcherParams& p) {
  const auto pos = positions_of(kps);
  return knn_match_with(descs, std::span<const Vec2>(pos), p,
                        [](const BinaryDescriptor& a, const BinaryDescriptor& b) {
                          return static_cast<double>(hamming(a, b));
                        });
}

/// Euclidean kNN for the float baseline.
inline std::vector<MatchPair> knn_match(std::span<const SurfDescriptor> descs,
                                        std::span<const Keypoint> kps, const MatcherParams& p) {
  const auto pos = positions_of(kps);
  return knn_match_with(descs, std::span<const Vec2>(pos), p,
                        [](const SurfDescriptor& a, const SurfDescriptor& b) { return l2_distance(a, b); });
}

}  // namespace cmfd

#endif  // CMFD_MATCHER_HPP
