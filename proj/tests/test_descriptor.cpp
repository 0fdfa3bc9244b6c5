#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "cmfd/descriptor.hpp"
#include "cmfd/detector.hpp"
#include "cmfd/synth.hpp"
#include "support.hpp"

using namespace cmfd;

namespace {

Keypoint at(double x, double y, double scale = kBaseSigma) {
  Keypoint k;
  k.x = x;
  k.y = y;
  k.scale = scale;
  return k;
}

// Pattern coordinates from the ring table, computed here without the library.
std::vector<std::pair<double, double>> ring_points(const PatternParams& p, double scale) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t r = 0; r < p.ring_radii.size(); ++r)
    for (int k = 0; k < p.ring_counts[r]; ++k) {
      const double a = 2 * std::numbers::pi * k / p.ring_counts[r];
      pts.emplace_back(p.ring_radii[r] * scale * std::cos(a), p.ring_radii[r] * scale * std::sin(a));
    }
  return pts;
}

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
  if (d <= -std::numbers::pi) d += 2 * std::numbers::pi;
  return d;
}

std::set<std::pair<int, int>> pair_set(const std::vector<PointPair>& v) {
  std::set<std::pair<int, int>> s;
  for (const auto& p : v) s.emplace(p.i, p.j);
  return s;
}

}  // namespace

TEST(Pattern, DefaultsGiveEnoughDisjointPairs) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  EXPECT_EQ(pat.points.size(), 60u);
  EXPECT_GE(pat.short_pairs.size(), 512u);
  EXPECT_FALSE(pat.long_pairs.empty());
  const auto s = pair_set(pat.short_pairs), l = pair_set(pat.long_pairs);
  for (const auto& p : s) EXPECT_EQ(l.count(p), 0u);
}

TEST(Pattern, PairSetsMatchExhaustiveEnumeration) {
  const PatternParams params;
  const auto pts = ring_points(params, 1.0);
  ASSERT_EQ(pts.size(), 60u);
  std::set<std::pair<int, int>> want_s, want_l;
  int total = 0;
  for (int i = 0; i < 60; ++i)
    for (int j = i + 1; j < 60; ++j) {
      ++total;
      const double d = std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second);
      if (d < params.delta_max_coeff) want_s.emplace(i, j);
      if (d > params.delta_min_coeff) want_l.emplace(i, j);
    }
  EXPECT_EQ(total, 1770);
  const SamplingPattern pat = build_pattern(1.0, params);
  EXPECT_EQ(pair_set(pat.short_pairs), want_s);
  EXPECT_EQ(pair_set(pat.long_pairs), want_l);
  for (const auto& p : pat.long_pairs) {
    EXPECT_GT(std::hypot(pts[p.i].first - pts[p.j].first, pts[p.i].second - pts[p.j].second), pat.delta_min);
  }
}

TEST(Pattern, ShortPairsInCanonicalOrder) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  for (std::size_t k = 1; k < pat.short_pairs.size(); ++k) {
    const auto& a = pat.short_pairs[k - 1];
    const auto& b = pat.short_pairs[k];
    EXPECT_LE(a.distance, b.distance + 1e-9);
    if (std::abs(a.distance - b.distance) < 1e-9) {
      EXPECT_LT(std::make_pair(a.i, a.j), std::make_pair(b.i, b.j));
    }
  }
}

TEST(Pattern, DoublingScaleKeepsPairSets) {
  const SamplingPattern a = build_pattern(1.0, PatternParams{});
  const SamplingPattern b = build_pattern(2.0, PatternParams{});
  ASSERT_EQ(a.short_pairs.size(), b.short_pairs.size());
  for (std::size_t k = 0; k < a.short_pairs.size(); ++k) {
    EXPECT_EQ(a.short_pairs[k].i, b.short_pairs[k].i);
    EXPECT_EQ(a.short_pairs[k].j, b.short_pairs[k].j);
    EXPECT_NEAR(b.short_pairs[k].distance, 2 * a.short_pairs[k].distance, 1e-9);
  }
  EXPECT_EQ(pair_set(a.long_pairs), pair_set(b.long_pairs));
  EXPECT_DOUBLE_EQ(b.delta_max, 2 * a.delta_max);
  EXPECT_DOUBLE_EQ(b.delta_min, 2 * a.delta_min);
}

TEST(Pattern, RejectsBadScale) {
  EXPECT_THROW(build_pattern(0.0, PatternParams{}), std::invalid_argument);
  EXPECT_THROW(build_pattern(-1.0, 9.75, 13.67), std::invalid_argument);
}

TEST(Pattern, RotatedLookupIsRotation) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  const int rot = 100;
  const double t = 2 * std::numbers::pi * rot / pat.n_rotations;
  const auto r = pat.rotated(rot);
  for (std::size_t k = 0; k < pat.points.size(); ++k) {
    const double x = pat.points[k].x(), y = pat.points[k].y();
    EXPECT_NEAR(r[k].x, std::cos(t) * x - std::sin(t) * y, 1e-12);
    EXPECT_NEAR(r[k].y, std::sin(t) * x + std::cos(t) * y, 1e-12);
  }
}

TEST(LocalGradient, DirectEvaluation) {
  const Vec2 g = local_gradient(Vec2{2, 0}, Vec2{0, 0}, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(g.x, 0.5);
  EXPECT_DOUBLE_EQ(g.y, 0.0);
}

TEST(LocalGradient, SwapSymmetric) {
  const Vec2 X{3.5, -1.25}, Y{-0.5, 2.0};
  const Vec2 a = local_gradient(X, Y, 0.8, 0.3);
  const Vec2 b = local_gradient(Y, X, 0.3, 0.8);
  EXPECT_DOUBLE_EQ(a.x, b.x);
  EXPECT_DOUBLE_EQ(a.y, b.y);
}

TEST(LocalGradient, ConstantImageIsZero) {
  const GrayImage img(32, 32, 0.6);
  const Vec2 g = local_gradient(img, Vec2{10, 12}, Vec2{17, 20}, 1.0, 1.5);
  EXPECT_NEAR(g.x, 0.0, 1e-15);
  EXPECT_NEAR(g.y, 0.0, 1e-15);
}

TEST(Orientation, ConstantPatchIsZero) {
  const GrayImage img(64, 64, 0.4);
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  EXPECT_EQ(orientation(img, at(32, 32), pat), 0.0);
}

TEST(Orientation, HorizontalRampAlignsWithXAxis) {
  GrayImage up(64, 64), down(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      up.set(x, y, 0.1 + 0.8 * x / 63.0);
      down.set(x, y, 0.9 - 0.8 * x / 63.0);
    }
  for (Smoothing sm : {Smoothing::box, Smoothing::gaussian}) {
    PatternParams p;
    p.smoothing = sm;
    const SamplingPattern pat = build_pattern(1.0, p);
    EXPECT_NEAR(orientation(up, at(32, 32), pat), 0.0, 0.1);
    EXPECT_NEAR(std::abs(orientation(down, at(32, 32), pat)), std::numbers::pi, 0.1);
  }
}

TEST(Orientation, MatchesExplicitSumOverLongPairs) {
  const GrayImage img = oracle::random_image(71, 80, 80);
  const IntegralImage ii(img);
  for (Smoothing sm : {Smoothing::box, Smoothing::gaussian}) {
    PatternParams p;
    p.smoothing = sm;
    const SamplingPattern pat = build_pattern(1.0, p);
    for (double scale : {1.2, 2.0, 2.6}) {
      const Keypoint kp = at(40.3, 39.6, scale);
      const double f = scale / kBaseSigma;
      const auto pts = ring_points(p, f);
      std::vector<double> sig;
      for (std::size_t r = 0; r < p.ring_radii.size(); ++r)
        for (int k = 0; k < p.ring_counts[r]; ++k)
          sig.push_back(r == 0 ? 0.375 * f : 0.75 * p.ring_radii[r] * f * std::sin(std::numbers::pi / p.ring_counts[r]));
      const auto I = [&](int k) {
        const double x = kp.x + pts[k].first, y = kp.y + pts[k].second;
        return sm == Smoothing::gaussian ? smoothed_intensity(img, x, y, sig[k])
                                         : box_mean(ii, x, y, std::sqrt(3.0) * sig[k]);
      };
      double gx = 0, gy = 0;
      int n = 0;
      for (int i = 0; i < 60; ++i)
        for (int j = i + 1; j < 60; ++j) {
          const double dx = pts[i].first - pts[j].first, dy = pts[i].second - pts[j].second;
          const double d2 = dx * dx + dy * dy;
          if (std::sqrt(d2) <= p.delta_min_coeff * f) continue;
          const double s = (I(i) - I(j)) / d2;
          gx += dx * s;
          gy += dy * s;
          ++n;
        }
      gx /= n;
      gy /= n;
      const Vec2 g = characteristic_gradient(IntensitySampler(img, ii, sm), kp, pat);
      EXPECT_NEAR(g.x, gx, 1e-9);
      EXPECT_NEAR(g.y, gy, 1e-9);
      EXPECT_NEAR(orientation(img, kp, pat), std::atan2(gy, gx), 1e-9);
    }
  }
}

TEST(Orientation, FollowsRotationOfThePatch) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  int tested = 0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const GrayImage img = make_texture(seed, 96, 96);
    const GrayImage rot = oracle::rotate_about(img, 48, 48, 30);
    const Keypoint kp = at(48, 48, 2.0);
    const Vec2 g = characteristic_gradient(IntensitySampler(img, IntegralImage(img), pat.smoothing), kp, pat);
    // Skip patches with no clear direction.
    if (std::hypot(g.x, g.y) < 2e-3) continue;
    ++tested;
    const double d = angle_diff(orientation(rot, kp, pat), orientation(img, kp, pat));
    EXPECT_NEAR(d * 180 / std::numbers::pi, 30.0, 3.0) << "seed " << seed;
  }
  EXPECT_GE(tested, 5);
}

TEST(Describe, ConstantPatchAllZero) {
  const GrayImage img(64, 64, 0.5);
  const auto d = describe(img, at(32, 32), build_pattern(1.0, PatternParams{}));
  ASSERT_TRUE(d.has_value());
  for (auto w : d->words) EXPECT_EQ(w, 0u);
}

TEST(Describe, Deterministic) {
  const GrayImage img = make_texture(72, 96, 96);
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  const auto a = describe(img, at(48, 47, 1.9), pat);
  const auto b = describe(img, at(48, 47, 1.9), pat);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(*a, *b);
}

TEST(Describe, SkipsPatternsLeavingTheImage) {
  const GrayImage img = make_texture(73, 64, 64);
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  EXPECT_FALSE(describe(img, at(3, 32), pat).has_value());
  EXPECT_FALSE(describe(img, at(32, 62), pat).has_value());
  EXPECT_FALSE(describe(img, at(32, 32, 8.0), pat).has_value());
  EXPECT_TRUE(describe(img, at(32, 32), pat).has_value());

  const std::vector<Keypoint> kps{at(3, 32), at(32, 32), at(60, 60), at(30, 34)};
  const auto all = describe_all(img, IntegralImage(img), kps, pat);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].keypoint_index, 1);
  EXPECT_EQ(all[1].keypoint_index, 3);
}

TEST(Describe, BitsFollowShortPairComparisons) {
  const GrayImage img = make_texture(74, 96, 96);
  const IntegralImage ii(img);
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  const Keypoint kp = at(47.5, 48.25, 1.6);
  const IntensitySampler sample(img, ii, pat.smoothing);
  const auto d = describe(sample, kp, pat);
  ASSERT_TRUE(d);
  const double alpha = orientation(sample, kp, pat);
  const int rot = rotation_index(alpha, pat.n_rotations);
  const double t = 2 * std::numbers::pi * rot / pat.n_rotations;
  const double f = kp.scale / kBaseSigma;
  const auto I = [&](int k) {
    const double x = pat.points[k].x(), y = pat.points[k].y();
    return box_mean(ii, kp.x + f * (std::cos(t) * x - std::sin(t) * y), kp.y + f * (std::sin(t) * x + std::cos(t) * y),
                    std::sqrt(3.0) * f * pat.points[k].smoothing_sigma);
  };
  for (int k = 0; k < kDescriptorBits; ++k) {
    const auto& pr = pat.short_pairs[k];
    EXPECT_EQ(d->bit(k), I(pr.j) > I(pr.i)) << k;
  }
}

TEST(Describe, BrightnessOffsetInvariant) {
  const GrayImage img = make_texture(75, 96, 96);
  GrayImage brighter(96, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) brighter.set(x, y, img(x, y) + 0.03125);
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  const auto a = describe(img, at(48, 48, 2.0), pat);
  const auto b = describe(brighter, at(48, 48, 2.0), pat);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(*a, *b);
}

TEST(Describe, Rotated20DegreesWithinTenPercent) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    const GrayImage img = make_texture(seed, 96, 96);
    const GrayImage rot = oracle::rotate_about(img, 48, 48, 20);
    const auto a = describe(img, at(48, 48, 2.0), pat);
    const auto b = describe(rot, at(48, 48, 2.0), pat);
    ASSERT_TRUE(a && b);
    EXPECT_LE(oracle::hamming(*a, *b), 51) << "seed " << seed;
  }
}

TEST(Describe, RotationRobustnessMean) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  for (double theta : {0.0, 10.0, 20.0, 30.0, 40.0, 50.0}) {
    double sum = 0;
    int n = 0;
    for (std::uint64_t seed = 300; seed < 320; ++seed) {
      const GrayImage img = make_texture(seed, 96, 96);
      const GrayImage rot = theta == 0 ? img : oracle::rotate_about(img, 48, 48, theta);
      const auto a = describe(img, at(48, 48, 2.0), pat);
      const auto b = describe(rot, at(48, 48, 2.0), pat);
      ASSERT_TRUE(a && b);
      sum += oracle::hamming(*a, *b);
      ++n;
    }
    if (theta == 0) {
      EXPECT_EQ(sum, 0.0);
    } else {
      EXPECT_LE(sum / n, 77.0) << theta;
    }
  }
}

TEST(Describe, ScaleRobustnessNearestNeighbour) {
  const SamplingPattern pat = build_pattern(1.0, PatternParams{});
  const DetectorParams dp;
  int candidates = 0, correct = 0;
  for (double s : {1.1, 1.3, 1.5, 1.75, 2.0}) {
    for (std::uint64_t seed = 400; seed < 403; ++seed) {
      const GrayImage img = make_texture(seed, 256, 256);
      const GrayImage big = oracle::scale_about(img, 128, 128, s);
      const auto ka = detect(img, dp);
      const auto kb = detect(big, dp);
      const auto da = describe_all(img, IntegralImage(img), ka, pat);
      const auto db = describe_all(big, IntegralImage(big), kb, pat);
      for (const auto& a : da) {
        const Keypoint& p = ka[a.keypoint_index];
        const double mx = 128 + s * (p.x - 128), my = 128 + s * (p.y - 128);
        // Only points that were re-detected at the right place and scale count.
        bool redetected = false;
        for (const auto& b : db) {
          const Keypoint& q = kb[b.keypoint_index];
          if (std::hypot(q.x - mx, q.y - my) <= 3 && std::abs(std::log(q.scale / (s * p.scale))) < 0.3)
            redetected = true;
        }
        if (!redetected) continue;
        ++candidates;
        int best = 1 << 30;
        const Keypoint* hit = nullptr;
        for (const auto& b : db) {
          const int h = oracle::hamming(a, b);
          if (h < best) {
            best = h;
            hit = &kb[b.keypoint_index];
          }
        }
        if (hit && std::hypot(hit->x - mx, hit->y - my) <= 3) ++correct;
      }
    }
  }
  ASSERT_GT(candidates, 50);
  EXPECT_GE(static_cast<double>(correct) / candidates, 0.70) << correct << "/" << candidates;
}
