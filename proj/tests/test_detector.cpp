#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cmfd/detector.hpp"
#include "cmfd/synth.hpp"
#include "support.hpp"

using namespace cmfd;

namespace {

GrayImage gaussian_blob(int w, int h, double cx, double cy, double sigma) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set(x, y, 0.1 + 0.8 * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma)));
  return img;
}

// Nearest keypoint distance in position, ignoring others.
double nearest(const std::vector<Keypoint>& kps, double x, double y, double scale, const Keypoint** hit = nullptr) {
  double best = 1e300;
  for (const auto& k : kps) {
    if (std::abs(k.scale - scale) > 1e-6 * std::max(1.0, scale) + 0.05) continue;
    const double d = std::hypot(k.x - x, k.y - y);
    if (d < best) {
      best = d;
      if (hit) *hit = &k;
    }
  }
  return best;
}

}  // namespace

TEST(Detector, BoxSizesFollowOctaveRule) {
  EXPECT_EQ(box_size_for(0, 0), 9);
  EXPECT_EQ(box_size_for(0, 1), 15);
  EXPECT_EQ(box_size_for(0, 2), 21);
  EXPECT_EQ(box_size_for(0, 3), 27);
  EXPECT_EQ(box_size_for(1, 0), 15);
  EXPECT_EQ(box_size_for(1, 1), 27);
  EXPECT_EQ(box_size_for(1, 2), 39);
  EXPECT_EQ(box_size_for(1, 3), 51);
  EXPECT_EQ(box_size_for(2, 0), 27);
  EXPECT_EQ(box_size_for(2, 3), 99);
}

TEST(Detector, PyramidLayout) {
  const IntegralImage ii(GrayImage(128, 128, 0.5));
  DetectorParams p;
  p.n_octaves = 1;
  Pyramid one = build_pyramid(ii, p);
  ASSERT_EQ(one.layers.size(), 4u);
  const int want1[] = {9, 15, 21, 27};
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(one.at(0, l).box_size, want1[l]);
    EXPECT_NEAR(one.at(0, l).sigma, 1.2 * want1[l] / 9.0, 1e-12);
    EXPECT_EQ(one.at(0, l).step, 1);
  }
  p.n_octaves = 2;
  Pyramid two = build_pyramid(ii, p);
  const int want2[] = {15, 27, 39, 51};
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(two.at(1, l).box_size, want2[l]);
    EXPECT_EQ(two.at(1, l).step, 2);
  }
  for (const auto& layer : two.layers)
    for (double v : layer.responses) EXPECT_EQ(v, 0.0);
}

TEST(Detector, SmallImageGivesEmptyPyramidWithWarning) {
  const IntegralImage ii(GrayImage(20, 20, 0.5));
  const Pyramid p = build_pyramid(ii, DetectorParams{});
  EXPECT_TRUE(p.layers.empty());
  EXPECT_FALSE(p.warning.empty());
  EXPECT_TRUE(detect(ii, DetectorParams{}).empty());

  const Pyramid q = build_pyramid(IntegralImage(GrayImage(40, 40, 0.5)), DetectorParams{});
  EXPECT_EQ(q.n_octaves, 1);
  EXPECT_FALSE(q.warning.empty());
}

TEST(Detector, ParamsValidated) {
  DetectorParams p;
  p.n_octaves = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.layers_per_octave = 2;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.hessian_threshold = -1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.initial_step = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Hessian, ConstantImageIsZero) {
  const IntegralImage ii(GrayImage(64, 64, 0.7));
  for (int b : {9, 15, 27}) EXPECT_NEAR(hessian_response(ii, 32, 32, b).det, 0.0, 1e-15);
}

TEST(Hessian, BrightSquareBlobPositive) {
  GrayImage img(64, 64, 0.1);
  for (int y = 29; y <= 35; ++y)
    for (int x = 29; x <= 35; ++x) img.set(x, y, 0.9);
  const auto r = hessian_response(IntegralImage(img), 32, 32, 15);
  EXPECT_GT(r.det, 0.0);
  EXPECT_EQ(r.laplacian, -1);
}

TEST(Hessian, RejectsBadBoxSize) {
  const IntegralImage ii(GrayImage(32, 32, 0.5));
  EXPECT_THROW(hessian_response(ii, 16, 16, 7), std::invalid_argument);
  EXPECT_THROW(hessian_response(ii, 16, 16, 10), std::invalid_argument);
}

TEST(Hessian, MatchesMaskConvolutionEverywhere) {
  const GrayImage img = oracle::random_image(31, 36, 36);
  const IntegralImage ii(img);
  for (int b : {9, 15})
    for (int y = 0; y < 36; ++y)
      for (int x = 0; x < 36; ++x) ASSERT_NEAR(hessian_response(ii, x, y, b).det, oracle::hessian_det(img, x, y, b), 1e-9);
}

TEST(Detect, ConstantImageHasNoKeypoints) {
  EXPECT_TRUE(detect(GrayImage(128, 128, 0.3), DetectorParams{}).empty());
}

// sigma 2 peaks at the 9 px box, the bottom layer, which never wins NMS.
TEST(Detect, SingleGaussianBlob) {
  const GrayImage img = gaussian_blob(128, 128, 64, 64, 2.5);
  const auto kps = detect(img, DetectorParams{});
  ASSERT_EQ(kps.size(), 1u);
  EXPECT_LE(std::hypot(kps[0].x - 64, kps[0].y - 64), 2.0);
}

TEST(Detect, KeypointInvariants) {
  const GrayImage img = make_texture(41, 160, 140);
  DetectorParams p;
  const auto kps = detect(img, p);
  ASSERT_FALSE(kps.empty());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const auto& k = kps[i];
    EXPECT_GE(k.scale, kBaseSigma);
    EXPECT_GT(k.response, p.hessian_threshold);
    EXPECT_GT(k.x, 0);
    EXPECT_GT(k.y, 0);
    EXPECT_LT(k.x, 159);
    EXPECT_LT(k.y, 139);
    if (i > 0) {
      EXPECT_GE(kps[i - 1].response, k.response);
    }
  }
}

TEST(Detect, OriginSampleIsStrict26NeighbourMaximum) {
  const GrayImage img = make_texture(42, 200, 200);
  const IntegralImage ii(img);
  DetectorParams p;
  p.hessian_threshold = 0;
  const Pyramid pyr = build_pyramid(ii, p);
  const auto kps = detect(ii, p);
  ASSERT_GT(kps.size(), 50u);
  for (const auto& k : kps) {
    const double v = pyr.at(k.octave, k.layer).at(k.sample_x, k.sample_y);
    EXPECT_EQ(v, k.response);
    for (int dl = -1; dl <= 1; ++dl)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (dl || dx || dy) {
            ASSERT_GT(v, pyr.at(k.octave, k.layer + dl).at(k.sample_x + dx, k.sample_y + dy));
          }
  }
}

TEST(Detect, ThresholdMonotone) {
  const GrayImage img = make_texture(43, 180, 180);
  DetectorParams p;
  std::size_t prev = SIZE_MAX;
  std::vector<Keypoint> prev_kps;
  for (double t : {0.0, 0.00005, 0.0001, 0.0002, 0.0004, 0.0008}) {
    p.hessian_threshold = t;
    const auto kps = detect(img, p);
    EXPECT_LE(kps.size(), prev);
    for (const auto& k : kps) {
      bool found = prev_kps.empty();
      for (const auto& q : prev_kps)
        if (q.octave == k.octave && q.layer == k.layer && q.sample_x == k.sample_x && q.sample_y == k.sample_y)
          found = true;
      EXPECT_TRUE(found);
    }
    prev = kps.size();
    prev_kps = kps;
  }
}

TEST(Detect, MirrorSymmetry) {
  // Width 129: the mirror x -> 128 - x maps every octave's sample grid onto itself.
  const GrayImage img = make_texture(44, 129, 129);
  GrayImage mir(129, 129);
  for (int y = 0; y < 129; ++y)
    for (int x = 0; x < 129; ++x) mir.set(x, y, img(128 - x, y));
  const auto a = detect(img, DetectorParams{});
  const auto b = detect(mir, DetectorParams{});
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a.size(), b.size());
  for (const auto& k : a) EXPECT_LE(nearest(b, 128 - k.x, k.y, k.scale), 0.5) << k.x << "," << k.y;
}

TEST(Detect, ShiftEquivariance) {
  const GrayImage base = make_texture(45, 256, 256);
  const int dx = 16, dy = 8;
  GrayImage shifted(256, 256, 0.5);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x)
      if (x - dx >= 0 && y - dy >= 0) shifted.set(x, y, base(x - dx, y - dy));
  const auto a = detect(base, DetectorParams{});
  const auto b = detect(shifted, DetectorParams{});
  int checked = 0;
  for (const auto& k : a) {
    const double reach = 2 * k.scale / kBaseSigma * kBaseBoxSize + 8;
    if (k.x < reach || k.y < reach || k.x + dx > 255 - reach || k.y + dy > 255 - reach) continue;
    ++checked;
    EXPECT_LE(nearest(b, k.x + dx, k.y + dy, k.scale), 0.5);
  }
  EXPECT_GT(checked, 20);
}

TEST(Detect, DeterministicAcrossThreadCounts) {
  const GrayImage img = make_texture(46, 256, 256);
  DetectorParams p;
  const auto a = detect(img, p);
  p.threads = 4;
  const auto b = detect(img, p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(a[i].scale, b[i].scale);
    EXPECT_EQ(a[i].response, b[i].response);
  }
}
