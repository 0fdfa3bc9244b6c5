#ifndef CMFD_CODEC_HPP
#define CMFD_CODEC_HPP

// PNG / JPEG / BMP decode and encode. This is the only place 8-bit channel
// data is handled; everything downstream sees reals in [0,1].

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cmfd/imgcore.hpp"

namespace cmfd {

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline cv::Mat to_mat(const GrayImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) row[x] = to_u8(img(x, y));
  }
  return m;
}

inline cv::Mat to_mat(const RgbImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      const Rgb& p = img(x, y);
      row[x] = cv::Vec3b(to_u8(p.b), to_u8(p.g), to_u8(p.r));
    }
  }
  return m;
}

inline GrayImage gray_from_mat(const cv::Mat& m) {
  std::vector<double> data(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x)
      data[static_cast<std::size_t>(y) * m.cols + x] = row[x] / 255.0;
  }
  return GrayImage(m.cols, m.rows, std::move(data));
}

inline RgbImage rgb_from_mat(const cv::Mat& m) {
  std::vector<Rgb> data(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x)
      data[static_cast<std::size_t>(y) * m.cols + x] = {
          row[x][2] / 255.0, row[x][1] / 255.0, row[x][0] / 255.0};
  }
  return RgbImage(m.cols, m.rows, std::move(data));
}

inline cv::Mat normalize_decoded(cv::Mat m) {
  if (m.depth() == CV_16U) m.convertTo(m, CV_8U, 1.0 / 257.0);
  if (m.depth() != CV_8U) throw CodecError("unsupported sample depth");
  return m;
}

}  // namespace detail

/// A decoded file: grayscale sources stay single-channel.
struct DecodedImage {
  bool is_color = false;
  GrayImage gray;
  RgbImage rgb;  // set when is_color

  const GrayImage& luma() const noexcept { return gray; }
};

inline DecodedImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path))
    throw CodecError("cannot open image: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw CodecError("cannot decode image: " + path.string());
  m = detail::normalize_decoded(std::move(m));

  DecodedImage out;
  switch (m.channels()) {
    case 1:
      out.gray = detail::gray_from_mat(m);
      return out;
    case 4:
      cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
      [[fallthrough]];
    case 3:
      out.is_color = true;
      out.rgb = detail::rgb_from_mat(m);
      out.gray = to_grayscale(out.rgb);
      return out;
    default:
      throw CodecError("unsupported channel count in " + path.string());
  }
}

/// Format follows the file extension (.png, .jpg/.jpeg, .bmp).
template <class Image>
void save_image(const std::filesystem::path& path, const Image& img, int jpeg_quality = 95) {
  std::vector<int> params;
  const auto ext = path.extension().string();
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG" || ext == ".JPEG")
    params = {cv::IMWRITE_JPEG_QUALITY, jpeg_quality};
  if (ext == ".png") params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), detail::to_mat(img), params))
    throw CodecError("cannot write image: " + path.string());
}

inline std::vector<std::uint8_t> encode_jpeg(const cv::Mat& m, int quality) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".jpg", m, buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw CodecError("JPEG encode failed");
  return buf;
}

/// Encode at the given JPEG quality and decode back.
inline GrayImage jpeg_roundtrip(const GrayImage& img, int quality) {
  auto buf = encode_jpeg(detail::to_mat(img), quality);
  cv::Mat back = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  if (back.empty()) throw CodecError("JPEG decode failed");
  return detail::gray_from_mat(back);
}

inline RgbImage jpeg_roundtrip(const RgbImage& img, int quality) {
  auto buf = encode_jpeg(detail::to_mat(img), quality);
  cv::Mat back = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (back.empty()) throw CodecError("JPEG decode failed");
  return detail::rgb_from_mat(back);
}

}  // namespace cmfd

#endif  // CMFD_CODEC_HPP
