#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "fpm/array2d.hpp"
#include "fpm/error.hpp"
#include "fpm/forward.hpp"

namespace fpm {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::string_view kImageMagic{"FPMIMG1\0", 8};
inline constexpr std::string_view kStackMagic{"FPMSTK1\0", 8};
inline constexpr std::uint8_t kDtypeReal = 1;
inline constexpr std::uint8_t kDtypeComplex = 2;
inline constexpr std::size_t kImageHeaderSize = 24;

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void zeros(std::size_t n) { out_.insert(out_.end(), n, 0); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, std::string what) : in_(in), what_(std::move(what)) {}
  std::string_view raw(std::size_t n) {
    need(n);
    std::string_view s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw IoError(what_ + ": truncated data");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void write_image_header(ByteWriter& w, int width, int height, std::uint8_t dtype) {
  w.raw(kImageMagic);
  w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(height));
  w.u8(dtype);
  w.zeros(7);
}

struct ImageHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t dtype = 0;
};

inline ImageHeader read_image_header(ByteReader& r) {
  if (r.raw(8) != kImageMagic) throw IoError("FPMIMG: bad magic");
  ImageHeader h;
  h.width = r.u32();
  h.height = r.u32();
  h.dtype = r.u8();
  r.raw(7);
  if (h.dtype != kDtypeReal && h.dtype != kDtypeComplex)
    throw IoError("FPMIMG: unknown dtype code " + std::to_string(h.dtype));
  const std::uint64_t values = static_cast<std::uint64_t>(h.width) * h.height;
  if (values > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
    throw IoError("FPMIMG: image too large");
  const std::uint64_t expected = values * (h.dtype == kDtypeReal ? 8 : 16);
  if (r.remaining() != expected)
    throw IoError("FPMIMG: payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                  std::to_string(expected));
  return h;
}

}  // namespace detail

// FPMIMG: "FPMIMG1\0", u32 width, u32 height, u8 dtype (1 real f64, 2 complex
// f64 interleaved), 7 zero bytes, then row-major little-endian values.

inline Bytes encode_image(const RealImage& img) {
  Bytes out;
  out.reserve(kImageHeaderSize + img.size() * 8);
  detail::ByteWriter w(out);
  detail::write_image_header(w, img.cols(), img.rows(), kDtypeReal);
  for (double v : img) w.f64(v);
  return out;
}

inline Bytes encode_image(const ComplexImage& img) {
  Bytes out;
  out.reserve(kImageHeaderSize + img.size() * 16);
  detail::ByteWriter w(out);
  detail::write_image_header(w, img.cols(), img.rows(), kDtypeComplex);
  for (const Complex& v : img) {
    w.f64(v.real());
    w.f64(v.imag());
  }
  return out;
}

inline RealImage decode_real_image(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "FPMIMG");
  const auto h = detail::read_image_header(r);
  if (h.dtype != kDtypeReal) throw IoError("FPMIMG: expected a real image");
  RealImage img(static_cast<int>(h.height), static_cast<int>(h.width));
  for (auto& v : img) v = r.f64();
  return img;
}

inline ComplexImage decode_complex_image(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "FPMIMG");
  const auto h = detail::read_image_header(r);
  if (h.dtype != kDtypeComplex) throw IoError("FPMIMG: expected a complex image");
  ComplexImage img(static_cast<int>(h.height), static_cast<int>(h.width));
  for (auto& v : img) {
    const double re = r.f64();
    const double im = r.f64();
    v = {re, im};
  }
  return img;
}

// FPMSTK: "FPMSTK1\0", u32 J, u32 m1, u32 m2, J real f64 frames, u64 plan digest.

inline Bytes encode_stack(const MeasurementStack& y) {
  detail::require(!y.frames.empty(), "encode_stack: empty stack");
  const int m1 = y.frames.front().rows();
  const int m2 = y.frames.front().cols();
  Bytes out;
  out.reserve(8 + 12 + y.size() * m1 * m2 * 8 + 8);
  detail::ByteWriter w(out);
  w.raw(kStackMagic);
  w.u32(static_cast<std::uint32_t>(y.size()));
  w.u32(static_cast<std::uint32_t>(m1));
  w.u32(static_cast<std::uint32_t>(m2));
  for (const auto& f : y.frames) {
    detail::require(f.rows() == m1 && f.cols() == m2, "encode_stack: frames differ in shape");
    for (double v : f) w.f64(v);
  }
  w.u64(y.plan_digest);
  return out;
}

inline MeasurementStack decode_stack(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "FPMSTK");
  if (r.raw(8) != kStackMagic) throw IoError("FPMSTK: bad magic");
  const std::uint64_t count = r.u32();
  const std::uint64_t m1 = r.u32();
  const std::uint64_t m2 = r.u32();
  const std::uint64_t expected = count * m1 * m2 * 8 + 8;
  if (r.remaining() != expected)
    throw IoError("FPMSTK: payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                  std::to_string(expected));
  MeasurementStack y;
  y.frames.reserve(count);
  for (std::uint64_t j = 0; j < count; ++j) {
    RealImage f(static_cast<int>(m1), static_cast<int>(m2));
    for (auto& v : f) v = r.f64();
    y.frames.push_back(std::move(f));
  }
  y.plan_digest = r.u64();
  return y;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading " + path.string());
  return data;
}

inline std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

/// Writes to a temporary sibling file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw IoError("error while writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline void write_image(const std::filesystem::path& path, const RealImage& img) {
  write_file_atomic(path, encode_image(img));
}
inline RealImage read_real_image(const std::filesystem::path& path) {
  return decode_real_image(read_file(path));
}
inline void write_stack(const std::filesystem::path& path, const MeasurementStack& y) {
  write_file_atomic(path, encode_stack(y));
}
inline MeasurementStack read_stack(const std::filesystem::path& path) {
  return decode_stack(read_file(path));
}

/// 16-bit binary PGM with linear min-max scaling. Returns the (min, max)
/// bounds used so they can be recorded alongside the rendering.
inline std::pair<double, double> write_pgm16(const std::filesystem::path& path, const RealImage& img) {
  detail::require(!img.empty(), "write_pgm16: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.begin(), img.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;
  std::string header = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n65535\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + img.size() * 2);
  for (double v : img) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp((v - lo) / span, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  write_file_atomic(path, out);
  return {lo, hi};
}

/// Grayscale image normalized by the format's maximum value: v / maxval in [0, 1].
/// Accepts binary (P5) and ASCII (P2) PGM with 8- or 16-bit samples.
inline RealImage read_pgm_normalized(const std::filesystem::path& path) {
  const Bytes data = read_file(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(data[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_space();
    std::string t;
    while (pos < data.size() && !std::isspace(data[pos]) && data[pos] != '#') t.push_back(static_cast<char>(data[pos++]));
    if (t.empty()) throw IoError("PGM " + path.string() + ": truncated header");
    return t;
  };
  auto number = [&] {
    const std::string t = token();
    try {
      return std::stol(t);
    } catch (const std::exception&) {
      throw IoError("PGM " + path.string() + ": bad number '" + t + "'");
    }
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw IoError("PGM " + path.string() + ": unsupported magic " + magic);
  const long width = number();
  const long height = number();
  const long maxval = number();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw IoError("PGM " + path.string() + ": bad header values");
  RealImage img(static_cast<int>(height), static_cast<int>(width));
  if (magic == "P2") {
    for (auto& v : img) v = static_cast<double>(number()) / static_cast<double>(maxval);
    return img;
  }
  ++pos;  // single whitespace after maxval
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (data.size() < pos + img.size() * bps) throw IoError("PGM " + path.string() + ": truncated payload");
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::size_t p = pos + i * bps;
    const unsigned s = bps == 2 ? (static_cast<unsigned>(data[p]) << 8) | data[p + 1] : data[p];
    img[i] = static_cast<double>(s) / static_cast<double>(maxval);
  }
  return img;
}

}  // namespace fpm
