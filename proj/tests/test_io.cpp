#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <limits>
#include <unistd.h>

#include "fpm/image_io.hpp"

using namespace fpm;

namespace {

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / ("fpm_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(d);
  return d;
}

std::uint32_t u32_at(const Bytes& b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

TEST(Fpmimg, HeaderLayout) {
  RealImage img(3, 5);  // rows x cols
  img(2, 4) = 1.5;
  const Bytes b = encode_image(img);
  ASSERT_EQ(b.size(), 24u + 15u * 8u);
  EXPECT_EQ(std::memcmp(b.data(), "FPMIMG1\0", 8), 0);
  EXPECT_EQ(u32_at(b, 8), 5u);   // width
  EXPECT_EQ(u32_at(b, 12), 3u);  // height
  EXPECT_EQ(b[16], 1);
  for (int i = 17; i < 24; ++i) EXPECT_EQ(b[i], 0);
  // last value, little-endian f64
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[24 + 14 * 8 + i]) << (8 * i);
  EXPECT_EQ(std::bit_cast<double>(bits), 1.5);
}

TEST(Fpmimg, RealRoundTripIsBitExact) {
  RealImage img(2, 3, {0.1, -0.0, std::numeric_limits<double>::infinity(),
                       std::numeric_limits<double>::denorm_min(), 1e308, -3.25});
  const auto back = decode_real_image(encode_image(img));
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(img[i]));
  RealImage nan_img(1, 1, std::nan(""));
  EXPECT_TRUE(std::isnan(decode_real_image(encode_image(nan_img))[0]));
}

TEST(Fpmimg, ComplexRoundTrip) {
  ComplexImage img(2, 2, {Complex(1, 2), Complex(-3, 0.5), Complex(0, -0.0), Complex(1e-300, 7)});
  const Bytes b = encode_image(img);
  EXPECT_EQ(b[16], 2);
  EXPECT_EQ(decode_complex_image(b), img);
  EXPECT_THROW(decode_real_image(b), IoError);
  EXPECT_THROW(decode_complex_image(encode_image(RealImage(2, 2))), IoError);
}

TEST(Fpmimg, MalformedInputIsRejected) {
  const Bytes good = encode_image(RealImage(2, 2, 1.0));
  Bytes bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_real_image(bad), IoError);
  bad = good;
  bad.pop_back();
  EXPECT_THROW(decode_real_image(bad), IoError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(decode_real_image(bad), IoError);
  bad = good;
  bad[16] = 9;
  EXPECT_THROW(decode_real_image(bad), IoError);
  EXPECT_THROW(decode_real_image(Bytes(10, 0)), IoError);
  EXPECT_THROW(decode_real_image(Bytes{}), IoError);
  bad = good;
  bad[8] = bad[9] = bad[10] = bad[11] = 0xff;  // absurd width
  EXPECT_THROW(decode_real_image(bad), IoError);
}

TEST(Fpmstk, RoundTripKeepsDigest) {
  MeasurementStack y;
  y.frames = {RealImage(2, 3, 1.0), RealImage(2, 3, 2.0)};
  y.plan_digest = 0x0123456789abcdefULL;
  const Bytes b = encode_stack(y);
  EXPECT_EQ(b.size(), 8u + 12u + 2u * 6u * 8u + 8u);
  EXPECT_EQ(u32_at(b, 8), 2u);
  EXPECT_EQ(u32_at(b, 12), 2u);
  EXPECT_EQ(u32_at(b, 16), 3u);
  EXPECT_EQ(decode_stack(b), y);
}

TEST(Fpmstk, MalformedInputIsRejected) {
  MeasurementStack y;
  y.frames = {RealImage(2, 2)};
  const Bytes good = encode_stack(y);
  Bytes bad = good;
  bad.resize(bad.size() - 3);
  EXPECT_THROW(decode_stack(bad), IoError);
  bad = good;
  bad[8] = 5;  // claims 5 frames
  EXPECT_THROW(decode_stack(bad), IoError);
  EXPECT_THROW(decode_stack(encode_image(RealImage(2, 2))), IoError);
  y.frames.push_back(RealImage(3, 2));
  EXPECT_THROW(encode_stack(y), InvalidArgument);
}

TEST(Files, AtomicWriteAndMissingFiles) {
  const auto dir = temp_dir();
  const auto p = dir / "a.fpmimg";
  const RealImage img(4, 4, 0.5);
  write_image(p, img);
  write_image(p, img);  // overwrite in place
  EXPECT_EQ(read_real_image(p), img);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    EXPECT_EQ(e.path().filename().string().find(".tmp"), std::string::npos);
  EXPECT_THROW(read_real_image(dir / "missing.fpmimg"), IoError);
  EXPECT_THROW(write_image(dir / "no" / "such" / "dir.fpmimg", img), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Pgm, SixteenBitRoundTrip) {
  const auto dir = temp_dir();
  RealImage img(3, 4);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = -1.0 + 0.37 * static_cast<double>(i);
  const auto [lo, hi] = write_pgm16(dir / "a.pgm", img);
  EXPECT_EQ(lo, -1.0);
  EXPECT_DOUBLE_EQ(hi, -1.0 + 0.37 * 11);
  const auto back = read_pgm_normalized(dir / "a.pgm");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], (img[i] - lo) / (hi - lo), 0.5 / 65535.0 + 1e-15);
  const auto bytes = read_file(dir / "a.pgm");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 13), "P5\n4 3\n65535\n");
  std::filesystem::remove_all(dir);
}

TEST(Pgm, EightBitAndAsciiWithComments) {
  const auto dir = temp_dir();
  std::string p5 = "P5\n# comment\n2 2\n255\n";
  p5 += std::string{'\0', '\x7f', '\xff', '\x33'};
  write_file_atomic(dir / "b.pgm", p5);
  const auto b = read_pgm_normalized(dir / "b.pgm");
  EXPECT_EQ(b(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(b(0, 1), 127.0 / 255.0);
  EXPECT_EQ(b(1, 0), 1.0);
  write_file_atomic(dir / "c.pgm", std::string("P2 3 1 10\n0 5 # half\n10\n"));
  const auto c = read_pgm_normalized(dir / "c.pgm");
  EXPECT_EQ(c[1], 0.5);
  EXPECT_EQ(c[2], 1.0);
  write_file_atomic(dir / "d.pgm", std::string("P5\n4 4\n255\nab"));
  EXPECT_THROW(read_pgm_normalized(dir / "d.pgm"), IoError);
  write_file_atomic(dir / "e.pgm", std::string("P6\n1 1\n255\nabc"));
  EXPECT_THROW(read_pgm_normalized(dir / "e.pgm"), IoError);
  write_file_atomic(dir / "f.pgm", std::string("P2\n1 1\n70000\n1\n"));
  EXPECT_THROW(read_pgm_normalized(dir / "f.pgm"), IoError);
  std::filesystem::remove_all(dir);
}
