// Image I/O, distortion metrics, and the delta-rate comparison of
// rate-distortion curves.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "hcfs/bdrate.h"
#include "hcfs/image.h"

using namespace hcfs;

namespace {

std::vector<uint8_t> ppm_bytes(const std::string& header,
                               const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

bool throws_with(const std::function<void()>& fn, const char* substr) {
  try {
    fn();
  } catch (const Error& e) {
    return std::string(e.what()).find(substr) != std::string::npos;
  }
  return false;
}

RdCurve curve(std::initializer_list<RdPoint> pts, const char* label = "c") {
  RdCurve c;
  c.label = label;
  c.points = pts;
  return c;
}

const RdCurve kAnchor = curve(
    {{0.25, 30.0}, {0.5, 33.0}, {1.0, 36.0}, {2.0, 39.0}}, "anchor");

RdCurve scaled_bpp(const RdCurve& c, double factor) {
  RdCurve out = c;
  out.label = "scaled";
  for (auto& p : out.points) p.bpp *= factor;
  return out;
}

}  // namespace

TEST_CASE("ppm parsing: well-formed images") {
  std::vector<uint8_t> payload = {10, 20, 30, 40, 50, 60,
                                  70, 80, 90, 100, 110, 120};
  ImageBuffer img = parse_ppm(ppm_bytes("P6 2 2 255\n", payload));
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.rgb == payload);

  // Header comments and flexible whitespace are part of the format.
  ImageBuffer c = parse_ppm(ppm_bytes("P6 # cam\n 2\t2\n# x\n255\n", payload));
  CHECK(c.rgb == payload);

  // Payload bytes that look like whitespace are preserved verbatim.
  std::vector<uint8_t> tricky = {'\n', ' ', '\t', 9, 10, 13};
  ImageBuffer t = parse_ppm(ppm_bytes("P6 1 2 255\n", tricky));
  CHECK(t.rgb == tricky);
}

TEST_CASE("ppm parsing: malformed inputs raise distinct errors") {
  std::vector<uint8_t> payload(12, 7);
  CHECK(throws_with([&] { parse_ppm(ppm_bytes("P5 2 2 255\n", payload)); },
                    "unsupported image format"));
  CHECK(throws_with([&] { parse_ppm({'P'}); }, "too short"));
  CHECK(throws_with([&] { parse_ppm(ppm_bytes("P6 2 2 65535\n", payload)); },
                    "unsupported PPM maxval"));
  CHECK(throws_with([&] { parse_ppm(ppm_bytes("P6 ab 2 255\n", payload)); },
                    "bad width"));
  CHECK(throws_with([&] { parse_ppm(ppm_bytes("P6 0 2 255\n", payload)); },
                    "must be >= 1"));
  CHECK(throws_with([&] { parse_ppm(ppm_bytes("P6 2 2 ", {})); },
                    "missing field"));
  CHECK(throws_with([&] { parse_ppm(ppm_bytes("P6 2 2\n", payload)); },
                    "bad maxval"));
  CHECK(throws_with(
      [&] {
        parse_ppm(ppm_bytes("P6 2 2 255\n", {1, 2, 3}));
      },
      "truncated image payload"));
}

TEST_CASE("ppm file roundtrip") {
  ImageBuffer img;
  img.width = 3;
  img.height = 2;
  img.rgb = {0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255,
             100, 101, 102, 200, 201, 202};
  std::string path = "metrics_tmp.ppm";
  save_ppm(path, img);
  ImageBuffer back = load_ppm(path);
  CHECK(back == img);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_ppm("missing_dir/x.ppm"), IoError&);

  ImageBuffer broken = img;
  broken.rgb.pop_back();
  CHECK_THROWS_AS(save_ppm(path, broken), Error&);
}

TEST_CASE("distortion metrics") {
  ImageBuffer a;
  a.width = 4;
  a.height = 2;
  a.rgb.assign(24, 100);
  CHECK(mse_8bit(a, a) == 0.0);
  CHECK(psnr_db(a, a) == 100.0);

  ImageBuffer b = a;
  for (auto& v : b.rgb) v = 101;  // off by one everywhere -> mse 1
  CHECK(mse_8bit(a, b) == 1.0);
  CHECK(std::abs(psnr_db(a, b) - 48.1308036086791) < 1e-9);

  ImageBuffer w = a, k = a;
  for (auto& v : w.rgb) v = 255;
  for (auto& v : k.rgb) v = 0;
  CHECK(mse_8bit(w, k) == 255.0 * 255.0);
  CHECK(psnr_db(w, k) == 0.0);

  ImageBuffer other;
  other.width = 2;
  other.height = 2;
  other.rgb.assign(12, 0);
  CHECK_THROWS_AS(mse_8bit(a, other), ShapeError&);

  CHECK(psnr_from_mse(0.0) == 100.0);
  CHECK(psnr_from_mse(65025.0) == 0.0);
}

TEST_CASE("image and tensor conversions") {
  ImageBuffer img;
  img.width = 2;
  img.height = 1;
  img.rgb = {0, 128, 255, 51, 102, 204};  // two pixels, interleaved RGB
  Tensor<double> t = image_to_tensor<double>(img);
  REQUIRE(t.shape == std::vector<int>{3, 1, 2});
  // Planar layout: channel R holds both pixels first.
  CHECK(t.data[0] == 0.0);
  CHECK(t.data[1] == 51.0 / 255.0);
  CHECK(t.data[2] == 128.0 / 255.0);
  CHECK(t.data[3] == 102.0 / 255.0);
  CHECK(t.data[4] == 1.0);
  CHECK(t.data[5] == 204.0 / 255.0);

  ImageBuffer back = tensor_to_image(t);
  CHECK(back == img);

  // Every byte value survives the roundtrip.
  ImageBuffer all;
  all.width = 256;
  all.height = 1;
  all.rgb.resize(768);
  for (int i = 0; i < 256; ++i)
    for (int ch = 0; ch < 3; ++ch)
      all.rgb[size_t(3 * i + ch)] = uint8_t(i);
  CHECK(tensor_to_image(image_to_tensor<double>(all)) == all);
  CHECK(tensor_to_image(image_to_tensor<float>(all)) == all);

  // Out-of-range tensor values clamp at byte conversion.
  Tensor<double> hot({3, 1, 1});
  hot.data = {-0.2, 0.5, 1.3};
  ImageBuffer clamped = tensor_to_image(hot);
  CHECK(clamped.rgb == std::vector<uint8_t>{0, 128, 255});

  CHECK_THROWS_AS(tensor_to_image(Tensor<double>({1, 2, 2})), ShapeError&);
}

TEST_CASE("delta rate: identical and uniformly scaled curves") {
  CHECK(std::abs(bd_rate_percent(kAnchor, kAnchor)) < 1e-9);

  double up = bd_rate_percent(kAnchor, scaled_bpp(kAnchor, 1.10));
  CHECK(std::abs(up - 10.0) < 1e-6);

  double down = bd_rate_percent(kAnchor, scaled_bpp(kAnchor, 0.8));
  CHECK(std::abs(down - (-20.0)) < 1e-6);

  // Direction flips when anchor and test swap (not symmetric in general,
  // but a uniform scale gives the exact reciprocal).
  double inv = bd_rate_percent(scaled_bpp(kAnchor, 1.10), kAnchor);
  CHECK(std::abs((1.0 + up / 100.0) * (1.0 + inv / 100.0) - 1.0) < 1e-8);
}

TEST_CASE("delta rate: cross-checked on distinct curves") {
  RdCurve test = curve(
      {{0.22, 29.5}, {0.47, 33.2}, {0.95, 36.1}, {1.9, 39.3}}, "test");
  // Oracle value from an independent cubic fit + analytic integration.
  CHECK(std::abs(bd_rate_percent(kAnchor, test) - (-8.433824645901499)) <
        1e-9);
}

TEST_CASE("delta rate: input validation") {
  RdCurve three = curve({{0.2, 30.0}, {0.4, 33.0}, {0.8, 36.0}}, "short");
  CHECK_THROWS_AS(validate_curve(three), Error&);

  RdCurve nonmono = kAnchor;
  nonmono.points[2].bpp = 0.3;  // bpp must increase
  CHECK_THROWS_AS(validate_curve(nonmono), Error&);

  RdCurve zero = kAnchor;
  zero.points[0].bpp = 0.0;
  CHECK_THROWS_AS(validate_curve(zero), Error&);

  // Decreasing psnr warns but stays usable.
  RdCurve wobble = kAnchor;
  wobble.points[2].psnr = 32.0;
  validate_curve(wobble);

  RdCurve high = curve(
      {{0.25, 50.0}, {0.5, 53.0}, {1.0, 56.0}, {2.0, 59.0}}, "high");
  CHECK_THROWS_AS(bd_rate_percent(kAnchor, high), Error&);
}

TEST_CASE("rate curve CSV parsing") {
  std::string path = "metrics_curve_tmp.csv";
  {
    std::ofstream f(path);
    f << "bpp,psnr\n0.25,30\n0.5,33\r\n\n1.0,36\n2.0,39\n";
  }
  RdCurve c = parse_rd_csv(path, "mine");
  CHECK(c.label == "mine");
  REQUIRE(c.points.size() == 4);
  CHECK(c.points[1].bpp == 0.5);
  CHECK(c.points[3].psnr == 39.0);

  {
    std::ofstream f(path);
    f << "rate,quality\n0.25,30\n";
  }
  CHECK(throws_with([&] { parse_rd_csv(path, ""); }, "expected header"));

  {
    std::ofstream f(path);
    f << "bpp,psnr\n0.25,30\n0.5;33\n1.0,36\n2.0,39\n";
  }
  CHECK(throws_with([&] { parse_rd_csv(path, ""); }, "line 3"));

  {
    std::ofstream f(path);
    f << "";
  }
  CHECK(throws_with([&] { parse_rd_csv(path, ""); }, "empty curve file"));

  std::remove(path.c_str());
  CHECK_THROWS_AS(parse_rd_csv("no_such_curve.csv", ""), IoError&);
}
