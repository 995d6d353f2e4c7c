#include "hcfs/selftest.h"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hcfs/bdrate.h"
#include "hcfs/codec.h"
#include "hcfs/train.h"

namespace hcfs {

namespace {

void check(bool ok, const std::string& what) {
  require<Error>(ok, what);
}

void near(double a, double b, double tol, const std::string& what) {
  check(std::fabs(a - b) <= tol, what + ": " + std::to_string(a) + " vs " +
                                     std::to_string(b));
}

void test_zoh() {
  double a_bar, b_bar;
  zoh_discretize(-1.0, 1.0, std::log(2.0), a_bar, b_bar);
  near(a_bar, 0.5, 1e-12, "zoh state factor");
  near(b_bar, 0.5, 1e-12, "zoh input factor");
}

void test_scan_orders() {
  auto orders = build_scan_orders(4, 5);
  check(orders.size() == 8, "expected 8 scan orders");
  for (const auto& o : orders) {
    std::vector<int> seen(20, 0);
    for (int p : o.perm) seen[size_t(p)]++;
    for (int s : seen) check(s == 1, "scan order is not a bijection");
  }
  // Diagonal groups on 2x2 visit (1,0),(0,0),(1,1),(0,1): pixels 2,0,3,1.
  auto d2 = build_scan_orders(2, 2);
  const auto& diag = d2[4].perm;
  check(diag[0] == 2 && diag[1] == 0 && diag[2] == 3 && diag[3] == 1,
        "diagonal order on 2x2");
}

void test_dct() {
  Tensor<double> ones({1, 2, 2}, 1.0);
  Tensor<double> f = dct2(ones);
  near(f.data[0], 2.0, 1e-12, "DC of all-ones 2x2");
  Rng rng(11);
  Tensor<double> x({2, 8, 8});
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  Tensor<double> back = idct2(dct2(x));
  for (size_t i = 0; i < x.data.size(); ++i)
    near(back.data[i], x.data[i], 1e-9, "DCT roundtrip");
}

void test_quantize_cdf() {
  CdfTable u4 = quantize_cdf({1, 1, 1, 1});
  check(u4.cdf == std::vector<uint32_t>({0, 16384, 32768, 49152, 65536}),
        "uniform-4 table");
  CdfTable skew = quantize_cdf({1, 0});
  check(skew.cdf == std::vector<uint32_t>({0, 65535, 65536}),
        "floored zero-probability bin");
}

void test_coder_roundtrip() {
  Rng rng(5);
  std::vector<CdfTable> tables;
  std::vector<const CdfTable*> refs;
  std::vector<int> syms;
  for (int i = 0; i < 500; ++i) {
    int n = int(rng.uniform_int(2, 12));
    std::vector<double> pmf;
    for (int j = 0; j < n; ++j) pmf.push_back(rng.uniform(0.0, 1.0));
    tables.push_back(quantize_cdf(pmf));
    syms.push_back(int(rng.uniform_int(0, n - 1)));
  }
  for (const auto& t : tables) refs.push_back(&t);
  std::vector<int> back = decode_symbols(encode_symbols(syms, refs), refs);
  check(back == syms, "range coder roundtrip");
}

void test_container() {
  CodedStream s;
  s.width = 65;
  s.height = 129;
  s.lambda_index = 3;
  s.z_segment = {1, 2, 3};
  s.slice_segments = {{4, 5}, {}, {6}};
  std::vector<uint8_t> bytes = write_container(s);
  CodedStream r = read_container(bytes);
  check(r.width == 65 && r.height == 129 && r.lambda_index == 3 &&
            r.z_segment == s.z_segment && r.slice_segments == s.slice_segments,
        "container roundtrip");
  bytes[0] = 'X';
  bool threw = false;
  try {
    read_container(bytes);
  } catch (const FormatError&) {
    threw = true;
  }
  check(threw, "bad magic must raise a format error");
}

void test_gaussian_prob() {
  Tensor<double> k({1}, 0.0), mu({1}, 0.0), sg({1}, 1.0);
  Tensor<double> p = gaussian_bin_prob(k, mu, sg, 0.0);
  near(p.data[0], 0.3829249225480263, 1e-9, "unit-normal central bin");
}

void test_ppm() {
  std::vector<uint8_t> bytes = {'P', '6', '\n', '2', ' ', '2', '\n',
                                '2', '5', '5', '\n'};
  for (int i = 0; i < 12; ++i) bytes.push_back(uint8_t(10 * i));
  ImageBuffer img = parse_ppm(bytes);
  check(img.width == 2 && img.height == 2 && img.rgb[5] == 50,
        "ppm header + payload");
}

void test_codec_roundtrip() {
  Model<float> model(ModelConfig::micro(), 321);
  ImageBuffer img;
  img.width = 9;
  img.height = 7;
  img.rgb.resize(size_t(3) * 9 * 7);
  Rng rng(8);
  for (auto& v : img.rgb) v = uint8_t(rng.uniform_int(0, 255));
  LatentBundle<float> enc;
  CodedStream stream = encode_image(model, img, &enc);
  LatentBundle<float> dec = decode_latents(model, read_container(write_container(stream)));
  check(enc.z_hat.data == dec.z_hat.data, "side latent bit-exact");
  check(enc.y_bar.data == dec.y_bar.data, "main latent bit-exact");
  ImageBuffer out = decode_image(model, stream);
  check(out.width == 9 && out.height == 7, "decoded dims");
}

void test_bdrate_identity() {
  RdCurve a{"a", {{0.25, 30}, {0.5, 33}, {1.0, 36}, {2.0, 39}}};
  near(bd_rate_percent(a, a), 0.0, 1e-9, "identical curves");
}

}  // namespace

int run_selftest(std::ostream& os) {
  std::vector<std::pair<std::string, std::function<void()>>> checks = {
      {"zoh-discretization", test_zoh},
      {"scan-orders", test_scan_orders},
      {"dct", test_dct},
      {"quantize-cdf", test_quantize_cdf},
      {"range-coder-roundtrip", test_coder_roundtrip},
      {"container", test_container},
      {"gaussian-bin-prob", test_gaussian_prob},
      {"ppm", test_ppm},
      {"codec-latent-roundtrip", test_codec_roundtrip},
      {"bd-rate-identity", test_bdrate_identity},
  };
  int failures = 0;
  for (auto& [name, fn] : checks) {
    try {
      fn();
      os << "PASS " << name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      os << "FAIL " << name << ": " << e.what() << "\n";
    }
  }
  return failures;
}

}  // namespace hcfs
