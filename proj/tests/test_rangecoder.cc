// Range coder: CDF quantization, roundtrips, coding efficiency, the Gaussian
// symbol tables, and the bitstream container.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <string>

#include "doctest.h"
#include "hcfs/rangecoder.h"
#include "hcfs/rng.h"

using namespace hcfs;

namespace {

bool throws_with(const std::function<void()>& fn, const char* substr) {
  try {
    fn();
  } catch (const Error& e) {
    return std::string(e.what()).find(substr) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("cdf quantization: exact fixtures") {
  CdfTable u4 = quantize_cdf({1, 1, 1, 1});
  CHECK(u4.cdf == std::vector<uint32_t>{0, 16384, 32768, 49152, 65536});
  CHECK(u4.alphabet() == 4);

  CdfTable skew = quantize_cdf({3, 1});
  CHECK(skew.cdf == std::vector<uint32_t>{0, 49152, 65536});

  // A zero-probability bin is floored to one count, stolen from the largest.
  CdfTable deg = quantize_cdf({1, 0});
  CHECK(deg.cdf == std::vector<uint32_t>{0, 65535, 65536});

  CHECK_THROWS_AS(quantize_cdf({}), Error&);
  CHECK_THROWS_AS(quantize_cdf({0, 0, 0}), Error&);
  CHECK_THROWS_AS(quantize_cdf({1, -0.5}), Error&);
  CHECK_THROWS_AS(quantize_cdf({1, std::nan("")}), Error&);
}

TEST_CASE("cdf quantization: random tables are valid") {
  Rng rng(80);
  for (int trial = 0; trial < 10000; ++trial) {
    int n = int(rng.uniform_int(1, 300));
    std::vector<double> pmf(static_cast<size_t>(n));
    bool any = false;
    for (auto& p : pmf) {
      p = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
      any = any || p > 0;
    }
    if (!any) pmf[size_t(rng.uniform_int(0, n - 1))] = 0.5;
    CdfTable t = quantize_cdf(pmf);
    REQUIRE(int(t.cdf.size()) == n + 1);
    REQUIRE(t.cdf.front() == 0);
    REQUIRE(t.cdf.back() == kCdfTotal);
    for (size_t i = 1; i < t.cdf.size(); ++i) REQUIRE(t.cdf[i] > t.cdf[i - 1]);
  }
}

TEST_CASE("range coder: random roundtrips") {
  Rng rng(81);
  for (int trial = 0; trial < 1000; ++trial) {
    // A few tables of varying shape, cycled across positions.
    int n_tables = int(rng.uniform_int(1, 3));
    std::vector<CdfTable> tables;
    for (int t = 0; t < n_tables; ++t) {
      int alpha = int(rng.uniform_int(2, 64));
      std::vector<double> pmf(static_cast<size_t>(alpha));
      for (auto& p : pmf) p = rng.uniform() < 0.25 ? 0.0 : rng.uniform();
      pmf[size_t(rng.uniform_int(0, alpha - 1))] += 0.5;
      tables.push_back(quantize_cdf(pmf));
    }
    int count = int(rng.uniform_int(0, 50));
    std::vector<int> syms(static_cast<size_t>(count));
    std::vector<const CdfTable*> refs(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      const CdfTable& t = tables[size_t(i % n_tables)];
      syms[size_t(i)] = int(rng.uniform_int(0, t.alphabet() - 1));
      refs[size_t(i)] = &t;
    }
    std::vector<uint8_t> bytes = encode_symbols(syms, refs);
    REQUIRE(decode_symbols(bytes, refs) == syms);
  }
}

TEST_CASE("range coder: empty stream and flush size") {
  RangeEncoder enc;
  std::vector<uint8_t> bytes = enc.finish();
  CHECK(bytes.size() == 4);  // flush emits exactly the 32-bit low register
  RangeDecoder dec(bytes);   // consumes the 4 bytes, decodes nothing
  (void)dec;
  CHECK_THROWS_AS(RangeDecoder(bytes.data(), 3), DecodeError&);
}

TEST_CASE("range coder: uniform bytes cost one byte each") {
  Rng rng(82);
  std::vector<double> pmf(256, 1.0);
  CdfTable t = quantize_cdf(pmf);
  int n = 10000;
  std::vector<int> syms(static_cast<size_t>(n));
  std::vector<const CdfTable*> refs(size_t(n), &t);
  for (auto& s : syms) s = int(rng.uniform_int(0, 255));
  std::vector<uint8_t> bytes = encode_symbols(syms, refs);
  CHECK(bytes.size() >= size_t(n));
  CHECK(bytes.size() <= size_t(n) + 12);
  CHECK(decode_symbols(bytes, refs) == syms);
}

TEST_CASE("range coder: length tracks the table entropy") {
  Rng rng(83);
  CdfTable t = gaussian_cdf_table(3.0);
  int n = 100000;
  std::vector<int> syms(static_cast<size_t>(n));
  std::vector<const CdfTable*> refs(size_t(n), &t);
  // Draw from the quantized table itself so the model matches the source.
  for (auto& s : syms) {
    uint32_t u = uint32_t(rng.uniform_int(0, int64_t(kCdfTotal) - 1));
    int lo = 0, hi = t.alphabet();
    while (hi - lo > 1) {
      int mid = (lo + hi) / 2;
      (t.cdf[size_t(mid)] <= u ? lo : hi) = mid;
    }
    s = lo;
  }
  double ideal_bits = 0;
  for (int s : syms) {
    double p = double(t.cdf[size_t(s) + 1] - t.cdf[size_t(s)]) /
               double(kCdfTotal);
    ideal_bits -= std::log2(p);
  }
  std::vector<uint8_t> bytes = encode_symbols(syms, refs);
  double coded_bits = double(bytes.size()) * 8.0;
  CHECK(coded_bits <= ideal_bits * 1.001 + 128.0);
  CHECK(coded_bits >= ideal_bits - 64.0);
  CHECK(decode_symbols(bytes, refs) == syms);
}

TEST_CASE("range coder: truncated streams raise decode errors") {
  Rng rng(84);
  CdfTable t = gaussian_cdf_table(1.5);
  int n = 400;
  std::vector<int> syms(static_cast<size_t>(n));
  std::vector<const CdfTable*> refs(size_t(n), &t);
  for (auto& s : syms) s = clamp_symbol(rng.normal() * 1.5) - kSymMin;
  std::vector<uint8_t> bytes = encode_symbols(syms, refs);
  std::vector<uint8_t> cut(bytes.begin(),
                           bytes.begin() + ptrdiff_t(bytes.size() / 2));
  CHECK_THROWS_AS(decode_symbols(cut, refs), DecodeError&);
}

TEST_CASE("symbol clamping") {
  CHECK(clamp_symbol(0.0) == 0);
  CHECK(clamp_symbol(0.4) == 0);
  CHECK(clamp_symbol(0.5) == 1);    // round half away from zero
  CHECK(clamp_symbol(-0.5) == -1);
  CHECK(clamp_symbol(2.49) == 2);
  CHECK(clamp_symbol(127.6) == 128);
  CHECK(clamp_symbol(128.4) == 128);
  CHECK(clamp_symbol(4000.0) == 128);
  CHECK(clamp_symbol(-126.6) == -127);
  CHECK(clamp_symbol(-4000.0) == -127);
  CHECK(kAlphabet == 256);
}

TEST_CASE("normal CDF lookup: accuracy and symmetry") {
  double worst = 0;
  for (int i = 0; i <= 40000; ++i) {
    double u = -10.0 + 20.0 * double(i) / 40000.0;
    double exact = 0.5 * std::erfc(-u * 0.7071067811865475244);
    worst = std::max(worst, std::abs(lut_normal_cdf(u) - exact));
  }
  CHECK(worst < 5e-6);
  CHECK(lut_normal_cdf(0.0) == 0.5);
  for (double u : {0.3, 1.7, 4.2})
    CHECK(std::abs(lut_normal_cdf(-u) - (1.0 - lut_normal_cdf(u))) < 1e-15);
  CHECK(lut_normal_cdf(8.0) == lut_normal_cdf(9.5));  // saturated tail
}

TEST_CASE("gaussian symbol pmf: normalization and edge folding") {
  for (double sigma : {0.04, 0.5, 1.0, 3.0, 50.0}) {
    std::vector<double> pmf = gaussian_pmf(sigma);
    REQUIRE(int(pmf.size()) == kAlphabet);
    double sum = 0;
    for (double p : pmf) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  // Wide scales fold heavy tail mass into the edge bins.
  std::vector<double> wide = gaussian_pmf(50.0);
  CHECK(wide.front() > 4.0 * wide[1]);
  CHECK(wide.back() > 4.0 * wide[size_t(kAlphabet) - 2]);

  // Tiny scales put almost everything on symbol zero, floors keep the rest.
  CdfTable tiny = gaussian_cdf_table(0.04);
  uint32_t zero_count =
      tiny.cdf[size_t(-kSymMin) + 1] - tiny.cdf[size_t(-kSymMin)];
  CHECK(zero_count == kCdfTotal - uint32_t(kAlphabet) + 1);
  for (size_t i = 1; i < tiny.cdf.size(); ++i)
    REQUIRE(tiny.cdf[i] > tiny.cdf[i - 1]);

  CHECK_THROWS_AS(gaussian_pmf(0.0), Error&);
  CHECK_THROWS_AS(gaussian_pmf(-1.0), Error&);
  CHECK_THROWS_AS(gaussian_pmf(std::nan("")), Error&);
}

TEST_CASE("container: roundtrip preserves every field") {
  CodedStream s;
  s.width = 1920;
  s.height = 1080;
  s.lambda_index = 3;
  s.z_segment = {1, 2, 3, 4, 5};
  s.slice_segments = {{}, {9, 8, 7, 6, 5, 4, 3}, {42}};
  std::vector<uint8_t> bytes = write_container(s);
  CHECK(bytes.size() == s.total_bytes());

  CodedStream r = read_container(bytes);
  CHECK(r.width == 1920);
  CHECK(r.height == 1080);
  CHECK(r.lambda_index == 3);
  CHECK(r.z_segment == s.z_segment);
  CHECK(r.slice_segments == s.slice_segments);

  CodedStream one;
  one.width = 1;
  one.height = 1;
  one.slice_segments = {{7}};
  CodedStream r1 = read_container(write_container(one));
  CHECK(r1.width == 1);
  CHECK(r1.slice_segments.size() == 1);
}

TEST_CASE("container: malformed inputs raise distinct format errors") {
  CodedStream s;
  s.width = 8;
  s.height = 8;
  s.z_segment = {1, 2, 3};
  s.slice_segments = {{4, 5}};
  std::vector<uint8_t> good = write_container(s);

  std::vector<uint8_t> bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(throws_with([&] { read_container(bad_magic); }, "magic"));

  std::vector<uint8_t> bad_version = good;
  bad_version[4] = 99;
  CHECK(throws_with([&] { read_container(bad_version); }, "version"));

  std::vector<uint8_t> zero_dims = good;
  zero_dims[5] = zero_dims[6] = zero_dims[7] = zero_dims[8] = 0;
  CHECK(throws_with([&] { read_container(zero_dims); }, "zero dims"));

  for (size_t cut : {size_t(3), size_t(7), size_t(14), good.size() - 1}) {
    std::vector<uint8_t> trunc(good.begin(), good.begin() + ptrdiff_t(cut));
    CHECK_THROWS_AS(read_container(trunc), FormatError&);
  }

  std::vector<uint8_t> trailing = good;
  trailing.push_back(0);
  CHECK(throws_with([&] { read_container(trailing); }, "trailing"));
}

TEST_CASE("byte file helpers") {
  std::string path = "rc_bytes_tmp.bin";
  std::vector<uint8_t> payload = {0, 255, 13, 10, 26, 7};
  write_bytes_file(path, payload);
  CHECK(read_bytes_file(path) == payload);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_bytes_file("no_such_dir/nope.bin"), IoError&);
}
