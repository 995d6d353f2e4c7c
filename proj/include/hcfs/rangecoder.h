#pragma once

// Bit-exact integer range coder over quantized CDF tables, Gaussian table
// construction from a fixed normal-CDF lookup, and the ".hcfs" bitstream
// container.

#include <cstdint>
#include <string>
#include <vector>

#include "hcfs/error.h"

namespace hcfs {

// Coder probability precision: cumulative totals are scaled to 2^16.
inline constexpr uint32_t kCdfTotal = 1u << 16;

// Quantized cumulative counts; cdf[0] = 0, cdf[n] = 65536, strictly
// increasing (every symbol holds at least one count).
struct CdfTable {
  std::vector<uint32_t> cdf;
  int alphabet() const { return int(cdf.size()) - 1; }
};

// Scale a nonnegative pmf to integer counts totalling 2^16 by largest-
// remainder rounding, then floor every empty bin to one count, stealing the
// deficit from the largest bins.  Throws on an all-zero pmf.
CdfTable quantize_cdf(const std::vector<double>& pmf);

// Carry-less 32-bit range coder, 16-bit probability precision.
class RangeEncoder {
 public:
  void encode(int symbol, const CdfTable& table);
  // Flushes and returns the coded bytes; the encoder is spent afterwards.
  std::vector<uint8_t> finish();

 private:
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t len);
  explicit RangeDecoder(const std::vector<uint8_t>& bytes)
      : RangeDecoder(bytes.data(), bytes.size()) {}
  int decode(const CdfTable& table);

 private:
  const uint8_t* data_;
  size_t len_, pos_ = 0;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
  uint8_t next_byte();
};

std::vector<uint8_t> encode_symbols(const std::vector<int>& symbols,
                                    const std::vector<const CdfTable*>& tables);
std::vector<int> decode_symbols(const std::vector<uint8_t>& bytes,
                                const std::vector<const CdfTable*>& tables);

// ---------------------------------------------------------------------------
// Symbol alphabet for latent residuals: clamped integers in [-127, 128],
// coded as offsets in [0, 255].  Out-of-range mass is folded into the edge
// bins, so every value is codeable without an escape mechanism.

inline constexpr int kSymMin = -127;
inline constexpr int kSymMax = 128;
inline constexpr int kAlphabet = kSymMax - kSymMin + 1;

int clamp_symbol(double residual);

// Standard normal CDF from a fixed 1024-entry lookup over [0, 8] with linear
// interpolation and symmetric extension — the single definition both coder
// sides use so their tables match bit-exactly.
double lut_normal_cdf(double u);

// Residual pmf over the clamped alphabet for residual ~ N(0, sigma^2),
// out-of-range mass folded into the edge bins; and its quantized table.
std::vector<double> gaussian_pmf(double sigma);
CdfTable gaussian_cdf_table(double sigma);

// ---------------------------------------------------------------------------
// Bitstream container: magic "HCFS", version, original dims, lambda index,
// slice count, a z segment and per-slice segments (u32 little-endian
// lengths).

inline constexpr uint8_t kContainerVersion = 1;

struct CodedStream {
  uint32_t width = 0, height = 0;
  uint8_t lambda_index = 0;
  std::vector<uint8_t> z_segment;
  std::vector<std::vector<uint8_t>> slice_segments;

  size_t total_bytes() const;
};

std::vector<uint8_t> write_container(const CodedStream& s);
CodedStream read_container(const uint8_t* data, size_t len);
inline CodedStream read_container(const std::vector<uint8_t>& b) {
  return read_container(b.data(), b.size());
}

// File helpers (IoError on filesystem failure).
void write_bytes_file(const std::string& path, const std::vector<uint8_t>& b);
std::vector<uint8_t> read_bytes_file(const std::string& path);

}  // namespace hcfs
