#include "hcfs/rangecoder.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

namespace hcfs {

namespace {
constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;
}  // namespace

CdfTable quantize_cdf(const std::vector<double>& pmf) {
  int n = int(pmf.size());
  require<Error>(n >= 1, "quantize_cdf: empty pmf");
  double sum = 0;
  for (double p : pmf) {
    require<Error>(p >= 0 && std::isfinite(p),
                   "quantize_cdf: invalid pmf entry ", p);
    sum += p;
  }
  require<Error>(sum > 0, "quantize_cdf: all-zero pmf");
  require<Error>(n <= int(kCdfTotal), "quantize_cdf: alphabet too large: ", n);

  std::vector<uint32_t> counts(static_cast<size_t>(n));
  std::vector<std::pair<double, int>> rem(static_cast<size_t>(n));
  uint64_t assigned = 0;
  for (int i = 0; i < n; ++i) {
    double scaled = pmf[size_t(i)] / sum * double(kCdfTotal);
    double fl = std::floor(scaled);
    counts[size_t(i)] = uint32_t(fl);
    assigned += uint32_t(fl);
    rem[size_t(i)] = {scaled - fl, i};
  }
  // Hand out the leftover units by largest remainder, lowest index on ties.
  int64_t leftover = int64_t(kCdfTotal) - int64_t(assigned);
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (int64_t k = 0; k < leftover; ++k) counts[size_t(rem[size_t(k % n)].second)]++;

  // Floor empty bins to one count; steal the deficit from the largest bins.
  for (uint32_t& cnt : counts)
    if (cnt == 0) cnt = 1;
  uint64_t total = std::accumulate(counts.begin(), counts.end(), uint64_t(0));
  while (total > kCdfTotal) {
    size_t big = 0;
    for (size_t i = 1; i < counts.size(); ++i)
      if (counts[i] > counts[big]) big = i;
    require<Error>(counts[big] > 1, "quantize_cdf: cannot satisfy floor");
    counts[big]--;
    total--;
  }

  CdfTable t;
  t.cdf.resize(size_t(n) + 1);
  t.cdf[0] = 0;
  for (int i = 0; i < n; ++i) t.cdf[size_t(i) + 1] = t.cdf[size_t(i)] + counts[size_t(i)];
  return t;
}

void RangeEncoder::encode(int symbol, const CdfTable& table) {
  require<Error>(symbol >= 0 && symbol < table.alphabet(),
                 "range encoder: symbol ", symbol, " outside alphabet of ",
                 table.alphabet());
  uint32_t cum = table.cdf[size_t(symbol)];
  uint32_t freq = table.cdf[size_t(symbol) + 1] - cum;
  low_ += cum * (range_ /= kCdfTotal);
  range_ *= freq;
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = -low_ & (kBot - 1)), true))) {
    out_.push_back(uint8_t(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(uint8_t(low_ >> 24));
    low_ <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t len)
    : data_(data), len_(len) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  require<DecodeError>(pos_ < len_, "range decoder: stream exhausted at byte ",
                       pos_);
  return data_[pos_++];
}

int RangeDecoder::decode(const CdfTable& table) {
  uint32_t value = (code_ - low_) / (range_ /= kCdfTotal);
  require<DecodeError>(value < kCdfTotal, "range decoder: corrupt state");
  // Largest s with cdf[s] <= value.
  auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), value);
  int symbol = int(it - table.cdf.begin()) - 1;
  require<DecodeError>(symbol >= 0 && symbol < table.alphabet(),
                       "range decoder: no symbol for slot ", value);
  uint32_t cum = table.cdf[size_t(symbol)];
  uint32_t freq = table.cdf[size_t(symbol) + 1] - cum;
  low_ += cum * range_;
  range_ *= freq;
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = -low_ & (kBot - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
  return symbol;
}

std::vector<uint8_t> encode_symbols(const std::vector<int>& symbols,
                                    const std::vector<const CdfTable*>& tables) {
  require<Error>(symbols.size() == tables.size(),
                 "encode_symbols: ", symbols.size(), " symbols vs ",
                 tables.size(), " tables");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], *tables[i]);
  return enc.finish();
}

std::vector<int> decode_symbols(const std::vector<uint8_t>& bytes,
                                const std::vector<const CdfTable*>& tables) {
  RangeDecoder dec(bytes);
  std::vector<int> out;
  out.reserve(tables.size());
  for (const CdfTable* t : tables) out.push_back(dec.decode(*t));
  return out;
}

// ---------------------------------------------------------------------------

int clamp_symbol(double residual) {
  double r = std::round(residual);  // half away from zero
  if (r < kSymMin) r = kSymMin;
  if (r > kSymMax) r = kSymMax;
  return int(r);
}

namespace {
constexpr int kLutSize = 1024;
constexpr double kLutMax = 8.0;

const std::array<double, kLutSize>& phi_lut() {
  static const std::array<double, kLutSize> lut = [] {
    std::array<double, kLutSize> t{};
    for (int i = 0; i < kLutSize; ++i) {
      double u = kLutMax * double(i) / double(kLutSize - 1);
      t[size_t(i)] = 0.5 * std::erfc(-u * 0.7071067811865475244);
    }
    return t;
  }();
  return lut;
}
}  // namespace

double lut_normal_cdf(double u) {
  bool neg = u < 0;
  double a = neg ? -u : u;
  double p;
  if (a >= kLutMax) {
    p = phi_lut()[kLutSize - 1];
  } else {
    double pos = a / kLutMax * double(kLutSize - 1);
    int i = int(pos);
    if (i >= kLutSize - 1) i = kLutSize - 2;
    double f = pos - double(i);
    p = phi_lut()[size_t(i)] * (1.0 - f) + phi_lut()[size_t(i) + 1] * f;
  }
  return neg ? 1.0 - p : p;
}

std::vector<double> gaussian_pmf(double sigma) {
  require<Error>(sigma > 0 && std::isfinite(sigma),
                 "gaussian_pmf: bad sigma ", sigma);
  std::vector<double> pmf(static_cast<size_t>(kAlphabet));
  double prev = 0.0;  // mass below kSymMin - 0.5 folds into the first bin
  for (int k = kSymMin; k < kSymMax; ++k) {
    double up = lut_normal_cdf((double(k) + 0.5) / sigma);
    pmf[size_t(k - kSymMin)] = up - prev;
    prev = up;
  }
  pmf[size_t(kAlphabet - 1)] = 1.0 - prev;  // tail above kSymMax - 0.5
  return pmf;
}

CdfTable gaussian_cdf_table(double sigma) { return quantize_cdf(gaussian_pmf(sigma)); }

// ---------------------------------------------------------------------------

namespace {
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

struct ByteReader {
  const uint8_t* data;
  size_t len, pos = 0;
  uint8_t u8(const char* what) {
    require<FormatError>(pos + 1 <= len, "container truncated reading ", what);
    return data[pos++];
  }
  uint32_t u32(const char* what) {
    require<FormatError>(pos + 4 <= len, "container truncated reading ", what);
    uint32_t v = uint32_t(data[pos]) | uint32_t(data[pos + 1]) << 8 |
                 uint32_t(data[pos + 2]) << 16 | uint32_t(data[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  std::vector<uint8_t> bytes(size_t n, const char* what) {
    require<FormatError>(pos + n <= len, "container segment overruns file: ",
                         what, " wants ", n, " bytes, ", len - pos, " left");
    std::vector<uint8_t> v(data + pos, data + pos + n);
    pos += n;
    return v;
  }
};
}  // namespace

size_t CodedStream::total_bytes() const {
  size_t n = 4 + 1 + 4 + 4 + 1 + 1 + 4 + z_segment.size();
  for (const auto& s : slice_segments) n += 4 + s.size();
  return n;
}

std::vector<uint8_t> write_container(const CodedStream& s) {
  require<Error>(s.slice_segments.size() <= 255, "container: too many slices");
  std::vector<uint8_t> out;
  out.reserve(s.total_bytes());
  out.insert(out.end(), {'H', 'C', 'F', 'S'});
  out.push_back(kContainerVersion);
  put_u32(out, s.width);
  put_u32(out, s.height);
  out.push_back(s.lambda_index);
  out.push_back(uint8_t(s.slice_segments.size()));
  put_u32(out, uint32_t(s.z_segment.size()));
  out.insert(out.end(), s.z_segment.begin(), s.z_segment.end());
  for (const auto& seg : s.slice_segments) {
    put_u32(out, uint32_t(seg.size()));
    out.insert(out.end(), seg.begin(), seg.end());
  }
  return out;
}

CodedStream read_container(const uint8_t* data, size_t len) {
  ByteReader r{data, len};
  require<FormatError>(len >= 4, "container too short for magic");
  require<FormatError>(data[0] == 'H' && data[1] == 'C' && data[2] == 'F' &&
                           data[3] == 'S',
                       "bad container magic");
  r.pos = 4;
  uint8_t version = r.u8("version");
  require<FormatError>(version == kContainerVersion,
                       "unsupported container version ", int(version));
  CodedStream s;
  s.width = r.u32("width");
  s.height = r.u32("height");
  require<FormatError>(s.width >= 1 && s.height >= 1, "container: zero dims");
  s.lambda_index = r.u8("lambda index");
  uint8_t slices = r.u8("slice count");
  s.z_segment = r.bytes(r.u32("z length"), "z segment");
  s.slice_segments.resize(slices);
  for (int i = 0; i < int(slices); ++i)
    s.slice_segments[size_t(i)] = r.bytes(r.u32("slice length"), "slice segment");
  require<FormatError>(r.pos == len, "container has ", len - r.pos,
                       " trailing bytes");
  return s;
}

void write_bytes_file(const std::string& path, const std::vector<uint8_t>& b) {
  std::ofstream f(path, std::ios::binary);
  require<IoError>(f.good(), "cannot open for write: ", path);
  f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  f.flush();
  require<IoError>(f.good(), "write failed: ", path);
}

std::vector<uint8_t> read_bytes_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  require<IoError>(f.good(), "cannot open for read: ", path);
  std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> b(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(b.data()), n);
  require<IoError>(f.good(), "read failed: ", path);
  return b;
}

}  // namespace hcfs
