#include "hcfs/image.h"

#include <cctype>
#include <cmath>
#include <fstream>

namespace hcfs {

namespace {
// Reads one whitespace/comment-delimited token of a PPM header.
std::string next_token(const std::vector<uint8_t>& b, size_t& pos) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  size_t start = pos;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') ++pos;
  require<FormatError>(pos > start, "malformed image header: missing field");
  return std::string(b.begin() + std::ptrdiff_t(start),
                     b.begin() + std::ptrdiff_t(pos));
}

int parse_dim(const std::string& tok, const char* what) {
  for (char ch : tok)
    require<FormatError>(std::isdigit(static_cast<unsigned char>(ch)),
                         "malformed image header: bad ", what, " '", tok, "'");
  require<FormatError>(tok.size() <= 9, "malformed image header: ", what,
                       " too large");
  int v = std::stoi(tok);
  require<FormatError>(v >= 1, "malformed image header: ", what, " must be >= 1");
  return v;
}
}  // namespace

ImageBuffer parse_ppm(const std::vector<uint8_t>& bytes) {
  require<FormatError>(bytes.size() >= 2, "image too short for magic");
  require<FormatError>(bytes[0] == 'P' && bytes[1] == '6',
                       "unsupported image format (need binary PPM P6)");
  size_t pos = 2;
  ImageBuffer img;
  img.width = parse_dim(next_token(bytes, pos), "width");
  img.height = parse_dim(next_token(bytes, pos), "height");
  int maxval = parse_dim(next_token(bytes, pos), "maxval");
  require<FormatError>(maxval == 255, "unsupported PPM maxval ", maxval,
                       " (need 255)");
  // Exactly one whitespace byte separates the header from the payload.
  require<FormatError>(pos < bytes.size() && std::isspace(bytes[pos]),
                       "malformed image header: missing payload separator");
  ++pos;
  size_t need = 3 * size_t(img.width) * size_t(img.height);
  require<FormatError>(bytes.size() - pos >= need,
                       "truncated image payload: need ", need, " bytes, have ",
                       bytes.size() - pos);
  img.rgb.assign(bytes.begin() + std::ptrdiff_t(pos),
                 bytes.begin() + std::ptrdiff_t(pos + need));
  return img;
}

ImageBuffer load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  require<IoError>(f.good(), "cannot open image: ", path);
  std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(bytes.data()), n);
  require<IoError>(f.good(), "cannot read image: ", path);
  return parse_ppm(bytes);
}

void save_ppm(const std::string& path, const ImageBuffer& img) {
  require<Error>(img.rgb.size() == 3 * size_t(img.width) * size_t(img.height),
                 "image buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  require<IoError>(f.good(), "cannot open for write: ", path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          std::streamsize(img.rgb.size()));
  f.flush();
  require<IoError>(f.good(), "write failed: ", path);
}

double mse_8bit(const ImageBuffer& a, const ImageBuffer& b) {
  require<ShapeError>(a.width == b.width && a.height == b.height,
                      "psnr: image dims differ: ", a.width, "x", a.height,
                      " vs ", b.width, "x", b.height);
  double acc = 0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    double d = double(a.rgb[i]) - double(b.rgb[i]);
    acc += d * d;
  }
  return acc / double(a.rgb.size());
}

double psnr_from_mse(double mse) {
  if (mse <= 0) return 100.0;
  double v = 10.0 * std::log10(255.0 * 255.0 / mse);
  return v > 100.0 ? 100.0 : v;
}

double psnr_db(const ImageBuffer& a, const ImageBuffer& b) {
  return psnr_from_mse(mse_8bit(a, b));
}

}  // namespace hcfs
