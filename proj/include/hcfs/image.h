#pragma once

// 8-bit RGB image buffers, binary PPM (P6) I/O, and PSNR.

#include <cstdint>
#include <string>
#include <vector>

#include "hcfs/error.h"
#include "hcfs/tensor.h"

namespace hcfs {

struct ImageBuffer {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // interleaved RGB, row-major, 3*w*h bytes

  bool operator==(const ImageBuffer& o) const {
    return width == o.width && height == o.height && rgb == o.rgb;
  }
};

ImageBuffer load_ppm(const std::string& path);
ImageBuffer parse_ppm(const std::vector<uint8_t>& bytes);
void save_ppm(const std::string& path, const ImageBuffer& img);

// Mean squared error on the 0..255 sample scale.
double mse_8bit(const ImageBuffer& a, const ImageBuffer& b);

// 10*log10(255^2 / mse), capped at 100 dB for identical images.
double psnr_db(const ImageBuffer& a, const ImageBuffer& b);
double psnr_from_mse(double mse);

// Image <-> planar [3,H,W] tensor in [0,1].
template <class S>
Tensor<S> image_to_tensor(const ImageBuffer& img) {
  Tensor<S> t({3, img.height, img.width});
  size_t hw = size_t(img.height) * img.width;
  for (size_t i = 0; i < hw; ++i)
    for (int ch = 0; ch < 3; ++ch)
      t.data[size_t(ch) * hw + i] = S(img.rgb[3 * i + size_t(ch)] / 255.0);
  return t;
}

template <class S>
ImageBuffer tensor_to_image(const Tensor<S>& t) {
  require<ShapeError>(t.rank() == 3 && t.dim(0) == 3,
                      "tensor_to_image wants [3,H,W], got ", shape_str(t.shape));
  ImageBuffer img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  size_t hw = size_t(img.height) * img.width;
  img.rgb.resize(3 * hw);
  for (size_t i = 0; i < hw; ++i)
    for (int ch = 0; ch < 3; ++ch) {
      double v = double(t.data[size_t(ch) * hw + i]) * 255.0;
      v = v < 0 ? 0 : (v > 255 ? 255 : v);
      img.rgb[3 * i + size_t(ch)] = uint8_t(v + 0.5);
    }
  return img;
}

}  // namespace hcfs
