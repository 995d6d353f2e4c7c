#pragma once

// Rate-distortion curves and the Bjontegaard delta-rate metric: cubic
// polynomial fit of log10(rate) against PSNR per curve, closed-form
// polynomial integration over the common PSNR range.

#include <string>
#include <vector>

#include "hcfs/error.h"

namespace hcfs {

struct RdPoint {
  double bpp = 0, psnr = 0;
};

struct RdCurve {
  std::string label;
  std::vector<RdPoint> points;
};

// Validates >= 4 points and strictly increasing bpp; warns (stderr) when
// psnr is not strictly increasing alongside, since that usually signals a
// malformed curve but does not invalidate the fit.
void validate_curve(const RdCurve& curve);

// CSV with header "bpp,psnr", one point per line.
RdCurve parse_rd_csv(const std::string& path, const std::string& label);

// Average bitrate difference of `test` against `anchor` in percent
// (negative = test cheaper at equal quality).
double bd_rate_percent(const RdCurve& anchor, const RdCurve& test);

}  // namespace hcfs
