#include "hcfs/bdrate.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hcfs {

void validate_curve(const RdCurve& curve) {
  require<Error>(curve.points.size() >= 4, "curve '", curve.label, "' has ",
                 curve.points.size(), " points; need at least 4");
  for (size_t i = 1; i < curve.points.size(); ++i) {
    require<Error>(curve.points[i].bpp > curve.points[i - 1].bpp, "curve '",
                   curve.label, "': bpp not strictly increasing at point ", i);
    if (curve.points[i].psnr <= curve.points[i - 1].psnr)
      std::cerr << "warning: curve '" << curve.label
                << "': psnr not increasing at point " << i << "\n";
  }
  for (const RdPoint& p : curve.points)
    require<Error>(p.bpp > 0 && std::isfinite(p.bpp) && std::isfinite(p.psnr),
                   "curve '", curve.label, "': invalid point (", p.bpp, ", ",
                   p.psnr, ")");
}

RdCurve parse_rd_csv(const std::string& path, const std::string& label) {
  std::ifstream f(path);
  require<IoError>(f.good(), "cannot open curve file: ", path);
  RdCurve curve;
  curve.label = label.empty() ? path : label;
  std::string line;
  require<FormatError>(bool(std::getline(f, line)), "empty curve file: ", path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require<FormatError>(line == "bpp,psnr", "curve file ", path,
                       ": expected header 'bpp,psnr', got '", line, "'");
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    RdPoint p;
    char comma = 0;
    ss >> p.bpp >> comma >> p.psnr;
    require<FormatError>(!ss.fail() && comma == ',', "curve file ", path,
                         " line ", lineno, ": malformed point '", line, "'");
    curve.points.push_back(p);
  }
  validate_curve(curve);
  return curve;
}

namespace {

// Least-squares cubic c0 + c1 t + c2 t^2 + c3 t^3 through (t_i, v_i),
// solved by normal equations with partial-pivot elimination.  Inputs are
// centered by the caller, so conditioning is benign at 4-10 points.
std::array<double, 4> fit_cubic(const std::vector<double>& t,
                                const std::vector<double>& v) {
  double a[4][5] = {};
  for (size_t i = 0; i < t.size(); ++i) {
    double pw[7] = {1, 0, 0, 0, 0, 0, 0};
    for (int k = 1; k < 7; ++k) pw[k] = pw[k - 1] * t[i];
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) a[r][c] += pw[r + c];
      a[r][4] += pw[r] * v[i];
    }
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    for (int c = 0; c < 5; ++c) std::swap(a[col][c], a[piv][c]);
    require<Error>(std::fabs(a[col][col]) > 1e-12,
                   "degenerate rate curve: cubic fit is singular");
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      for (int c = col; c < 5; ++c) a[r][c] -= f * a[col][c];
    }
  }
  return {a[0][4] / a[0][0], a[1][4] / a[1][1], a[2][4] / a[2][2],
          a[3][4] / a[3][3]};
}

double integrate_cubic(const std::array<double, 4>& c, double lo, double hi) {
  auto anti = [&](double x) {
    return x * (c[0] + x * (c[1] / 2 + x * (c[2] / 3 + x * c[3] / 4)));
  };
  return anti(hi) - anti(lo);
}

}  // namespace

double bd_rate_percent(const RdCurve& anchor, const RdCurve& test) {
  validate_curve(anchor);
  validate_curve(test);

  auto psnr_range = [](const RdCurve& c) {
    auto [mn, mx] = std::minmax_element(
        c.points.begin(), c.points.end(),
        [](const RdPoint& a, const RdPoint& b) { return a.psnr < b.psnr; });
    return std::pair<double, double>{mn->psnr, mx->psnr};
  };
  auto [alo, ahi] = psnr_range(anchor);
  auto [tlo, thi] = psnr_range(test);
  double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
  require<Error>(hi > lo, "curves share no PSNR range: [", alo, ",", ahi,
                 "] vs [", tlo, ",", thi, "]");

  // Center PSNR for conditioning; fit log10(bpp) as a cubic in it.
  double mid = 0.5 * (lo + hi);
  auto fit = [&](const RdCurve& c) {
    std::vector<double> t, v;
    for (const RdPoint& p : c.points) {
      t.push_back(p.psnr - mid);
      v.push_back(std::log10(p.bpp));
    }
    return fit_cubic(t, v);
  };
  std::array<double, 4> ca = fit(anchor), ct = fit(test);
  double avg_diff = (integrate_cubic(ct, lo - mid, hi - mid) -
                     integrate_cubic(ca, lo - mid, hi - mid)) /
                    (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

}  // namespace hcfs
