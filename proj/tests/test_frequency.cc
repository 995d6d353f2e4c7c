// Block DCT (orthonormality, round-trip, Parseval, fixed examples), reflect
// indexing, window partition/merge, and the frequency modulation block.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hcfs/frequency.h"

using namespace hcfs;

using T = Tensor<double>;
using C = Ctx<double>;

namespace {

T rand_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0,
              double hi = 1.0) {
  T t(shape);
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("dct basis rows are orthonormal") {
  for (int w : {1, 2, 4, 8, 16}) {
    auto m = dct_basis<double>(w);
    for (int i = 0; i < w; ++i)
      for (int j = 0; j < w; ++j) {
        double dot = 0;
        for (int k = 0; k < w; ++k)
          dot += m[size_t(i) * w + k] * m[size_t(j) * w + k];
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
      }
  }
}

TEST_CASE("dct2 of fixed blocks") {
  // Constant block: everything lands in the DC coefficient, value = w * mean.
  T ones({2, 2}, 1.0);
  T f = dct2(ones);
  CHECK(f.data[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(f.data[1]) < 1e-12);
  CHECK(std::abs(f.data[2]) < 1e-12);
  CHECK(std::abs(f.data[3]) < 1e-12);

  // Hand-derived 2x2 example: dct2([[1,2],[3,4]]) = [[5,-1],[-2,0]].
  T x = T::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  T y = dct2(x);
  CHECK(y.data[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(y.data[1] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y.data[2] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(y.data[3]) < 1e-12);

  // Impulse at (0,0): coefficients are the basis outer product column 0.
  T imp({4, 4});
  imp.data[0] = 1.0;
  T fi = dct2(imp);
  auto m = dct_basis<double>(4);
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l)
      CHECK(fi.data[size_t(k) * 4 + l] ==
            doctest::Approx(m[size_t(k) * 4] * m[size_t(l) * 4]).epsilon(1e-12));
}

TEST_CASE("dct2/idct2 round-trip and Parseval") {
  Rng rng(41);
  for (int w : {2, 4, 8, 16}) {
    T x = rand_tensor({3, w, w}, rng, -2.0, 2.0);
    T f = dct2(x);
    T back = idct2(f);
    double e2_x = 0, e2_f = 0;
    for (size_t i = 0; i < x.data.size(); ++i) {
      CHECK(std::abs(back.data[i] - x.data[i]) < 1e-12);
      e2_x += x.data[i] * x.data[i];
      e2_f += f.data[i] * f.data[i];
    }
    CHECK(std::abs(e2_x - e2_f) < 1e-9);  // energy preserved per block
    // The opposite composition is also the identity.
    T fwd = dct2(idct2(x));
    for (size_t i = 0; i < x.data.size(); ++i)
      CHECK(std::abs(fwd.data[i] - x.data[i]) < 1e-12);
  }
  CHECK_THROWS_AS(dct2(T({3, 4, 5})), ShapeError&);
}

TEST_CASE("dct gradients are the inverse transform of the upstream grad") {
  Rng rng(42);
  T x = rand_tensor({2, 4, 4}, rng);
  auto ff = [&](C&, const T& t) {
    T f = dct2(t);
    return sum_all(mul(f, f));
  };
  CHECK(grad_check(ff, x, 1e-4) < 1e-6);
  auto fi = [&](C&, const T& t) {
    T f = idct2(t);
    return sum_all(mul(f, f));
  };
  CHECK(grad_check(fi, x, 1e-4) < 1e-6);
}

TEST_CASE("reflect_index folds like a mirrored sequence") {
  CHECK(reflect_index(0, 1) == 0);
  CHECK(reflect_index(5, 1) == 0);
  CHECK(reflect_index(0, 4) == 0);
  CHECK(reflect_index(3, 4) == 3);
  CHECK(reflect_index(4, 4) == 3);
  CHECK(reflect_index(5, 4) == 2);
  CHECK(reflect_index(7, 4) == 0);
  CHECK(reflect_index(8, 4) == 0);
  CHECK(reflect_index(9, 4) == 1);
  CHECK(reflect_index(5, 3) == 0);
  // Every value stays in range even for pads far beyond the extent.
  for (int e : {1, 2, 3, 7})
    for (int i = 0; i < 6 * e; ++i) {
      int r = reflect_index(i, e);
      CHECK(r >= 0);
      CHECK(r < e);
    }
}

TEST_CASE("window grid covers the padded map") {
  WindowGrid g = make_window_grid(3, 10, 13, 4);
  CHECK(g.hp == 12);
  CHECK(g.wp == 16);
  CHECK(g.nwy == 3);
  CHECK(g.nwx == 4);
  CHECK(g.blocks() == 12);
  WindowGrid exact = make_window_grid(1, 8, 8, 4);
  CHECK(exact.blocks() == 4);
  CHECK_THROWS_AS(make_window_grid(1, 0, 4, 4), ShapeError&);
  CHECK_THROWS_AS(make_window_grid(1, 4, 4, 0), ShapeError&);
}

TEST_CASE("window partition and merge invert exactly, 50 random grids") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    int c = 1 + int(rng.next_u64() % 4);
    int h = 1 + int(rng.next_u64() % 12);
    int w = 1 + int(rng.next_u64() % 12);
    int win = 1 + int(rng.next_u64() % 8);  // may exceed h or w
    WindowGrid g = make_window_grid(c, h, w, win);
    T x = rand_tensor({c, h, w}, rng);
    T wins = window_partition(x, g);
    REQUIRE(wins.shape == std::vector<int>{g.blocks(), c, win, win});
    T back = window_merge(wins, g);
    CHECK(back.data == x.data);  // bit-exact: pure gathers
  }
}

TEST_CASE("window partition reflects into padding slots") {
  // 1x3x3 map, win=2: padded to 4x4, bottom/right rows mirror inward.
  T x = T::from({1, 3, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  WindowGrid g = make_window_grid(1, 3, 3, 2);
  T wins = window_partition(x, g);
  REQUIRE(wins.shape == std::vector<int>{4, 1, 2, 2});
  // Window (0,0) is the exact top-left quad.
  CHECK(wins.data[0] == 0);
  CHECK(wins.data[1] == 1);
  CHECK(wins.data[2] == 3);
  CHECK(wins.data[3] == 4);
  // Window (0,1) covers columns 2,3 -> reflected column index 2,2.
  CHECK(wins.data[4] == 2);
  CHECK(wins.data[5] == 2);
  CHECK(wins.data[6] == 5);
  CHECK(wins.data[7] == 5);
  // Window (1,1): rows 2,3 -> 2,2 and cols 2,3 -> 2,2, all read pixel 8.
  CHECK(wins.data[12] == 8);
  CHECK(wins.data[13] == 8);
  CHECK(wins.data[14] == 8);
  CHECK(wins.data[15] == 8);
}

TEST_CASE("frequency modulation block: zero and unit modulation") {
  Rng rng(44);
  int c = 3, win = 4;
  Afmm<double> block(c, win, rng);
  T x = rand_tensor({c, 10, 7}, rng);  // non-multiple extents exercise padding
  Ctx<double> ctx;

  // Fresh block: modulation conv is zero-initialized, so the output is zero.
  T y0 = block.forward(ctx, x);
  REQUIRE(y0.shape == x.shape);
  for (double v : y0.data) CHECK(v == 0.0);

  // All-ones modulation field leaves coefficients untouched; the frequency
  // path then reduces to the pointwise activation path exactly.
  for (auto& v : block.mod_conv.b.value.data) v = 1.0;
  T y1 = block.forward(ctx, x);
  T act = block.activation(ctx, x);
  REQUIRE(y1.shape == act.shape);
  for (size_t i = 0; i < y1.data.size(); ++i)
    CHECK(std::abs(y1.data[i] - act.data[i]) < 1e-10);
}

TEST_CASE("frequency modulation block: gradients and parameters") {
  Rng rng(45);
  int c = 2, win = 2;
  Afmm<double> block(c, win, rng);
  // Make the modulation path active so its gradients are exercised.
  for (auto& v : block.mod_conv.w.value.data) v = 0.3;
  for (auto& v : block.mod_conv.b.value.data) v = 0.7;
  T x = rand_tensor({c, 5, 4}, rng);
  auto f = [&](C& cc, const T& t) {
    T o = block.forward(cc, t);
    return sum_all(mul(o, o));
  };
  CHECK(grad_check(f, x, 1e-4) < 1e-5);

  ParamList<double> pl;
  block.collect("afmm", pl);
  CHECK(pl.size() == 10);
  CHECK(pl[0].name == "afmm.norm_in.gain");
  CHECK(pl[8].name == "afmm.mod_conv.weight");
}
