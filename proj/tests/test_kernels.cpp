#include <gtest/gtest.h>

#include <vector>

#include "lit/kernels.hpp"
#include "lit/random.hpp"

using namespace lit;
namespace k = lit::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

class BackendGuard {
 public:
  BackendGuard() : saved_(k::backend()) {}
  ~BackendGuard() { k::set_backend(saved_); }

 private:
  k::Backend saved_;
};

}  // namespace

struct GemmCase {
  std::int64_t m, kk, n;
  bool trans_a, accumulate;
};

class GemmEquivalence : public ::testing::TestWithParam<GemmCase> {};

TEST_P(GemmEquivalence, ParallelMatchesSerialBitwise) {
  const auto p = GetParam();
  const k::GemmArgs args{p.m, p.kk, p.n, p.trans_a, p.accumulate};
  const auto a = random_vec(static_cast<std::size_t>(p.m * p.kk), 1);
  const auto b = random_vec(static_cast<std::size_t>(p.kk * p.n), 2);
  auto c1 = random_vec(static_cast<std::size_t>(p.m * p.n), 3);
  auto c2 = c1;
  k::serial::gemm(args, a.data(), b.data(), c1.data());
  k::parallel::gemm(args, a.data(), b.data(), c2.data());
  EXPECT_EQ(c1, c2);
}

TEST_P(GemmEquivalence, SerialMatchesNaive) {
  const auto p = GetParam();
  const k::GemmArgs args{p.m, p.kk, p.n, p.trans_a, p.accumulate};
  const auto a = random_vec(static_cast<std::size_t>(p.m * p.kk), 4);
  const auto b = random_vec(static_cast<std::size_t>(p.kk * p.n), 5);
  auto c = random_vec(static_cast<std::size_t>(p.m * p.n), 6);
  std::vector<double> ref = c;
  for (std::int64_t i = 0; i < p.m; ++i) {
    for (std::int64_t j = 0; j < p.n; ++j) {
      double s = 0.0;
      for (std::int64_t q = 0; q < p.kk; ++q) {
        const double av = p.trans_a ? a[q * p.m + i] : a[i * p.kk + q];
        s += av * b[q * p.n + j];
      }
      ref[i * p.n + j] = p.accumulate ? ref[i * p.n + j] + s : s;
    }
  }
  k::serial::gemm(args, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Shapes, GemmEquivalence,
                         ::testing::Values(GemmCase{1, 1, 1, false, false},
                                           GemmCase{7, 5, 3, false, false},
                                           GemmCase{7, 5, 3, true, false},
                                           GemmCase{16, 33, 9, false, true},
                                           GemmCase{64, 64, 64, true, true},
                                           GemmCase{3, 0, 4, false, false}));

struct ConvCase {
  std::int64_t b, c, h, w, kernel;
};

class DwConvEquivalence : public ::testing::TestWithParam<ConvCase> {};

TEST_P(DwConvEquivalence, ParallelMatchesSerialBitwise) {
  const auto p = GetParam();
  const k::DwConvArgs args{p.b, p.c, p.h, p.w, p.kernel};
  const auto n = static_cast<std::size_t>(p.b * p.c * p.h * p.w);
  const auto wn = static_cast<std::size_t>(p.c * p.kernel * p.kernel);
  const auto x = random_vec(n, 7), w = random_vec(wn, 8), bias = random_vec(p.c, 9);
  const auto gy = random_vec(n, 10);

  std::vector<double> y1(n), y2(n);
  k::serial::dwconv_forward(args, x.data(), w.data(), bias.data(), y1.data());
  k::parallel::dwconv_forward(args, x.data(), w.data(), bias.data(), y2.data());
  EXPECT_EQ(y1, y2);

  std::vector<double> gx1(n, 0.5), gx2(n, 0.5);
  k::serial::dwconv_backward_input(args, gy.data(), w.data(), gx1.data());
  k::parallel::dwconv_backward_input(args, gy.data(), w.data(), gx2.data());
  EXPECT_EQ(gx1, gx2);

  std::vector<double> gw1(wn, 0.0), gw2(wn, 0.0), gb1(p.c, 0.0), gb2(p.c, 0.0);
  k::serial::dwconv_backward_weight(args, gy.data(), x.data(), gw1.data(), gb1.data());
  k::parallel::dwconv_backward_weight(args, gy.data(), x.data(), gw2.data(), gb2.data());
  EXPECT_EQ(gw1, gw2);
  EXPECT_EQ(gb1, gb2);
}

TEST_P(DwConvEquivalence, SerialMatchesNaive) {
  const auto p = GetParam();
  const k::DwConvArgs args{p.b, p.c, p.h, p.w, p.kernel};
  const auto n = static_cast<std::size_t>(p.b * p.c * p.h * p.w);
  const auto x = random_vec(n, 11);
  const auto w = random_vec(static_cast<std::size_t>(p.c * p.kernel * p.kernel), 12);
  const auto bias = random_vec(p.c, 13);
  std::vector<double> y(n);
  k::serial::dwconv_forward(args, x.data(), w.data(), bias.data(), y.data());
  const std::int64_t r = p.kernel / 2;
  for (std::int64_t b = 0; b < p.b; ++b) {
    for (std::int64_t c = 0; c < p.c; ++c) {
      for (std::int64_t i = 0; i < p.h; ++i) {
        for (std::int64_t j = 0; j < p.w; ++j) {
          double s = bias[c];
          for (std::int64_t di = -r; di <= r; ++di) {
            for (std::int64_t dj = -r; dj <= r; ++dj) {
              const std::int64_t ii = i + di, jj = j + dj;
              if (ii < 0 || jj < 0 || ii >= p.h || jj >= p.w) continue;
              s += w[(c * p.kernel + di + r) * p.kernel + dj + r] *
                   x[((b * p.c + c) * p.h + ii) * p.w + jj];
            }
          }
          EXPECT_NEAR(y[((b * p.c + c) * p.h + i) * p.w + j], s, 1e-12);
        }
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, DwConvEquivalence,
                         ::testing::Values(ConvCase{1, 1, 1, 1, 1}, ConvCase{2, 3, 4, 5, 3},
                                           ConvCase{1, 4, 8, 8, 5}, ConvCase{2, 2, 3, 3, 5},
                                           ConvCase{1, 8, 16, 16, 7}));

TEST(Backend, DispatchFollowsSelection) {
  BackendGuard guard;
  k::set_backend(k::Backend::kSerial);
  EXPECT_EQ(k::backend(), k::Backend::kSerial);
  k::set_backend(k::Backend::kParallel);
  EXPECT_EQ(k::backend(), k::openmp_available() ? k::Backend::kParallel : k::Backend::kSerial);
}

TEST(Backend, Transpose2d) {
  const std::vector<double> in{1, 2, 3, 4, 5, 6};
  std::vector<double> out(6);
  k::transpose2d(in.data(), out.data(), 2, 3);
  EXPECT_EQ(out, (std::vector<double>{1, 4, 2, 5, 3, 6}));
}
