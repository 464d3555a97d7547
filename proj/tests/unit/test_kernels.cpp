#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "macdmp/kernels.hpp"
#include "macdmp/rng.hpp"

using namespace macdmp;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

using Gemm = void (*)(int, int, int, const double*, const double*, double*);

void compare(Gemm fast, Gemm ref, int m, int n, int k, Rng& rng) {
  const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
  auto c0 = random_vec(static_cast<std::size_t>(m) * n, rng);
  auto c1 = c0;
  fast(m, n, k, a.data(), b.data(), c0.data());
  ref(m, n, k, a.data(), b.data(), c1.data());
  double worst = 0.0;
  for (std::size_t i = 0; i < c0.size(); ++i) {
    worst = std::max(worst, std::abs(c0[i] - c1[i]) / (1.0 + std::abs(c1[i])));
  }
  CHECK(worst <= 1e-12);
}

}  // namespace

TEST_CASE("parallel kernels agree with the serial reference") {
  Rng rng = make_rng(1, 0);
  const int shapes[][3] = {{1, 1, 1}, {3, 2, 4}, {5, 17, 3}, {8, 256, 256}, {64, 96, 130}, {67, 33, 257}};
  for (const auto& s : shapes) {
    compare(kernels::gemm_nn, kernels::serial::gemm_nn, s[0], s[1], s[2], rng);
    compare(kernels::gemm_nt, kernels::serial::gemm_nt, s[0], s[1], s[2], rng);
    compare(kernels::gemm_tn, kernels::serial::gemm_tn, s[0], s[1], s[2], rng);
  }
}

TEST_CASE("kernel results do not depend on the thread count") {
  Rng rng = make_rng(2, 0);
  const int m = 96, n = 128, k = 80;
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<double> c1(m * n, 0.0), c4(m * n, 0.0);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), c1.data());
  omp_set_num_threads(4);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), c4.data());
  omp_set_num_threads(saved);
  CHECK(c1 == c4);
}

TEST_CASE("3x4 by 4x2 against a hand loop") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  const std::vector<double> b{1, -1, 0, 2, 3, 0, -2, 1};
  std::vector<double> c(6, 0.0);
  kernels::gemm_nn(3, 2, 4, a.data(), b.data(), c.data());
  const std::vector<double> want{1 + 0 + 9 - 8, -1 + 4 + 0 + 4, 5 + 0 + 21 - 16, -5 + 12 + 0 + 8,
                                 9 + 0 + 33 - 24, -9 + 20 + 0 + 12};
  CHECK(c == want);
}
