#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "phantasmagoria/nn/gemm.hpp"

using phantasmagoria::nn::gemm;

namespace {

// Naive row-major reference with explicit strides.
template <typename T>
void reference(bool ta, bool tb, int m, int n, int k, double alpha, const std::vector<T>& a, int lda,
               const std::vector<T>& b, int ldb, double beta, std::vector<double>& c, int ldc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[p * lda + i] : a[i * lda + p];
        const double bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      c[i * ldc + j] = alpha * s + beta * c[i * ldc + j];
    }
}

template <typename T>
void check_all_layouts(double tol) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto [m, n, k] : {std::array{1, 1, 1}, std::array{3, 5, 7}, std::array{17, 9, 33}, std::array{64, 48, 80}})
    for (bool ta : {false, true})
      for (bool tb : {false, true})
        for (const auto [alpha, beta] : {std::pair{1.0, 0.0}, std::pair{0.5, 1.0}, std::pair{-2.0, 0.25}}) {
          const int lda = (ta ? m : k) + 2, ldb = (tb ? k : n) + 1, ldc = n + 3;
          std::vector<T> a((ta ? k : m) * lda), b((tb ? n : k) * ldb), c(m * ldc);
          for (auto& v : a) v = static_cast<T>(u(rng));
          for (auto& v : b) v = static_cast<T>(u(rng));
          for (auto& v : c) v = static_cast<T>(u(rng));
          std::vector<double> expect(c.begin(), c.end());
          reference(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, expect, ldc);
          gemm(ta, tb, m, n, k, static_cast<T>(alpha), a.data(), lda, b.data(), ldb, static_cast<T>(beta), c.data(),
               ldc);
          double worst = 0;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(c[i * ldc + j] - expect[i * ldc + j]));
          INFO("m=" << m << " n=" << n << " k=" << k << " ta=" << ta << " tb=" << tb);
          CHECK(worst < tol * k);
        }
}

}  // namespace

TEST_SUITE("gemm") {
  TEST_CASE("single precision matches the naive product") { check_all_layouts<float>(1e-6); }
  TEST_CASE("double precision matches the naive product") { check_all_layouts<double>(1e-14); }
}
