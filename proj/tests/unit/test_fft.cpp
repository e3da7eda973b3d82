#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "m2rec/error.hpp"
#include "m2rec/fft.hpp"
#include "oracles.hpp"

using namespace m2rec;

namespace {

double max_abs_diff(const ComplexVec& a, const ComplexVec& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const ComplexVec& a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, std::abs(v));
  return m;
}

ComplexVec random_complex(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  ComplexVec v(n);
  for (auto& x : v) x = {d(rng), d(rng)};
  return v;
}

std::vector<double> random_real(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("fft of small known signals") {
  const std::vector<double> impulse{1, 0, 0, 0};
  for (const auto& v : fft(impulse)) CHECK(std::abs(v - Complex(1, 0)) < 1e-12);

  const std::vector<double> ones{1, 1, 1, 1};
  const ComplexVec c = fft(ones);
  CHECK(std::abs(c[0] - Complex(4, 0)) < 1e-12);
  for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(c[k]) < 1e-12);

  const std::vector<double> ramp{1, 2, 3, 4};
  const ComplexVec r = fft(ramp);
  const ComplexVec expected = {{10, 0}, {-2, 2}, {-2, 0}, {-2, -2}};
  CHECK(max_abs_diff(r, expected) < 1e-12);
  // the same values from direct summation
  const auto direct = oracle::dft(ramp);
  CHECK(max_abs_diff(r, ComplexVec(direct.begin(), direct.end())) < 1e-12);
}

TEST_CASE("ifft of small known spectra") {
  const ComplexVec dc = {{4, 0}, {0, 0}, {0, 0}, {0, 0}};
  for (const auto& v : ifft(dc)) CHECK(std::abs(v - Complex(1, 0)) < 1e-12);

  const ComplexVec spec = {{10, 0}, {-2, 2}, {-2, 0}, {-2, -2}};
  const ComplexVec x = ifft(spec);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(x[i] - Complex(i + 1.0, 0)) < 1e-12);
  CHECK(max_abs_diff(x, naive_idft(spec)) < 1e-12);
}

TEST_CASE("empty and non-finite input") {
  CHECK_THROWS_AS(fft(std::span<const double>{}), LengthError);
  CHECK_THROWS_AS(ifft(std::span<const Complex>{}), LengthError);
  CHECK_THROWS_AS(naive_dft(std::span<const Complex>{}), LengthError);
  const std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(fft(bad), NumericError);
}

TEST_CASE("fast path agrees with the naive oracle for every length up to 256") {
  for (std::size_t n = 1; n <= 256; ++n) {
    const ComplexVec x = random_complex(n, n);
    const ComplexVec fast = fft(x);
    const ComplexVec slow = naive_dft(x);
    INFO("n = " << n);
    CHECK(max_abs_diff(fast, slow) <= 1e-10 * std::max(1.0, max_abs(slow)));
    const ComplexVec ifast = ifft(slow);
    const ComplexVec islow = naive_idft(slow);
    CHECK(max_abs_diff(ifast, islow) <= 1e-10 * std::max(1.0, max_abs(islow)));
  }
}

TEST_CASE("length 97 real input matches direct summation") {
  const auto x = random_real(97, 97);
  const auto direct = oracle::dft(x);
  const ComplexVec fast = fft(x);
  CHECK(max_abs_diff(fast, ComplexVec(direct.begin(), direct.end())) <=
        1e-10 * max_abs(ComplexVec(direct.begin(), direct.end())));
}

TEST_CASE("round trip for every length up to 1024") {
  for (std::size_t n = 1; n <= 1024; ++n) {
    const ComplexVec x = random_complex(n, 1000 + n);
    INFO("n = " << n);
    CHECK(max_abs_diff(ifft(fft(x)), x) < 1e-9);
    const auto r = random_real(n, 5000 + n);
    const ComplexVec back = ifft(fft(r));
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(back[i] - Complex(r[i], 0)));
    CHECK(err < 1e-9);
  }
}

TEST_CASE("linearity, Parseval and Hermitian symmetry") {
  for (std::size_t n : {7u, 64u, 97u, 100u, 128u, 255u}) {
    const ComplexVec x = random_complex(n, 11 * n);
    const ComplexVec y = random_complex(n, 13 * n);
    const Complex a(0.7, -1.3);
    const Complex b(-2.1, 0.4);
    ComplexVec mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = a * x[i] + b * y[i];
    const ComplexVec fx = fft(x);
    const ComplexVec fy = fft(y);
    ComplexVec expect(n);
    for (std::size_t i = 0; i < n; ++i) expect[i] = a * fx[i] + b * fy[i];
    CHECK(max_abs_diff(fft(mix), expect) < 1e-9);

    double et = 0.0;
    double ef = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      et += std::norm(x[i]);
      ef += std::norm(fx[i]);
    }
    CHECK(std::abs(et - ef / n) <= 1e-9 * et);

    const auto r = random_real(n, 17 * n);
    const ComplexVec fr = fft(r);
    for (std::size_t k = 1; k < n; ++k) CHECK(std::abs(fr[k] - std::conj(fr[n - k])) < 1e-9);
    CHECK(std::abs(fr[0].imag()) < 1e-9);
  }
}

TEST_CASE("power spectrum") {
  CHECK_THROWS_AS(power_spectrum(std::vector<double>{1.0}), LengthError);

  std::vector<double> daily(240);
  for (std::size_t t = 0; t < daily.size(); ++t)
    daily[t] = std::sin(2.0 * std::numbers::pi * t / 24.0);
  const auto ps = power_spectrum(daily);
  REQUIRE(ps.size() == 121);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < ps.size(); ++k)
    if (ps[k].power > ps[peak].power) peak = k;
  CHECK(peak == 10);
  CHECK(ps[10].frequency == doctest::Approx(1.0 / 24.0));
  for (std::size_t k = 0; k < ps.size(); ++k)
    if (k != 10) CHECK(ps[k].power < 1e-12 * ps[10].power);

  const std::vector<double> flat(50, 3.0);
  const auto pc = power_spectrum(flat);
  CHECK(pc[0].power == doctest::Approx(9.0 * 50));
  for (std::size_t k = 1; k < pc.size(); ++k) CHECK(pc[k].power < 1e-20);

  const std::size_t T = 1680;
  std::vector<double> two(T);
  for (std::size_t t = 0; t < T; ++t)
    two[t] = std::sin(2.0 * std::numbers::pi * t / 24.0) +
             0.8 * std::sin(2.0 * std::numbers::pi * t / 168.0);
  const auto p2 = power_spectrum(two);
  // brute-force spectrum from direct summation
  const auto direct = oracle::dft(two);
  for (std::size_t k = 0; k < p2.size(); ++k)
    CHECK(p2[k].power == doctest::Approx(std::norm(direct[k]) / T).epsilon(1e-9).scale(1.0));
  std::vector<std::size_t> order(p2.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p2[a].power > p2[b].power; });
  CHECK(((order[0] == T / 24 && order[1] == T / 168) || (order[0] == T / 168 && order[1] == T / 24)));
}
