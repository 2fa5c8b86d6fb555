#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace shapeinv;

TEST_CASE("make_grid builds the equidistant odd grid", "[sampling_grid]")
{
  SamplingGrid g3 = make_grid(3);
  REQUIRE(g3.n() == 3);
  CHECK(g3[0] == 0.0);
  CHECK(g3[1] == Catch::Approx(two_pi / 3).epsilon(1e-15));
  CHECK(g3[2] == Catch::Approx(2 * two_pi / 3).epsilon(1e-15));

  SamplingGrid g201 = make_grid(201);
  REQUIRE(g201.points().size() == 201);
  CHECK(g201[200] == two_pi * 200 / 201);
  for (int i = 1; i < 201; ++i)
    CHECK(g201[i] > g201[i - 1]);
}

TEST_CASE("make_grid rejects even and tiny sizes", "[sampling_grid]")
{
  auto code_of = [](int n) {
    try {
      make_grid(n);
    } catch (const Error& e) {
      return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
  };
  CHECK(code_of(4) == ErrorCode::EvenSampleCount);
  CHECK(code_of(200) == ErrorCode::EvenSampleCount);
  CHECK(code_of(1) == ErrorCode::TooSmall);
  CHECK(code_of(2) == ErrorCode::TooSmall);
}

TEST_CASE("dft of simple signals", "[sampling_grid]")
{
  SECTION("constant")
  {
    SamplingGrid g(9);
    std::vector<double> x(9, 3.5);
    DftBlock b = dft(x, g, 4);
    CHECK(b[0].real() == Catch::Approx(3.5).epsilon(1e-15));
    for (int l = 1; l <= 4; ++l) {
      CHECK(std::abs(b[l]) < 1e-15);
      CHECK(std::abs(b[-l]) < 1e-15);
    }
  }
  SECTION("pure tone")
  {
    SamplingGrid g(11);
    std::vector<double> x;
    for (double t : g.points())
      x.push_back(std::cos(t));
    DftBlock b = dft(x, g, 5);
    CHECK(std::abs(b[1] - 0.5) < 1e-15);
    CHECK(std::abs(b[-1] - 0.5) < 1e-15);
    for (int l : { 0, 2, 3, 4, 5 })
      CHECK(std::abs(b[l]) < 1e-15);
  }
}

TEST_CASE("dft matches direct summation", "[sampling_grid]")
{
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  SamplingGrid g(101);
  std::vector<double> x(101);
  for (auto& v : x)
    v = nd(rng);
  DftBlock b = dft(x, g, 20);
  for (int l = -20; l <= 20; ++l)
    CHECK(std::abs(b[l] - oracle::direct_dft(x, l)) < 1e-12);
  // Hermitian for real input
  for (int l = 1; l <= 20; ++l)
    CHECK(b[-l] == std::conj(b[l]));
}

TEST_CASE("dft guards", "[sampling_grid]")
{
  SamplingGrid g(11);
  std::vector<double> x(11, 0.0), short_x(10, 0.0);
  CHECK_THROWS_MATCHES(dft(x, g, 6), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::BandTooWide;
                       }));
  CHECK_NOTHROW(dft(x, g, 5));
  CHECK_THROWS_MATCHES(dft(short_x, g, 2), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::LengthMismatch;
                       }));
}

TEST_CASE("orthogonality kernel", "[sampling_grid]")
{
  CHECK(std::abs(orthogonality_kernel(0.0, 13) - 1.0) < 1e-15);
  CHECK(std::abs(orthogonality_kernel(3.0, 13) - 1.0) < 1e-12);
  CHECK(std::abs(orthogonality_kernel(3.0 / 7.0, 7)) < 1e-14);
  // 0.2 = 1/5: a full cycle of fifth roots of unity sums to zero
  cplx direct(0.0, 0.0);
  for (int s = 1; s <= 5; ++s)
    direct += std::polar(1.0, two_pi * s * 0.2);
  direct /= 5.0;
  CHECK(std::abs(orthogonality_kernel(0.2, 5) - direct) < 1e-15);
  CHECK(std::abs(orthogonality_kernel(0.2, 5)) < 1e-15);
}

TEST_CASE("discrete orthogonality of the Fourier basis", "[sampling_grid][property]")
{
  std::mt19937_64 rng(11);
  for (int n : { 11, 51, 101 }) {
    std::uniform_int_distribution<int> ld(-(n - 1) / 2, (n - 1) / 2);
    SamplingGrid g(n);
    for (int trial = 0; trial < 200; ++trial) {
      int l = ld(rng), p = ld(rng);
      cplx s(0.0, 0.0);
      for (int r = 0; r < n; ++r)
        s += std::conj(g.twiddle(l - p, r));
      s /= double(n);
      CHECK(std::abs(s - (l == p ? 1.0 : 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("Parseval and shift covariance on the grid", "[sampling_grid][property]")
{
  std::mt19937_64 rng(3);
  const int n = 61, m = 8;
  SamplingGrid g(n);
  for (int trial = 0; trial < 10; ++trial) {
    ShapeSpectrum s = oracle::random_spectrum(rng, m, true);
    std::vector<double> x, shifted;
    const double delta = 2.0 * std::uniform_real_distribution<double>(-3, 3)(rng);
    for (double t : g.points()) {
      x.push_back(evaluate_spectrum(s, t));
      shifted.push_back(evaluate_spectrum(s, t - delta));
    }
    DftBlock b = dft(x, g, m), bs = dft(shifted, g, m);
    double lhs = 0.0;
    for (double v : x)
      lhs += v * v;
    lhs /= n;
    double rhs = 0.0;
    for (int l = -m; l <= m; ++l)
      rhs += std::norm(b[l]);
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
    for (int l = -m; l <= m; ++l)
      CHECK(std::abs(bs[l] - std::polar(1.0, -l * delta) * b[l]) < 1e-10);
  }
}

TEST_CASE("evaluate_spectrum", "[sampling_grid]")
{
  ShapeSpectrum tone(1);
  tone.set_pair(1, 0.5);
  CHECK(evaluate_spectrum(tone, 0.0) == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(evaluate_spectrum(ShapeSpectrum(4), 1.234) == 0.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-10, 10);
  ShapeSpectrum s = oracle::random_spectrum(rng, 12);
  for (int k = 0; k < 100; ++k) {
    double t = ud(rng);
    cplx direct = oracle::direct_series(s, t);
    CHECK(std::abs(direct.imag()) < 1e-12);
    CHECK(std::abs(evaluate_spectrum(s, t) - direct.real()) < 1e-12);
  }

  ShapeSpectrum bad(2);
  bad.set_raw(1, cplx(1.0, 1.0));
  bad.set_raw(-1, cplx(1.0, 1.0));
  CHECK_THROWS_AS(evaluate_spectrum(bad, 0.0), Error);
}
