#include <cmath>
#include <vector>

#include <doctest.h>

#include "drofs/fastmath.hpp"

TEST_CASE("exp_nonpos tracks libm over the whole supported range") {
  // Dense sweep from deep underflow territory up to zero. The implementation
  // promises a few ulp, so 5e-15 relative is a comfortable ceiling.
  double worst = 0.0;
  for (double x = -708.0; x <= 0.0; x += 0.0097) {
    const double got = drofs::fastmath::exp_nonpos(x);
    const double want = std::exp(x);
    const double rel = std::abs(got - want) / want;
    worst = std::max(worst, rel);
  }
  CHECK(worst < 5e-15);
}

TEST_CASE("exp_nonpos is exact at anchor points") {
  CHECK(drofs::fastmath::exp_nonpos(0.0) == 1.0);
  const double ln2 = std::log(2.0);
  CHECK(drofs::fastmath::exp_nonpos(-ln2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(drofs::fastmath::exp_nonpos(-1.0) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-15));
}

TEST_CASE("inputs below the underflow cliff flush to exactly zero") {
  CHECK(drofs::fastmath::exp_nonpos(-708.5) == 0.0);
  CHECK(drofs::fastmath::exp_nonpos(-1e6) == 0.0);
  CHECK(drofs::fastmath::exp_nonpos(-1e300) == 0.0);
  // Just above the cliff the value is tiny but positive.
  CHECK(drofs::fastmath::exp_nonpos(-707.9) > 0.0);
}

TEST_CASE("exp_array agrees elementwise with the scalar version") {
  std::vector<double> xs;
  for (double x = -300.0; x <= 0.0; x += 0.37) xs.push_back(x);
  xs.push_back(-708.0);
  xs.push_back(-750.0);
  xs.push_back(0.0);

  std::vector<double> out(xs.size());
  drofs::fastmath::exp_array(xs.data(), out.data(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(out[i] == drofs::fastmath::exp_nonpos(xs[i]));
  }
}
