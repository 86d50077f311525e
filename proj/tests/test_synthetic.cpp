#include <cmath>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "drofs/errors.hpp"
#include "drofs/synthetic.hpp"

namespace {

// Pearson correlation between two feature columns pooled over all rows.
double pooled_corr(const drofs::MultiPopulationData& data, std::size_t a, std::size_t b) {
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  std::size_t n = 0;
  for (const auto& pop : data.populations) {
    for (std::size_t r = 0; r < pop.size(); ++r) {
      const double va = pop.x(r, a);
      const double vb = pop.x(r, b);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
      ++n;
    }
  }
  const double nn = static_cast<double>(n);
  const double cov = sab / nn - (sa / nn) * (sb / nn);
  const double var_a = saa / nn - (sa / nn) * (sa / nn);
  const double var_b = sbb / nn - (sb / nn) * (sb / nn);
  return cov / std::sqrt(var_a * var_b);
}

}  // namespace

TEST_CASE("population sizes follow shares with largest-remainder leftovers") {
  const auto ds1 = drofs::synthetic::population_sizes("synthetic1", 3600);
  CHECK(ds1 == std::vector<std::size_t>{1440, 1260, 900});

  // 10 rows at shares .4/.35/.25 leaves one row; B and C tie on the
  // fractional part and the earlier population wins.
  const auto tie = drofs::synthetic::population_sizes("synthetic1", 10);
  CHECK(tie == std::vector<std::size_t>{4, 4, 2});

  // Same tie rule applied to equal shares in synthetic3.
  const auto tie3 = drofs::synthetic::population_sizes("synthetic3", 10);
  CHECK(tie3 == std::vector<std::size_t>{4, 3, 3});

  const auto ds2 = drofs::synthetic::population_sizes("synthetic2", 4400);
  CHECK(ds2 == std::vector<std::size_t>{1530, 1339, 957, 574});
  CHECK(std::accumulate(ds2.begin(), ds2.end(), std::size_t{0}) == 4400);

  CHECK_THROWS_AS((void)drofs::synthetic::population_sizes("synthetic1", 2),
                  drofs::ConfigError);
  CHECK_THROWS_AS((void)drofs::synthetic::population_sizes("nope", 100),
                  drofs::ConfigError);
}

TEST_CASE("proportions are normalized in generation order") {
  const auto props = drofs::synthetic::proportions("synthetic2");
  REQUIRE(props.size() == 4);
  CHECK(props[0].first == "A");
  CHECK(props[3].first == "D");
  double total = 0.0;
  for (const auto& [id, share] : props) total += share;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(props[0].second == doctest::Approx(40.0 / 115.0).epsilon(1e-12));
}

TEST_CASE("true_mean matches the published coefficients") {
  std::vector<double> x(50, 0.0);

  SUBCASE("synthetic1 linear blocks") {
    x[0] = 1.0;
    CHECK(drofs::synthetic::true_mean("synthetic1", "A", x) == 8.0);
    CHECK(drofs::synthetic::true_mean("synthetic1", "B", x) == -8.0);
    x[0] = 0.0;
    x[5] = 2.0;
    x[6] = -1.0;
    CHECK(drofs::synthetic::true_mean("synthetic1", "A", x) == 0.0);
    CHECK(drofs::synthetic::true_mean("synthetic1", "B", x) == 2.0 * 8.0 - 6.0);
    x[5] = x[6] = 0.0;
    x[7] = 1.0;
    x[10] = 2.0;
    CHECK(drofs::synthetic::true_mean("synthetic1", "C", x) == 10.0 - 10.0);
  }

  SUBCASE("synthetic2 shares the mean between A and B but not C or D") {
    x[0] = 1.0;
    x[1] = -1.0;
    x[2] = 2.0;
    const double ab = 4.0 - 3.0 + 4.0;
    CHECK(drofs::synthetic::true_mean("synthetic2", "A", x) == ab);
    CHECK(drofs::synthetic::true_mean("synthetic2", "B", x) == ab);
    CHECK(drofs::synthetic::true_mean("synthetic2", "D", x) == 3.0 - 2.0);
    x[5] = 1.0;
    x[6] = 2.0;
    x[7] = 0.5;
    CHECK(drofs::synthetic::true_mean("synthetic2", "C", x) ==
          doctest::Approx(2.0 + 6.0 + 4.0 * std::sin(1.0)).epsilon(1e-15));
  }

  SUBCASE("synthetic3 uses disjoint index sets") {
    x[15] = 1.0;
    CHECK(drofs::synthetic::true_mean("synthetic3", "A", x) == 4.0);
    CHECK(drofs::synthetic::true_mean("synthetic3", "B", x) == 0.0);
    x[45] = -1.0;
    CHECK(drofs::synthetic::true_mean("synthetic3", "C", x) == -4.0);
  }

  SUBCASE("errors") {
    std::vector<double> small(10, 0.0);
    CHECK_THROWS_AS((void)drofs::synthetic::true_mean("synthetic1", "A", small),
                    drofs::DataError);
    CHECK_THROWS_AS((void)drofs::synthetic::true_mean("synthetic1", "Z", x),
                    drofs::ConfigError);
  }
}

TEST_CASE("zero noise scale yields exact conditional means") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic1";
  spec.n_total = 60;
  spec.noise_scale = 0.0;
  const auto data = drofs::synthetic::generate(spec, 3);
  for (const auto& pop : data.populations) {
    for (std::size_t r = 0; r < pop.size(); ++r) {
      const auto row = pop.x.row(r);
      CHECK(pop.y[r] == drofs::synthetic::true_mean("synthetic1", pop.id, row));
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic2";
  spec.n_total = 120;
  const auto d1 = drofs::synthetic::generate(spec, 11);
  const auto d2 = drofs::synthetic::generate(spec, 11);
  const auto d3 = drofs::synthetic::generate(spec, 12);

  bool equal = true;
  bool differs = false;
  for (std::size_t p = 0; p < d1.populations.size(); ++p) {
    for (std::size_t r = 0; r < d1.populations[p].size(); ++r) {
      equal = equal && d1.populations[p].y[r] == d2.populations[p].y[r];
      differs = differs || d1.populations[p].y[r] != d3.populations[p].y[r];
      for (std::size_t c = 0; c < d1.num_features(); ++c) {
        equal = equal && d1.populations[p].x(r, c) == d2.populations[p].x(r, c);
      }
    }
  }
  CHECK(equal);
  CHECK(differs);
}

TEST_CASE("each population's draw is a prefix of a larger draw") {
  // Streams are keyed by population id, so growing n_total extends each
  // population's rows without disturbing the ones already drawn.
  drofs::synthetic::SyntheticSpec small;
  small.dataset = "synthetic1";
  small.n_total = 100;
  drofs::synthetic::SyntheticSpec large = small;
  large.n_total = 200;

  const auto ds = drofs::synthetic::generate(small, 7);
  const auto dl = drofs::synthetic::generate(large, 7);
  for (const auto& pop_small : ds.populations) {
    const auto* pop_large = dl.find(pop_small.id);
    REQUIRE(pop_large != nullptr);
    REQUIRE(pop_large->size() >= pop_small.size());
    for (std::size_t r = 0; r < pop_small.size(); ++r) {
      CHECK(pop_small.y[r] == pop_large->y[r]);
      for (std::size_t c = 0; c < ds.num_features(); ++c) {
        CHECK(pop_small.x(r, c) == pop_large->x(r, c));
      }
    }
  }
}

TEST_CASE("synthetic3 features carry the designed serial correlation") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic3";
  spec.n_total = 30000;
  const auto data = drofs::synthetic::generate(spec, 5);
  // col1 = 0.3 col0 + 0.7 g, so corr = 0.3 / sqrt(0.09 + 0.49) = 0.39392.
  CHECK(pooled_corr(data, 0, 1) == doctest::Approx(0.3939193).epsilon(0.05));
  // Far-apart columns are nearly independent.
  CHECK(std::abs(pooled_corr(data, 0, 30)) < 0.03);
}

TEST_CASE("generate validates its spec") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic2";
  spec.n_total = 100;
  spec.dim = 10;  // below the dataset minimum of 50
  CHECK_THROWS_AS((void)drofs::synthetic::generate(spec, 1), drofs::ConfigError);

  spec.dim = 0;
  spec.n_total = 0;
  CHECK_THROWS_AS((void)drofs::synthetic::generate(spec, 1), drofs::ConfigError);

  spec.n_total = 100;
  spec.noise_scale = -1.0;
  CHECK_THROWS_AS((void)drofs::synthetic::generate(spec, 1), drofs::ConfigError);

  spec.noise_scale = 1.0;
  spec.dataset = "synthetic9";
  CHECK_THROWS_AS((void)drofs::synthetic::generate(spec, 1), drofs::ConfigError);
}
