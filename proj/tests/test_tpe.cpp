#include <algorithm>
#include <cmath>
#include <vector>

#include "abcfit/tpe.hpp"
#include "catch_amalgamated.hpp"

using namespace abcfit;
using Catch::Matchers::WithinAbs;

namespace {
std::vector<Trial> make_trials(const std::vector<double>& eps) {
  std::vector<Trial> out;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    Trial t;
    t.index = i;
    t.epsilon = eps[i];
    t.theta = ParamVector(1 + static_cast<double>(i), 100, 1e13, 1e11, -5);
    out.push_back(t);
  }
  return out;
}

// Composite trapezoid over [0, 1].
template <typename F>
double trapezoid(F f, int n) {
  const double h = 1.0 / n;
  double s = 0.5 * (f(0.0) + f(1.0));
  for (int i = 1; i < n; ++i) s += f(i * h);
  return s * h;
}
}  // namespace

TEST_CASE("good set is the ceil(gamma n) lowest-loss trials") {
  const auto trials = make_trials({5, 3, 8, 1, 7, 2, 6, 4});
  const auto split = split_good_bad(std::span<const Trial>(trials), 0.25);
  REQUIRE(split.good.size() == 2);
  CHECK(split.bad.size() == 6);
  CHECK(split.good[0]->epsilon == 1);
  CHECK(split.good[1]->epsilon == 2);

  CHECK(split_good_bad(std::span<const Trial>(trials), 0.3).good.size() == 3);
}

TEST_CASE("a single trial is good") {
  const auto trials = make_trials({4});
  const auto split = split_good_bad(std::span<const Trial>(trials), 0.25);
  CHECK(split.good.size() == 1);
  CHECK(split.bad.empty());
}

TEST_CASE("equal losses rank by trial index") {
  auto trials = make_trials({2, 1, 1, 3});
  const auto split = split_good_bad(std::span<const Trial>(trials), 0.25);
  REQUIRE(split.good.size() == 1);
  CHECK(split.good[0]->index == 1);
  CHECK(split.bad[0]->index == 2);
  CHECK_THROWS_AS(split_good_bad(std::span<const Trial>(), 0.25), InvalidInput);
}

TEST_CASE("a very wide kernel is uniform on [0,1]") {
  const std::vector<double> c{0.5}, h{1e6};
  for (double x : {0.0, 0.3, 0.5, 0.9, 1.0}) CHECK_THAT(parzen_density(x, c, h), WithinAbs(1.0, 1e-3));
}

TEST_CASE("densities integrate to one") {
  Rng rng(31);
  for (int draw = 0; draw < 25; ++draw) {
    const auto k = 1 + rng.index(8);
    std::vector<double> c, h;
    for (std::size_t i = 0; i < k; ++i) {
      c.push_back(rng.uniform());
      h.push_back(0.05 + rng.uniform());
    }
    const double total = trapezoid([&](double x) { return parzen_density(x, c, h); }, 10000);
    CHECK_THAT(total, WithinAbs(1.0, 1e-6));
    const ParzenMixture with_background(c, h, 1.0 / static_cast<double>(k + 1));
    CHECK_THAT(trapezoid([&](double x) { return with_background.density(x); }, 10000), WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("density peaks at its center and vanishes outside [0,1]") {
  const std::vector<double> c{0.5}, h{0.05};
  CHECK(parzen_density(0.5, c, h) > parzen_density(0.0, c, h));
  CHECK(parzen_density(0.5, c, h) > parzen_density(0.45, c, h));
  CHECK(parzen_density(-0.01, c, h) == 0.0);
  CHECK(parzen_density(1.01, c, h) == 0.0);
  CHECK(parzen_density(1.0, c, h) > 0.0);
  CHECK_THROWS_AS(parzen_density(0.5, std::vector<double>{}, std::vector<double>{}), InvalidInput);
  CHECK_THROWS_AS(parzen_density(0.5, c, std::vector<double>{0.0}), InvalidInput);
}

TEST_CASE("kernel samples follow the density") {
  const ParzenMixture m({0.2, 0.8}, {0.05, 0.1});
  Rng rng(4);
  int left = 0;
  for (int i = 0; i < 20000; ++i) {
    const double x = m.sample(rng);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    left += x < 0.5;
  }
  CHECK(left == Catch::Approx(10000).margin(300));
}

TEST_CASE("nearest-neighbour bandwidths") {
  const std::vector<double> c{0.35, 0.1, 0.3};
  const auto bw = neighbor_bandwidths(c, 1e-3);
  CHECK_THAT(bw[0], WithinAbs(0.05, 1e-15));
  CHECK_THAT(bw[1], WithinAbs(0.2, 1e-15));
  CHECK_THAT(bw[2], WithinAbs(0.05, 1e-15));
  CHECK(neighbor_bandwidths(std::vector<double>{0.4, 0.4}, 1e-3) == std::vector<double>{1e-3, 1e-3});
  CHECK(neighbor_bandwidths(std::vector<double>{0.7}, 1e-3) == std::vector<double>{0.5});
}

TEST_CASE("startup phase samples uniformly") {
  TpeConfig cfg;
  Rng a(12), b(12);
  CHECK(suggest({}, default_space(), cfg, a) == sample_uniform(default_space(), b));
  auto few = make_trials(std::vector<double>(19, 1.0));
  CHECK(suggest(few, default_space(), cfg, a) == sample_uniform(default_space(), b));
}

TEST_CASE("suggestions concentrate where the good trials cluster") {
  const auto space = default_space();
  Rng hist(8);
  std::vector<Trial> trials;
  for (std::size_t i = 0; i < 100; ++i) {
    Trial t;
    t.index = i;
    UnitPoint u{};
    for (auto& x : u) x = hist.uniform();
    if (i % 4 == 0) u[0] = 0.2 + 0.02 * (hist.uniform() - 0.5);
    t.theta = from_unit(u, space);
    t.epsilon = std::abs(u[0] - 0.2);
    trials.push_back(t);
  }
  Rng rng(9);
  std::vector<double> first;
  for (int i = 0; i < 500; ++i) first.push_back(to_unit(suggest(trials, space, TpeConfig{}, rng), space)[0]);
  std::nth_element(first.begin(), first.begin() + 250, first.end());
  CHECK(first[250] >= 0.05);
  CHECK(first[250] <= 0.35);
}

TEST_CASE("suggest is deterministic and stays inside the space") {
  auto space = default_space();
  space[0] = Interval{5, 6};
  Rng hist(2);
  std::vector<Trial> trials;
  for (std::size_t i = 0; i < 60; ++i) {
    Trial t;
    t.index = i;
    t.theta = sample_uniform(default_space(), hist);  // partly outside `space`
    t.epsilon = hist.uniform();
    t.failed = i % 7 == 0;
    trials.push_back(t);
  }
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = suggest(trials, space, TpeConfig{}, a);
    REQUIRE(x == suggest(trials, space, TpeConfig{}, b));
    REQUIRE(space.contains(x));
  }
}

TEST_CASE("failed trials do not count toward the startup phase") {
  TpeConfig cfg;
  cfg.n_startup = 5;
  auto trials = make_trials({1, 2, 3, 4, 5});
  trials[2].failed = true;
  Rng a(1), b(1);
  CHECK(suggest(trials, default_space(), cfg, a) == sample_uniform(default_space(), b));
}

TEST_CASE("config validation") {
  TpeConfig c;
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.n_startup = 1;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.n_candidates = 0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = {};
  c.bandwidth_floor = 0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}
