#include "spamtree/synthgen.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <utility>

using namespace spamtree;

TEST_CASE("grid layout and size cap") {
  const LocationSet g = synth_grid(70, 2);
  CHECK(g.size() == 9800);
  std::set<std::pair<double, double>> sites;
  for (int i = 0; i < g.size(); ++i) {
    sites.insert({g.coords(i)[0], g.coords(i)[1]});
    CHECK(g.var(i) == i % 2);
  }
  CHECK(sites.size() == 4900);
  CHECK(g.coords(0)[0] == 0.0);
  CHECK(g.coords(g.size() - 1)[1] == 1.0);

  SynthConfig big;
  big.grid_side = 71;
  CHECK_THROWS_AS(generate(big), Error);
  big.grid_side = 58;
  big.q = 3;
  CHECK_THROWS_AS(generate(big), Error);
}

TEST_CASE("configuration errors") {
  SynthConfig c;
  c.grid_side = 5;
  c.missing_rate = 1.2;
  CHECK_THROWS_AS(generate(c), Error);
  c.missing_rate = 0.5;
  c.tau2 = Vector::Constant(3, 0.1);
  CHECK_THROWS_AS(generate(c), Error);
  c.tau2 = Vector();
  c.grid_side = 1;
  CHECK_THROWS_AS(generate(c), Error);
}

TEST_CASE("all missing keeps the truth") {
  SynthConfig c;
  c.grid_side = 8;
  c.missing_rate = 1.0;
  const SynthData d = generate(c);
  CHECK(d.data.n() == 128);
  for (int i = 0; i < d.data.n(); ++i) {
    CHECK(d.data.observed[i] == 0);
    CHECK(std::isnan(d.data.y(i)));
  }
  CHECK(d.truth.w.allFinite());
  CHECK(d.truth.y_full.allFinite());
  CHECK(d.truth.tau2(0) == 0.01);
  CHECK(d.truth.tau2(1) == 0.1);
}

TEST_CASE("missingness rates and patches") {
  SynthConfig c;
  c.grid_side = 40;
  c.q = 1;
  c.missing_rate = 0.8;
  c.patch_count = 2;
  c.patch_radius = 0.2;
  c.patch_missing_rate = 1.0;
  c.seed = 9;
  const SynthData d = generate(c);
  REQUIRE(d.truth.patch_centers.size() == 2);
  int out_n = 0, out_miss = 0;
  for (int i = 0; i < d.data.n(); ++i) {
    const double* x = d.data.locations.coords(i);
    bool inside = false;
    for (const auto& pc : d.truth.patch_centers)
      inside = inside || std::hypot(x[0] - pc[0], x[1] - pc[1]) <= 0.2;
    if (inside) {
      CHECK(d.data.observed[i] == 0);
    } else {
      ++out_n;
      out_miss += d.data.observed[i] == 0;
    }
    if (d.data.observed[i]) CHECK(d.data.y(i) == d.truth.y_full(i));
  }
  const double rate = double(out_miss) / out_n;
  CHECK(std::abs(rate - 0.8) < 4.0 * std::sqrt(0.16 / out_n));
}

TEST_CASE("dense factor reproduces the covariance") {
  for (int q : {1, 2, 3}) {
    const LocationSet g = synth_grid(12, q);
    const ThetaParams th = synth_default_theta(q);
    const Matrix l = synth_cov_factor(th, g);
    std::vector<int> idx(g.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Matrix c = cov_matrix(th, g, idx);
    CHECK((l * l.transpose() - c).norm() / c.norm() <= 1e-10);
  }
}

TEST_CASE("replicate draws match the target covariance") {
  const int reps = 5000, k = 10;
  SynthConfig c;
  c.grid_side = 3;
  c.q = 2;
  c.missing_rate = 0.0;
  c.patch_count = 0;
  Matrix s = Matrix::Zero(k, k);
  Vector m = Vector::Zero(k);
  for (int r = 0; r < reps; ++r) {
    c.seed = 1000 + r;
    const Vector w = generate(c).truth.w.head(k);
    s += w * w.transpose();
    m += w;
  }
  m /= reps;
  s /= reps;
  const LocationSet g = synth_grid(3, 2);
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  const Matrix target = cov_matrix(synth_default_theta(2), g, idx);
  int outside = 0;
  for (int a = 0; a < k; ++a) {
    if (std::abs(m(a)) > 3.0 * std::sqrt(target(a, a) / reps)) ++outside;
    for (int b = 0; b <= a; ++b) {
      const double se = std::sqrt((target(a, a) * target(b, b) + target(a, b) * target(a, b)) / reps);
      if (std::abs(s(a, b) - target(a, b)) > 3.0 * se) ++outside;
    }
  }
  CHECK(outside <= 1);
}

TEST_CASE("identical configs give identical data") {
  SynthConfig c;
  c.grid_side = 10;
  c.seed = 77;
  const SynthData a = generate(c), b = generate(c);
  CHECK(a.truth.w == b.truth.w);
  CHECK(a.data.observed == b.data.observed);
  CHECK(a.truth.patch_centers == b.truth.patch_centers);
  c.seed = 78;
  CHECK(generate(c).truth.w != a.truth.w);
}
