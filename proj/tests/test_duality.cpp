#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/math.hpp"
#include "pdgibbs/oracle.hpp"
#include "support.hpp"

using namespace pdgibbs;

namespace {

Mat2 product_bct(const Mat2& b, const Mat2& c) { return b * c.transposed(); }

double max_rel_diff(const Mat2& a, const Mat2& b) {
  double err = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) err = std::max(err, std::abs(a(r, c) - b(r, c)) / std::abs(b(r, c)));
  return err;
}

/// Largest deviation of a / b from a single constant, relative.
double proportionality_error(const Table& a, const Table& b) {
  const double c = a(0, 0) / b(0, 0);
  double err = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t k = 0; k < a.cols(); ++k) err = std::max(err, std::abs(a(r, k) / (c * b(r, k)) - 1.0));
  return err;
}

double proportionality_error(const Mat2& a, const Mat2& b) {
  const double c = a(0, 0) / b(0, 0);
  double err = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int k = 0; k < 2; ++k) err = std::max(err, std::abs(a(r, k) / (c * b(r, k)) - 1.0));
  return err;
}

/// The mixture written out term by term, independent of marginalize_dual.
Mat2 evaluate_dual_sum(const DualFactor& d) {
  Mat2 out;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int theta = 0; theta < 2; ++theta)
        out(x1, x2) += std::exp(d.alpha1 * x1 + d.alpha2 * x2) * std::exp(d.q * theta) *
                       std::exp(theta * (d.beta1 * x1 + d.beta2 * x2));
  return out;
}

}  // namespace

TEST_SUITE("duality") {

TEST_CASE("symmetric_factor examples") {
  SUBCASE("all ones is rank one") {
    const auto f = symmetric_factor(Mat2{{{1, 1}, {1, 1}}});
    CHECK(f.phi == doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) CHECK(f.b(r, c) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
  }
  SUBCASE("[[2,1],[1,2]]") {
    const Mat2 p{{{2, 1}, {1, 2}}};
    const auto f = symmetric_factor(p);
    CHECK(f.phi == doctest::Approx(std::numbers::pi / 12).epsilon(1e-14));
    CHECK(f.b(0, 0) == doctest::Approx(1.36603).epsilon(1e-5));
    CHECK(f.b(0, 1) == doctest::Approx(0.36603).epsilon(1e-4));
    CHECK(f.b(1, 0) == doctest::Approx(0.36603).epsilon(1e-4));
    CHECK(f.b(1, 1) == doctest::Approx(1.36603).epsilon(1e-5));
    CHECK(max_rel_diff(product_bct(f.b, f.b), p) < 1e-12);
  }
  SUBCASE("phi formula") {
    const Mat2 p{{{3, 2}, {2, 5}}};
    const double phi = std::numbers::pi / 4 - 0.5 * std::acos(2.0 / std::sqrt(15.0));
    CHECK(symmetric_factor(p).phi == doctest::Approx(phi).epsilon(1e-14));
  }
}

TEST_CASE("symmetric_factor property") {
  testing::Gen g(101);
  for (int i = 0; i < 1000; ++i) {
    const Mat2 p = g.symmetric_psd_mat2();
    const auto f = symmetric_factor(p);
    CHECK(max_rel_diff(product_bct(f.b, f.b), p) < 1e-12);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) CHECK(f.b(r, c) > 0.0);
    CHECK(f.phi >= 0.0);
    CHECK(f.phi <= std::numbers::pi / 4 + 1e-15);
  }
}

TEST_CASE("symmetric_factor errors") {
  CHECK_THROWS_AS(symmetric_factor(Mat2{{{1, 2}, {3, 4}}}), std::invalid_argument);
  CHECK_THROWS_AS(symmetric_factor(Mat2{{{1, 2}, {2, 1}}}), std::invalid_argument);
  CHECK_THROWS_AS(symmetric_factor(Mat2{{{0, 1}, {1, 1}}}), std::invalid_argument);
  CHECK_THROWS_AS(symmetric_factor(Mat2{{{1, -1}, {-1, 1}}}), std::invalid_argument);
}

TEST_CASE("symmetric_factor at det = 0 gives equal columns") {
  const auto f = symmetric_factor(Mat2{{{4, 6}, {6, 9}}});
  CHECK(f.b(0, 0) == doctest::Approx(f.b(0, 1)).epsilon(1e-12));
  CHECK(f.b(1, 0) == doctest::Approx(f.b(1, 1)).epsilon(1e-12));
  // Nearly rank one: roundoff pushes the cosine past 1 and must be clamped.
  const double e = 1e-17;
  const auto g = symmetric_factor(Mat2{{{1.0 / 3, 1.0 / 3 + e}, {1.0 / 3 + e, 1.0 / 3}}});
  CHECK(std::isfinite(g.b(0, 0)));
  CHECK(std::isfinite(g.phi));
}

TEST_CASE("factorize_positive") {
  SUBCASE("all ones") {
    const Mat2 p{{{1, 1}, {1, 1}}};
    const auto bc = factorize_positive(p);
    CHECK(max_rel_diff(product_bct(bc.b, bc.c), p) < 1e-15);
  }
  SUBCASE("negative determinant") {
    const Mat2 p{{{1, 2}, {3, 4}}};
    const auto bc = factorize_positive(p);
    CHECK(max_rel_diff(product_bct(bc.b, bc.c), p) < 1e-10);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        CHECK(bc.b(r, c) > 0.0);
        CHECK(bc.c(r, c) > 0.0);
      }
  }
  SUBCASE("1000 random tables") {
    testing::Gen g(7);
    for (int i = 0; i < 1000; ++i) {
      const Mat2 p = g.positive_mat2();
      const auto bc = factorize_positive(p);
      CHECK(max_rel_diff(product_bct(bc.b, bc.c), p) < 1e-10);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          CHECK(bc.b(r, c) > 0.0);
          CHECK(bc.c(r, c) > 0.0);
        }
    }
  }
  SUBCASE("rank one") {
    const Mat2 p{{{2, 6}, {1, 3}}};
    const auto bc = factorize_positive(p);
    CHECK(max_rel_diff(product_bct(bc.b, bc.c), p) < 1e-12);
  }
  CHECK_THROWS_AS(factorize_positive(Mat2{{{1, 0}, {1, 1}}}), std::invalid_argument);
  CHECK_THROWS_AS(factorize_positive(Mat2{{{1, -2}, {1, 1}}}), std::invalid_argument);
}

TEST_CASE("dual_params examples") {
  const DualFactor zero = dual_params(Mat2{{{1, 1}, {1, 1}}}, Mat2{{{1, 1}, {1, 1}}});
  CHECK(zero.alpha1 == 0.0);
  CHECK(zero.alpha2 == 0.0);
  CHECK(zero.q == 0.0);
  CHECK(zero.beta1 == 0.0);
  CHECK(zero.beta2 == 0.0);

  const Mat2 b{{{1, 1}, {2, 1}}}, c{{{1, 1}, {1, 2}}};
  const DualFactor d = dual_params(b, c);
  const double l2 = std::log(2.0);
  CHECK(d.alpha1 == doctest::Approx(l2).epsilon(1e-15));
  CHECK(d.alpha2 == doctest::Approx(0.0));
  CHECK(d.q == doctest::Approx(0.0));
  CHECK(d.beta1 == doctest::Approx(-l2).epsilon(1e-15));
  CHECK(d.beta2 == doctest::Approx(l2).epsilon(1e-15));
  const Mat2 bct = product_bct(b, c);
  CHECK(bct == Mat2{{{2, 3}, {3, 4}}});
  // Here the mixture constant is B11 C11 = 1, so the sum is exact.
  const Mat2 sum = evaluate_dual_sum(d);
  CHECK(max_rel_diff(sum, bct) < 1e-14);
  CHECK(max_rel_diff(marginalize_dual(d), bct) < 1e-14);

  CHECK_THROWS_AS(dual_params(Mat2{{{0, 1}, {1, 1}}}, c), std::invalid_argument);
}

TEST_CASE("dual_params reconstruction property") {
  testing::Gen g(9);
  for (int i = 0; i < 1000; ++i) {
    const Mat2 b = g.positive_mat2(), c = g.positive_mat2();
    const DualFactor d = dual_params(b, c);
    CHECK(proportionality_error(evaluate_dual_sum(d), product_bct(b, c)) < 1e-10);
  }
}

TEST_CASE("rank-one tables have no dual coupling") {
  testing::Gen g(13);
  for (int i = 0; i < 200; ++i) {
    const double u0 = std::exp(g.normal()), u1 = std::exp(g.normal());
    const double v0 = std::exp(g.normal()), v1 = std::exp(g.normal());
    const Mat2 p{{{u0 * v0, u0 * v1}, {u1 * v0, u1 * v1}}};
    const auto bc = factorize_positive(p);
    const DualFactor d = dual_params(bc.b, bc.c);
    CHECK(std::abs(d.beta1) < 1e-9);
    CHECK(std::abs(d.beta2) < 1e-9);
  }
}

TEST_CASE("scaling a table leaves beta unchanged") {
  testing::Gen g(17);
  for (int i = 0; i < 200; ++i) {
    const Mat2 p = g.positive_mat2();
    Mat2 p7 = p;
    for (auto& row : p7.m)
      for (double& x : row) x *= 7.0;
    const auto bc = factorize_positive(p), bc7 = factorize_positive(p7);
    const DualFactor d = dual_params(bc.b, bc.c), d7 = dual_params(bc7.b, bc7.c);
    CHECK(std::abs(d.beta1 - d7.beta1) < 1e-12);
    CHECK(std::abs(d.beta2 - d7.beta2) < 1e-12);
    CHECK(std::abs(d.alpha1 - d7.alpha1) < 1e-12);
    CHECK(std::abs(d.alpha2 - d7.alpha2) < 1e-12);
    CHECK(std::abs(d.q - d7.q) < 1e-12);
    // The constant moves into the reconstruction scale only.
    const Mat2 s = evaluate_dual_sum(d), s7 = evaluate_dual_sum(d7);
    CHECK(proportionality_error(s7, p7) < 1e-10);
    CHECK(proportionality_error(s, s7) < 1e-12);
  }
}

TEST_CASE("sw_decompose") {
  const auto half = sw_decompose(std::log(2.0), 2);
  REQUIRE(half.components.size() == 2);
  CHECK(half.weights()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.weights()[1] == doctest::Approx(0.5).epsilon(1e-15));

  const auto tiny = sw_decompose(1e-12, 2);
  CHECK(tiny.weights()[0] == doctest::Approx(1.0));
  CHECK(tiny.weights()[1] < 1e-11);

  const auto one = sw_decompose(1.0, 2);
  CHECK(one.weights()[0] == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(one.weights()[1] == doctest::Approx(0.63212).epsilon(1e-5));
  const Table rec = one.reconstruct();
  const Table target = ising_table(1.0);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) CHECK(std::abs(rec(a, b) - target(a, b)) < 1e-15);

  const auto potts = sw_decompose(0.7, 4);
  const Table prec = potts.reconstruct(), ptarget = potts_table(4, 0.7);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) CHECK(std::abs(prec(a, b) - ptarget(a, b)) < 1e-15);

  CHECK_THROWS_AS(sw_decompose(0.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(sw_decompose(-1.0, 2), std::invalid_argument);
}

TEST_CASE("higdon_decompose") {
  const double w = 1.0;
  const auto mix = higdon_decompose(w, 0.3);
  REQUIRE(mix.components.size() == 3);
  CHECK(mix.components[2].kind == ComponentKind::Equality);
  CHECK(mix.components[2].weight == 0.3);
  CHECK(proportionality_error(mix.reconstruct(), ising_table(w)) < 1e-10);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) CHECK(std::abs(mix.reconstruct()(a, b) - ising_table(w)(a, b)) < 1e-12);

  // The largest alpha leaves a rank-one first term.
  const double edge = 1.0 - std::exp(-w);
  const auto rank1 = higdon_decompose(w, edge);
  CHECK(proportionality_error(rank1.reconstruct(), ising_table(w)) < 1e-10);
  for (const auto& c : rank1.components)
    for (double x : c.left) CHECK(std::isfinite(x));

  // A tiny alpha is nearly the plain factorization.
  const auto small = higdon_decompose(w, 1e-14);
  CHECK(small.components[2].weight < 1e-13);
  CHECK(proportionality_error(small.reconstruct(), ising_table(w)) < 1e-10);

  CHECK_THROWS_AS(higdon_decompose(w, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(higdon_decompose(w, edge + 0.01), std::invalid_argument);
  CHECK_THROWS_AS(higdon_decompose(0.0, 0.1), std::invalid_argument);
}

TEST_CASE("entrywise mixture and potts detection") {
  testing::Gen g(23);
  const Table t = g.positive_table(3, 4);
  const auto mix = entrywise_mixture(t);
  CHECK(mix.components.size() == 12);
  CHECK(mix.components[0].weight == t.min_entry());
  const Table rec = mix.reconstruct();
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 4; ++b) CHECK(std::abs(rec(a, b) - t(a, b)) < 1e-14 * t(a, b));
  // Entries equal to the minimum need no component of their own.
  CHECK(entrywise_mixture(Table{{1, 1, 2}, {1, 3, 1}}).components.size() == 3);

  CHECK(potts_coupling(potts_table(3, 0.4)).has_value());
  CHECK(*potts_coupling(potts_table(3, 0.4)) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(!potts_coupling(t).has_value());
  CHECK(!potts_coupling(Table{{1, 2}, {3, 1}}).has_value());
}

TEST_CASE("every dualized factor reconstructs its table") {
  testing::Gen g(29);
  for (int i = 0; i < 300; ++i) {
    Model m(std::vector<std::size_t>{2, 2, 3, 3});
    m.add_factor(0, 1, g.positive_table(2, 2));
    m.add_factor(2, 3, g.positive_table(3, 3));
    m.add_factor(1, 2, g.positive_table(2, 3));
    m.add_factor(2, 3, potts_table(3, g.uniform(0.05, 3.0)));
    m.add_factor(0, 1, ising_table(g.uniform(0.05, 3.0)));
    for (auto scheme : {DualizationScheme::Factorized, DualizationScheme::Higdon}) {
      DualizeOptions opts;
      opts.scheme = scheme;
      const DualModel dm(m, opts);
      for (std::size_t k = 0; k < m.num_factors(); ++k)
        CHECK(proportionality_error(reconstruct_table(dm.dual(k)), m.factors()[k].table) < 1e-10);
    }
  }
}

TEST_CASE("dualize_factor routing") {
  Model m(std::vector<std::size_t>{2, 2});
  const FactorId ising = m.add_factor(0, 1, ising_table(0.5));
  const FactorId generic = m.add_factor(0, 1, Table{{1, 2}, {3, 4}});
  const DualModel dm(m);
  CHECK(dm.dual(m.factor_index(ising)).params.has_value());
  CHECK(!dm.dual(m.factor_index(ising)).has_equality());
  CHECK(dm.dual(m.factor_index(generic)).cardinality() == 2);

  DualizeOptions sw;
  sw.scheme = DualizationScheme::SwendsenWang;
  CHECK_THROWS_AS(DualModel(m, sw), std::invalid_argument);
  try {
    DualModel(m, sw);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("factor 1") != std::string::npos);
  }

  Model anti(std::vector<std::size_t>{2, 2});
  anti.add_factor(0, 1, ising_table(-0.5));
  CHECK_THROWS_AS(DualModel(anti, sw), std::invalid_argument);

  Model zeroish(std::vector<std::size_t>{2, 2});
  zeroish.add_factor(0, 1, Table{{1, 1e-14}, {1, 1}});
  CHECK_THROWS_AS(DualModel{zeroish}, std::invalid_argument);
}

TEST_CASE("empty model has an empty dual") {
  const DualModel dm(Model(std::vector<std::size_t>{2, 2, 2}));
  CHECK(dm.num_factors() == 0);
  CHECK(dual_space_size(dm) == 1);
}

TEST_CASE("marginalizing theta recovers p(x)") {
  SUBCASE("3x3 grid") {
    const Model m = build_grid_ising(3, 3, 0.3);
    const DualModel dm(m);
    std::vector<double> ratios;
    for_each_state(m, [&](std::size_t, const State& x) {
      double s = kNegInf;
      for_each_dual_state(dm, [&](std::size_t, const DualState& t) { s = log_add(s, log_dual_joint(dm, x, t)); });
      ratios.push_back(s - energy(m, x));
    });
    CHECK(ratios.size() == 512);
    for (double r : ratios) CHECK(std::abs(std::expm1(r - ratios[0])) < 1e-9);
  }
  SUBCASE("random models under every scheme") {
    testing::Gen g(31);
    for (int trial = 0; trial < 20; ++trial) {
      const Model m = g.binary_model(4, 5);
      const DualModel dm(m);
      double first = 0.0;
      bool have = false;
      for_each_state(m, [&](std::size_t, const State& x) {
        double s = kNegInf;
        for_each_dual_state(dm, [&](std::size_t, const DualState& t) { s = log_add(s, log_dual_joint(dm, x, t)); });
        const double r = s - energy(m, x);
        if (!have) first = r, have = true;
        CHECK(std::abs(r - first) < 1e-9);
      });
    }
    const Model grid = build_grid_ising(2, 3, 0.8, testing::grid_unaries(6, 4));
    for (auto scheme : {DualizationScheme::SwendsenWang, DualizationScheme::Higdon}) {
      DualizeOptions opts;
      opts.scheme = scheme;
      const DualModel dm(grid, opts);
      const auto joint = exact_dual_joint(dm);
      const auto primal = exact_summary(grid, true);
      CHECK(joint.log_z == doctest::Approx(primal.log_z).epsilon(1e-12));
      for (std::size_t r = 0; r < primal.joint.size(); ++r) CHECK(std::abs(joint.p_x[r] - primal.joint[r]) < 1e-12);
    }
  }
}

TEST_CASE("dual model edits are local") {
  Model m = build_grid_ising(6, 6, 0.3, testing::grid_unaries(36, 8));
  DualModel dm(m);
  const std::vector<FactorDual> before(dm.duals().begin(), dm.duals().end());
  const auto ops0 = dm.field_operations();
  const FactorId id = dm.add_factor(0, 35, Table{{2, 1}, {1, 3}});
  CHECK(dm.field_operations() - ops0 <= 2 * 5);
  for (std::size_t k = 0; k < before.size(); ++k) {
    CHECK(dm.dual(k).components[0].log_weight == before[k].components[0].log_weight);
    CHECK(dm.dual(k).components[1].log_left == before[k].components[1].log_left);
    CHECK(dm.dual(k).shift_u == before[k].shift_u);
  }
  // The new dual is what dualizing the whole model from scratch produces.
  const DualModel fresh(dm.base());
  const std::size_t idx = dm.base().factor_index(id);
  CHECK(fresh.dual(idx).components[1].log_right == dm.dual(idx).components[1].log_right);
  for (VarId v = 0; v < 36; ++v)
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(fresh.field(v)[k] - dm.field(v)[k]) < 1e-14);

  std::vector<int> theta(dm.num_factors(), 0);
  theta.back() = 1;
  dm.remove_factor(dm.base().factors()[3].id, &theta);
  CHECK(theta.size() == dm.num_factors());
  CHECK(theta[3] == 1);
  const DualModel fresh2(dm.base());
  for (VarId v = 0; v < 36; ++v)
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(fresh2.field(v)[k] - dm.field(v)[k]) < 1e-14);
}

TEST_CASE("custom duals are validated") {
  const Model m = build_grid_ising(1, 2, 0.4);
  FactorDual good = factor_dual_from(sw_decompose(0.4, 2), 0.0);
  CHECK_NOTHROW(DualModel(m, {good}));
  FactorDual bad = good;
  bad.components[0].log_weight += 0.5;
  CHECK_THROWS_AS(DualModel(m, {bad}), std::invalid_argument);
  CHECK_THROWS_AS(DualModel(m, std::vector<FactorDual>{}), std::invalid_argument);
}

}  // TEST_SUITE
