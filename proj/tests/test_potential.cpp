#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sparsewalk/potential.hpp"

using namespace sparsewalk;

namespace {

Errc code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::InvalidArgument;
}

std::set<int> support_coords(const PotentialSpec& s) {
  std::set<int> out;
  for (const auto& sv : s.support(s.box_radius())) out.insert(sv.site[0]);
  return out;
}

}  // namespace

TEST(GeometricSparse, SupportAndV0) {
  const auto s = build_geometric_sparse(1, 1.0, 3, 100);
  EXPECT_EQ(support_coords(s), (std::set<int>{-81, -27, -9, -3, -1, 1, 3, 9, 27, 81}));
  EXPECT_DOUBLE_EQ(s.v0(), 1.0);
  EXPECT_DOUBLE_EQ(s(make_site({27})), 1.0);
  EXPECT_DOUBLE_EQ(s(make_site({28})), 0.0);
  EXPECT_DOUBLE_EQ(s(make_site({0})), 0.0);
}

TEST(GeometricSparse, AnchorValue) {
  const auto s = build_geometric_sparse(1, 1.0, 3, 100, SiteValue{kOrigin, 2.0});
  EXPECT_DOUBLE_EQ(s(kOrigin), 2.0);
  EXPECT_GE(s(kOrigin), s.v0());
  EXPECT_DOUBLE_EQ(s.bound(), 2.0);
  EXPECT_EQ(code_of([] { build_geometric_sparse(1, 1.0, 3, 100, SiteValue{kOrigin, 0.5}); }), Errc::AnchorBelowV0);
}

TEST(GeometricSparse, AllAxesInTwoDimensions) {
  const auto s = build_geometric_sparse(2, 1.0, 2, 20, std::nullopt, true);
  EXPECT_DOUBLE_EQ(s(make_site({0, 16})), 1.0);
  EXPECT_DOUBLE_EQ(s(make_site({-8, 0})), 1.0);
  EXPECT_DOUBLE_EQ(s(make_site({8, 8})), 0.0);
  EXPECT_EQ(s.support(20).size(), 20u);
}

TEST(V0, DeclaredAndEmpirical) {
  const auto s = build_geometric_sparse(1, 1.0, 3, 2048);
  const auto rep = v0_of(s, {10, 100, 700});
  EXPECT_DOUBLE_EQ(rep.declared, 1.0);
  for (double e : rep.empirical) EXPECT_DOUBLE_EQ(e, 1.0);
  EXPECT_TRUE(rep.consistent);

  const auto dec = build_decaying(1, 1.0, std::log(2.0), 200);
  const auto rd = v0_of(dec, {5, 20, 60});
  EXPECT_DOUBLE_EQ(rd.declared, 0.0);
  EXPECT_NEAR(rd.empirical[0], std::pow(0.5, 5), 1e-15);
  EXPECT_LT(rd.empirical[2], rd.empirical[1]);
  EXPECT_LT(rd.empirical[2], 1e-17);
}

TEST(V0, AlternatingValues) {
  const auto s = build_sparse_values(1, 3, {1.0, 0.5}, 2048);
  EXPECT_EQ(s.declared_essential_values(), (std::vector<double>{0.0, 0.5, 1.0}));
  const auto rep = v0_of(s, {10, 100, 500});
  EXPECT_DOUBLE_EQ(rep.declared, 1.0);
  for (double e : rep.empirical) EXPECT_DOUBLE_EQ(e, 1.0);
  EXPECT_DOUBLE_EQ(s(make_site({3})), 0.5);
  EXPECT_DOUBLE_EQ(s(make_site({9})), 1.0);
  for (double v : s.declared_essential_values()) {
    for (double eps : {0.1, 0.01}) {
      const auto a = count_near_value(s, v, eps, 16);
      const auto b = count_near_value(s, v, eps, 128);
      const auto c = count_near_value(s, v, eps, 1024);
      EXPECT_LT(a, b) << v;
      EXPECT_LT(b, c) << v;
    }
  }
}

TEST(V0, EmpiricalNeverExceedsBound) {
  for (const auto& s : {build_geometric_sparse(1, 1.5, 2, 500, SiteValue{kOrigin, 3.0}),
                        build_decaying(2, 0.7, 0.3, 30), build_constant(1, 1.0, 50)}) {
    const auto rep = v0_of(s, {1, 5, 20});
    for (double e : rep.empirical) EXPECT_LE(e, s.bound());
    EXPECT_DOUBLE_EQ(rep.declared, *std::max_element(s.declared_essential_values().begin(),
                                                     s.declared_essential_values().end()));
  }
}

TEST(Sparseness, SingleDelta) {
  const auto s = build_single_delta(1, 2.0, 50);
  const auto prof = sparseness_profile(s, 1.0, 50);
  ASSERT_EQ(prof.samples.size(), 1u);
  EXPECT_EQ(prof.samples[0].second, 0.0);
  for (double t : prof.sup_tail) EXPECT_EQ(t, 0.0);
}

TEST(Sparseness, GeometricTailStrictlyDecreases) {
  for (int base : {2, 3}) {
    const auto s = build_geometric_sparse(1, 1.0, base, 200);
    for (double eps : {0.25, 0.5, 1.0}) {
      const auto prof = sparseness_profile(s, eps, 200);
      EXPECT_TRUE(prof.strictly_decreasing()) << base << " " << eps;
      for (const auto& [x, a] : prof.samples) EXPECT_GE(a, 0.0);
    }
  }
}

TEST(Sparseness, DenseControlStaysLarge) {
  const auto s = build_constant(1, 1.0, 200);
  const auto prof = sparseness_profile(s, 1.0, 200);
  for (double t : prof.sup_tail) EXPECT_GT(t, 0.5);
  EXPECT_FALSE(prof.strictly_decreasing());
}

TEST(PairSeparation, Enumeration) {
  const auto s = build_geometric_sparse(1, 1.0, 3, 100);
  EXPECT_DOUBLE_EQ(pair_separation(s, 9), 18.0);
  EXPECT_DOUBLE_EQ(pair_separation(s, 2), 6.0);
  EXPECT_DOUBLE_EQ(pair_separation(s, 20), 54.0);
  const auto two = build_explicit(1, {{make_site({2}), 1.0}, {make_site({-5}), 1.0}}, 20);
  EXPECT_DOUBLE_EQ(pair_separation(two, 1), 7.0);
  EXPECT_EQ(code_of([&] { pair_separation(two, 6); }), Errc::InsufficientSupport);
}

TEST(ConcentrationCube, FrozenSearches) {
  const auto s = build_geometric_sparse(1, 1.0, 3, 100);
  const Site c = find_concentration_cube(s, 10, 2, 0.5);
  EXPECT_EQ(c, make_site({27}));
  EXPECT_TRUE(check_concentration_cube(s, 10, 2, 0.5, c));
  const Site c2 = find_concentration_cube(s, 1, 1, 0.9);
  EXPECT_EQ(c2, make_site({3}));
  EXPECT_TRUE(check_concentration_cube(s, 1, 1, 0.9, c2));
  EXPECT_EQ(code_of([] { find_concentration_cube(build_decaying(1, 1.0, 1.0, 50), 1, 1, 0.5); }), Errc::ZeroV0);
  EXPECT_EQ(code_of([&] { find_concentration_cube(s, 90, 5, 0.5); }), Errc::NotFoundInBox);
}

TEST(ConcentrationCube, ResultAlwaysPassesIndependentCheck) {
  const auto s = build_sparse_values(2, 2, {1.0, 0.6}, 64, true);
  for (int L : {0, 3, 10, 20}) {
    for (int ell : {1, 2, 4}) {
      for (double eps : {0.3, 0.5, 0.9}) {
        try {
          const Site c = find_concentration_cube(s, L, ell, eps);
          EXPECT_TRUE(check_concentration_cube(s, L, ell, eps, c)) << L << " " << ell << " " << eps;
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), Errc::NotFoundInBox);
        }
      }
    }
  }
}
