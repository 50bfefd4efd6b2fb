#include <gtest/gtest.h>

#include <cmath>

#include "bvsrik/error.hpp"
#include "bvsrik/kernel_dictionary.hpp"
#include "bvsrik/training.hpp"
#include "support.hpp"

using namespace bvsrik;
using testing_support::check_gradient;
using testing_support::random_tensor;

namespace {

// phi(x, y) written out from the documented network form.
Real reference_phi(const InrAtom& a, Real x, Real y) {
  const int h = a.hidden();
  const Tensor &w1 = a.w1.value(), &b1 = a.b1.value(), &w2 = a.w2.value(), &b2 = a.b2.value(),
               &w3 = a.w3.value();
  const Real f = a.frequency.value()[0];
  std::vector<Real> h1(h);
  for (int k = 0; k < h; ++k) h1[k] = std::sin(f * (w1[2 * k] * x + w1[2 * k + 1] * y + b1[k]));
  Real out = a.b3.value()[0];
  for (int k = 0; k < h; ++k) {
    Real acc = b2[k];
    for (int m = 0; m < h; ++m) acc += w2[k * h + m] * h1[m];
    out += w3[k] * std::sin(acc);
  }
  return out;
}

Real coord(int index, int size) { return size == 1 ? 0.0 : -1.0 + 2.0 * index / (size - 1); }

}  // namespace

TEST(InitAtoms, FullConfigurationFrequenciesInRange) {
  const auto atoms = init_atoms(8, 2, 16, 0);
  ASSERT_EQ(atoms.size(), 8u);
  for (const InrAtom& a : atoms) {
    EXPECT_GE(a.frequency_value(), 2.0);
    EXPECT_LE(a.frequency_value(), 16.0);
  }
}

TEST(InitAtoms, DegenerateRangeGivesExactFrequency) {
  const auto atoms = init_atoms(1, 5, 5, 0);
  ASSERT_EQ(atoms.size(), 1u);
  EXPECT_EQ(atoms[0].frequency_value(), 5.0);
}

TEST(InitAtoms, FixedSeedIsBitIdentical) {
  const auto a = init_atoms(3, 2, 16, 7);
  const auto b = init_atoms(3, 2, 16, 7);
  for (std::size_t n = 0; n < a.size(); ++n) {
    const auto pa = a[n].parameters(), pb = b[n].parameters();
    for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k].value().storage(), pb[k].value().storage());
  }
  const auto c = init_atoms(3, 2, 16, 8);
  EXPECT_NE(a[0].w1.value().storage(), c[0].w1.value().storage());
}

TEST(InitAtoms, RejectsBadArguments) {
  EXPECT_THROW(init_atoms(0, 2, 16, 0), ValidationError);
  EXPECT_THROW(init_atoms(2, 16, 2, 0), ValidationError);
  EXPECT_THROW(init_atoms(2, 0, 2, 0), ValidationError);
}

TEST(RenderAtom, SizeOneIsCenterSample) {
  const auto atoms = init_atoms(2, 2, 16, 3);
  for (const InrAtom& a : atoms) {
    const Var g = render_atom(a, 1);
    ASSERT_EQ(g.shape(), (Shape{1, 1}));
    EXPECT_NEAR(g.value()[0], reference_phi(a, 0, 0), 1e-12);
  }
}

TEST(RenderAtom, CentersAgreeAcrossSizes) {
  const InrAtom a = init_atoms(1, 2, 16, 4)[0];
  const Tensor g3 = render_atom(a, 3).value(), g5 = render_atom(a, 5).value();
  EXPECT_NEAR(g3[4], reference_phi(a, 0, 0), 1e-12);
  EXPECT_NEAR(g5[12], reference_phi(a, 0, 0), 1e-12);
}

TEST(RenderAtom, MatchesNetworkAtEveryCell) {
  const InrAtom a = init_atoms(1, 2, 16, 5)[0];
  for (int size : {3, 7, 13}) {
    const Tensor g = render_atom(a, size).value();
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        EXPECT_NEAR(g[i * size + j], reference_phi(a, coord(i, size), coord(j, size)), 1e-12);
  }
}

// With one hidden unit, h1 = sin(2x); the second layer sin(eps * h1) with
// output weight 1/eps equals sin(2x) up to eps^2 / 6 <= 2e-9.
TEST(RenderAtom, HandBuiltSineAtomMatchesClosedForm) {
  InrAtom a = init_atoms(1, 2, 2, 0, 1)[0];
  const Real eps = 1e-4;
  a.w1.mutable_value() = Tensor({1, 2}, {1.0, 0.0});
  a.b1.mutable_value() = Tensor({1}, 0.0);
  a.w2.mutable_value() = Tensor({1, 1}, eps);
  a.b2.mutable_value() = Tensor({1}, 0.0);
  a.w3.mutable_value() = Tensor({1, 1}, 1.0 / eps);
  a.b3.mutable_value() = Tensor({1}, 0.0);
  for (int size : {1, 3, 5, 13}) {
    const Tensor g = render_atom(a, size).value();
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) EXPECT_NEAR(g[i * size + j], std::sin(2 * coord(i, size)), 1e-6);
  }
}

TEST(RenderAtom, SharedLatticePointsAgree) {
  const auto atoms = init_atoms(3, 2, 16, 9);
  for (const InrAtom& a : atoms) {
    const Tensor g3 = render_atom(a, 3).value(), g7 = render_atom(a, 7).value();
    const Tensor g5 = render_atom(a, 5).value(), g9 = render_atom(a, 9).value();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(g3[i * 3 + j], g7[(3 * i) * 7 + 3 * j], 1e-6);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) EXPECT_NEAR(g5[i * 5 + j], g9[(2 * i) * 9 + 2 * j], 1e-6);
  }
}

TEST(RenderAtom, RejectsEvenOrNonPositiveSize) {
  const InrAtom a = init_atoms(1, 2, 16, 0)[0];
  EXPECT_THROW(render_atom(a, 4), ValidationError);
  EXPECT_THROW(render_atom(a, 0), ValidationError);
  EXPECT_THROW(render_atom(a, -3), ValidationError);
}

TEST(RenderAtom, GradientsMatchFiniteDifferences) {
  InrAtom a = init_atoms(1, 2, 16, 11, 8, 1.0)[0];
  const Var weights = Var::constant(random_tensor({5, 5}, 12));
  auto loss = [&] { return sum(mul(render_atom(a, 5), weights)); };
  for (const Var& p : a.parameters()) {
    const auto r = check_gradient(p, loss, 16);
    EXPECT_GT(r.checked, 0);
    EXPECT_LT(r.worst, 1e-4);
  }
}

TEST(BuildDictionary, FullScalesHaveSizesOneToThirteen) {
  const auto dict = build_dictionary(init_atoms(8, 2, 16, 0), 7);
  ASSERT_EQ(dict.scale_count(), 7);
  for (int r = 1; r <= 7; ++r) {
    EXPECT_EQ(dict.scales[r - 1].shape(), (Shape{8, 2 * r - 1, 2 * r - 1}));
    EXPECT_TRUE(dict.scales[r - 1].value().all_finite());
  }
  EXPECT_EQ(dict.max_kernel_size(), 13);
}

TEST(BuildDictionary, SmallestConfigurationIsTheDelta) {
  const auto dict = build_dictionary(init_atoms(1, 2, 16, 0), 1);
  ASSERT_EQ(dict.scale_count(), 1);
  EXPECT_EQ(dict.scales[0].shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(dict.scales[0].value()[0], 1.0);
  EXPECT_FALSE(dict.scales[0].requires_grad());
}

TEST(BuildDictionary, SizeFormula) {
  const auto dict = build_dictionary(init_atoms(2, 2, 16, 0), 3);
  ASSERT_EQ(dict.scale_count(), 3);
  for (int r = 1; r <= 3; ++r) EXPECT_EQ(dict.scales[r - 1].shape(), (Shape{2, 2 * r - 1, 2 * r - 1}));
}

TEST(BuildDictionary, RejectsBadArguments) {
  EXPECT_THROW(build_dictionary(init_atoms(2, 2, 16, 0), 0), ValidationError);
  EXPECT_THROW(build_dictionary({}, 3), ValidationError);
}

TEST(BuildDictionary, DeltaUnchangedByOptimization) {
  auto atoms = init_atoms(3, 2, 16, 1);
  ParameterStore store;
  register_atoms(store, "dict", atoms);
  const Tensor before = build_dictionary(atoms, 3).scales[0].value();
  Adam adam(store);
  const Tensor target = random_tensor({3, 5, 5}, 2);
  for (int step = 0; step < 5; ++step) {
    store.zero_grad();
    const auto dict = build_dictionary(atoms, 3);
    backward(add(sum(mul(dict.scales[2], Var::constant(target))), sum(dict.scales[0])));
    adam.step(1e-2);
  }
  const auto after = build_dictionary(atoms, 3);
  EXPECT_EQ(after.scales[0].value().storage(), before.storage());
  EXPECT_NE(after.scales[2].value().storage(), build_dictionary(init_atoms(3, 2, 16, 1), 3).scales[2].value().storage());
}
