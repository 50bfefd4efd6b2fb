#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bvsrik/autograd.hpp"
#include "bvsrik/nn.hpp"

namespace bvsrik {

/// One kernel atom as a coordinate network 2 -> H -> H -> 1:
///   phi(x, y) = w3 . sin(w2 . sin(freq * (w1 [x y]^T + b1)) + b2) + b3
/// x runs along grid rows, y along columns.
struct InrAtom {
  int index = 1;  // 1-based atom number
  Var w1, b1, frequency, w2, b2, w3, b3;

  int hidden() const { return w1.dim(0); }
  Real frequency_value() const { return frequency.value()[0]; }
  /// Direct scalar evaluation, no graph recorded.
  Real evaluate(Real x, Real y) const;
  std::vector<Var> parameters() const { return {w1, b1, frequency, w2, b2, w3, b3}; }
};

/// Atoms with frequencies drawn uniformly from [freq_low, freq_high].
/// Deterministic for a given seed.
std::vector<InrAtom> init_atoms(int n_atoms, Real freq_low, Real freq_high, std::uint64_t seed,
                                int hidden = 32, Real output_scale = 0.1);

/// Makes the atoms' parameters trainable members of a store under
/// "<prefix>.atom<n>.<param>".
void register_atoms(ParameterStore& store, const std::string& prefix, const std::vector<InrAtom>& atoms);

/// Cell-center coordinates of a size-M lattice mapped affinely onto [-1, 1];
/// size 1 maps to {0}.
std::vector<Real> lattice_coordinates(int size);

/// Renders an atom onto an odd size x size grid. Differentiable in the
/// atom parameters.
Var render_atom(const InrAtom& atom, int size);

/// {D^r}, r = 1..R. scales[r-1] holds N grids of size (2r-1) x (2r-1) as an
/// (N, 2r-1, 2r-1) tensor. The r = 1 entry is the fixed delta kernel shared by
/// every atom slot and carries no gradient.
struct MultiScaleDictionary {
  std::vector<Var> scales;

  int scale_count() const { return static_cast<int>(scales.size()); }
  int atom_count() const { return scales.empty() ? 0 : scales.front().dim(0); }
  int kernel_size(int r) const { return 2 * r - 1; }  // 1-based scale index
  int max_kernel_size() const { return kernel_size(scale_count()); }
  /// Plain copy of grid n (1-based) at scale r (1-based).
  Tensor grid(int r, int n) const;
};

MultiScaleDictionary build_dictionary(const std::vector<InrAtom>& atoms, int scales);

}  // namespace bvsrik
