#include "bvsrik/kernel_dictionary.hpp"

#include <cmath>

#include "bvsrik/error.hpp"
#include "bvsrik/ops.hpp"

namespace bvsrik {

Real InrAtom::evaluate(Real x, Real y) const {
  const int h = hidden();
  const Tensor& W1 = w1.value();
  const Tensor& B1 = b1.value();
  const Tensor& W2 = w2.value();
  const Tensor& B2 = b2.value();
  const Tensor& W3 = w3.value();
  const Real freq = frequency_value();
  std::vector<Real> h1(h), h2(h);
  for (int k = 0; k < h; ++k) h1[k] = std::sin(freq * (W1[2 * k] * x + W1[2 * k + 1] * y + B1[k]));
  for (int k = 0; k < h; ++k) {
    Real acc = B2[k];
    for (int m = 0; m < h; ++m) acc += W2[k * h + m] * h1[m];
    h2[k] = std::sin(acc);
  }
  Real out = b3.value()[0];
  for (int k = 0; k < h; ++k) out += W3[k] * h2[k];
  return out;
}

std::vector<InrAtom> init_atoms(int n_atoms, Real freq_low, Real freq_high, std::uint64_t seed,
                                int hidden, Real output_scale) {
  if (n_atoms < 1) throw ValidationError("init_atoms: n_atoms must be >= 1, got " + std::to_string(n_atoms));
  if (!(freq_low > 0) || !(freq_low <= freq_high)) {
    throw ValidationError("init_atoms: invalid frequency range [" + std::to_string(freq_low) + ", " +
                          std::to_string(freq_high) + "]");
  }
  if (hidden < 1) throw ValidationError("init_atoms: hidden width must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<Real> freq_dist(freq_low, freq_high);
  const Real first_bound = 1.0 / 2.0;  // 1 / fan_in
  const Real hidden_bound = std::sqrt(6.0 / hidden);
  std::vector<InrAtom> atoms;
  atoms.reserve(n_atoms);
  for (int n = 0; n < n_atoms; ++n) {
    InrAtom a;
    a.index = n + 1;
    const Real freq = freq_low == freq_high ? freq_low : freq_dist(rng);
    a.frequency = Var::parameter(Tensor::scalar(freq));
    a.w1 = Var::parameter(uniform_tensor({hidden, 2}, -first_bound, first_bound, rng));
    a.b1 = Var::parameter(uniform_tensor({hidden}, -first_bound, first_bound, rng));
    a.w2 = Var::parameter(uniform_tensor({hidden, hidden}, -hidden_bound, hidden_bound, rng));
    a.b2 = Var::parameter(uniform_tensor({hidden}, -1.0 / std::sqrt(hidden), 1.0 / std::sqrt(hidden), rng));
    a.w3 = Var::parameter(
        uniform_tensor({1, hidden}, -hidden_bound * output_scale, hidden_bound * output_scale, rng));
    a.b3 = Var::parameter(Tensor({1}, 0.0));
    atoms.push_back(std::move(a));
  }
  return atoms;
}

void register_atoms(ParameterStore& store, const std::string& prefix, const std::vector<InrAtom>& atoms) {
  static const char* names[] = {"w1", "b1", "frequency", "w2", "b2", "w3", "b3"};
  for (const InrAtom& a : atoms) {
    const auto params = a.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      store.adopt(prefix + ".atom" + std::to_string(a.index) + "." + names[k], params[k]);
    }
  }
}

std::vector<Real> lattice_coordinates(int size) {
  if (size < 1 || size % 2 == 0) {
    throw ValidationError("lattice size must be odd and positive, got " + std::to_string(size));
  }
  std::vector<Real> coords(size, 0.0);
  if (size == 1) return coords;
  for (int a = 0; a < size; ++a) coords[a] = (2.0 * a - (size - 1)) / (size - 1);
  return coords;
}

Var render_atom(const InrAtom& atom, int size) {
  const std::vector<Real> coords = lattice_coordinates(size);
  const int cells = size * size;
  Tensor points({2, cells});
  for (int a = 0; a < size; ++a) {
    for (int b = 0; b < size; ++b) {
      points[a * size + b] = coords[a];
      points[cells + a * size + b] = coords[b];
    }
  }
  const Var p = Var::constant(std::move(points));
  Var h1 = sine(mul_scalar(add_channel_bias(matmul(atom.w1, p), atom.b1), atom.frequency));
  Var h2 = sine(add_channel_bias(matmul(atom.w2, h1), atom.b2));
  Var out = add_channel_bias(matmul(atom.w3, h2), atom.b3);
  return reshape(out, {size, size});
}

Tensor MultiScaleDictionary::grid(int r, int n) const {
  if (r < 1 || r > scale_count() || n < 1 || n > atom_count()) {
    throw ValidationError("dictionary grid index out of range");
  }
  const int k = kernel_size(r);
  const Tensor& t = scales[r - 1].value();
  Tensor out({k, k});
  std::copy_n(t.ptr() + static_cast<std::size_t>(n - 1) * k * k, k * k, out.ptr());
  return out;
}

MultiScaleDictionary build_dictionary(const std::vector<InrAtom>& atoms, int scales) {
  if (scales < 1) throw ValidationError("build_dictionary: R must be >= 1, got " + std::to_string(scales));
  if (atoms.empty()) throw ValidationError("build_dictionary: no atoms");
  const int n_atoms = static_cast<int>(atoms.size());
  MultiScaleDictionary dict;
  dict.scales.push_back(Var::constant(Tensor({n_atoms, 1, 1}, 1.0)));
  for (int r = 2; r <= scales; ++r) {
    const int k = 2 * r - 1;
    std::vector<Var> grids;
    grids.reserve(atoms.size());
    for (const InrAtom& a : atoms) grids.push_back(reshape(render_atom(a, k), {1, k, k}));
    dict.scales.push_back(concat0(grids));
  }
  return dict;
}

}  // namespace bvsrik
