#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "spin.hpp"
#include "tensor.hpp"

namespace spinsim {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// exp(-i * scale * h) for Hermitian h, by eigendecomposition.
inline CMat expi_hermitian(const CMat& h, double scale) {
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  if (es.info() != Eigen::Success) throw std::runtime_error("expi_hermitian: eigensolver failed");
  const Eigen::VectorXd& w = es.eigenvalues();
  CVec phases(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k)
    phases(k) = std::exp(cdouble{0.0, -scale * w(k)});
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

inline CMat kron2(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline CMat swap_gate() {
  CMat s = CMat::Zero(4, 4);
  s(0, 0) = 1.0;
  s(1, 2) = 1.0;
  s(2, 1) = 1.0;
  s(3, 3) = 1.0;
  return s;
}

enum class ModelKind { kicked_ising, heisenberg };

inline ModelKind parse_model(const std::string& s) {
  if (s == "kicked-ising" || s == "kicked_ising" || s == "ki") return ModelKind::kicked_ising;
  if (s == "heisenberg" || s == "xxx") return ModelKind::heisenberg;
  throw ConfigError("unknown model: " + s);
}

inline std::string model_name(ModelKind m) {
  return m == ModelKind::kicked_ising ? "kicked-ising" : "heisenberg";
}

struct ModelParams {
  ModelKind model = ModelKind::kicked_ising;
  std::size_t n = 0;
  double t = 0.0;
  double dt = 1.0;
  double j = kPi / 8.0;  // kicked-Ising coupling
  double h = 0.2;        // kicked-Ising longitudinal field

  std::size_t validated_steps() const {
    if (n < 2) throw ConfigError("model: need at least 2 sites");
    if (!(t > 0.0)) throw ConfigError("model: evolution time must be positive");
    if (!(dt > 0.0)) throw ConfigError("model: dt must be positive");
    if (model == ModelKind::kicked_ising && std::abs(dt - 1.0) > 1e-12)
      throw ConfigError("kicked-ising: the kick period fixes dt = 1");
    const double raw = t / dt;
    const double rounded = std::round(raw);
    if (std::abs(raw - rounded) > 1e-12 * std::max(1.0, raw) || rounded < 1.0)
      throw ConfigError("model: t must be a positive integer multiple of dt");
    return static_cast<std::size_t>(rounded);
  }
};

struct BondGate {
  std::size_t bond = 0;  // acts on sites (bond, bond + 1)
  CMat u;                // 4x4, row site ordering |s_bond s_bond+1>
};

struct Layer {
  std::vector<BondGate> gates;  // sorted by bond, pairwise disjoint
};

// Brickwork circuit: layers alternate odd (bonds 0, 2, ...) and even
// (bonds 1, 3, ...), odd first, two layers per time step even when the even
// layer holds no gates. Layer k ends at time (k + 1) * dt / 2.
struct Circuit {
  std::size_t n_sites = 0;
  double dt = 1.0;
  std::size_t n_steps = 0;
  std::vector<Layer> layers;

  std::size_t n_layers() const { return layers.size(); }
  double time_after_layer(std::size_t k) const { return (static_cast<double>(k) + 1.0) * dt / 2.0; }

  const CMat* find_gate(std::size_t layer, std::size_t bond) const {
    for (const BondGate& g : layers.at(layer).gates)
      if (g.bond == bond) return &g.u;
    return nullptr;
  }

  // Spatial reflection: site i -> n-1-i, bond b -> n-2-b, each gate conjugated
  // by SWAP because the two sites of a bond trade places.
  Circuit mirrored() const {
    Circuit out;
    out.n_sites = n_sites;
    out.dt = dt;
    out.n_steps = n_steps;
    out.layers.reserve(layers.size());
    const CMat s = swap_gate();
    for (const Layer& layer : layers) {
      Layer m;
      m.gates.reserve(layer.gates.size());
      for (const BondGate& g : layer.gates)
        m.gates.push_back(BondGate{n_sites - 2 - g.bond, s * g.u * s});
      std::sort(m.gates.begin(), m.gates.end(),
                [](const BondGate& a, const BondGate& b) { return a.bond < b.bond; });
      out.layers.push_back(std::move(m));
    }
    return out;
  }
};

namespace detail {

// Diagonal two-site phase exp(-i (j z z' + a z + b z')) with z = +1 for spin up.
inline CMat zz_field_gate(double j, double a, double b) {
  CMat g = CMat::Zero(4, 4);
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) {
      const double z1 = s == 0 ? 1.0 : -1.0;
      const double z2 = t == 0 ? 1.0 : -1.0;
      g(s * 2 + t, s * 2 + t) = std::exp(cdouble{0.0, -(j * z1 * z2 + a * z1 + b * z2)});
    }
  return g;
}

}  // namespace detail

// Floquet kicked Ising chain. One period applies the longitudinal part
// V = exp(-i sum_b j z_b z_b+1 - i sum_l h z_l) followed by the kick
// K = prod_l exp(-i pi/4 x_l); gates absorb the single-site factors so that
// the two-layer product reproduces K V exactly. Each site's kick rides on its
// even-layer gate when the even layer touches it (the kick then commutes past
// the remaining odd-layer gates of the period on the outer sites), otherwise
// on its odd-layer gate; the field h splits evenly across the layers that
// touch the site.
inline Circuit build_kicked_ising(const ModelParams& p) {
  const std::size_t steps = p.validated_steps();
  const std::size_t n = p.n;
  const CMat kick = expi_hermitian(pauli(Axis::x), kPi / 4.0);
  const CMat id = identity2();

  std::vector<bool> in_odd(n, false), in_even(n, false);
  for (std::size_t b = 0; b + 1 < n; b += 2) in_odd[b] = in_odd[b + 1] = true;
  for (std::size_t b = 1; b + 1 < n; b += 2) in_even[b] = in_even[b + 1] = true;

  auto field_share = [&](std::size_t site, bool odd_layer) -> double {
    const bool here = odd_layer ? in_odd[site] : in_even[site];
    if (!here) return 0.0;
    return (in_odd[site] && in_even[site]) ? 0.5 * p.h : p.h;
  };
  auto kick_here = [&](std::size_t site, bool odd_layer) -> bool {
    if (odd_layer) return in_odd[site] && !in_even[site];
    return in_even[site];
  };

  auto make_layer = [&](bool odd_layer) {
    Layer layer;
    for (std::size_t b = odd_layer ? 0 : 1; b + 1 < n; b += 2) {
      CMat u = detail::zz_field_gate(p.j, field_share(b, odd_layer), field_share(b + 1, odd_layer));
      const CMat kl = kick_here(b, odd_layer) ? kick : id;
      const CMat kr = kick_here(b + 1, odd_layer) ? kick : id;
      u = kron2(kl, kr) * u;
      layer.gates.push_back(BondGate{b, std::move(u)});
    }
    return layer;
  };

  Circuit c;
  c.n_sites = n;
  c.dt = p.dt;
  c.n_steps = steps;
  const Layer odd = make_layer(true);
  const Layer even = make_layer(false);
  c.layers.reserve(2 * steps);
  for (std::size_t s = 0; s < steps; ++s) {
    c.layers.push_back(odd);
    c.layers.push_back(even);
  }
  return c;
}

// Heisenberg bond Hamiltonian S.S in the |s s'> basis (0 = up).
inline CMat heisenberg_bond_h() {
  CMat h = CMat::Zero(4, 4);
  h(0, 0) = 0.25;
  h(3, 3) = 0.25;
  h(1, 1) = -0.25;
  h(2, 2) = -0.25;
  h(1, 2) = 0.5;
  h(2, 1) = 0.5;
  return h;
}

// First-order brickwork Trotterization of the Heisenberg chain: every gate is
// exp(-i dt S.S), odd bonds then even bonds per step.
inline Circuit build_heisenberg(const ModelParams& p) {
  const std::size_t steps = p.validated_steps();
  const std::size_t n = p.n;
  const CMat u = expi_hermitian(heisenberg_bond_h(), p.dt);

  Circuit c;
  c.n_sites = n;
  c.dt = p.dt;
  c.n_steps = steps;
  Layer odd, even;
  for (std::size_t b = 0; b + 1 < n; b += 2) odd.gates.push_back(BondGate{b, u});
  for (std::size_t b = 1; b + 1 < n; b += 2) even.gates.push_back(BondGate{b, u});
  c.layers.reserve(2 * steps);
  for (std::size_t s = 0; s < steps; ++s) {
    c.layers.push_back(odd);
    c.layers.push_back(even);
  }
  return c;
}

inline Circuit build_circuit(const ModelParams& p) {
  return p.model == ModelKind::kicked_ising ? build_kicked_ising(p) : build_heisenberg(p);
}

}  // namespace spinsim
