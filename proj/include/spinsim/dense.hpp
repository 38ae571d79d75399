#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "circuit.hpp"
#include "errors.hpp"
#include "mps.hpp"
#include "spin.hpp"
#include "tensor.hpp"

namespace spinsim {

// Exact statevector reference. Site 0 occupies the most significant bit, so
// basis index bit (n-1-site) holds that site's state (0 = spin up). Hard size
// cap keeps accidental exponential blowups loud.
class DenseState {
 public:
  static constexpr std::size_t kMaxSites = 14;

  explicit DenseState(std::size_t n) : n_(check_size(n)), amps_(CVec::Zero(1ull << n)) {
    amps_(0) = 1.0;  // all spins up
  }

  static DenseState from_product(const std::vector<CVec>& states) {
    DenseState out(states.size());
    out.amps_.setOnes();
    for (std::size_t site = 0; site < out.n_; ++site) {
      const CVec& v = states[site];
      if (v.size() != 2) throw std::invalid_argument("from_product: site states must be 2-vectors");
      for (std::size_t idx = 0; idx < out.dim(); ++idx)
        out.amps_(static_cast<Eigen::Index>(idx)) *= v(static_cast<Eigen::Index>(out.bit(idx, site)));
    }
    return out;
  }

  static DenseState from_mps(const MpsState& psi) {
    check_size(psi.n_sites());
    DenseState out(psi.n_sites());
    out.amps_ = psi.statevector();
    return out;
  }

  std::size_t n_sites() const { return n_; }
  std::size_t dim() const { return amps_.size(); }
  CVec& amplitudes() { return amps_; }
  const CVec& amplitudes() const { return amps_; }

  double norm() const { return amps_.norm(); }

  void apply_one_site(std::size_t site, const CMat& u) {
    if (u.rows() != 2 || u.cols() != 2) throw std::invalid_argument("apply_one_site: 2x2 required");
    const std::size_t stride = 1ull << (n_ - 1 - site);
    for (std::size_t base = 0; base < dim(); ++base) {
      if (base & stride) continue;
      const cdouble a0 = amps_(base);
      const cdouble a1 = amps_(base | stride);
      amps_(base) = u(0, 0) * a0 + u(0, 1) * a1;
      amps_(base | stride) = u(1, 0) * a0 + u(1, 1) * a1;
    }
  }

  void apply_two_site(std::size_t bond, const CMat& u) {
    if (u.rows() != 4 || u.cols() != 4) throw std::invalid_argument("apply_two_site: 4x4 required");
    const std::size_t s1 = 1ull << (n_ - 1 - bond);      // left site of the bond
    const std::size_t s2 = 1ull << (n_ - 2 - bond);      // right site
    for (std::size_t base = 0; base < dim(); ++base) {
      if ((base & s1) || (base & s2)) continue;
      cdouble a[4];
      for (int k = 0; k < 4; ++k)
        a[k] = amps_(base | ((k & 2) ? s1 : 0) | ((k & 1) ? s2 : 0));
      for (int r = 0; r < 4; ++r) {
        cdouble acc{0.0, 0.0};
        for (int k = 0; k < 4; ++k) acc += u(r, k) * a[k];
        amps_(base | ((r & 2) ? s1 : 0) | ((r & 1) ? s2 : 0)) = acc;
      }
    }
  }

  void apply_layer(const Layer& layer) {
    for (const BondGate& g : layer.gates) apply_two_site(g.bond, g.u);
  }

  void apply_circuit(const Circuit& c) {
    for (const Layer& l : c.layers) apply_layer(l);
  }

  double expect_local(std::size_t site, const CMat& op) const {
    if (!is_hermitian(op)) throw ContractViolation("expect_local: non-Hermitian observable");
    cdouble acc{0.0, 0.0};
    const std::size_t stride = 1ull << (n_ - 1 - site);
    for (std::size_t base = 0; base < dim(); ++base) {
      if (base & stride) continue;
      const cdouble a0 = amps_(base), a1 = amps_(base | stride);
      acc += std::conj(a0) * (op(0, 0) * a0 + op(0, 1) * a1);
      acc += std::conj(a1) * (op(1, 0) * a0 + op(1, 1) * a1);
    }
    const double n2 = amps_.squaredNorm();
    return acc.real() / n2;
  }

  double expect_two_site(std::size_t i, std::size_t j, const CMat& oi, const CMat& oj) const {
    if (!is_hermitian(oi) || !is_hermitian(oj))
      throw ContractViolation("expect_two_site: non-Hermitian observable");
    DenseState tmp = *this;
    if (i == j) {
      tmp.apply_one_site(i, oi * oj);
    } else {
      tmp.apply_one_site(i, oi);
      tmp.apply_one_site(j, oj);
    }
    const cdouble acc = amps_.adjoint() * tmp.amps_;
    return acc.real() / amps_.squaredNorm();
  }

  CMat one_body_rdm(std::size_t site) const {
    const std::size_t stride = 1ull << (n_ - 1 - site);
    CMat rho = CMat::Zero(2, 2);
    for (std::size_t base = 0; base < dim(); ++base) {
      if (base & stride) continue;
      const cdouble a0 = amps_(base), a1 = amps_(base | stride);
      rho(0, 0) += a0 * std::conj(a0);
      rho(0, 1) += a0 * std::conj(a1);
      rho(1, 0) += a1 * std::conj(a0);
      rho(1, 1) += a1 * std::conj(a1);
    }
    return rho / amps_.squaredNorm();
  }

  // <bra| O_site |ket>, unnormalized (matches MpsState::cross_expect).
  static cdouble cross_expect(const DenseState& bra, std::size_t site, const CMat& op,
                              const DenseState& ket) {
    DenseState tmp = ket;
    tmp.apply_one_site(site, op);
    return (bra.amps_.adjoint() * tmp.amps_)(0, 0);
  }

  static cdouble overlap(const DenseState& bra, const DenseState& ket) {
    return (bra.amps_.adjoint() * ket.amps_)(0, 0);
  }

  // Projects onto |state> at the site without renormalizing, returning the
  // Born probability relative to the current norm.
  double project_site(std::size_t site, const CVec& state) {
    const std::size_t stride = 1ull << (n_ - 1 - site);
    const double n2 = amps_.squaredNorm();
    double w = 0.0;
    for (std::size_t base = 0; base < dim(); ++base) {
      if (base & stride) continue;
      const cdouble ov = std::conj(state(0)) * amps_(base) + std::conj(state(1)) * amps_(base | stride);
      w += std::norm(ov);
      amps_(base) = ov * state(0);
      amps_(base | stride) = ov * state(1);
    }
    return w / n2;
  }

 private:
  std::size_t bit(std::size_t idx, std::size_t site) const { return (idx >> (n_ - 1 - site)) & 1; }

  static std::size_t check_size(std::size_t n) {
    if (n < 1) throw std::invalid_argument("DenseState: need at least 1 site");
    if (n > kMaxSites)
      throw CapacityError("DenseState: " + std::to_string(n) + " sites exceeds the dense cap of " +
                          std::to_string(kMaxSites));
    return n;
  }

  std::size_t n_;
  CVec amps_;
};

// Embeds a 4x4 bond gate into the full 2^n space.
inline CMat embed_two_site(std::size_t n, std::size_t bond, const CMat& u) {
  CMat out = u;
  for (std::size_t k = 0; k < bond; ++k) out = kron2(identity2(), out);
  for (std::size_t k = bond + 2; k < n; ++k) out = kron2(out, identity2());
  return out;
}

inline CMat embed_one_site(std::size_t n, std::size_t site, const CMat& u) {
  CMat out = u;
  for (std::size_t k = 0; k < site; ++k) out = kron2(identity2(), out);
  for (std::size_t k = site + 1; k < n; ++k) out = kron2(out, identity2());
  return out;
}

// Full unitary of a circuit in layer order (later layers multiply from the left).
inline CMat circuit_unitary(const Circuit& c) {
  if (c.n_sites > DenseState::kMaxSites) throw CapacityError("circuit_unitary: too large");
  const std::size_t d = 1ull << c.n_sites;
  CMat u = CMat::Identity(d, d);
  for (const Layer& l : c.layers)
    for (const BondGate& g : l.gates) u = embed_two_site(c.n_sites, g.bond, g.u) * u;
  return u;
}

// One-period kicked-Ising Floquet operator K V built straight from the model
// definition, independently of any gate-absorption choices: V applies the
// longitudinal phases, K the transverse kicks.
inline CMat dense_floquet_operator(const ModelParams& p) {
  if (p.n > DenseState::kMaxSites) throw CapacityError("dense_floquet_operator: too large");
  const std::size_t d = 1ull << p.n;
  CVec phases(d);
  for (std::size_t idx = 0; idx < d; ++idx) {
    double e = 0.0;
    auto z = [&](std::size_t site) { return ((idx >> (p.n - 1 - site)) & 1) ? -1.0 : 1.0; };
    for (std::size_t b = 0; b + 1 < p.n; ++b) e += p.j * z(b) * z(b + 1);
    for (std::size_t s = 0; s < p.n; ++s) e += p.h * z(s);
    phases(static_cast<Eigen::Index>(idx)) = std::exp(cdouble{0.0, -e});
  }
  const CMat kick = expi_hermitian(pauli(Axis::x), kPi / 4.0);
  CMat k = kick;
  for (std::size_t s = 1; s < p.n; ++s) k = kron2(k, kick);
  return k * CMat(phases.asDiagonal());
}

// Distance between statevectors modulo the global phase (aligned through
// their overlap). Zero iff the states match up to a phase.
inline double phase_aligned_distance(const CVec& a, const CVec& b) {
  const cdouble ov = (b.adjoint() * a)(0, 0);
  if (std::abs(ov) == 0.0) return std::sqrt(a.squaredNorm() + b.squaredNorm());
  return (a - (ov / std::abs(ov)) * b).norm();
}

// Dense Heisenberg Hamiltonian sum_b S_b . S_b+1.
inline CMat dense_heisenberg_hamiltonian(std::size_t n) {
  if (n > DenseState::kMaxSites) throw CapacityError("dense_heisenberg_hamiltonian: too large");
  const std::size_t d = 1ull << n;
  CMat h = CMat::Zero(d, d);
  const CMat hb = heisenberg_bond_h();
  for (std::size_t b = 0; b + 1 < n; ++b) h += embed_two_site(n, b, hb);
  return h;
}

}  // namespace spinsim
