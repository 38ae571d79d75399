#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "spin.hpp"
#include "tensor.hpp"

namespace spinsim {

inline bool is_hermitian(const CMat& op, double tol = 1e-10) {
  return (op - op.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_unitary(const CMat& op, double tol = 1e-10) {
  const CMat g = op.adjoint() * op - CMat::Identity(op.rows(), op.cols());
  return g.cwiseAbs().maxCoeff() <= tol;
}

// Von Neumann entropy of a normalized Schmidt spectrum, natural log.
inline double entropy_from_singular_values(const std::vector<double>& s) {
  double total = 0.0;
  for (double v : s) total += v * v;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double v : s) {
    const double p = v * v / total;
    if (p > 1e-300) h -= p * std::log(p);
  }
  return h;
}

struct GateResult {
  double discarded_weight = 0.0;  // relative squared weight dropped at this bond
  std::size_t chi = 0;            // bond dimension after the gate
  bool limited_by_epsilon = false;
  bool limited_by_chi = false;
};

struct SampleOutcome {
  std::size_t outcome = 0;  // 0 maps to spin +1/2 in the chosen basis
  double probability = 1.0;
};

// Matrix product state for a spin-1/2 chain, site tensors indexed
// [left bond, physical, right bond], row-major. Invariants maintained by every
// public mutator:
//   - mixed-canonical form around ortho_center() (left/right isometries);
//   - the stored contraction has unit norm;
//   - the represented vector equals exp(log_amplitude()) times the stored
//     contraction, so every dropped scalar factor (truncation weight,
//     projection amplitude, operator norm) lands in log_amplitude.
class MpsState {
 public:
  static MpsState product_state(const std::vector<CVec>& site_states) {
    const std::size_t n = site_states.size();
    if (n < 2) throw std::invalid_argument("product_state: need at least 2 sites");
    MpsState psi;
    psi.tensors_.reserve(n);
    for (const CVec& v : site_states) {
      if (v.size() != 2) throw std::invalid_argument("product_state: site states must be 2-vectors");
      const double nv = v.norm();
      if (nv <= 0.0) throw std::invalid_argument("product_state: zero site state");
      DenseTensor t({1, 2, 1});
      t.at({0, 0, 0}) = v(0) / nv;
      t.at({0, 1, 0}) = v(1) / nv;
      psi.tensors_.push_back(std::move(t));
    }
    psi.center_ = 0;
    psi.bond_sv_.assign(n - 1, {1.0});
    psi.sv_fresh_.assign(n - 1, true);
    return psi;
  }

  static MpsState all_up(std::size_t n) {
    CVec up(2);
    up << 1.0, 0.0;
    return product_state(std::vector<CVec>(n, up));
  }

  static MpsState neel(std::size_t n) {
    CVec up(2), dn(2);
    up << 1.0, 0.0;
    dn << 0.0, 1.0;
    std::vector<CVec> states;
    states.reserve(n);
    for (std::size_t i = 0; i < n; ++i) states.push_back(i % 2 == 0 ? up : dn);
    return product_state(states);
  }

  // Haar-ish random state with bond dimensions min(chi, 2^min(b+1, n-b-1)),
  // i.e. capped by what a cut at bond b can support.
  static MpsState random_mps(std::size_t n, std::size_t chi, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("random_mps: need at least 2 sites");
    if (chi < 1) throw std::invalid_argument("random_mps: chi must be positive");
    Rng rng(splitmix64(seed));
    MpsState psi;
    psi.tensors_.reserve(n);
    auto bond_dim = [&](std::size_t b) -> std::size_t {
      // b counts cut positions: bond b sits between sites b and b+1.
      const double side = static_cast<double>(std::min(b + 1, n - b - 1));
      const double cap = std::pow(2.0, std::min(side, 60.0));
      return static_cast<std::size_t>(std::min(static_cast<double>(chi), cap));
    };
    for (std::size_t ell = 0; ell < n; ++ell) {
      const std::size_t dl = ell == 0 ? 1 : bond_dim(ell - 1);
      const std::size_t dr = ell == n - 1 ? 1 : bond_dim(ell);
      DenseTensor t({dl, 2, dr});
      for (cdouble& v : t.data()) v = rng.normal_complex();
      psi.tensors_.push_back(std::move(t));
    }
    psi.bond_sv_.assign(n - 1, {});
    psi.sv_fresh_.assign(n - 1, false);
    // A right-to-left sweep from the claimed center makes every tensor to the
    // right of site 0 a right isometry, which is all mixed-canonical form needs.
    psi.center_ = static_cast<std::ptrdiff_t>(n) - 1;
    psi.canonicalize(0);
    const double nrm = psi.center_norm();
    for (cdouble& v : psi.tensors_[0].data()) v /= nrm;
    return psi;
  }

  std::size_t n_sites() const { return tensors_.size(); }
  std::size_t bond_dim(std::size_t bond) const { return tensors_.at(bond).dim(2); }
  std::size_t max_bond_dim() const {
    std::size_t m = 1;
    for (std::size_t b = 0; b + 1 < n_sites(); ++b) m = std::max(m, bond_dim(b));
    return m;
  }
  std::size_t ortho_center() const { return static_cast<std::size_t>(center_); }
  const DenseTensor& site_tensor(std::size_t site) const { return tensors_.at(site); }

  cdouble log_amplitude() const { return log_amplitude_; }
  void add_log_amplitude(cdouble v) { log_amplitude_ += v; }

  bool bond_values_fresh(std::size_t bond) const { return sv_fresh_.at(bond); }
  const std::vector<double>& bond_singular_values(std::size_t bond) const {
    if (!sv_fresh_.at(bond))
      throw ContractViolation("bond singular values are stale; refresh_bond_data first");
    return bond_sv_[bond];
  }

  // Moves the orthogonality center to `site` by QR sweeps. The state is
  // unchanged; crossed bonds lose their cached Schmidt data.
  void canonicalize(std::size_t site) {
    if (site >= n_sites()) throw std::invalid_argument("canonicalize: site out of range");
    while (center_ < static_cast<std::ptrdiff_t>(site)) move_right();
    while (center_ > static_cast<std::ptrdiff_t>(site)) move_left();
  }

  double norm() const { return center_norm(); }

  void normalize() {
    const double nrm = center_norm();
    if (nrm <= 0.0) throw ContractViolation("normalize: zero-norm state");
    for (cdouble& v : tensors_[center_].data()) v /= nrm;
    log_amplitude_ += std::log(nrm);
  }

  // Two-site gate on (bond, bond+1). The gate must be unitary; truncation is
  // governed by the policy and the lost weight is folded into log_amplitude.
  GateResult apply_two_site_gate(std::size_t bond, const CMat& gate,
                                 const TruncationPolicy& policy) {
    if (bond + 1 >= n_sites()) throw std::invalid_argument("apply_two_site_gate: bad bond");
    if (gate.rows() != 4 || gate.cols() != 4)
      throw std::invalid_argument("apply_two_site_gate: gate must be 4x4");
    if (!is_unitary(gate)) throw ContractViolation("apply_two_site_gate: gate is not unitary");
    policy.validate();

    canonicalize(bond);
    const std::size_t dl = tensors_[bond].dim(0);
    const std::size_t dr = tensors_[bond + 1].dim(2);

    DenseTensor theta = contract(tensors_[bond], tensors_[bond + 1], {{2, 0}});
    // gate as [s_out, t_out, s_in, t_in]; contract input legs with theta's
    // physical legs, then restore [left, s, t, right] ordering.
    std::vector<cdouble> gdata(gate.size());
    Eigen::Map<CMatRM>(gdata.data(), 4, 4) = gate;
    const DenseTensor g(std::vector<std::size_t>{2, 2, 2, 2}, std::move(gdata));
    theta = contract(g, theta, {{2, 1}, {3, 2}}).permute({2, 0, 1, 3});

    const SvdResult svd =
        svd_truncate(theta.matrix_view(2), policy);
    const std::size_t r = svd.rank();

    double kept = 0.0;
    for (double s : svd.singular_values) kept += s * s;
    if (kept <= 0.0) throw ContractViolation("apply_two_site_gate: state collapsed to zero");
    const double scale = std::sqrt(kept);

    DenseTensor left({dl, 2, r});
    Eigen::Map<CMatRM>(left.data().data(), dl * 2, r) = svd.u;
    DenseTensor right({r, 2, dr});
    {
      Eigen::Map<CMatRM> rm(right.data().data(), r, 2 * dr);
      rm = svd.vh;
      for (std::size_t i = 0; i < r; ++i)
        rm.row(i) *= svd.singular_values[i] / scale;
    }
    tensors_[bond] = std::move(left);
    tensors_[bond + 1] = std::move(right);
    center_ = static_cast<std::ptrdiff_t>(bond) + 1;
    log_amplitude_ += std::log(scale);

    // Truncation perturbs the global state, so cached data at other bonds is
    // only kept when the cut was exact.
    if (svd.discarded_weight > 0.0) {
      std::fill(sv_fresh_.begin(), sv_fresh_.end(), false);
    }
    bond_sv_[bond].assign(svd.singular_values.begin(), svd.singular_values.end());
    for (double& s : bond_sv_[bond]) s /= scale;
    sv_fresh_[bond] = true;

    GateResult out;
    out.discarded_weight = svd.discarded_weight;
    out.chi = r;
    out.limited_by_epsilon = svd.limited_by_epsilon;
    out.limited_by_chi = svd.limited_by_chi;
    return out;
  }

  // Applies a (not necessarily unitary) single-site operator, renormalizing
  // the stored tensors and folding the norm change into log_amplitude.
  void apply_single_site_op(std::size_t site, const CMat& op) {
    if (op.rows() != 2 || op.cols() != 2)
      throw std::invalid_argument("apply_single_site_op: op must be 2x2");
    canonicalize(site);
    DenseTensor& t = tensors_[site];
    const std::size_t dl = t.dim(0), dr = t.dim(2);
    DenseTensor out({dl, 2, dr});
    for (std::size_t a = 0; a < dl; ++a)
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t b = 0; b < dr; ++b)
          out.at({a, s, b}) =
              op(static_cast<Eigen::Index>(s), 0) * t.at({a, 0, b}) +
              op(static_cast<Eigen::Index>(s), 1) * t.at({a, 1, b});
    t = std::move(out);
    const double nrm = center_norm();
    if (nrm <= 1e-300) throw ZeroProbabilityError(0.0);
    for (cdouble& v : t.data()) v /= nrm;
    log_amplitude_ += std::log(nrm);
    std::fill(sv_fresh_.begin(), sv_fresh_.end(), false);
    mark_trivial_bonds_fresh();
  }

  // <psi|O|psi> / <psi|psi> for a Hermitian single-site O. Result is real by
  // construction; the imaginary part is discarded after a Hermiticity check.
  double expect_local(std::size_t site, const CMat& op) {
    if (!is_hermitian(op)) throw ContractViolation("expect_local: non-Hermitian observable");
    const CMat rho = one_body_rdm(site);
    return (rho * op).trace().real();
  }

  // <psi|O_i O_j|psi> / <psi|psi> for Hermitian single-site factors; i == j
  // multiplies the two operators on one site.
  double expect_two_site(std::size_t i, std::size_t j, const CMat& op_i, const CMat& op_j) {
    if (!is_hermitian(op_i) || !is_hermitian(op_j))
      throw ContractViolation("expect_two_site: non-Hermitian observable");
    if (i >= n_sites() || j >= n_sites())
      throw std::invalid_argument("expect_two_site: site out of range");
    if (i == j) {
      const CMat rho = one_body_rdm(i);
      return (rho * (op_i * op_j)).trace().real();
    }
    const std::size_t lo = std::min(i, j), hi = std::max(i, j);
    const CMat& op_lo = i < j ? op_i : op_j;
    const CMat& op_hi = i < j ? op_j : op_i;

    canonicalize(lo);
    const double n2 = center_norm() * center_norm();
    CMat env = transfer_with_op(tensors_[lo], CMat::Identity(tensors_[lo].dim(0), tensors_[lo].dim(0)), op_lo);
    for (std::size_t ell = lo + 1; ell < hi; ++ell)
      env = transfer_plain(tensors_[ell], env);
    env = transfer_with_op(tensors_[hi], env, op_hi);
    return env.trace().real() / n2;
  }

  // Reduced density matrix of one site, Hermitian with unit trace.
  CMat one_body_rdm(std::size_t site) {
    canonicalize(site);
    const DenseTensor& t = tensors_[site];
    const std::size_t dl = t.dim(0), dr = t.dim(2);
    CMat rho(2, 2);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t sp = 0; sp < 2; ++sp) {
        cdouble acc{0.0, 0.0};
        for (std::size_t a = 0; a < dl; ++a)
          for (std::size_t b = 0; b < dr; ++b)
            acc += t.at({a, s, b}) * std::conj(t.at({a, sp, b}));
        rho(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(sp)) = acc;
      }
    rho = 0.5 * (rho + rho.adjoint()).eval();
    const double tr = rho.trace().real();
    if (tr <= 0.0) throw ContractViolation("one_body_rdm: zero-norm state");
    return rho / tr;
  }

  // Projects the site onto |state> (a normalized 2-vector), returns the Born
  // probability, and re-embeds the site as a bond pass-through so correlations
  // between its neighbours survive. Throws ZeroProbabilityError below 1e-14.
  double project_site(std::size_t site, const CVec& state) {
    if (state.size() != 2 || std::abs(state.norm() - 1.0) > 1e-10)
      throw std::invalid_argument("project_site: state must be a normalized 2-vector");
    if (site >= n_sites()) throw std::invalid_argument("project_site: site out of range");
    canonicalize(site);
    const DenseTensor& t = tensors_[site];
    const std::size_t dl = t.dim(0), dr = t.dim(2);

    CMat m(dl, dr);
    for (std::size_t a = 0; a < dl; ++a)
      for (std::size_t b = 0; b < dr; ++b)
        m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            std::conj(state(0)) * t.at({a, 0, b}) + std::conj(state(1)) * t.at({a, 1, b});

    const double amp = m.norm();
    const double n2 = center_norm() * center_norm();
    const double p = amp * amp / n2;
    if (p < 1e-14) throw ZeroProbabilityError(p);
    m /= amp;

    if (site + 1 < n_sites()) {
      // Pass-through tensor carries the left bond across the measured site.
      DenseTensor pass({dl, 2, dl});
      for (std::size_t a = 0; a < dl; ++a)
        for (std::size_t s = 0; s < 2; ++s) pass.at({a, s, a}) = state(static_cast<Eigen::Index>(s));
      tensors_[site] = std::move(pass);
      absorb_from_left(site + 1, m);
      center_ = static_cast<std::ptrdiff_t>(site) + 1;
    } else {
      DenseTensor last({1, 2, 1});
      last.at({0, 0, 0}) = state(0);
      last.at({0, 1, 0}) = state(1);
      tensors_[site] = std::move(last);
      absorb_from_right(site - 1, m);  // m is dl x 1 here
      center_ = static_cast<std::ptrdiff_t>(site) - 1;
    }
    log_amplitude_ += std::log(amp);
    std::fill(sv_fresh_.begin(), sv_fresh_.end(), false);
    mark_trivial_bonds_fresh();
    return p;
  }

  // Born-samples the site in an orthonormal basis (columns = outcomes) and
  // collapses onto the chosen column.
  SampleOutcome sample_site(std::size_t site, const CMat& basis, OutcomeChooser& chooser) {
    if (basis.rows() != 2 || basis.cols() != 2)
      throw std::invalid_argument("sample_site: basis must be 2x2");
    if (!is_unitary(basis)) throw ContractViolation("sample_site: basis is not unitary");
    const CMat rho = one_body_rdm(site);
    std::vector<double> probs(2);
    for (Eigen::Index k = 0; k < 2; ++k)
      probs[static_cast<std::size_t>(k)] =
          std::max(0.0, (basis.col(k).adjoint() * rho * basis.col(k))(0, 0).real());
    const std::size_t k = chooser.choose(probs);
    const double p = project_site(site, basis.col(static_cast<Eigen::Index>(k)));
    return SampleOutcome{k, p};
  }

  // Eigenbasis of the one-site RDM, columns ordered by descending eigenvalue,
  // each column's largest-magnitude entry rotated to the positive real axis so
  // the basis is a deterministic function of the state.
  CMat rdm_basis(std::size_t site) {
    const CMat rho = one_body_rdm(site);
    Eigen::SelfAdjointEigenSolver<CMat> es(rho);
    if (es.info() != Eigen::Success) throw ContractViolation("rdm_basis: eigensolver failed");
    CMat basis(2, 2);
    basis.col(0) = es.eigenvectors().col(1);  // solver sorts ascending
    basis.col(1) = es.eigenvectors().col(0);
    for (Eigen::Index c = 0; c < 2; ++c) {
      Eigen::Index imax = 0;
      if (std::abs(basis(1, c)) > std::abs(basis(0, c))) imax = 1;
      const cdouble v = basis(imax, c);
      if (std::abs(v) > 0.0) basis.col(c) *= std::conj(v) / std::abs(v);
    }
    return basis;
  }

  // Recomputes singular values on every bond with one left-to-right SVD sweep.
  // Gauge changes; the state does not.
  void refresh_bond_data() {
    canonicalize(0);
    const TruncationPolicy exact{0.0, 0};
    for (std::size_t ell = 0; ell + 1 < n_sites(); ++ell) {
      const std::size_t dl = tensors_[ell].dim(0), dr = tensors_[ell].dim(2);
      const SvdResult svd = svd_truncate(tensors_[ell].matrix_view(2), exact);
      const std::size_t r = svd.rank();
      DenseTensor left({dl, 2, r});
      Eigen::Map<CMatRM>(left.data().data(), dl * 2, r) = svd.u;
      tensors_[ell] = std::move(left);
      CMat sv = svd.vh;
      for (std::size_t i = 0; i < r; ++i) sv.row(static_cast<Eigen::Index>(i)) *= svd.singular_values[i];
      absorb_from_left(ell + 1, sv);
      double total = 0.0;
      for (double s : svd.singular_values) total += s * s;
      const double scale = std::sqrt(total);
      bond_sv_[ell].resize(r);
      for (std::size_t i = 0; i < r; ++i) bond_sv_[ell][i] = svd.singular_values[i] / scale;
      sv_fresh_[ell] = true;
      (void)dr;
    }
    center_ = static_cast<std::ptrdiff_t>(n_sites()) - 1;
  }

  double bond_entropy(std::size_t bond) {
    if (!sv_fresh_.at(bond)) refresh_bond_data();
    return entropy_from_singular_values(bond_sv_[bond]);
  }

  std::vector<double> entropy_profile() {
    bool all_fresh = true;
    for (bool f : sv_fresh_) all_fresh = all_fresh && f;
    if (!all_fresh) refresh_bond_data();
    std::vector<double> out(n_sites() - 1);
    for (std::size_t b = 0; b + 1 < n_sites(); ++b)
      out[b] = entropy_from_singular_values(bond_sv_[b]);
    return out;
  }

  // Full statevector with site 0 on the most significant bit, including the
  // exp(log_amplitude) prefactor. Test-scale sizes only.
  CVec statevector() const {
    const std::size_t n = n_sites();
    if (n > 20) throw CapacityError("statevector: chain too long to densify");
    CMat amps(1, 1);
    amps(0, 0) = 1.0;
    for (std::size_t ell = 0; ell < n; ++ell) {
      const DenseTensor& t = tensors_[ell];
      const std::size_t dl = t.dim(0), dr = t.dim(2);
      CMat next(amps.rows() * 2, dr);
      Eigen::Map<const CMatRM> site(t.data().data(), dl * 2, dr);
      for (std::size_t s = 0; s < 2; ++s) {
        CMat block(dl, dr);
        for (std::size_t a = 0; a < dl; ++a) block.row(a) = site.row(a * 2 + s);
        // interleave: new row index = old_row * 2 + s
        CMat prod = amps * block;
        for (Eigen::Index r = 0; r < prod.rows(); ++r)
          next.row(r * 2 + static_cast<Eigen::Index>(s)) = prod.row(r);
      }
      amps = std::move(next);
    }
    const cdouble pref = std::exp(log_amplitude_);
    CVec out = amps.col(0) * pref;
    return out;
  }

  // Spatial reflection: site i -> n-1-i. Tensor axis swap flips isometry
  // directions, so mixed-canonical form survives with the mirrored center.
  MpsState mirrored() const {
    const std::size_t n = n_sites();
    MpsState out;
    out.tensors_.reserve(n);
    for (std::size_t ell = n; ell-- > 0;) out.tensors_.push_back(tensors_[ell].permute({2, 1, 0}));
    out.bond_sv_.assign(n - 1, {});
    out.sv_fresh_.assign(n - 1, false);
    for (std::size_t b = 0; b + 1 < n; ++b) {
      out.bond_sv_[n - 2 - b] = bond_sv_[b];
      out.sv_fresh_[n - 2 - b] = sv_fresh_[b];
    }
    out.center_ = static_cast<std::ptrdiff_t>(n) - 1 - center_;
    out.log_amplitude_ = log_amplitude_;
    return out;
  }

  // <bra|ket> including both log-amplitude prefactors.
  static cdouble overlap(const MpsState& bra, const MpsState& ket) {
    return cross_env(bra, ket, bra.n_sites(), CMat::Identity(2, 2));
  }

  // <bra| O_site |ket> including both prefactors; states may have different
  // bond dimensions but must share the chain length.
  static cdouble cross_expect(const MpsState& bra, std::size_t site, const CMat& op,
                              const MpsState& ket) {
    if (site >= bra.n_sites()) throw std::invalid_argument("cross_expect: site out of range");
    return cross_env(bra, ket, site, op);
  }

 private:
  MpsState() = default;

  double center_norm() const {
    double n2 = 0.0;
    for (const cdouble& v : tensors_[center_].data()) n2 += std::norm(v);
    return std::sqrt(n2);
  }

  // Bonds of dimension one always carry the trivial spectrum {1}.
  void mark_trivial_bonds_fresh() {
    for (std::size_t b = 0; b + 1 < n_sites(); ++b)
      if (bond_dim(b) == 1) {
        bond_sv_[b] = {1.0};
        sv_fresh_[b] = true;
      }
  }

  void absorb_from_left(std::size_t site, const CMat& m) {
    DenseTensor& t = tensors_[site];
    const std::size_t dr = t.dim(2);
    DenseTensor out({static_cast<std::size_t>(m.rows()), 2, dr});
    Eigen::Map<CMatRM> om(out.data().data(), m.rows(), 2 * dr);
    om = m * t.matrix_view(1);
    t = std::move(out);
  }

  void absorb_from_right(std::size_t site, const CMat& m) {
    DenseTensor& t = tensors_[site];
    const std::size_t dl = t.dim(0);
    DenseTensor out({dl, 2, static_cast<std::size_t>(m.cols())});
    Eigen::Map<CMatRM> om(out.data().data(), dl * 2, m.cols());
    om = t.matrix_view(2) * m;
    t = std::move(out);
  }

  void move_right() {
    const std::size_t c = static_cast<std::size_t>(center_);
    const std::size_t dl = tensors_[c].dim(0);
    auto [q, r] = qr_thin(tensors_[c].matrix_view(2));
    const std::size_t k = static_cast<std::size_t>(q.cols());
    DenseTensor left({dl, 2, k});
    Eigen::Map<CMatRM>(left.data().data(), dl * 2, k) = q;
    tensors_[c] = std::move(left);
    absorb_from_left(c + 1, r);
    sv_fresh_[c] = false;
    ++center_;
  }

  void move_left() {
    const std::size_t c = static_cast<std::size_t>(center_);
    const std::size_t dr = tensors_[c].dim(2);
    auto [l, q] = lq_thin(tensors_[c].matrix_view(1));
    const std::size_t k = static_cast<std::size_t>(q.rows());
    DenseTensor right({k, 2, dr});
    Eigen::Map<CMatRM>(right.data().data(), k, 2 * dr) = q;
    tensors_[c] = std::move(right);
    absorb_from_right(c - 1, l);
    sv_fresh_[c - 1] = false;
    --center_;
  }

  // env' = sum_{s,s'} O(s', s) K_s^T env conj(B_s') for ket tensor K, bra
  // tensor B (here the same tensor; env rows index ket bonds, cols bra bonds).
  static CMat transfer_with_op(const DenseTensor& t, const CMat& env, const CMat& op) {
    const std::size_t dl = t.dim(0), dr = t.dim(2);
    CMat out = CMat::Zero(dr, dr);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t sp = 0; sp < 2; ++sp) {
        const cdouble w = op(static_cast<Eigen::Index>(sp), static_cast<Eigen::Index>(s));
        if (w == cdouble{0.0, 0.0}) continue;
        out.noalias() += w * (phys_slice(t, s).transpose() * env * phys_slice(t, sp).conjugate());
      }
    (void)dl;
    return out;
  }

  static CMat transfer_plain(const DenseTensor& t, const CMat& env) {
    const std::size_t dr = t.dim(2);
    CMat out = CMat::Zero(dr, dr);
    for (std::size_t s = 0; s < 2; ++s)
      out.noalias() += phys_slice(t, s).transpose() * env * phys_slice(t, s).conjugate();
    return out;
  }

  using Slice = Eigen::Map<const CMatRM, Eigen::Unaligned, Eigen::OuterStride<>>;
  static Slice phys_slice(const DenseTensor& t, std::size_t s) {
    const std::size_t dl = t.dim(0), dr = t.dim(2);
    return Slice(t.data().data() + s * dr, dl, dr,
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(2 * dr)));
  }

  static cdouble cross_env(const MpsState& bra, const MpsState& ket, std::size_t op_site,
                           const CMat& op) {
    if (bra.n_sites() != ket.n_sites())
      throw std::invalid_argument("cross overlap: chain length mismatch");
    CMat env = CMat::Ones(1, 1);
    for (std::size_t ell = 0; ell < ket.n_sites(); ++ell) {
      const DenseTensor& kt = ket.tensors_[ell];
      const DenseTensor& bt = bra.tensors_[ell];
      CMat out = CMat::Zero(kt.dim(2), bt.dim(2));
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t sp = 0; sp < 2; ++sp) {
          const cdouble w = ell == op_site
                                ? op(static_cast<Eigen::Index>(sp), static_cast<Eigen::Index>(s))
                                : (s == sp ? cdouble{1.0, 0.0} : cdouble{0.0, 0.0});
          if (w == cdouble{0.0, 0.0}) continue;
          out.noalias() += w * (phys_slice(kt, s).transpose() * env * phys_slice(bt, sp).conjugate());
        }
      env = std::move(out);
    }
    return env(0, 0) * std::exp(std::conj(bra.log_amplitude_) + ket.log_amplitude_);
  }

  std::vector<DenseTensor> tensors_;
  std::vector<std::vector<double>> bond_sv_;
  std::vector<bool> sv_fresh_;
  std::ptrdiff_t center_ = 0;
  cdouble log_amplitude_{0.0, 0.0};
};

}  // namespace spinsim
