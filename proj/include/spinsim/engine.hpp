#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "circuit.hpp"
#include "errors.hpp"
#include "mps.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "spin.hpp"

namespace spinsim {

struct TruncationStats {
  double max_discarded = 0.0;
  std::size_t eps_limited = 0;
  std::size_t chi_limited = 0;

  void absorb(const GateResult& g) {
    max_discarded = std::max(max_discarded, g.discarded_weight);
    if (g.limited_by_epsilon) ++eps_limited;
    if (g.limited_by_chi) ++chi_limited;
  }
  void merge(const TruncationStats& o) {
    max_discarded = std::max(max_discarded, o.max_discarded);
    eps_limited += o.eps_limited;
    chi_limited += o.chi_limited;
  }
};

struct BondSnapshot {
  double time = 0.0;
  std::vector<double> entropy;
  std::vector<std::size_t> chi;
};

struct TebdResult {
  std::vector<BondSnapshot> snapshots;
  double peak_entropy = 0.0;
  std::size_t peak_chi = 1;
  TruncationStats trunc;
  MpsState state;
};

using TebdCallback = std::function<void(double time, MpsState& psi)>;

namespace detail {

inline BondSnapshot profile_now(MpsState& psi, double time) {
  BondSnapshot snap;
  snap.time = time;
  snap.entropy = psi.entropy_profile();
  snap.chi.resize(snap.entropy.size());
  for (std::size_t b = 0; b < snap.chi.size(); ++b) snap.chi[b] = psi.bond_dim(b);
  return snap;
}

inline bool matches_time(double t, const std::vector<double>& wanted) {
  for (double w : wanted)
    if (std::abs(t - w) <= 1e-9) return true;
  return false;
}

}  // namespace detail

// Layer-ordered brickwork evolution. Entropy and bond-dimension peaks are
// tracked after every layer; full profiles are stored (and the callback fired)
// at the requested snapshot times, which must land on step boundaries.
inline TebdResult run_tebd(MpsState psi, const Circuit& c, const TruncationPolicy& policy,
                           const std::vector<double>& snapshot_times = {},
                           const TebdCallback& on_snapshot = {}) {
  if (psi.n_sites() != c.n_sites)
    throw std::invalid_argument("run_tebd: state and circuit disagree on chain length");
  std::vector<BondSnapshot> snapshots;
  double peak_entropy = 0.0;
  std::size_t peak_chi = 1;
  TruncationStats trunc;
  for (std::size_t k = 0; k < c.n_layers(); ++k) {
    for (const BondGate& g : c.layers[k].gates)
      trunc.absorb(psi.apply_two_site_gate(g.bond, g.u, policy));
    const double t = c.time_after_layer(k);
    BondSnapshot snap = detail::profile_now(psi, t);
    for (double s : snap.entropy) peak_entropy = std::max(peak_entropy, s);
    for (std::size_t x : snap.chi) peak_chi = std::max(peak_chi, x);
    const bool step_boundary = k % 2 == 1;
    if (step_boundary && detail::matches_time(t, snapshot_times)) {
      if (on_snapshot) on_snapshot(t, psi);
      snapshots.push_back(std::move(snap));
    }
  }
  return TebdResult{std::move(snapshots), peak_entropy, peak_chi, trunc, std::move(psi)};
}

struct MeasurementEvent {
  std::size_t site = 0;
  std::string basis_label;  // "z", "x", "y", or "rdm"
  std::size_t outcome = 0;  // 0 maps to spin +1/2 in the projection basis
  double probability = 1.0;
  CVec basis_state;  // the 2-vector projected onto
};

struct CellProfile {
  std::size_t cell = 0;
  std::vector<double> entropy_pre;
  std::vector<double> entropy_post;
  std::vector<std::size_t> chi_pre;
};

struct TrajectoryRecord {
  std::vector<MeasurementEvent> measurements;
  std::vector<double> estimator_values;  // layout owned by the estimator suite
  std::vector<CellProfile> profiles;     // per cell, only when record_profiles
  std::vector<double> max_entropy_pre;   // per bond, max over cells
  std::vector<double> max_entropy_post;  // per bond, only when record_profiles
  std::vector<std::size_t> max_chi_pre;  // per bond, max over cells
  double peak_entropy = 0.0;
  std::size_t peak_chi = 1;
  TruncationStats trunc;
  double born_product = 1.0;  // product of copy-1 Born probabilities
  cdouble copy2_log_amplitude{0.0, 0.0};
  bool copy2_dead = false;
};

// Estimators observe a trajectory through this interface. cell_ready fires
// after a cone's gates and before its projective measurements.
class CellHook {
 public:
  virtual ~CellHook() = default;
  virtual void cell_ready(std::size_t cell, const std::vector<std::size_t>& sites, MpsState& psi) {
    (void)cell;
    (void)sites;
    (void)psi;
  }
  virtual bool exempt_from_projection(std::size_t cell) const {
    (void)cell;
    return false;
  }
  virtual void measured(const MeasurementEvent& ev) { (void)ev; }
};

struct SebdOptions {
  TruncationPolicy policy;
  MeasureBasis basis = MeasureBasis::z;
  bool collapse = true;          // false runs the cone order without measuring
  bool record_profiles = false;  // store per-cell profiles and post-measurement data
};

namespace detail {

inline void apply_cone(MpsState& psi, const Circuit& c, const std::vector<GateRef>& cone,
                       const TruncationPolicy& policy, TruncationStats& stats) {
  for (const GateRef& ref : cone) {
    const CMat* u = c.find_gate(ref.layer, ref.bond);
    if (!u) throw ContractViolation("apply_cone: schedule references a missing gate");
    stats.absorb(psi.apply_two_site_gate(ref.bond, *u, policy));
  }
}

inline void track_maxima(const BondSnapshot& snap, std::vector<double>& ent,
                         std::vector<std::size_t>& chi, double& peak_e, std::size_t& peak_c) {
  for (std::size_t b = 0; b < snap.entropy.size(); ++b) {
    ent[b] = std::max(ent[b], snap.entropy[b]);
    peak_e = std::max(peak_e, snap.entropy[b]);
    if (!chi.empty()) {
      chi[b] = std::max(chi[b], snap.chi[b]);
      peak_c = std::max(peak_c, snap.chi[b]);
    }
  }
}

}  // namespace detail

// Measurement-assisted cone-ordered evolution of one trajectory: run cone k,
// publish the cell to the hook, then collapse the cell's sites left to right
// (unless the hook exempts the cell or collapse is off).
inline TrajectoryRecord run_sebd_trajectory(MpsState psi, const Circuit& c, const Schedule& sched,
                                            const SebdOptions& opt, OutcomeChooser& chooser,
                                            CellHook* hook = nullptr,
                                            MpsState* final_state = nullptr) {
  if (psi.n_sites() != c.n_sites)
    throw std::invalid_argument("run_sebd_trajectory: state and circuit disagree on chain length");
  const std::size_t nb = c.n_sites - 1;
  TrajectoryRecord rec;
  rec.max_entropy_pre.assign(nb, 0.0);
  rec.max_chi_pre.assign(nb, 1);
  if (opt.record_profiles) rec.max_entropy_post.assign(nb, 0.0);

  std::size_t dummy_chi = 1;
  for (std::size_t k = 0; k < sched.n_cells(); ++k) {
    detail::apply_cone(psi, c, sched.cones[k], opt.policy, rec.trunc);

    const BondSnapshot pre = detail::profile_now(psi, 0.0);
    detail::track_maxima(pre, rec.max_entropy_pre, rec.max_chi_pre, rec.peak_entropy, rec.peak_chi);

    if (hook) hook->cell_ready(k, sched.cells[k], psi);

    const bool exempt = hook && hook->exempt_from_projection(k);
    if (opt.collapse && !exempt) {
      for (std::size_t site : sched.cells[k]) {
        const CMat basis =
            opt.basis == MeasureBasis::rdm ? psi.rdm_basis(site) : axis_basis(axis_of(opt.basis));
        const SampleOutcome res = psi.sample_site(site, basis, chooser);
        rec.born_product *= res.probability;
        MeasurementEvent ev;
        ev.site = site;
        ev.basis_label = measure_basis_name(opt.basis);
        ev.outcome = res.outcome;
        ev.probability = res.probability;
        ev.basis_state = basis.col(static_cast<Eigen::Index>(res.outcome));
        if (hook) hook->measured(ev);
        rec.measurements.push_back(std::move(ev));
      }
    }

    if (opt.record_profiles) {
      const BondSnapshot post = detail::profile_now(psi, 0.0);
      double no_peak = 0.0;
      std::vector<std::size_t> no_chi;
      detail::track_maxima(post, rec.max_entropy_post, no_chi, no_peak, dummy_chi);
      CellProfile prof;
      prof.cell = k;
      prof.entropy_pre = pre.entropy;
      prof.chi_pre = pre.chi;
      prof.entropy_post = post.entropy;
      rec.profiles.push_back(std::move(prof));
    }
  }
  if (final_state) *final_state = std::move(psi);
  return rec;
}

}  // namespace spinsim
