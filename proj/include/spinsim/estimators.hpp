#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "mps.hpp"
#include "schedule.hpp"
#include "spin.hpp"

namespace spinsim {

enum class ObsKind { one_point, equal_time, unequal_time };
enum class Protocol { em, bitstring, rdm };

inline std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::em: return "em";
    case Protocol::bitstring: return "bitstring";
    default: return "rdm";
  }
}

// One requested observable.
//   sx            one-point <S^x_l> for every site l
//   czz@7         equal-time <S^z_7 S^z_l> against reference site 7 (1-based)
//   uzx@7         unequal-time <S^z_l(t) S^x_7(0)>
// One-point specs take an optional estimator protocol suffix
// (":em", ":bitstring", ":rdm"); correlators are entangled-measurement only.
struct ObservableSpec {
  ObsKind kind = ObsKind::one_point;
  Protocol protocol = Protocol::em;
  Axis axis = Axis::z;    // measured component (at time t for unequal-time)
  Axis axis2 = Axis::z;   // perturbation component at time 0 (unequal-time)
  std::size_t ref = 0;    // 0-based reference site for correlators
  std::string label;      // canonical text, used in output rows
};

inline ObservableSpec parse_observable(std::string text, std::size_t n_sites) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(c));
  if (s.empty()) throw ConfigError("observable: empty spec");

  ObservableSpec spec;
  spec.label = s;

  std::string body = s;
  const std::size_t colon = s.find(':');
  if (colon != std::string::npos) {
    const std::string proto = s.substr(colon + 1);
    body = s.substr(0, colon);
    if (proto == "em")
      spec.protocol = Protocol::em;
    else if (proto == "bitstring")
      spec.protocol = Protocol::bitstring;
    else if (proto == "rdm")
      spec.protocol = Protocol::rdm;
    else
      throw ConfigError("observable '" + text + "': unknown protocol ':" + proto + "'");
  }

  auto grammar_axis = [&](char c) {
    try {
      return parse_axis(c);
    } catch (const std::invalid_argument&) {
      throw ConfigError("observable '" + text + "': unknown component '" + c + "'");
    }
  };

  auto parse_ref = [&](const std::string& b, std::size_t at) {
    const std::string num = b.substr(at + 1);
    if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("observable '" + text + "': reference site must be a positive integer");
    const unsigned long v = std::stoul(num);
    if (v < 1 || v > n_sites)
      throw ConfigError("observable '" + text + "': reference site out of range 1.." +
                        std::to_string(n_sites));
    return static_cast<std::size_t>(v - 1);
  };

  if (body.size() == 2 && body[0] == 's') {
    spec.kind = ObsKind::one_point;
    spec.axis = grammar_axis(body[1]);
    return spec;
  }
  const std::size_t at = body.find('@');
  if (body.size() >= 4 && (body[0] == 'c' || body[0] == 'u') && at == 3) {
    spec.kind = body[0] == 'c' ? ObsKind::equal_time : ObsKind::unequal_time;
    spec.axis = grammar_axis(body[1]);
    spec.axis2 = grammar_axis(body[2]);
    spec.ref = parse_ref(body, at);
    if (spec.protocol != Protocol::em)
      throw ConfigError("observable '" + text + "': correlators support only the em protocol");
    if (spec.kind == ObsKind::equal_time && spec.axis != spec.axis2)
      throw ConfigError("observable '" + text +
                        "': equal-time correlators estimate a single component");
    return spec;
  }
  throw ConfigError("observable '" + text + "': unrecognized spec");
}

inline std::vector<ObservableSpec> parse_observables(const std::string& list, std::size_t n_sites) {
  std::vector<ObservableSpec> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = list.find(',', pos);
    const std::string item =
        comma == std::string::npos ? list.substr(pos) : list.substr(pos, comma - pos);
    if (!item.empty() && item.find_first_not_of(" \t") != std::string::npos)
      out.push_back(parse_observable(item, n_sites));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("observables: empty list");
  return out;
}

// Cross-spec rules that depend on the run configuration.
inline void validate_observables(const std::vector<ObservableSpec>& specs, MeasureBasis basis) {
  bool any_unequal = false, any_other = false;
  for (const ObservableSpec& s : specs) {
    if (s.protocol == Protocol::bitstring) {
      if (basis == MeasureBasis::rdm || axis_of(basis) != s.axis)
        throw ConfigError("observable '" + s.label +
                          "': bitstring estimation requires the projection basis to match the "
                          "observable component");
    }
    if (s.protocol == Protocol::rdm && basis != MeasureBasis::rdm)
      throw ConfigError("observable '" + s.label + "': rdm estimation requires --basis rdm");
    (s.kind == ObsKind::unequal_time ? any_unequal : any_other) = true;
  }
  if (any_unequal && any_other)
    throw ConfigError("unequal-time correlators cannot share a run with other observables");
  if (any_unequal)
    for (const ObservableSpec& s : specs)
      if (s.axis2 != specs.front().axis2 || s.ref != specs.front().ref)
        throw ConfigError("unequal-time specs in one run must share the perturbation site and component");
}

// Streaming mean/variance with a numerically stable parallel merge.
class Welford {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const Welford& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * nb / (na + nb);
    m2_ += o.m2_ + d * d * na * nb / (na + nb);
    n_ += o.n_;
  }

  std::size_t count() const { return n_; }
  double mean() const { return n_ ? mean_ : 0.0; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const {
    return n_ ? std::sqrt(std::max(0.0, variance()) / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// One scalar produced per trajectory: (observable, site, re/im component).
struct ValueSlot {
  std::size_t spec_index = 0;
  std::size_t site = 0;
  int component = 0;  // 0 = real, 1 = imaginary (unequal-time only)
};

// Cells whose sites are never projected: the whole unit cell around every
// equal-time reference site.
inline std::set<std::size_t> exempt_cells(const std::vector<ObservableSpec>& specs,
                                          const Schedule& sched) {
  std::set<std::size_t> out;
  for (const ObservableSpec& s : specs)
    if (s.kind == ObsKind::equal_time) out.insert(sched.cell_of_site(s.ref));
  return out;
}

// Deterministic slot list for one run frame. Equal-time slots exist only for
// cells at or after the reference cell (earlier cells are already collapsed
// when the reference evolves); bitstring/rdm slots skip exempt cells.
inline std::vector<ValueSlot> build_layout(const std::vector<ObservableSpec>& specs,
                                           const Schedule& sched) {
  const std::set<std::size_t> exempt = exempt_cells(specs, sched);
  std::vector<ValueSlot> layout;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ObservableSpec& s = specs[i];
    for (std::size_t site = 0; site < sched.n_sites; ++site) {
      const std::size_t cell = sched.cell_of_site(site);
      switch (s.kind) {
        case ObsKind::one_point:
          if (s.protocol != Protocol::em && exempt.count(cell)) continue;
          layout.push_back(ValueSlot{i, site, 0});
          break;
        case ObsKind::equal_time:
          if (cell < sched.cell_of_site(s.ref)) continue;
          layout.push_back(ValueSlot{i, site, 0});
          break;
        case ObsKind::unequal_time:
          layout.push_back(ValueSlot{i, site, 0});
          layout.push_back(ValueSlot{i, site, 1});
          break;
      }
    }
  }
  return layout;
}

// Fills one trajectory's value row by observing the engine through CellHook.
// Handles one-point and equal-time specs; unequal-time runs use the dedicated
// pair driver below.
class EstimatorSuite : public CellHook {
 public:
  EstimatorSuite(const std::vector<ObservableSpec>& specs, const Schedule& sched)
      : specs_(specs), sched_(sched), exempt_(exempt_cells(specs, sched)),
        layout_(build_layout(specs, sched)) {
    for (const ObservableSpec& s : specs_)
      if (s.kind == ObsKind::unequal_time)
        throw std::invalid_argument("EstimatorSuite: unequal-time specs need the pair driver");
    slot_of_.assign(specs_.size(), std::vector<std::ptrdiff_t>(sched_.n_sites, -1));
    for (std::size_t k = 0; k < layout_.size(); ++k)
      slot_of_[layout_[k].spec_index][layout_[k].site] = static_cast<std::ptrdiff_t>(k);
    values_.assign(layout_.size(), 0.0);
  }

  const std::vector<ValueSlot>& layout() const { return layout_; }
  const std::vector<double>& values() const { return values_; }

  void cell_ready(std::size_t cell, const std::vector<std::size_t>& sites, MpsState& psi) override {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const ObservableSpec& s = specs_[i];
      if (s.kind == ObsKind::one_point && s.protocol == Protocol::em) {
        for (std::size_t site : sites)
          store(i, site, psi.expect_local(site, spin_op(s.axis)));
      } else if (s.kind == ObsKind::equal_time) {
        if (cell < sched_.cell_of_site(s.ref)) continue;
        for (std::size_t site : sites)
          store(i, site, psi.expect_two_site(s.ref, site, spin_op(s.axis), spin_op(s.axis)));
      }
    }
  }

  bool exempt_from_projection(std::size_t cell) const override { return exempt_.count(cell) > 0; }

  void measured(const MeasurementEvent& ev) override {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const ObservableSpec& s = specs_[i];
      if (s.kind != ObsKind::one_point) continue;
      if (s.protocol == Protocol::bitstring) {
        store(i, ev.site, outcome_spin_value(ev.outcome));
      } else if (s.protocol == Protocol::rdm) {
        const cdouble v = (ev.basis_state.adjoint() * spin_op(s.axis) * ev.basis_state)(0, 0);
        store(i, ev.site, v.real());
      }
    }
  }

 private:
  void store(std::size_t spec, std::size_t site, double value) {
    const std::ptrdiff_t k = slot_of_[spec][site];
    if (k >= 0) values_[static_cast<std::size_t>(k)] = value;
  }

  std::vector<ObservableSpec> specs_;
  const Schedule& sched_;
  std::set<std::size_t> exempt_;
  std::vector<ValueSlot> layout_;
  std::vector<std::vector<std::ptrdiff_t>> slot_of_;
  std::vector<double> values_;
};

// Unequal-time estimator <S^a_l(t) S^b_ref(0)>: copy 1 evolves |psi0>, copy 2
// evolves S^b_ref |psi0>, both through the same cones. Copy 1 is measured;
// copy 2 receives the same projections. Per site the estimate is
// cross_expect(copy1, S^a, copy2) divided by the product of copy-1 Born
// probabilities so far, which makes the trajectory average unbiased. A copy-2
// projection of zero weight kills that copy exactly: later estimates are 0.
inline TrajectoryRecord run_unequal_pair_trajectory(const MpsState& psi0, const Circuit& c,
                                                    const Schedule& sched, const SebdOptions& opt,
                                                    const std::vector<ObservableSpec>& specs,
                                                    OutcomeChooser& chooser) {
  for (const ObservableSpec& s : specs)
    if (s.kind != ObsKind::unequal_time)
      throw std::invalid_argument("pair driver handles unequal-time specs only");
  if (specs.empty()) throw std::invalid_argument("pair driver: no specs");
  const std::size_t ref = specs.front().ref;
  const Axis axis2 = specs.front().axis2;

  const std::vector<ValueSlot> layout = build_layout(specs, sched);
  std::vector<std::vector<std::ptrdiff_t>> slot_re(specs.size()),
      slot_im(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    slot_re[i].assign(sched.n_sites, -1);
    slot_im[i].assign(sched.n_sites, -1);
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    auto& table = layout[k].component == 0 ? slot_re : slot_im;
    table[layout[k].spec_index][layout[k].site] = static_cast<std::ptrdiff_t>(k);
  }

  MpsState copy1 = psi0;
  MpsState copy2 = psi0;
  copy2.apply_single_site_op(ref, spin_op(axis2));

  const std::size_t nb = c.n_sites - 1;
  TrajectoryRecord rec;
  rec.estimator_values.assign(layout.size(), 0.0);
  rec.max_entropy_pre.assign(nb, 0.0);
  rec.max_chi_pre.assign(nb, 1);
  if (opt.record_profiles) rec.max_entropy_post.assign(nb, 0.0);
  std::size_t dummy_chi = 1;

  for (std::size_t k = 0; k < sched.n_cells(); ++k) {
    detail::apply_cone(copy1, c, sched.cones[k], opt.policy, rec.trunc);
    if (!rec.copy2_dead) detail::apply_cone(copy2, c, sched.cones[k], opt.policy, rec.trunc);

    const BondSnapshot pre = detail::profile_now(copy1, 0.0);
    detail::track_maxima(pre, rec.max_entropy_pre, rec.max_chi_pre, rec.peak_entropy, rec.peak_chi);

    for (std::size_t i = 0; i < specs.size(); ++i)
      for (std::size_t site : sched.cells[k]) {
        cdouble est{0.0, 0.0};
        if (!rec.copy2_dead)
          est = MpsState::cross_expect(copy1, site, spin_op(specs[i].axis), copy2) /
                rec.born_product;
        rec.estimator_values[static_cast<std::size_t>(slot_re[i][site])] = est.real();
        rec.estimator_values[static_cast<std::size_t>(slot_im[i][site])] = est.imag();
      }

    if (opt.collapse) {
      for (std::size_t site : sched.cells[k]) {
        const CMat basis = opt.basis == MeasureBasis::rdm ? copy1.rdm_basis(site)
                                                          : axis_basis(axis_of(opt.basis));
        const SampleOutcome res = copy1.sample_site(site, basis, chooser);
        rec.born_product *= res.probability;
        MeasurementEvent ev;
        ev.site = site;
        ev.basis_label = measure_basis_name(opt.basis);
        ev.outcome = res.outcome;
        ev.probability = res.probability;
        ev.basis_state = basis.col(static_cast<Eigen::Index>(res.outcome));
        rec.measurements.push_back(std::move(ev));
        if (!rec.copy2_dead) {
          try {
            copy2.project_site(site, basis.col(static_cast<Eigen::Index>(res.outcome)));
          } catch (const ZeroProbabilityError&) {
            rec.copy2_dead = true;
          }
        }
      }
    }

    if (opt.record_profiles) {
      const BondSnapshot post = detail::profile_now(copy1, 0.0);
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
  rec.copy2_log_amplitude = copy2.log_amplitude();
  return rec;
}

// Average of per-site values over a window of half width `half` centred on
// `center`, clipped to the chain (the window variance of the main text).
inline double windowed_average(const std::vector<double>& per_site, std::size_t center,
                               std::size_t half) {
  const std::size_t lo = center >= half ? center - half : 0;
  const std::size_t hi = std::min(per_site.size() - 1, center + half);
  double acc = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) acc += per_site[k];
  return acc / static_cast<double>(hi - lo + 1);
}

}  // namespace spinsim
