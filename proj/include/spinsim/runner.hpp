#pragma once

#include <array>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "circuit.hpp"
#include "dense.hpp"
#include "engine.hpp"
#include "enumerate.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "mps.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace spinsim {

struct RunConfig {
  ModelParams model;
  std::string engine = "sebd";  // "sebd" | "tebd"
  MeasureBasis basis = MeasureBasis::z;
  std::string observables = "sz";
  double epsilon = 1e-8;
  std::size_t chi_max = 0;  // 0 = uncapped
  std::size_t samples = 100;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::string output = "run";
  std::string format = "csv";  // "csv" | "json"
  std::string init = "neel";   // "neel" | "up" | "random"
  std::size_t init_chi = 4;
  std::uint64_t init_seed = 7;
  std::vector<double> snapshots;  // tebd profile times; defaults to {t}
  bool dump_schedule = false;
};

inline MpsState build_initial_state(const RunConfig& cfg) {
  if (cfg.init == "neel") return MpsState::neel(cfg.model.n);
  if (cfg.init == "up") return MpsState::all_up(cfg.model.n);
  if (cfg.init == "random") return MpsState::random_mps(cfg.model.n, cfg.init_chi, cfg.init_seed);
  throw ConfigError("unknown initial state: " + cfg.init);
}

struct EstimateRow {
  double time = 0.0;
  std::size_t site = 0;  // 1-based in output
  std::string quantity;
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

struct ProfileRow {
  double time = 0.0;
  std::size_t bond = 0;  // 1-based: bond b sits between sites b and b+1
  double entropy_pre = 0.0;
  double entropy_post = 0.0;
  double chi_pre = 0.0;
};

struct RunOutput {
  std::vector<EstimateRow> estimates;
  std::vector<ProfileRow> profiles;
  TruncationStats trunc;
  double mean_peak_entropy = 0.0;
  double mean_peak_chi = 0.0;
  nlohmann::json schedule_dump;  // null unless requested
};

// Runs fn(0..count-1) across a small thread pool. Indices are claimed through
// an atomic counter, so which thread computes which index is scheduling noise;
// callers must make results depend on the index alone.
inline void parallel_indexed(std::size_t count, std::size_t workers,
                             const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min(workers, count);
    pool.reserve(n_threads);
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(body);
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

struct JobResult {
  std::vector<Welford> slots;  // aligned with the job's value layout
  std::vector<Welford> entropy_pre, entropy_post, chi_pre;  // per bond
  Welford peak_entropy, peak_chi;
  TruncationStats trunc;
};

// Samples `samples` trajectories with per-trajectory seeds derived from
// (master_seed, index_offset + i) and reduces them in index order, so the
// result is identical for every worker count.
inline JobResult run_sampled_job(const MpsState& init, const Circuit& c, const Schedule& sched,
                                 const SebdOptions& opt, const std::vector<ObservableSpec>& specs,
                                 std::size_t n_slots, bool pair_mode, std::size_t samples,
                                 std::uint64_t master_seed, std::uint64_t index_offset,
                                 std::size_t workers) {
  std::vector<TrajectoryRecord> records(samples);
  parallel_indexed(samples, workers, [&](std::size_t i) {
    BornChooser chooser(trajectory_seed(master_seed, index_offset + i));
    if (pair_mode) {
      records[i] = run_unequal_pair_trajectory(init, c, sched, opt, specs, chooser);
    } else {
      EstimatorSuite suite(specs, sched);
      records[i] = run_sebd_trajectory(init, c, sched, opt, chooser, &suite);
      records[i].estimator_values = suite.values();
    }
  });

  const std::size_t nb = c.n_sites - 1;
  JobResult out;
  out.slots.resize(n_slots);
  out.entropy_pre.resize(nb);
  out.entropy_post.resize(nb);
  out.chi_pre.resize(nb);
  for (const TrajectoryRecord& r : records) {
    if (r.estimator_values.size() != n_slots)
      throw ContractViolation("run_sampled_job: estimator layout mismatch");
    for (std::size_t k = 0; k < n_slots; ++k) out.slots[k].add(r.estimator_values[k]);
    for (std::size_t b = 0; b < nb; ++b) {
      out.entropy_pre[b].add(r.max_entropy_pre[b]);
      out.chi_pre[b].add(static_cast<double>(r.max_chi_pre[b]));
      if (!r.max_entropy_post.empty()) out.entropy_post[b].add(r.max_entropy_post[b]);
    }
    out.peak_entropy.add(r.peak_entropy);
    out.peak_chi.add(static_cast<double>(r.peak_chi));
    out.trunc.merge(r.trunc);
  }
  return out;
}

namespace detail {

// slot index by (spec, site, component), -1 when the layout has no such slot
inline std::vector<std::vector<std::array<std::ptrdiff_t, 2>>> slot_table(
    std::size_t n_specs, std::size_t n_sites, const std::vector<ValueSlot>& layout) {
  std::vector<std::vector<std::array<std::ptrdiff_t, 2>>> table(
      n_specs, std::vector<std::array<std::ptrdiff_t, 2>>(n_sites, {-1, -1}));
  for (std::size_t k = 0; k < layout.size(); ++k)
    table[layout[k].spec_index][layout[k].site][static_cast<std::size_t>(layout[k].component)] =
        static_cast<std::ptrdiff_t>(k);
  return table;
}

inline EstimateRow make_row(double time, std::size_t site0, std::string quantity,
                            const Welford& w) {
  EstimateRow row;
  row.time = time;
  row.site = site0 + 1;
  row.quantity = std::move(quantity);
  row.mean = w.mean();
  row.variance = w.variance();
  row.std_error = w.std_error();
  row.n_samples = w.count();
  return row;
}

}  // namespace detail

inline RunOutput execute_run(const RunConfig& cfg) {
  cfg.model.validated_steps();
  if (cfg.samples < 1) throw ConfigError("samples must be positive");
  if (cfg.workers < 1) throw ConfigError("workers must be positive");
  if (cfg.format != "csv" && cfg.format != "json")
    throw ConfigError("format must be csv or json");
  if (cfg.engine != "tebd" && cfg.engine != "sebd")
    throw ConfigError("engine must be tebd or sebd");

  TruncationPolicy policy{cfg.epsilon, cfg.chi_max};
  policy.validate();
  const Circuit circuit = build_circuit(cfg.model);
  const MpsState init = build_initial_state(cfg);
  const std::vector<ObservableSpec> specs = parse_observables(cfg.observables, cfg.model.n);
  validate_observables(specs, cfg.basis);
  const std::size_t n = cfg.model.n;

  RunOutput out;

  if (cfg.engine == "tebd") {
    for (const ObservableSpec& s : specs)
      if (s.kind != ObsKind::one_point || s.protocol != Protocol::em)
        throw ConfigError("observable '" + s.label +
                          "': the tebd engine evaluates local em observables only");
    std::vector<double> snaps = cfg.snapshots.empty() ? std::vector<double>{cfg.model.t}
                                                      : cfg.snapshots;
    for (double s : snaps) {
      const double k = s / cfg.model.dt;
      if (s <= 0.0 || s > cfg.model.t + 1e-9 || std::abs(k - std::round(k)) > 1e-9)
        throw ConfigError("snapshot times must be step multiples within (0, t]");
    }
    const TebdCallback cb = [&](double time, MpsState& psi) {
      for (const ObservableSpec& s : specs)
        for (std::size_t site = 0; site < n; ++site)
          out.estimates.push_back(detail::make_row(
              time, site, s.label, [&] {
                Welford w;
                w.add(psi.expect_local(site, spin_op(s.axis)));
                return w;
              }()));
    };
    TebdResult res = run_tebd(init, circuit, policy, snaps, cb);
    for (const BondSnapshot& snap : res.snapshots)
      for (std::size_t b = 0; b + 1 < n; ++b)
        out.profiles.push_back(ProfileRow{snap.time, b + 1, snap.entropy[b], snap.entropy[b],
                                          static_cast<double>(snap.chi[b])});
    out.trunc = res.trunc;
    out.mean_peak_entropy = res.peak_entropy;
    out.mean_peak_chi = static_cast<double>(res.peak_chi);
    return out;
  }

  // sebd
  const Schedule sched = build_schedule(circuit);
  if (cfg.dump_schedule) out.schedule_dump = schedule_to_json(sched);

  bool pair_mode = false, need_mirror = false;
  for (const ObservableSpec& s : specs) {
    pair_mode = pair_mode || s.kind == ObsKind::unequal_time;
    need_mirror = need_mirror || s.kind == ObsKind::equal_time;
  }

  SebdOptions opt;
  opt.policy = policy;
  opt.basis = cfg.basis;
  opt.record_profiles = true;

  const std::vector<ValueSlot> layout = build_layout(specs, sched);
  const JobResult main_job = run_sampled_job(init, circuit, sched, opt, specs, layout.size(),
                                             pair_mode, cfg.samples, cfg.seed, 0, cfg.workers);
  const auto main_slots = detail::slot_table(specs.size(), n, layout);

  // Mirrored pass covers equal-time sites on the near side of the reference:
  // in the reflected frame those cells come after the reflected reference.
  std::vector<ObservableSpec> mspecs;
  std::vector<std::size_t> mspec_origin;
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].kind == ObsKind::equal_time) {
      ObservableSpec m = specs[i];
      m.ref = n - 1 - m.ref;
      mspecs.push_back(std::move(m));
      mspec_origin.push_back(i);
    }
  Circuit mcircuit;
  Schedule msched;
  std::vector<ValueSlot> mlayout;
  JobResult mirror_job;
  std::vector<std::vector<std::array<std::ptrdiff_t, 2>>> mirror_slots;
  if (need_mirror) {
    mcircuit = circuit.mirrored();
    msched = build_schedule(mcircuit);
    mlayout = build_layout(mspecs, msched);
    mirror_job = run_sampled_job(init.mirrored(), mcircuit, msched, opt, mspecs, mlayout.size(),
                                 false, cfg.samples, cfg.seed, cfg.samples, cfg.workers);
    mirror_slots = detail::slot_table(mspecs.size(), n, mlayout);
  }

  const double t_final = cfg.model.t;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ObservableSpec& s = specs[i];
    for (std::size_t site = 0; site < n; ++site) {
      if (s.kind == ObsKind::unequal_time) {
        const std::ptrdiff_t kre = main_slots[i][site][0], kim = main_slots[i][site][1];
        out.estimates.push_back(detail::make_row(t_final, site, s.label + ":re",
                                                 main_job.slots[static_cast<std::size_t>(kre)]));
        out.estimates.push_back(detail::make_row(t_final, site, s.label + ":im",
                                                 main_job.slots[static_cast<std::size_t>(kim)]));
        continue;
      }
      if (s.kind == ObsKind::equal_time &&
          sched.cell_of_site(site) < sched.cell_of_site(s.ref)) {
        // stitch in the mirrored estimate
        std::size_t mi = 0;
        while (mspec_origin[mi] != i) ++mi;
        const std::size_t msite = n - 1 - site;
        const std::ptrdiff_t k = mirror_slots[mi][msite][0];
        if (k >= 0)
          out.estimates.push_back(detail::make_row(t_final, site, s.label,
                                                   mirror_job.slots[static_cast<std::size_t>(k)]));
        continue;
      }
      const std::ptrdiff_t k = main_slots[i][site][0];
      if (k >= 0)
        out.estimates.push_back(
            detail::make_row(t_final, site, s.label, main_job.slots[static_cast<std::size_t>(k)]));
    }
  }

  for (std::size_t b = 0; b + 1 < n; ++b)
    out.profiles.push_back(ProfileRow{t_final, b + 1, main_job.entropy_pre[b].mean(),
                                      main_job.entropy_post[b].mean(), main_job.chi_pre[b].mean()});
  out.trunc = main_job.trunc;
  if (need_mirror) out.trunc.merge(mirror_job.trunc);
  out.mean_peak_entropy = main_job.peak_entropy.mean();
  out.mean_peak_chi = main_job.peak_chi.mean();
  return out;
}

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_estimates_csv(std::ostream& os, const std::vector<EstimateRow>& rows) {
  os << "time,site_or_bond,quantity,mean,variance,stderr,n_samples\n";
  for (const EstimateRow& r : rows)
    os << format_g17(r.time) << ',' << r.site << ',' << r.quantity << ',' << format_g17(r.mean)
       << ',' << format_g17(r.variance) << ',' << format_g17(r.std_error) << ',' << r.n_samples
       << '\n';
}

inline void write_profiles_csv(std::ostream& os, const std::vector<ProfileRow>& rows) {
  os << "time,bond,entropy_pre,entropy_post,chi_pre\n";
  for (const ProfileRow& r : rows)
    os << format_g17(r.time) << ',' << r.bond << ',' << format_g17(r.entropy_pre) << ','
       << format_g17(r.entropy_post) << ',' << format_g17(r.chi_pre) << '\n';
}

inline nlohmann::json estimates_json(const std::vector<EstimateRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EstimateRow& r : rows)
    arr.push_back({{"time", r.time},
                   {"site_or_bond", r.site},
                   {"quantity", r.quantity},
                   {"mean", r.mean},
                   {"variance", r.variance},
                   {"stderr", r.std_error},
                   {"n_samples", r.n_samples}});
  return arr;
}

inline nlohmann::json profiles_json(const std::vector<ProfileRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ProfileRow& r : rows)
    arr.push_back({{"time", r.time},
                   {"bond", r.bond},
                   {"entropy_pre", r.entropy_pre},
                   {"entropy_post", r.entropy_post},
                   {"chi_pre", r.chi_pre}});
  return arr;
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file: " + path);
  f << contents;
}

inline void write_outputs(const RunOutput& out, const RunConfig& cfg) {
  if (cfg.format == "csv") {
    std::ostringstream est, prof;
    write_estimates_csv(est, out.estimates);
    write_profiles_csv(prof, out.profiles);
    write_file(cfg.output + "_estimates.csv", est.str());
    write_file(cfg.output + "_profiles.csv", prof.str());
  } else {
    write_file(cfg.output + "_estimates.json", estimates_json(out.estimates).dump(2) + "\n");
    write_file(cfg.output + "_profiles.json", profiles_json(out.profiles).dump(2) + "\n");
  }
  if (!out.schedule_dump.is_null())
    write_file(cfg.output + "_schedule.json", out.schedule_dump.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Self-checks behind the `verify` subcommand.

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Deviation of the first two-layer period of `c` from the dense one-period
// operator built straight from the model definition.
inline double period_identity_error(const Circuit& c, const ModelParams& p) {
  if (c.layers.size() < 2) throw std::invalid_argument("period_identity_error: need one period");
  const std::size_t d = 1ull << c.n_sites;
  CMat u = CMat::Identity(d, d);
  for (std::size_t k = 0; k < 2; ++k)
    for (const BondGate& g : c.layers[k].gates) u = embed_two_site(c.n_sites, g.bond, g.u) * u;
  return (u - dense_floquet_operator(p)).cwiseAbs().maxCoeff();
}

inline std::vector<CheckResult> verify_checks() {
  std::vector<CheckResult> out;
  auto add = [&](const std::string& name, bool ok, const std::string& detail) {
    out.push_back(CheckResult{name, ok, detail});
  };

  {
    double worst = 0.0;
    for (std::size_t n = 2; n <= 8; ++n) {
      ModelParams p;
      p.model = ModelKind::kicked_ising;
      p.n = n;
      p.t = 1.0;
      worst = std::max(worst, period_identity_error(build_kicked_ising(p), p));
    }
    add("kicked-period-identity", worst <= 1e-10,
        "max deviation over n=2..8: " + format_g17(worst));
  }

  {
    ModelParams p;
    p.model = ModelKind::kicked_ising;
    p.n = 7;
    p.t = 2.0;
    const Circuit c = build_kicked_ising(p);
    const Schedule s = build_schedule(c);
    DenseState by_layer(p.n), by_cone(p.n);
    by_layer.apply_circuit(c);
    for (const std::vector<GateRef>& cone : s.cones)
      for (const GateRef& g : cone) by_cone.apply_two_site(g.bond, *c.find_gate(g.layer, g.bond));
    const double d = (by_layer.amplitudes() - by_cone.amplitudes()).cwiseAbs().maxCoeff();
    add("cone-layer-equivalence", d <= 1e-10, "max amplitude deviation: " + format_g17(d));
  }

  {
    ModelParams p;
    p.model = ModelKind::kicked_ising;
    p.n = 8;
    p.t = 3.0;
    const Circuit c = build_kicked_ising(p);
    const Schedule s = build_schedule(c);
    DenseState dense(p.n);
    dense.apply_circuit(c);
    SebdOptions opt;
    opt.policy = TruncationPolicy{0.0, 0};
    opt.collapse = false;
    BornChooser chooser(1);
    MpsState final_state = MpsState::all_up(p.n);
    run_sebd_trajectory(MpsState::all_up(p.n), c, s, opt, chooser, nullptr, &final_state);
    const double d1 = phase_aligned_distance(final_state.statevector(), dense.amplitudes());
    TebdResult tebd = run_tebd(MpsState::all_up(p.n), c, opt.policy);
    const double d2 = phase_aligned_distance(tebd.state.statevector(), dense.amplitudes());
    add("lossless-engines-match-dense", d1 <= 1e-10 && d2 <= 1e-10,
        "cone-order distance " + format_g17(d1) + ", layer-order distance " + format_g17(d2));
  }

  {
    ModelParams p;
    p.model = ModelKind::kicked_ising;
    p.n = 4;
    p.t = 1.0;
    const Circuit c = build_kicked_ising(p);
    const Schedule s = build_schedule(c);
    const std::vector<ObservableSpec> specs = parse_observables("sz", p.n);
    const std::vector<ValueSlot> layout = build_layout(specs, s);
    SebdOptions opt;
    opt.policy = TruncationPolicy{0.0, 0};
    const EnumerationResult er = enumerate_branches([&](OutcomeChooser& ch) {
      EstimatorSuite suite(specs, s);
      TrajectoryRecord rec = run_sebd_trajectory(MpsState::all_up(p.n), c, s, opt, ch, &suite);
      rec.estimator_values = suite.values();
      return rec;
    });
    DenseState dense(p.n);
    dense.apply_circuit(c);
    double worst = std::abs(er.total_probability - 1.0);
    for (std::size_t k = 0; k < layout.size(); ++k) {
      double acc = 0.0;
      for (const Branch& b : er.branches) acc += b.probability * b.record.estimator_values[k];
      worst = std::max(worst, std::abs(acc - dense.expect_local(layout[k].site, spin_op(Axis::z))));
    }
    add("branch-enumeration-unbiased", worst <= 1e-10,
        "max deviation from dense (incl. total probability): " + format_g17(worst));
  }

  {
    double prev = 0.0;
    bool ok = true;
    std::string detail = "C(dt)/dt^2:";
    const CMat h = dense_heisenberg_hamiltonian(6);
    for (double dt : {0.2, 0.1, 0.05}) {
      ModelParams p;
      p.model = ModelKind::heisenberg;
      p.n = 6;
      p.t = dt;
      p.dt = dt;
      const CMat uc = circuit_unitary(build_heisenberg(p));
      const CMat ue = expi_hermitian(h, dt);
      const double c = (uc - ue).cwiseAbs().maxCoeff() / (dt * dt);
      detail += " " + format_g17(c);
      if (prev > 0.0) ok = ok && c / prev >= 0.5 && c / prev <= 2.0;
      prev = c;
    }
    add("heisenberg-trotter-order", ok, detail);
  }

  return out;
}

inline nlohmann::json verify_report(const std::vector<CheckResult>& checks) {
  bool all = true;
  nlohmann::json arr = nlohmann::json::array();
  for (const CheckResult& c : checks) {
    all = all && c.passed;
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return {{"passed", all}, {"checks", arr}};
}

}  // namespace spinsim
