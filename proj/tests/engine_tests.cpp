#include <catch_amalgamated.hpp>

#include <spinsim/circuit.hpp>
#include <spinsim/dense.hpp>
#include <spinsim/engine.hpp>
#include <spinsim/errors.hpp>
#include <spinsim/mps.hpp>
#include <spinsim/rng.hpp>
#include <spinsim/schedule.hpp>

#include "test_helpers.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace spinsim;
using namespace testing_oracle;

namespace {

Circuit kicked(std::size_t n, double t) {
  ModelParams p;
  p.model = ModelKind::kicked_ising;
  p.n = n;
  p.t = t;
  return build_circuit(p);
}

struct RecordingHook : CellHook {
  std::vector<std::size_t> ready_cells;
  std::vector<std::vector<std::size_t>> ready_sites;
  std::vector<MeasurementEvent> events;
  std::set<std::size_t> exempt;

  void cell_ready(std::size_t cell, const std::vector<std::size_t>& sites, MpsState&) override {
    ready_cells.push_back(cell);
    ready_sites.push_back(sites);
  }
  bool exempt_from_projection(std::size_t cell) const override { return exempt.count(cell) > 0; }
  void measured(const MeasurementEvent& ev) override { events.push_back(ev); }
};

}  // namespace

TEST_CASE("TEBD with zero truncation reproduces dense evolution", "[engine]") {
  const std::size_t n = 6;
  const Circuit c = kicked(n, 2.0);

  MpsState psi = MpsState::all_up(n);
  TebdResult res = run_tebd(psi, c, {0.0, 0}, {1.0, 2.0});

  DenseState dense(n);
  dense.apply_circuit(c);
  REQUIRE((res.state.statevector() - dense.amplitudes()).norm() < 1e-10);

  REQUIRE(res.snapshots.size() == 2);
  REQUIRE(res.snapshots[0].time == Catch::Approx(1.0));
  REQUIRE(res.snapshots[1].time == Catch::Approx(2.0));
  REQUIRE(res.snapshots[0].entropy.size() == n - 1);

  // Snapshot entropies agree with the Schmidt oracle on the dense vector.
  DenseState mid(n);
  mid.apply_layer(c.layers[0]);
  mid.apply_layer(c.layers[1]);
  for (std::size_t b = 0; b < n - 1; ++b) {
    const double want = entropy_of(schmidt_values(mid.amplitudes(), n, b + 1));
    REQUIRE(res.snapshots[0].entropy[b] == Catch::Approx(want).margin(1e-9));
  }

  REQUIRE(res.trunc.max_discarded == 0.0);
  REQUIRE(res.peak_chi >= 2);
  for (const BondSnapshot& s : res.snapshots)
    for (double e : s.entropy) REQUIRE(res.peak_entropy >= e - 1e-12);
}

TEST_CASE("TEBD callback fires at step boundaries with the live state", "[engine]") {
  const std::size_t n = 4;
  const Circuit c = kicked(n, 3.0);
  std::vector<double> seen;
  TebdResult res = run_tebd(MpsState::all_up(n), c, {0.0, 0}, {2.0, 3.0},
                            [&](double t, MpsState& psi) {
                              seen.push_back(t);
                              REQUIRE(psi.n_sites() == n);
                              REQUIRE(psi.norm() == Catch::Approx(1.0));
                            });
  REQUIRE(seen == std::vector<double>{2.0, 3.0});

  REQUIRE_THROWS_AS(run_tebd(MpsState::all_up(5), c, {0.0, 0}), std::invalid_argument);
}

TEST_CASE("truncation statistics accumulate and merge", "[engine]") {
  TruncationStats a;
  a.absorb(GateResult{1e-4, 8, true, false});
  a.absorb(GateResult{5e-6, 4, false, true});
  REQUIRE(a.max_discarded == 1e-4);
  REQUIRE(a.eps_limited == 1);
  REQUIRE(a.chi_limited == 1);

  TruncationStats b;
  b.absorb(GateResult{2e-3, 2, true, false});
  a.merge(b);
  REQUIRE(a.max_discarded == 2e-3);
  REQUIRE(a.eps_limited == 2);
  REQUIRE(a.chi_limited == 1);
}

TEST_CASE("cone order without collapse equals layer order", "[engine]") {
  const std::size_t n = 8;
  const Circuit c = kicked(n, 3.0);
  const Schedule sched = build_schedule(c);

  SebdOptions opt;
  opt.policy = {0.0, 0};
  opt.collapse = false;

  BornChooser chooser(5);
  MpsState final_state = MpsState::all_up(n);
  TrajectoryRecord rec =
      run_sebd_trajectory(MpsState::all_up(n), c, sched, opt, chooser, nullptr, &final_state);

  DenseState dense(n);
  dense.apply_circuit(c);
  REQUIRE((final_state.statevector() - dense.amplitudes()).norm() < 1e-10);
  REQUIRE(rec.measurements.empty());
  REQUIRE(rec.born_product == 1.0);
  REQUIRE(rec.trunc.max_discarded == 0.0);
  REQUIRE(rec.max_entropy_pre.size() == n - 1);
}

TEST_CASE("collapse produces one measurement per site with consistent record", "[engine]") {
  const std::size_t n = 7;
  const Circuit c = kicked(n, 2.0);
  const Schedule sched = build_schedule(c);

  SebdOptions opt;
  opt.policy = {1e-12, 0};
  opt.basis = MeasureBasis::z;

  BornChooser chooser(17);
  RecordingHook hook;
  TrajectoryRecord rec = run_sebd_trajectory(MpsState::all_up(n), c, sched, opt, chooser, &hook);

  REQUIRE(rec.measurements.size() == n);
  double prod = 1.0;
  std::set<std::size_t> sites;
  for (const MeasurementEvent& ev : rec.measurements) {
    prod *= ev.probability;
    sites.insert(ev.site);
    REQUIRE(ev.basis_label == "z");
    REQUIRE((ev.outcome == 0 || ev.outcome == 1));
    const CVec want = axis_basis(Axis::z).col(static_cast<Eigen::Index>(ev.outcome));
    REQUIRE((ev.basis_state - want).norm() < 1e-14);
  }
  REQUIRE(sites.size() == n);
  REQUIRE(rec.born_product == Catch::Approx(prod));
  REQUIRE(hook.events.size() == n);
  REQUIRE(hook.ready_cells == std::vector<std::size_t>{0, 1, 2, 3});
  for (std::size_t k = 0; k < hook.ready_sites.size(); ++k)
    REQUIRE(hook.ready_sites[k] == sched.cells[k]);

  // Same seed, same trajectory; the record is reproducible.
  BornChooser chooser2(17);
  TrajectoryRecord rec2 = run_sebd_trajectory(MpsState::all_up(n), c, sched, opt, chooser2);
  REQUIRE(rec2.measurements.size() == rec.measurements.size());
  for (std::size_t k = 0; k < rec.measurements.size(); ++k) {
    REQUIRE(rec2.measurements[k].outcome == rec.measurements[k].outcome);
    REQUIRE(rec2.measurements[k].probability ==
            Catch::Approx(rec.measurements[k].probability).margin(1e-12));
  }
}

TEST_CASE("exempt cells are not measured", "[engine]") {
  const std::size_t n = 6;
  const Circuit c = kicked(n, 1.0);
  const Schedule sched = build_schedule(c);

  SebdOptions opt;
  opt.policy = {0.0, 0};

  RecordingHook hook;
  hook.exempt.insert(1);
  BornChooser chooser(3);
  TrajectoryRecord rec = run_sebd_trajectory(MpsState::all_up(n), c, sched, opt, chooser, &hook);

  REQUIRE(rec.measurements.size() == 4);  // sites 2 and 3 skipped
  for (const MeasurementEvent& ev : rec.measurements) {
    REQUIRE(ev.site != 2);
    REQUIRE(ev.site != 3);
  }
}

TEST_CASE("measured cells leave no entanglement behind the front", "[engine]") {
  const std::size_t n = 12;
  const Circuit c = kicked(n, 2.0);
  const Schedule sched = build_schedule(c);

  SebdOptions opt;
  opt.policy = {0.0, 0};
  opt.record_profiles = true;

  BornChooser chooser(29);
  TrajectoryRecord rec = run_sebd_trajectory(MpsState::all_up(n), c, sched, opt, chooser);

  REQUIRE(rec.profiles.size() == sched.n_cells());
  for (const CellProfile& prof : rec.profiles) {
    const std::size_t last_measured = sched.cells[prof.cell].back();
    for (std::size_t b = 0; b <= last_measured && b < n - 1; ++b)
      REQUIRE(prof.entropy_post[b] < 1e-10);
    REQUIRE(prof.entropy_pre.size() == n - 1);
    REQUIRE(prof.chi_pre.size() == n - 1);
  }
  REQUIRE(rec.max_entropy_post.size() == n - 1);
  REQUIRE(rec.peak_entropy > 0.0);
  REQUIRE(rec.peak_chi >= 2);
}

TEST_CASE("rdm basis measurements record their projector", "[engine]") {
  const std::size_t n = 4;
  const Circuit c = kicked(n, 1.0);
  const Schedule sched = build_schedule(c);

  SebdOptions opt;
  opt.policy = {0.0, 0};
  opt.basis = MeasureBasis::rdm;

  BornChooser chooser(41);
  TrajectoryRecord rec = run_sebd_trajectory(MpsState::all_up(n), c, sched, opt, chooser);
  REQUIRE(rec.measurements.size() == n);
  for (const MeasurementEvent& ev : rec.measurements) {
    REQUIRE(ev.basis_label == "rdm");
    REQUIRE(ev.basis_state.norm() == Catch::Approx(1.0).margin(1e-12));
    // The chosen eigenvector cannot have probability below the smaller
    // eigenvalue floor used by the sampler.
    REQUIRE(ev.probability > 1e-14);
  }
}
