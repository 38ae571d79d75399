#include <catch_amalgamated.hpp>

#include <spinsim/circuit.hpp>
#include <spinsim/dense.hpp>
#include <spinsim/engine.hpp>
#include <spinsim/enumerate.hpp>
#include <spinsim/errors.hpp>
#include <spinsim/estimators.hpp>
#include <spinsim/mps.hpp>
#include <spinsim/schedule.hpp>
#include <spinsim/spin.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace spinsim;

namespace {

Circuit kicked(std::size_t n, double t) {
  ModelParams p;
  p.model = ModelKind::kicked_ising;
  p.n = n;
  p.t = t;
  return build_circuit(p);
}

// The production reduction: fresh suite per trajectory, values copied out.
TrajectoryRecord run_with_suite(const Circuit& c, const Schedule& sched, const SebdOptions& opt,
                                const std::vector<ObservableSpec>& specs, OutcomeChooser& ch) {
  EstimatorSuite suite(specs, sched);
  TrajectoryRecord rec = run_sebd_trajectory(MpsState::all_up(c.n_sites), c, sched, opt, ch, &suite);
  rec.estimator_values = suite.values();
  return rec;
}

// Branch-weighted average of every estimator slot.
std::vector<double> enumerate_means(const Circuit& c, const Schedule& sched,
                                    const SebdOptions& opt,
                                    const std::vector<ObservableSpec>& specs,
                                    bool pair_driver = false) {
  TrajectoryFn fn = [&](OutcomeChooser& ch) {
    if (pair_driver)
      return run_unequal_pair_trajectory(MpsState::all_up(c.n_sites), c, sched, opt, specs, ch);
    return run_with_suite(c, sched, opt, specs, ch);
  };
  EnumerationResult res = enumerate_branches(fn);
  REQUIRE(res.total_probability == Catch::Approx(1.0).margin(1e-12));
  std::vector<double> mean(res.branches.front().record.estimator_values.size(), 0.0);
  for (const Branch& b : res.branches)
    for (std::size_t k = 0; k < mean.size(); ++k)
      mean[k] += b.probability * b.record.estimator_values[k];
  return mean;
}

}  // namespace

TEST_CASE("observable grammar accepts the documented forms", "[estimators]") {
  ObservableSpec s = parse_observable("sz", 8);
  REQUIRE(s.kind == ObsKind::one_point);
  REQUIRE(s.protocol == Protocol::em);
  REQUIRE(s.axis == Axis::z);
  REQUIRE(s.label == "sz");

  s = parse_observable(" Sx : bitstring ", 8);
  REQUIRE(s.protocol == Protocol::bitstring);
  REQUIRE(s.axis == Axis::x);
  REQUIRE(s.label == "sx:bitstring");

  s = parse_observable("sy:rdm", 8);
  REQUIRE(s.protocol == Protocol::rdm);
  REQUIRE(s.axis == Axis::y);

  s = parse_observable("czz@3", 8);
  REQUIRE(s.kind == ObsKind::equal_time);
  REQUIRE(s.axis == Axis::z);
  REQUIRE(s.ref == 2);  // 1-based input

  s = parse_observable("uzx@5", 8);
  REQUIRE(s.kind == ObsKind::unequal_time);
  REQUIRE(s.axis == Axis::z);
  REQUIRE(s.axis2 == Axis::x);
  REQUIRE(s.ref == 4);

  const std::vector<ObservableSpec> many = parse_observables("sz, sx:bitstring ,czz@2", 8);
  REQUIRE(many.size() == 3);
}

TEST_CASE("observable grammar rejects malformed specs", "[estimators]") {
  REQUIRE_THROWS_AS(parse_observable("", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("sq", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("s", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("czx@2", 8), ConfigError);  // mixed equal-time components
  REQUIRE_THROWS_AS(parse_observable("czz", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("czz@0", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("czz@9", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("czz@x", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("sz:foo", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("czz@2:bitstring", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observable("uzz@2:rdm", 8), ConfigError);
  REQUIRE_THROWS_AS(parse_observables(" , ,", 8), ConfigError);
}

TEST_CASE("cross-spec validation against the projection basis", "[estimators]") {
  auto specs = [&](const std::string& s) { return parse_observables(s, 8); };

  REQUIRE_NOTHROW(validate_observables(specs("sz:bitstring"), MeasureBasis::z));
  REQUIRE_THROWS_AS(validate_observables(specs("sz:bitstring"), MeasureBasis::x), ConfigError);
  REQUIRE_THROWS_AS(validate_observables(specs("sz:bitstring"), MeasureBasis::rdm), ConfigError);
  REQUIRE_NOTHROW(validate_observables(specs("sx:bitstring"), MeasureBasis::x));

  REQUIRE_THROWS_AS(validate_observables(specs("sz:rdm"), MeasureBasis::z), ConfigError);
  REQUIRE_NOTHROW(validate_observables(specs("sz:rdm"), MeasureBasis::rdm));

  REQUIRE_THROWS_AS(validate_observables(specs("uzz@2,sz"), MeasureBasis::z), ConfigError);
  REQUIRE_THROWS_AS(validate_observables(specs("uzz@2,uzx@2"), MeasureBasis::z), ConfigError);
  REQUIRE_THROWS_AS(validate_observables(specs("uzz@2,uzz@3"), MeasureBasis::z), ConfigError);
  REQUIRE_NOTHROW(validate_observables(specs("uzz@2,uxz@2"), MeasureBasis::z));
}

TEST_CASE("Welford statistics agree with two-pass formulas", "[estimators]") {
  std::mt19937_64 gen(301);
  std::normal_distribution<double> nd(1.3, 2.7);
  std::vector<double> xs(257);
  for (double& x : xs) x = nd(gen);

  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);

  Welford w;
  for (double x : xs) w.add(x);
  REQUIRE(w.count() == xs.size());
  REQUIRE(w.mean() == Catch::Approx(mean).epsilon(1e-12));
  REQUIRE(w.variance() == Catch::Approx(var).epsilon(1e-10));
  REQUIRE(w.std_error() == Catch::Approx(std::sqrt(var / static_cast<double>(xs.size()))));

  // Merging partials in any split reproduces the batch result.
  for (std::size_t cut : {1u, 77u, 128u, 256u}) {
    Welford a, b;
    for (std::size_t k = 0; k < xs.size(); ++k) (k < cut ? a : b).add(xs[k]);
    a.merge(b);
    REQUIRE(a.count() == xs.size());
    REQUIRE(a.mean() == Catch::Approx(w.mean()).epsilon(1e-12));
    REQUIRE(a.variance() == Catch::Approx(w.variance()).epsilon(1e-10));
  }

  Welford single;
  single.add(4.2);
  REQUIRE(single.variance() == 0.0);
  REQUIRE(single.std_error() == 0.0);

  Welford empty, full;
  full.add(1.0);
  full.merge(empty);
  REQUIRE(full.count() == 1);
  empty.merge(full);
  REQUIRE(empty.mean() == Catch::Approx(1.0));
}

TEST_CASE("windowed_average clips at the chain ends", "[estimators]") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  REQUIRE(windowed_average(v, 5, 5) == Catch::Approx(5.5));   // full clip to all 10
  REQUIRE(windowed_average(v, 0, 2) == Catch::Approx(2.0));   // {1,2,3}
  REQUIRE(windowed_average(v, 9, 2) == Catch::Approx(9.0));   // {8,9,10}
  REQUIRE(windowed_average(v, 4, 0) == Catch::Approx(5.0));   // just the center
}

TEST_CASE("layout skips exempt cells only for outcome-driven protocols", "[estimators]") {
  const Circuit c = kicked(8, 1.0);
  const Schedule sched = build_schedule(c);

  const auto em = build_layout(parse_observables("sz,czz@1", 8), sched);
  // One-point em keeps all 8 sites; equal-time from cell 0 keeps all 8 sites.
  REQUIRE(em.size() == 16);

  const auto bit = build_layout(parse_observables("sz:bitstring,czz@1", 8), sched);
  // Bitstring slots drop the exempt reference cell (sites 0 and 1).
  REQUIRE(bit.size() == 14);

  const auto mid = build_layout(parse_observables("czz@5", 8), sched);
  // Reference site 5 lives in cell 2: slots only for sites 4..7.
  REQUIRE(mid.size() == 4);
  for (const ValueSlot& s : mid) REQUIRE(s.site >= 4);

  const auto un = build_layout(parse_observables("uzz@3", 8), sched);
  REQUIRE(un.size() == 16);  // re and im per site

  const std::set<std::size_t> ex = exempt_cells(parse_observables("czz@5", 8), sched);
  REQUIRE(ex == std::set<std::size_t>{2});
}

TEST_CASE("PrefixChooser replays then extends greedily", "[estimators]") {
  PrefixChooser ch({1, 0});
  REQUIRE(ch.choose({0.3, 0.7}) == 1);
  REQUIRE(ch.choose({0.6, 0.4}) == 0);
  REQUIRE(ch.choose({0.0, 1.0}) == 1);  // past the prefix: first above cutoff
  REQUIRE(ch.probs().size() == 3);
  REQUIRE(ch.choices() == std::vector<std::size_t>{1, 0, 1});

  PrefixChooser bad({5});
  REQUIRE_THROWS_AS(bad.choose({0.5, 0.5}), std::logic_error);

  PrefixChooser dead({});
  REQUIRE_THROWS_AS(dead.choose({0.0, 0.0}), ZeroProbabilityError);
}

TEST_CASE("branch enumeration covers the outcome tree exactly once", "[estimators]") {
  const Circuit c = kicked(4, 1.0);
  const Schedule sched = build_schedule(c);
  SebdOptions opt;
  opt.policy = {0.0, 0};

  const auto specs = parse_observables("sz", 4);
  TrajectoryFn fn = [&](OutcomeChooser& ch) { return run_with_suite(c, sched, opt, specs, ch); };
  EnumerationResult res = enumerate_branches(fn);

  REQUIRE(res.n_events == 4);
  REQUIRE(res.total_probability == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(res.branches.size() <= 16);
  std::set<std::vector<std::size_t>> distinct;
  for (const Branch& b : res.branches) {
    REQUIRE(b.probability > 0.0);
    REQUIRE(distinct.insert(b.outcomes).second);
  }

  REQUIRE_THROWS_AS(enumerate_branches(fn, 2), CapacityError);
}

TEST_CASE("em and outcome estimators are unbiased against dense evolution", "[estimators]") {
  const std::size_t n = 4;
  const Circuit c = kicked(n, 1.0);
  const Schedule sched = build_schedule(c);

  DenseState dense(n);
  dense.apply_circuit(c);

  SECTION("one-point em in the z basis") {
    SebdOptions opt;
    opt.policy = {0.0, 0};
    const auto specs = parse_observables("sz,sx", n);
    const auto mean = enumerate_means(c, sched, opt, specs);
    const auto layout = build_layout(specs, sched);
    REQUIRE(mean.size() == layout.size());
    for (std::size_t k = 0; k < layout.size(); ++k) {
      const Axis ax = specs[layout[k].spec_index].axis;
      const double want = dense.expect_local(layout[k].site, spin_op(ax));
      REQUIRE(mean[k] == Catch::Approx(want).margin(1e-10));
    }
  }

  SECTION("bitstring estimator in its matching basis") {
    SebdOptions opt;
    opt.policy = {0.0, 0};
    opt.basis = MeasureBasis::x;
    const auto specs = parse_observables("sx:bitstring", n);
    validate_observables(specs, opt.basis);
    const auto mean = enumerate_means(c, sched, opt, specs);
    const auto layout = build_layout(specs, sched);
    for (std::size_t k = 0; k < layout.size(); ++k) {
      const double want = dense.expect_local(layout[k].site, spin_op(Axis::x));
      REQUIRE(mean[k] == Catch::Approx(want).margin(1e-10));
    }
  }

  SECTION("rdm estimator in the rdm basis") {
    SebdOptions opt;
    opt.policy = {0.0, 0};
    opt.basis = MeasureBasis::rdm;
    const auto specs = parse_observables("sz:rdm", n);
    validate_observables(specs, opt.basis);
    const auto mean = enumerate_means(c, sched, opt, specs);
    const auto layout = build_layout(specs, sched);
    for (std::size_t k = 0; k < layout.size(); ++k) {
      const double want = dense.expect_local(layout[k].site, spin_op(Axis::z));
      REQUIRE(mean[k] == Catch::Approx(want).margin(1e-10));
    }
  }

  SECTION("equal-time correlator from the reference cell onward") {
    SebdOptions opt;
    opt.policy = {0.0, 0};
    const auto specs = parse_observables("czz@1", n);
    const auto mean = enumerate_means(c, sched, opt, specs);
    const auto layout = build_layout(specs, sched);
    REQUIRE(layout.size() == n);  // reference cell is cell 0
    for (std::size_t k = 0; k < layout.size(); ++k) {
      const double want =
          dense.expect_two_site(0, layout[k].site, spin_op(Axis::z), spin_op(Axis::z));
      REQUIRE(mean[k] == Catch::Approx(want).margin(1e-10));
    }
  }
}

TEST_CASE("unequal-time pair estimator is unbiased", "[estimators]") {
  const std::size_t n = 4;
  const Circuit c = kicked(n, 1.0);
  const Schedule sched = build_schedule(c);

  const auto specs = parse_observables("uzz@3", n);
  validate_observables(specs, MeasureBasis::z);

  SebdOptions opt;
  opt.policy = {0.0, 0};

  const auto mean = enumerate_means(c, sched, opt, specs, true);
  const auto layout = build_layout(specs, sched);
  REQUIRE(mean.size() == 2 * n);

  // Dense pair: copy 1 evolves the state, copy 2 evolves S^z_ref |psi0>.
  DenseState copy1(n), copy2(n);
  copy2.apply_one_site(2, spin_op(Axis::z));
  copy1.apply_circuit(c);
  copy2.apply_circuit(c);

  for (std::size_t k = 0; k < layout.size(); ++k) {
    const cdouble want = DenseState::cross_expect(copy1, layout[k].site, spin_op(Axis::z), copy2);
    const double comp = layout[k].component == 0 ? want.real() : want.imag();
    REQUIRE(mean[k] == Catch::Approx(comp).margin(1e-10));
  }
}

TEST_CASE("pair driver records copy-2 bookkeeping", "[estimators]") {
  const std::size_t n = 4;
  const Circuit c = kicked(n, 1.0);
  const Schedule sched = build_schedule(c);
  const auto specs = parse_observables("uzz@1", n);

  SebdOptions opt;
  opt.policy = {0.0, 0};

  BornChooser ch(7);
  TrajectoryRecord rec =
      run_unequal_pair_trajectory(MpsState::all_up(n), c, sched, opt, specs, ch);
  REQUIRE(rec.estimator_values.size() == 2 * n);
  REQUIRE(rec.measurements.size() == n);
  REQUIRE(rec.born_product > 0.0);
  REQUIRE(rec.born_product <= 1.0 + 1e-12);
  if (rec.copy2_dead) {
    // A dead second copy zeroes every estimate from that cell onward; the
    // last sites' estimates must then be exactly zero.
    REQUIRE(rec.estimator_values[2 * (n - 1)] == 0.0);
    REQUIRE(rec.estimator_values[2 * (n - 1) + 1] == 0.0);
  }

  REQUIRE_THROWS_AS(
      run_unequal_pair_trajectory(MpsState::all_up(n), c, sched, opt,
                                  parse_observables("sz", n), ch),
      std::invalid_argument);
}
