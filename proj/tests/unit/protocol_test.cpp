#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "../oracles/bk_fock.hpp"
#include "../oracles/tcnot_circuit.hpp"
#include "../support/random_bk.hpp"
#include "tcsim/protocol.hpp"

using namespace tcsim;
using namespace tcsim::protocol;
using qmath::DensityMatrix;

using support::random_qubit;
using support::werner;

namespace {

BKModelParams random_params(std::mt19937_64& rng) { return support::random_bk_params(rng); }

}  // namespace

TEST_CASE("herald target follows the detector pair", "[protocol]") {
  using harness::Detector;
  CHECK(herald_target({Detector::D1, Detector::D1}).isApprox(qmath::states::psi_plus()));
  CHECK(herald_target({Detector::D2, Detector::D2}).isApprox(qmath::states::psi_plus()));
  CHECK(herald_target({Detector::D1, Detector::D2}).isApprox(qmath::states::psi_minus()));
  CHECK(herald_target({Detector::D2, Detector::D1}).isApprox(qmath::states::psi_minus()));
}

TEST_CASE("ideal heralding gives perfect pairs half the time", "[protocol]") {
  const auto r = bk_conditional_state(ideal_bk_params());
  REQUIRE(r.size() == 4);
  for (const auto& x : r) {
    CHECK(x.fidelity == Approx(1.0).margin(1e-12));
    CHECK(x.success_probability == Approx(0.125).margin(1e-12));
  }
  CHECK(total_success(r) == Approx(0.5).margin(1e-12));
}

TEST_CASE("detection efficiency alone scales success quadratically", "[protocol]") {
  for (double eta : {0.9, 0.3, 0.05}) {
    auto p = ideal_bk_params();
    p.detection_efficiency = {eta, eta};
    const auto r = bk_conditional_state(p);
    CHECK(total_success(r) == Approx(0.5 * eta * eta).epsilon(1e-12));
    CHECK(mean_fidelity(r) == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("measured parameters give F near 0.6 at 40 ns", "[protocol]") {
  auto p = measured_bk_params();
  p.timebin_ns = 40;
  const double f40 = mean_fidelity(bk_conditional_state(p));
  CHECK(f40 == Approx(0.60).margin(0.10));
  for (double t : {5.0, 10.0, 20.0, 30.0, 45.0, 59.0}) {
    p.timebin_ns = t;
    CHECK(mean_fidelity(bk_conditional_state(p)) > 0.5);
  }
}

TEST_CASE("success probability never exceeds one half", "[protocol]") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) CHECK(total_success(bk_conditional_state(random_params(rng))) <= 0.5 + 1e-12);
}

TEST_CASE("fidelity respects the HOM bound", "[protocol]") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_params(rng);
    for (const auto& x : bk_conditional_state(p)) CHECK(x.fidelity <= hom_bound(*p.mean_visibility) + 1e-9);
  }
}

TEST_CASE("channel model agrees with photonic-mode enumeration", "[protocol]") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_params(rng);
    const auto mod = bk_conditional_state(p);
    const auto ref = oracle::BkFock(p).run();
    REQUIRE(ref.size() == mod.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(static_cast<int>(mod[k].herald.early) == ref[k].early);
      CHECK(static_cast<int>(mod[k].herald.late) == ref[k].late);
      const double f_ref = (herald_target(mod[k].herald).adjoint() * ref[k].rho *
                            herald_target(mod[k].herald))(0).real();
      CHECK(std::abs(mod[k].fidelity - f_ref) <= 1e-8);
      CHECK(mod[k].success_probability == Approx(ref[k].probability).epsilon(1e-8));
      CHECK((mod[k].state.matrix() - ref[k].rho).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("invalid model parameters are rejected", "[protocol]") {
  auto p = measured_bk_params();
  p.timebin_ns = 200;
  CHECK_THROWS_AS(bk_conditional_state(p), ProtocolError);
  p = measured_bk_params();
  p.mean_visibility = 1.2;
  CHECK_THROWS_AS(bk_conditional_state(p), ProtocolError);
  p = measured_bk_params();
  p.detection_efficiency[1] = -0.1;
  CHECK_THROWS_AS(bk_conditional_state(p), ProtocolError);
}

TEST_CASE("fidelity estimator on a worked example", "[protocol]") {
  const auto e = bp_fidelity_estimator({.n00 = 1, .n01 = 3, .npp = 3, .npm = 1});
  CHECK(e.population == Approx(0.75));
  CHECK(e.coherence == Approx(0.5));
  CHECK(e.fidelity == Approx(0.625));
  CHECK(e.population_err == Approx(std::sqrt(0.75 * 0.25 / 4)));
  CHECK(e.coherence_err == Approx(2 * std::sqrt(0.75 * 0.25 / 4)));
  CHECK_THROWS_AS(bp_fidelity_estimator({.n00 = 0, .n01 = 0, .npp = 3, .npm = 1}), ProtocolError);
  CHECK_THROWS_AS(bp_fidelity_estimator({.n00 = 2, .n01 = 1, .npp = 0, .npm = 0}), ProtocolError);
}

TEST_CASE("estimator reproduces the state fidelity from sampled counts", "[protocol]") {
  using harness::Detector;
  auto p = measured_bk_params();
  const auto states = bk_conditional_state(p);
  const std::uint64_t shots = 1000000;
  std::mt19937_64 rng(5);

  auto check = [&](const DensityMatrix& rho, const HeraldPattern& h) {
    const double truth = qmath::fidelity_to_pure(rho, herald_target(h));
    // module sampler
    const auto e1 = bp_fidelity_estimator(sample_basis_counts(rho, h, shots, 99));
    CHECK(std::abs(e1.fidelity - truth) <= 3 * e1.fidelity_err);
    // projector sampler
    qmath::Vector pp(4), pm(4);
    pp << 0.5, 0.5, 0.5, 0.5;
    pm << 0.5, -0.5, -0.5, 0.5;
    const double same_x = (pp.adjoint() * rho.matrix() * pp)(0).real() +
                          (pm.adjoint() * rho.matrix() * pm)(0).real();
    const double odd = rho(1, 1).real() + rho(2, 2).real();
    const double agree = h.early == h.late ? same_x : 1 - same_x;
    std::binomial_distribution<std::uint64_t> bz(shots, odd), bx(shots, agree);
    BasisCounts c;
    c.n01 = bz(rng);
    c.n00 = shots - c.n01;
    c.npp = bx(rng);
    c.npm = shots - c.npp;
    const auto e2 = bp_fidelity_estimator(c);
    CHECK(std::abs(e2.fidelity - truth) <= 3 * e2.fidelity_err);
  };
  for (const auto& s : states) check(s.state, s.herald);
  check(werner(0.7, qmath::states::psi_minus()), {Detector::D1, Detector::D2});
  check(werner(0.9, qmath::states::psi_plus()), {Detector::D2, Detector::D2});
}

TEST_CASE("HOM fidelity bound", "[protocol]") {
  CHECK(hom_bound(0.63) == Approx(0.815));
  CHECK(hom_bound(0.92) == Approx(0.96));
  CHECK_THROWS_AS(hom_bound(1.5), ProtocolError);
}

TEST_CASE("tCNOT with an ideal pair reproduces the CNOT truth table", "[protocol]") {
  using harness::Detector;
  for (auto h : all_patterns()) {
    const auto bp = make_bell_pair(DensityMatrix::from_pure(herald_target(h)), h);
    for (auto mode : {TcnotMode::feed_forward, TcnotMode::postselect_00}) {
      const auto t = tcnot_truth_table(bp, mode);
      for (int in = 0; in < 4; ++in) {
        const int c = in & 1, tg = in >> 1;
        const int expect = c | ((tg ^ c) << 1);
        for (int o = 0; o < 4; ++o) CHECK(t[in][o] == Approx(o == expect ? 1.0 : 0.0).margin(1e-12));
      }
    }
    const auto r = tcnot_execute(DensityMatrix::basis_state(1, 0), DensityMatrix::basis_state(1, 1),
                                 bp, TcnotMode::postselect_00);
    CHECK(r.accept_probability == Approx(0.25).margin(1e-12));
  }
  const auto bp = make_bell_pair(DensityMatrix::from_pure(qmath::states::psi_plus()),
                                 {Detector::D1, Detector::D1});
  const auto r = tcnot_execute(DensityMatrix::basis_state(1, 1), DensityMatrix::basis_state(1, 0), bp,
                               TcnotMode::feed_forward);
  CHECK(r.output(3, 3).real() == Approx(1.0).margin(1e-12));
  CHECK(r.accept_probability == Approx(1.0).margin(1e-12));
}

TEST_CASE("tCNOT with an ideal pair equals a direct CNOT", "[protocol]") {
  using harness::Detector;
  std::mt19937_64 rng(21);
  const auto cnot = qmath::gate_matrix({qmath::GateKind::CNOT, {0, 1}});
  const auto bp = make_bell_pair(DensityMatrix::from_pure(qmath::states::psi_minus()),
                                 {Detector::D2, Detector::D1});
  for (int i = 0; i < 20; ++i) {
    const auto c = random_qubit(rng), t = random_qubit(rng);
    const qmath::Matrix direct = cnot * c.tensor(t).matrix() * cnot.adjoint();
    for (auto mode : {TcnotMode::feed_forward, TcnotMode::postselect_00}) {
      const auto r = tcnot_execute(c, t, bp, mode);
      CHECK((r.output.matrix() - direct).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("tCNOT agrees with the direct four-qubit circuit", "[protocol]") {
  using harness::Detector;
  std::mt19937_64 rng(22);
  auto p = measured_bk_params();
  std::vector<BellPairResult> pairs = bk_conditional_state(p);
  pairs.push_back(make_bell_pair(werner(0.8, qmath::states::psi_plus()), {Detector::D1, Detector::D1}));
  pairs.push_back(make_bell_pair(werner(0.8, qmath::states::psi_minus()), {Detector::D1, Detector::D2}));
  for (const auto& bp : pairs) {
    for (int i = 0; i < 5; ++i) {
      const auto c = random_qubit(rng), t = random_qubit(rng);
      for (bool ff : {true, false}) {
        double accept = 0;
        const auto ref = oracle::tcnot_circuit(c.matrix(), t.matrix(), bp.state.matrix(),
                                               bp.herald.early == bp.herald.late, ff, accept);
        const auto r = tcnot_execute(c, t, bp, ff ? TcnotMode::feed_forward : TcnotMode::postselect_00);
        CHECK((oracle::swap_order(r.output.matrix()) - ref).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::abs(r.accept_probability - accept) <= 1e-10);
      }
    }
  }
}

TEST_CASE("experiment sweep rates", "[protocol]") {
  auto p = measured_bk_params();
  const std::vector<double> sweep{10, 40, p.tau_lim_ns};
  const auto rows = simulate_bk_experiment(p, sweep);
  REQUIRE(rows.size() == 3);
  double pdet = 1;
  for (int m = 0; m < 2; ++m)
    pdet *= p.excitation_probability[m] * p.emitters[m].zpl_fraction() * p.detection_efficiency[m];
  CHECK(rows[2].rate_hz == Approx(pdet * 0.5 * p.repetition_rate_hz).epsilon(1e-9));
  CHECK(rows[0].rate_hz < rows[1].rate_hz);
  CHECK(rows[0].fidelity > rows[1].fidelity);

  p.timebin_ns = 40;
  CHECK(rows[1].fidelity == Approx(mean_fidelity(bk_conditional_state(p))).epsilon(1e-12));

  auto half = p;
  half.repetition_rate_hz /= 2;
  const auto rows2 = simulate_bk_experiment(half, sweep);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows2[i].rate_hz == Approx(rows[i].rate_hz / 2));
  CHECK_THROWS_AS(simulate_bk_experiment(p, {}), ProtocolError);
  CHECK_THROWS_AS(simulate_bk_experiment(p, {150}), ProtocolError);
}

TEST_CASE("Monte Carlo sweep is worker independent", "[protocol]") {
  auto p = measured_bk_params();
  p.repetition_rate_hz = 2e5;
  BkMonteCarlo mc;
  for (auto& m : mc.apparatus.modules) {
    m.emitter = emitter::tc1_params();
    m.path = {{}, 0.0};
    m.init_fidelity = 1.0;
  }
  mc.apparatus.detectors = harness::DetectorModel{};
  mc.shots = 4000;
  mc.seed = 3;
  const auto a = simulate_bk_experiment(p, {20, 60}, mc);
  mc.workers = 4;
  const auto b = simulate_bk_experiment(p, {20, 60}, mc);
  REQUIRE(a.size() == 2);
  CHECK(a[1].heralds > 50);
  CHECK(a[0].heralds <= a[1].heralds);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].heralds == b[i].heralds);
    CHECK(a[i].fidelity == b[i].fidelity);
    CHECK(a[i].rate_hz == Approx(static_cast<double>(a[i].heralds) / mc.shots * p.repetition_rate_hz));
  }
}
