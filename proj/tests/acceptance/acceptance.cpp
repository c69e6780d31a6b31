// Acceptance run: one PASS/FAIL line per criterion. With a criterion number
// as the only argument, runs just that one. Exit status is non-zero when any
// selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "../oracles/bk_fock.hpp"
#include "../oracles/hom_quadrature.hpp"
#include "../oracles/tcnot_circuit.hpp"
#include "../support/random_bk.hpp"
#include "tcsim/analysis.hpp"
#include "tcsim/cli.hpp"
#include "tcsim/emitter.hpp"
#include "tcsim/forecast.hpp"
#include "tcsim/protocol.hpp"

using namespace tcsim;
using qmath::DensityMatrix;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

// 1 ------------------------------------------------------------------------
Outcome forecast_anchors() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sb = forecast::minimum_step_budget();
  const auto eb = forecast::projected_efficiency_budget();
  const auto rr = forecast::repetition_rate(sb);
  const double ps = forecast::success_probability(eb);
  const forecast::ProjectionParams p;
  const auto c = forecast::fidelity_rate_curve(p, sb, eb, {1e-4, 0.125});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const bool ok = rr.total_time_ns == 292.0 && within(rr.rate_hz, 3.42e6, 0.005e6) && within(ps, 0.443, 0.001) &&
                  within(c[0].fidelity, 0.999, 0.0005) && within(c[1].fidelity, 0.998, 0.001) &&
                  within(c[1].rate_hz, 1.9e5, 0.19e5) && secs < 1.0;
  return {ok, fmt::format("T={} ns rate={:.4g} Hz p={:.4f} F(f->0)={:.5f} F(0.125)={:.5f} rate(0.125)={:.4g} Hz "
                          "[{:.2f} s < 1 s]",
                          rr.total_time_ns, rr.rate_hz, ps, c[0].fidelity, c[1].fidelity, c[1].rate_hz, secs)};
}

// 2 ------------------------------------------------------------------------
Outcome hom_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = cli::default_config(cli::Experiment::hom);
  cfg.shots = 1000000;
  cfg.hom.windows_ns = {5, 10, 20, 40, 60, 100, 130};
  const auto out = cli::run(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double v5 = *out.metric("analytic.visibility.T5");
  const double v100 = *out.metric("analytic.visibility.T100");
  double worst_z = 0;
  for (double w : cfg.hom.windows_ns) {
    const auto k = config::format_number(w);
    const double z = std::abs(*out.metric("mc.visibility.T" + k) - *out.metric("analytic.visibility.T" + k)) /
                     *out.metric("mc.visibility_err.T" + k);
    worst_z = std::max(worst_z, z);
  }
  const bool a5 = within(v5, 0.63, 0.08), a100 = within(v100, 0.2, 0.08), mc = worst_z <= 3, fast = secs < 120;
  return {a5 && a100 && mc && fast,
          fmt::format("V(5)={:.3f} [0.63+-0.08: {}] V(100)={:.3f} [0.2+-0.08: {}] MC 1e6 shots max |z|={:.2f} "
                      "[<=3: {}] [{:.0f} s < 120 s]",
                      v5, a5 ? "ok" : "MISS", v100, a100 ? "ok" : "MISS", worst_z, mc ? "ok" : "MISS", secs)};
}

// 3 ------------------------------------------------------------------------
Outcome bk_reproduction() {
  const auto p = protocol::measured_bk_params();
  std::vector<double> sweep{40};
  for (int t = 1; t < 60; ++t) sweep.push_back(t);
  const auto rows = protocol::simulate_bk_experiment(p, sweep);
  double worst = 1;
  for (std::size_t i = 1; i < rows.size(); ++i) worst = std::min(worst, rows[i].fidelity);
  const bool ok = within(rows[0].fidelity, 0.60, 0.10) && worst > 0.5;
  return {ok, fmt::format("F(40 ns)={:.3f} [0.60+-0.10] min F over T=1..59 ns={:.3f} [>0.5]; model-level agreement "
                          "only, the measured fidelity itself is not independently reproduced",
                          rows[0].fidelity, worst)};
}

// 4 ------------------------------------------------------------------------
Outcome bound_property() {
  std::mt19937_64 rng(404);
  double worst = -1;
  for (int i = 0; i < 100; ++i) {
    const auto p = support::random_bk_params(rng);
    for (const auto& s : protocol::bk_conditional_state(p))
      worst = std::max(worst, s.fidelity - protocol::hom_bound(*p.mean_visibility));
  }
  return {worst <= 1e-9, fmt::format("100 random parameter sets, max F - (1+v)/2 = {:.3g} [<=1e-9]", worst)};
}

// 5 ------------------------------------------------------------------------
Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(505);
  double bk = 0;
  for (int i = 0; i < 10; ++i) {
    const auto p = support::random_bk_params(rng);
    const auto mod = protocol::bk_conditional_state(p);
    const auto ref = oracle::BkFock(p).run();
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const auto psi = protocol::herald_target(mod[k].herald);
      bk = std::max(bk, std::abs(mod[k].fidelity - (psi.adjoint() * ref[k].rho * psi)(0).real()));
    }
  }

  const double L = 130;
  const auto e1 = emitter::tc1_params(), e2 = emitter::tc2_params();
  const auto h = emitter::hom_correlations(e1, e2, emitter::TimeGrid{0.1, L}, L);
  const oracle::HomOracle ho(e1, e2, L);
  double hom = 0;
  for (int k = -130; k < 130; ++k) {
    hom = std::max(hom, std::abs(h.indistinguishable.integral(k, k + 1.0) - ho.bin(k, k + 1.0, true)));
    hom = std::max(hom, std::abs(h.distinguishable.integral(k, k + 1.0) - ho.bin(k, k + 1.0, false)));
  }

  const auto pairs = protocol::bk_conditional_state(protocol::measured_bk_params());
  double tc = 0;
  for (int i = 0; i < 20; ++i) {
    const auto c = support::random_qubit(rng), t = support::random_qubit(rng);
    const auto& bp = pairs[i % pairs.size()];
    for (bool ff : {true, false}) {
      double accept = 0;
      const auto ref = oracle::tcnot_circuit(c.matrix(), t.matrix(), bp.state.matrix(),
                                             bp.herald.early == bp.herald.late, ff, accept);
      const auto r = protocol::tcnot_execute(c, t, bp, ff ? protocol::TcnotMode::feed_forward
                                                          : protocol::TcnotMode::postselect_00);
      tc = std::max(tc, (oracle::swap_order(r.output.matrix()) - ref).cwiseAbs().maxCoeff());
      tc = std::max(tc, std::abs(r.accept_probability - accept));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {bk <= 1e-8 && hom <= 1e-6 && tc <= 1e-10 && secs < 60,
          fmt::format("BK |dF|={:.2g} [<=1e-8] HOM per 1 ns bin {:.2g} [<=1e-6] tCNOT {:.2g} [<=1e-10] [{:.1f} s < 60 s]",
                      bk, hom, tc, secs)};
}

// 6 ------------------------------------------------------------------------
Outcome tcnot_truth_table() {
  using protocol::TcnotMode;
  const auto ideal = protocol::bk_conditional_state(protocol::ideal_bk_params())[0];
  double ideal_err = 0, accept_err = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = i & 1, t = i >> 1;
    const auto r = protocol::tcnot_execute(DensityMatrix::basis_state(1, c), DensityMatrix::basis_state(1, t), ideal,
                                           TcnotMode::postselect_00);
    accept_err = std::max(accept_err, std::abs(r.accept_probability - 0.25));
    const auto tt = protocol::tcnot_truth_table(ideal, TcnotMode::postselect_00);
    for (int j = 0; j < 4; ++j) ideal_err = std::max(ideal_err, std::abs(tt[i][j] - (j == c + 2 * (t ^ c) ? 1 : 0)));
  }

  // Werner pair with fidelity 0.60
  const double w = (0.60 - 0.25) / 0.75;
  const auto degraded =
      protocol::make_bell_pair(support::werner(w, qmath::states::psi_plus()), {harness::Detector::D1, harness::Detector::D1});
  double oracle_err = 0;
  bool dominant = true;
  for (auto mode : {TcnotMode::feed_forward, TcnotMode::postselect_00}) {
    const auto tt = protocol::tcnot_truth_table(degraded, mode);
    for (int i = 0; i < 4; ++i) {
      const int c = i & 1, t = i >> 1;
      double accept = 0;
      const auto ref = oracle::tcnot_circuit(DensityMatrix::basis_state(1, c).matrix(),
                                             DensityMatrix::basis_state(1, t).matrix(), degraded.state.matrix(), true,
                                             mode == TcnotMode::feed_forward, accept);
      for (int j = 0; j < 4; ++j) {
        const int be = (j & 1) * 2 + (j >> 1);
        oracle_err = std::max(oracle_err, std::abs(tt[i][j] - ref(be, be).real()));
      }
      const int correct = c + 2 * (t ^ c);
      for (int j = 0; j < 4; ++j)
        if (j != correct && tt[i][j] >= tt[i][correct]) dominant = false;
    }
  }
  return {ideal_err <= 1e-10 && accept_err <= 1e-10 && oracle_err <= 1e-10 && dominant,
          fmt::format("ideal table err={:.2g} acceptance err={:.2g} F=0.60 pair vs oracle {:.2g} [<=1e-10] diagonal "
                      "dominant={}; the measured table is matched qualitatively only",
                      ideal_err, accept_err, oracle_err, dominant ? "yes" : "no")};
}

// 7 ------------------------------------------------------------------------
Outcome fit_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sets = cli::spin_datasets(cli::SpinConfig{});
  std::string detail;
  bool ok = true;
  for (const auto& d : sets) {
    if (d.name == "rabi" || d.name == "pump") continue;
    int good = 0;
    const int trials = 200;
    for (int k = 0; k < trials; ++k) {
      const auto y = cli::spin_sample(d, harness::shot_seed(7000 + d.name.size(), k));
      analysis::FitOptions o;
      o.sigma.assign(y.size(), d.sigma);
      try {
        const auto r = analysis::fit(d.model, d.t, y, o);
        bool all = !r.degenerate;
        for (std::size_t i = 0; i < r.params.size(); ++i)
          all = all && std::abs(r.params[i] - d.truth[i]) <= 3 * r.std_errors[i];
        good += all;
      } catch (const analysis::FitError&) {
      }
    }
    const double frac = static_cast<double>(good) / trials;
    ok = ok && frac >= 0.95;
    detail += fmt::format("{} {:.1f}% ", d.name, 100 * frac);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 120;
  return {ok, detail + fmt::format("of 200 trials with every parameter within 3 std errors [>=95%] [{:.0f} s < 120 s]",
                                   secs)};
}

// 8 ------------------------------------------------------------------------
Outcome ssro_calibration() {
  const auto d2 = analysis::ssro_simulate(analysis::ssro_tc2(), 20000, 801);
  const double spam35 = analysis::ssro_spam(d2.bright, d2.dark, 35);
  const auto d1 = analysis::ssro_simulate(analysis::ssro_tc1(), 20000, 802);
  const auto th1 = analysis::ssro_threshold(d1.bright, d1.dark);
  const double spam8 = analysis::ssro_spam(d1.bright, d1.dark, 8);

  // threshold sweep: 0.5 at zero, one interior maximum, back towards 0.5
  bool shape = true;
  for (const auto* d : {&d1, &d2}) {
    const auto th = analysis::ssro_threshold(d->bright, d->dark);
    const auto& cv = th.curve;
    shape = shape && cv.front() == 0.5 && th.threshold > 0 && th.threshold + 1 < static_cast<int>(cv.size()) &&
            cv.back() < th.spam - 0.2;
  }
  const bool ok = within(spam35, 0.89, 0.06) && within(spam8, 0.87, 0.06) && std::abs(th1.threshold - 8) <= 1 && shape;
  return {ok, fmt::format("TC2 SPAM(35)={:.3f} [0.89+-0.06] TC1 SPAM(8)={:.3f} [0.87+-0.06] TC1 optimum at {} "
                          "(SPAM {:.3f}) [8+-1] sweep shape={}; calibrated model, shape compared qualitatively",
                          spam35, spam8, th1.threshold, th1.spam, shape ? "ok" : "off")};
}

// 9 ------------------------------------------------------------------------
Outcome determinism() {
  std::string bad;
  for (const auto& name : cli::experiment_names()) {
    auto cfg = cli::default_config(cli::parse_experiment(name));
    cfg.seed = 909;
    cfg.protocol.monte_carlo = true;
    const auto a = cli::run(cfg, 1);
    const auto b = cli::run(cfg, 8);
    bool same = a.summary == b.summary && a.files.size() == b.files.size();
    for (std::size_t i = 0; same && i < a.files.size(); ++i)
      same = a.files[i].suffix == b.files[i].suffix && a.files[i].content == b.files[i].content;
    if (!same) bad += name + " ";
  }
  return {bad.empty(), bad.empty() ? "all six experiments byte-identical with 1 and 8 workers at default shots"
                                   : "outputs differ for: " + bad};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"forecast anchors", forecast_anchors},   {"HOM reproduction", hom_reproduction},
      {"BK reproduction", bk_reproduction},     {"bound property", bound_property},
      {"oracle equivalence", oracle_equivalence}, {"tCNOT truth table", tcnot_truth_table},
      {"fit recovery", fit_recovery},           {"SSRO calibration", ssro_calibration},
      {"determinism", determinism},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && only != static_cast<int>(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << fmt::format("[{}] {} {}: {}", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail)
              << std::endl;
  }
  return failed ? 1 : 0;
}
