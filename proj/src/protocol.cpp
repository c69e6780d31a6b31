#include "tcsim/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

namespace tcsim::protocol {

using qmath::DensityMatrix;
using qmath::Matrix;
using qmath::Vector;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ProtocolError(msg);
}

int sign(Detector d) { return d == Detector::D1 ? 1 : -1; }

// a on qubit 0, b on qubit 1
Matrix pair(const Matrix& a, const Matrix& b) {
  Matrix out(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out(r, c) = a(r & 1, c & 1) * b(r >> 1, c >> 1);
  return out;
}

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// Single-module operators for one excitation round.
struct RoundOps {
  std::vector<Matrix> none;  // no photon reaches the beamsplitter
  Matrix detected;           // photon reaches the beamsplitter
  Matrix tagged;             // same, after a re-excitation
};

RoundOps round_ops(const emitter::EmitterParams& e, double p_exc, double eta) {
  const double z = e.zpl_fraction();
  const double pd = e.p_double;
  RoundOps o;
  o.none.push_back(diag2(std::sqrt(1 - p_exc), 1));
  o.none.push_back(diag2(std::sqrt(p_exc * z * (1 - eta)), 0));
  Matrix flip = Matrix::Zero(2, 2);
  flip(1, 0) = std::sqrt(p_exc * e.br_radiative);
  o.none.push_back(flip);
  o.none.push_back(diag2(std::sqrt(p_exc * e.br_nonradiative), 0));
  o.detected = diag2(std::sqrt(p_exc * z * eta * (1 - pd)), 0);
  o.tagged = diag2(std::sqrt(p_exc * z * eta * pd), 0);
  return o;
}

// Kraus operators for "only detector k clicks" in one round.
std::vector<Matrix> round_instrument(const RoundOps& a, const RoundOps& b, double s, double q,
                                     Detector k) {
  std::vector<Matrix> ops;
  const double sk = sign(k);
  const double keep = std::sqrt(1 - q);
  const double h = std::sqrt(0.5);
  const Matrix& na = a.none.front();
  const Matrix& nb = b.none.front();

  ops.push_back(h * keep * (pair(a.detected, nb) + sk * s * pair(na, b.detected)));
  ops.push_back(h * keep * sk * std::sqrt(1 - s * s) * pair(na, b.detected));

  for (std::size_t i = 1; i < b.none.size(); ++i) ops.push_back(h * keep * pair(a.detected, b.none[i]));
  for (std::size_t i = 1; i < a.none.size(); ++i) ops.push_back(h * keep * pair(a.none[i], b.detected));
  for (const auto& z : b.none) ops.push_back(h * keep * pair(a.tagged, z));
  for (const auto& z : a.none) ops.push_back(h * keep * pair(z, b.tagged));

  const double both = std::sqrt((1 + s * s) / 4 * (1 - q));
  for (const Matrix* oa : {&a.detected, &a.tagged})
    for (const Matrix* ob : {&b.detected, &b.tagged}) ops.push_back(both * pair(*oa, *ob));

  const double dark = std::sqrt(q * (1 - q));
  if (dark > 0)
    for (const auto& za : a.none)
      for (const auto& zb : b.none) ops.push_back(dark * pair(za, zb));
  return ops;
}

Matrix apply_ops(const Matrix& rho, const std::vector<Matrix>& ops) {
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (const auto& k : ops) out += k * rho * k.adjoint();
  return out;
}

// Local rotation on both spins followed by the gate error.
Matrix rotate_both(const Matrix& rho, const Matrix& u, const BKModelParams& p) {
  Matrix g = u;
  std::vector<Matrix> err{Matrix::Identity(2, 2)};
  if (p.gate_error == GateErrorModel::coherent) {
    const double c2 = std::clamp((3 * p.gate_fidelity - 1) / 2, 0.0, 1.0);
    const double eps = 2 * std::acos(std::sqrt(c2));
    g = qmath::gate_matrix({qmath::GateKind::Ry, {0}, eps}) * u;
  } else {
    err = qmath::KrausChannel::depolarizing(2 * (1 - p.gate_fidelity)).operators();
  }
  const Matrix both = pair(g, g);
  Matrix out = both * rho * both.adjoint();
  std::vector<Matrix> ea, eb;
  for (const auto& e : err) {
    ea.push_back(pair(e, Matrix::Identity(2, 2)));
    eb.push_back(pair(Matrix::Identity(2, 2), e));
  }
  return apply_ops(apply_ops(out, ea), eb);
}

}  // namespace

qmath::Vector herald_target(const HeraldPattern& h) {
  return h.early == h.late ? qmath::states::psi_plus() : qmath::states::psi_minus();
}

std::array<HeraldPattern, 4> all_patterns() {
  return {HeraldPattern{Detector::D1, Detector::D1}, HeraldPattern{Detector::D1, Detector::D2},
          HeraldPattern{Detector::D2, Detector::D1}, HeraldPattern{Detector::D2, Detector::D2}};
}

void BKModelParams::validate() const {
  for (const auto& e : emitters) e.validate();
  require(gate_fidelity >= 0.5 && gate_fidelity <= 1, "gate_fidelity must be in [0.5, 1]");
  for (double f : init_fidelity) require(f >= 0 && f <= 1, "init_fidelity must be in [0, 1]");
  require(dark_rate_hz >= 0, "dark_rate_hz must be >= 0");
  require(gate_window_ns > 0, "gate_window_ns must be positive");
  for (double e : detection_efficiency)
    require(e >= 0 && e <= 1, "detection_efficiency must be in [0, 1]");
  for (double e : excitation_probability)
    require(e >= 0 && e <= 1, "excitation_probability must be in [0, 1]");
  if (mean_visibility)
    require(*mean_visibility >= 0 && *mean_visibility <= 1, "mean_visibility must be in [0, 1]");
  require(tau_lim_ns > 0, "tau_lim_ns must be positive");
  require(timebin_ns > 0 && timebin_ns <= tau_lim_ns,
          fmt::format("time-bin window {} ns is outside the visibility profile (0, {}] ns",
                      timebin_ns, tau_lim_ns));
  require(repetition_rate_hz > 0, "repetition_rate_hz must be positive");
  require(pi_pulse_ns >= 0, "pi_pulse_ns must be >= 0");
}

BKModelParams measured_bk_params(bool stack_detector_efficiency) {
  BKModelParams p;
  p.emitters = {emitter::tc1_params(), emitter::tc2_params()};
  const auto path = harness::measured_path();
  harness::DetectorModel det;
  det.stack_efficiency = stack_detector_efficiency;
  const double eta = path.transmission() * det.effective_efficiency();
  p.detection_efficiency = {eta, eta};
  p.excitation_probability = {path.excitation_probability(), path.excitation_probability()};
  p.dark_rate_hz = det.dark_rate_hz;
  p.gate_window_ns = harness::gate_length_ns;
  return p;
}

BKModelParams ideal_bk_params() {
  BKModelParams p;
  emitter::EmitterParams e;
  e.pure_dephasing_mhz = 0;
  e.diffusion_sigma_mhz = 0;
  e.excitation_bandwidth_mhz = 0;
  p.emitters = {e, e};
  p.gate_fidelity = 1;
  p.init_fidelity = {1, 1};
  p.dark_rate_hz = 0;
  p.mean_visibility = 1.0;
  return p;
}

namespace {

emitter::TimeGrid grid_for(double tau_lim) {
  const double steps = std::max(1.0, std::round(tau_lim / 0.1));
  return {tau_lim / steps, tau_lim};
}

emitter::HomTraces traces_for(const BKModelParams& p) {
  return emitter::two_photon_correlations(p.emitters[0], p.emitters[1], grid_for(p.tau_lim_ns),
                                          p.tau_lim_ns);
}

}  // namespace

double mean_visibility(const BKModelParams& p, double timebin_ns) {
  const auto t = traces_for(p);
  return std::clamp(emitter::visibility(t.indistinguishable, t.distinguishable, timebin_ns), 0.0, 1.0);
}

std::vector<BellPairResult> bk_conditional_state(const BKModelParams& p) {
  p.validate();
  const double v = p.mean_visibility ? *p.mean_visibility : mean_visibility(p, p.timebin_ns);
  const double s = std::sqrt(v);
  const double q = 1 - std::exp(-p.dark_rate_hz * p.gate_window_ns * 1e-9);

  const auto a = round_ops(p.emitters[0], p.excitation_probability[0], p.detection_efficiency[0]);
  const auto b = round_ops(p.emitters[1], p.excitation_probability[1], p.detection_efficiency[1]);

  Matrix rho = pair(diag2(p.init_fidelity[0], 1 - p.init_fidelity[0]),
                    diag2(p.init_fidelity[1], 1 - p.init_fidelity[1]));
  rho = rotate_both(rho, qmath::gate_matrix({qmath::GateKind::Ry, {0}, std::numbers::pi / 2}), p);

  std::vector<BellPairResult> out;
  for (Detector k1 : {Detector::D1, Detector::D2}) {
    Matrix r1 = apply_ops(rho, round_instrument(a, b, s, q, k1));
    r1 = rotate_both(r1, qmath::gate_matrix({qmath::GateKind::X, {0}}), p);
    for (Detector k2 : {Detector::D1, Detector::D2}) {
      Matrix r2 = apply_ops(r1, round_instrument(a, b, s, q, k2));
      const double prob = r2.trace().real();
      const HeraldPattern h{k1, k2};
      if (!(prob > 0)) throw ProtocolError("herald pattern has zero probability");
      Matrix m = r2 / prob;
      m = 0.5 * (m + m.adjoint()).eval();
      auto state = DensityMatrix::from_matrix(m);
      const double f = qmath::fidelity_to_pure(state, herald_target(h));
      out.push_back({std::move(state), prob, h, f});
    }
  }
  return out;
}

double total_success(const std::vector<BellPairResult>& r) {
  double s = 0;
  for (const auto& x : r) s += x.success_probability;
  return s;
}

double mean_fidelity(const std::vector<BellPairResult>& r) {
  const double s = total_success(r);
  if (!(s > 0)) throw ProtocolError("no herald probability");
  double f = 0;
  for (const auto& x : r) f += x.success_probability * x.fidelity;
  return f / s;
}

FidelityEstimate bp_fidelity_estimator(const BasisCounts& c) {
  const double nz = static_cast<double>(c.n00 + c.n01);
  const double nx = static_cast<double>(c.npp + c.npm);
  require(nz > 0, "no counts in the Z basis");
  require(nx > 0, "no counts in the X basis");
  FidelityEstimate e{};
  e.population = c.n01 / nz;
  const double agree = c.npp / nx;
  e.coherence = 2 * agree - 1;
  e.fidelity = 0.5 * (e.population + e.coherence);
  e.population_err = std::sqrt(e.population * (1 - e.population) / nz);
  e.coherence_err = 2 * std::sqrt(agree * (1 - agree) / nx);
  e.fidelity_err = 0.5 * std::hypot(e.population_err, e.coherence_err);
  return e;
}

BasisCounts sample_basis_counts(const DensityMatrix& rho, const HeraldPattern& h,
                                std::uint64_t shots, std::uint64_t seed) {
  require(rho.qubits() == 2, "basis counts need a two-qubit state");
  const double odd = std::clamp(rho(1, 1).real() + rho(2, 2).real(), 0.0, 1.0);
  Matrix xx = pair(qmath::gate_matrix({qmath::GateKind::X, {0}}),
                   qmath::gate_matrix({qmath::GateKind::X, {0}}));
  const double exx = (rho.matrix() * xx).trace().real();
  const double agree = std::clamp(0.5 * (1 + sign(h.early) * sign(h.late) * exx), 0.0, 1.0);

  std::mt19937_64 rng(seed);
  BasisCounts c;
  c.n01 = std::binomial_distribution<std::uint64_t>(shots, odd)(rng);
  c.n00 = shots - c.n01;
  c.npp = std::binomial_distribution<std::uint64_t>(shots, agree)(rng);
  c.npm = shots - c.npp;
  return c;
}

double hom_bound(double v) {
  require(v >= 0 && v <= 1, "visibility must be in [0, 1]");
  return (1 + v) / 2;
}

// ---------------------------------------------------------------------------
// Teleported CNOT

BellPairResult make_bell_pair(const DensityMatrix& state, const HeraldPattern& h) {
  require(state.qubits() == 2, "Bell pair must be a two-qubit state");
  return {state, 1.0, h, qmath::fidelity_to_pure(state, herald_target(h))};
}

TcnotResult tcnot_execute(const DensityMatrix& control_in, const DensityMatrix& target_in,
                          const BellPairResult& bp, TcnotMode mode) {
  require(control_in.qubits() == 1 && target_in.qubits() == 1, "tCNOT inputs must be single qubits");
  require(bp.state.qubits() == 2, "Bell pair must be a two-qubit state");
  using qmath::GateKind;

  auto rho = control_in.tensor(bp.state).tensor(target_in);
  rho = qmath::apply_gate(rho, {GateKind::X, {2}});
  if (bp.herald.early != bp.herald.late) rho = qmath::apply_gate(rho, {GateKind::Z, {2}});
  rho = qmath::apply_gate(rho, {GateKind::CNOT, {0, 1}});
  rho = qmath::apply_gate(rho, {GateKind::CNOT, {2, 3}});

  Matrix acc = Matrix::Zero(16, 16);
  double accept = 0;
  for (const auto& z : qmath::measure(rho, 1, qmath::Basis::Z)) {
    for (const auto& x : qmath::measure(z.post_state, 2, qmath::Basis::X)) {
      const double pr = z.probability * x.probability;
      if (mode == TcnotMode::postselect_00) {
        if (z.outcome != 0 || x.outcome != 0) continue;
        acc += pr * x.post_state.matrix();
        accept += pr;
        continue;
      }
      auto post = x.post_state;
      if (z.outcome == 1) post = qmath::apply_gate(post, {GateKind::X, {3}});
      if (x.outcome == 1) post = qmath::apply_gate(post, {GateKind::Z, {0}});
      acc += pr * post.matrix();
      accept += pr;
    }
  }
  if (!(accept > 0)) throw ProtocolError("tCNOT postselection has zero probability");
  const std::array<int, 2> keep{0, 3};
  Matrix out = qmath::partial_trace(Matrix(acc / accept), keep);
  out = 0.5 * (out + out.adjoint()).eval();
  return {DensityMatrix::from_matrix(out), accept};
}

TruthTable tcnot_truth_table(const BellPairResult& bp, TcnotMode mode) {
  TruthTable t{};
  for (int in = 0; in < 4; ++in) {
    const auto r = tcnot_execute(DensityMatrix::basis_state(1, in & 1),
                                 DensityMatrix::basis_state(1, in >> 1), bp, mode);
    for (int o = 0; o < 4; ++o) t[in][o] = r.output(o, o).real();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Experiment sweep

namespace {

double pair_detection(const BKModelParams& p) {
  double d = 1;
  for (int m = 0; m < 2; ++m)
    d *= p.excitation_probability[m] * p.emitters[m].zpl_fraction() * p.detection_efficiency[m];
  return d;
}

}  // namespace

std::vector<BkRow> simulate_bk_experiment(const BKModelParams& p, const std::vector<double>& sweep) {
  p.validate();
  require(!sweep.empty(), "time-bin sweep is empty");
  const auto traces = traces_for(p);
  const double pdet = pair_detection(p);
  std::vector<BkRow> rows;
  for (double t : sweep) {
    BKModelParams q = p;
    q.timebin_ns = t;
    q.validate();
    const double v = p.mean_visibility
                         ? *p.mean_visibility
                         : std::clamp(emitter::visibility(traces.indistinguishable,
                                                          traces.distinguishable, t),
                                      0.0, 1.0);
    q.mean_visibility = v;
    const auto states = bk_conditional_state(q);
    const double eta_tb = emitter::timebin_capture(traces.distinguishable, t);
    rows.push_back({t, v, mean_fidelity(states), 0.0, pdet * eta_tb * 0.5 * p.repetition_rate_hz, 0});
  }
  return rows;
}

std::vector<BkRow> simulate_bk_experiment(const BKModelParams& p, const std::vector<double>& sweep,
                                          const BkMonteCarlo& mc) {
  auto rows = simulate_bk_experiment(p, sweep);
  harness::BkSequenceOptions so;
  so.repetition_rate_hz = p.repetition_rate_hz;
  so.pi_pulse_ns = p.pi_pulse_ns;
  so.gate_ns = p.gate_window_ns;
  so.early_late_separation_ns = p.early_late_separation_ns;
  const auto seq = harness::build_bk_sequence(so);
  const auto stream = harness::run_sequence(seq, mc.apparatus, {mc.shots, mc.seed, mc.workers});
  const auto heralds = harness::find_heralds(stream, seq);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    BKModelParams q = p;
    q.mean_visibility = row.visibility;
    const auto states = bk_conditional_state(q);
    std::mt19937_64 rng(harness::shot_seed(mc.seed ^ 0x9e3779b97f4a7c15ULL, i));
    BasisCounts counts;
    std::uint64_t n = 0;
    for (const auto& h : heralds) {
      if (std::abs(h.late_ns - h.early_ns - so.early_late_separation_ns) > row.timebin_ns) continue;
      const HeraldPattern pat{h.early, h.late};
      const auto it = std::find_if(states.begin(), states.end(),
                                   [&](const BellPairResult& s) { return s.herald == pat; });
      const auto c = sample_basis_counts(it->state, pat, 1, rng());
      if (n % 2 == 0) {
        counts.n00 += c.n00;
        counts.n01 += c.n01;
      } else {
        counts.npp += c.npp;
        counts.npm += c.npm;
      }
      ++n;
    }
    row.heralds = n;
    row.rate_hz = static_cast<double>(n) / static_cast<double>(mc.shots) * p.repetition_rate_hz;
    if (counts.n00 + counts.n01 > 0 && counts.npp + counts.npm > 0) {
      const auto e = bp_fidelity_estimator(counts);
      row.fidelity = e.fidelity;
      row.fidelity_err = e.fidelity_err;
    } else {
      row.fidelity = std::nan("");
      row.fidelity_err = std::nan("");
    }
  }
  return rows;
}

}  // namespace tcsim::protocol
