#pragma once

// Two-round single-photon heralded entanglement between two spin modules,
// the Bell-pair fidelity estimator and the teleported CNOT.
//
// Spin convention: |0> is the optically bright state, |1> the dark one.
// Electron A is qubit 0, electron B qubit 1.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tcsim/emitter.hpp"
#include "tcsim/harness.hpp"
#include "tcsim/qmath.hpp"

namespace tcsim::protocol {

class ProtocolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using harness::Detector;

struct HeraldPattern {
  Detector early = Detector::D1;
  Detector late = Detector::D1;
  bool operator==(const HeraldPattern&) const = default;
};

/// Same detector in both rounds: (|01>+|10>)/sqrt2, otherwise (|01>-|10>)/sqrt2.
qmath::Vector herald_target(const HeraldPattern& h);
std::array<HeraldPattern, 4> all_patterns();

enum class GateErrorModel { depolarizing, coherent };

struct BKModelParams {
  std::array<emitter::EmitterParams, 2> emitters;
  double gate_fidelity = 0.98575;  // average fidelity of each spin rotation
  std::array<double, 2> init_fidelity{0.983, 0.983};
  double dark_rate_hz = 10.0;
  double gate_window_ns = 130.0;
  // optical transmission times detector efficiency, per module
  std::array<double, 2> detection_efficiency{1.0, 1.0};
  std::array<double, 2> excitation_probability{1.0, 1.0};
  // v(T); computed from the emitters when absent
  std::optional<double> mean_visibility;
  double timebin_ns = 40.0;
  double tau_lim_ns = 130.0;
  double pi_pulse_ns = 50.0;
  double repetition_rate_hz = 11.8e3;
  double early_late_separation_ns = harness::early_late_separation_ns;
  GateErrorModel gate_error = GateErrorModel::depolarizing;

  void validate() const;
};

/// Measured two-module parameter set (loss chain, gate and init fidelity,
/// emitters TC1/TC2).
BKModelParams measured_bk_params(bool stack_detector_efficiency = true);

/// Everything ideal: unit efficiencies, no leaks, perfect gates.
BKModelParams ideal_bk_params();

/// Window-filtered two-photon visibility used for the coherence of the
/// heralded state (multi-photon terms are handled separately).
double mean_visibility(const BKModelParams& p, double timebin_ns);

struct BellPairResult {
  qmath::DensityMatrix state;
  double success_probability;
  HeraldPattern herald;
  double fidelity;
};

/// Conditional spin-spin state for each herald pattern.
std::vector<BellPairResult> bk_conditional_state(const BKModelParams& p);

/// Probability that a round ends with clicks in exactly one detector, summed
/// over patterns (total herald probability).
double total_success(const std::vector<BellPairResult>& r);
/// Success-weighted mean fidelity over patterns.
double mean_fidelity(const std::vector<BellPairResult>& r);

// --- fidelity estimator ----------------------------------------------------

/// N01: anti-correlated Z outcomes, N00: correlated ones. Npp: X-basis
/// outcomes agreeing with the target's X correlation, Npm: disagreeing.
struct BasisCounts {
  std::uint64_t n00 = 0, n01 = 0, npp = 0, npm = 0;
};

struct FidelityEstimate {
  double population, coherence, fidelity;
  double population_err, coherence_err, fidelity_err;
};

FidelityEstimate bp_fidelity_estimator(const BasisCounts& c);

/// Draws `shots` Z-basis and `shots` X-basis measurements of the pair.
BasisCounts sample_basis_counts(const qmath::DensityMatrix& rho, const HeraldPattern& h,
                                std::uint64_t shots, std::uint64_t seed);

double hom_bound(double v);

// --- teleported CNOT -------------------------------------------------------

enum class TcnotMode { feed_forward, postselect_00 };

struct TcnotResult {
  qmath::DensityMatrix output;  // qubit 0 = control nucleus, qubit 1 = target nucleus
  double accept_probability;
};

/// Register: 0 = control nucleus (module A), 1 = electron A, 2 = electron B,
/// 3 = target nucleus (module B).
TcnotResult tcnot_execute(const qmath::DensityMatrix& control_in,
                          const qmath::DensityMatrix& target_in, const BellPairResult& bp,
                          TcnotMode mode);

/// P(output basis state | input basis state), rows = input index
/// (control + 2 target).
using TruthTable = std::array<std::array<double, 4>, 4>;
TruthTable tcnot_truth_table(const BellPairResult& bp, TcnotMode mode);

/// Wrap an arbitrary two-electron state as a Bell-pair result.
BellPairResult make_bell_pair(const qmath::DensityMatrix& state, const HeraldPattern& h);

// --- experiment sweep ------------------------------------------------------

struct BkRow {
  double timebin_ns;
  double visibility;
  double fidelity;
  double fidelity_err;  // 0 for analytic rows
  double rate_hz;
  std::uint64_t heralds;  // Monte Carlo rows only
};

/// rate = p_det,A * p_det,B * eta_tb(T) * 0.5 * repetition rate.
std::vector<BkRow> simulate_bk_experiment(const BKModelParams& p, const std::vector<double>& sweep);

struct BkMonteCarlo {
  harness::Apparatus apparatus;
  std::uint64_t shots = 100000;
  std::uint64_t seed = 1;
  int workers = 1;
};

/// Rates from simulated herald streams (time filter on the early/late
/// click separation), fidelities from basis counts sampled per herald.
std::vector<BkRow> simulate_bk_experiment(const BKModelParams& p, const std::vector<double>& sweep,
                                          const BkMonteCarlo& mc);

}  // namespace tcsim::protocol
