#pragma once

// Config-driven runs: load and render run configurations, execute one
// experiment and collect its JSON summary and CSV tables in memory.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcsim/analysis.hpp"
#include "tcsim/config.hpp"
#include "tcsim/emitter.hpp"
#include "tcsim/forecast.hpp"
#include "tcsim/harness.hpp"
#include "tcsim/protocol.hpp"

namespace tcsim::cli {

inline constexpr int schema_version = 1;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Experiment { hom, bk, tcnot, spin, ssro, forecast };

const char* to_string(Experiment e);
/// Throws config::ConfigError for an unknown name.
Experiment parse_experiment(const std::string& name);
std::vector<std::string> experiment_names();

struct EmitterConfig {
  emitter::EmitterParams params;
  double g2_zero = 0.0;  // sets params.pair_capture
  double init_fidelity = 0.983;
};

struct HardwareConfig {
  double detector_loss_db = -1.97;
  double cavity_loss_db = -3.0;
  double path_loss_db = -7.0;
  double quantum_efficiency_db = -0.46;
  double excitation_db = -14.9;
  harness::DetectorModel detector;
  double gate_ns = harness::gate_length_ns;
  double gate_fidelity = 0.98575;
  protocol::GateErrorModel gate_error = protocol::GateErrorModel::depolarizing;

  harness::OpticalPath path() const;
};

struct ProtocolConfig {
  std::vector<double> timebins_ns{5, 10, 20, 30, 40, 50, 60, 80, 100, 130};
  double early_late_separation_ns = harness::early_late_separation_ns;
  double repetition_rate_hz = 11.8e3;
  double pi_pulse_ns = 50.0;
  double tau_lim_ns = 130.0;
  bool monte_carlo = false;
};

struct HomConfig {
  std::vector<double> windows_ns{5, 10, 20, 40, 60, 80, 100, 130};
  double grid_step_ns = 0.1;
  double bin_width_ns = 5.0;
  bool monte_carlo = true;
  // Monte Carlo with unit transmission, detection and excitation and no
  // dark counts; the measured losses leave almost no coincidences.
  bool lossless = true;
};

struct TcnotConfig {
  double timebin_ns = 40.0;
  protocol::TcnotMode mode = protocol::TcnotMode::postselect_00;
};

struct SpinConfig {
  int points = 60;
  double noise = 0.01;  // Gaussian sigma on unit-amplitude signals
  double exp_decay_tau_ns = 69.9;
  double ramsey_t2_us = 22.8;
  double ramsey_n = 2.0;
  double ramsey_detuning_mhz = 0.2;
  double hahn_t2_us = 270.0;
  double hahn_n = 2.0;
  double nuclear_t2star_ms = 8.6;
  double nuclear_t2_ms = 220.0;
  double nuclear_detuning_khz = 0.5;
  double rabi_frequency_mhz = 1.0;
  double rabi_decay_us = 3.0;
  double pump_ratio = 0.85;
  double gate_time_us = 4.1;
};

struct SsroConfig {
  analysis::SsroParams tc1 = analysis::ssro_tc1();
  analysis::SsroParams tc2 = analysis::ssro_tc2();
};

struct ForecastConfig {
  forecast::ProjectionParams projection;
  forecast::StepBudget steps = forecast::minimum_step_budget();
  forecast::EfficiencyBudget efficiencies = forecast::projected_efficiency_budget();
  std::vector<double> fractions{0.001, 0.005, 0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15,
                                0.2,   0.25,  0.3,  0.4,   0.5,  0.6,   0.7, 0.8,   0.9, 1.0};
};

struct RunConfig {
  Experiment experiment = Experiment::bk;
  std::uint64_t shots = 0;
  std::uint64_t seed = 1;
  std::string output;
  std::array<EmitterConfig, 2> emitters{EmitterConfig{emitter::tc1_params(), 0.0076},
                                        EmitterConfig{emitter::tc2_params(), 0.0117}};
  HardwareConfig hardware;
  ProtocolConfig protocol;
  HomConfig hom;
  TcnotConfig tcnot;
  SpinConfig spin;
  SsroConfig ssro;
  ForecastConfig forecast;

  /// Two-module model parameters at the first configured time bin.
  protocol::BKModelParams bk_params() const;
  /// Apparatus for the shot-level simulation.
  harness::Apparatus apparatus() const;
};

std::uint64_t default_shots(Experiment e);
RunConfig default_config(Experiment e);

/// Parses and validates. Unknown sections and keys are errors. `experiment`
/// overrides the root `experiment` key.
RunConfig load_config(const config::Document& doc, std::optional<Experiment> experiment = {});
RunConfig load_config(std::string_view text, std::optional<Experiment> experiment = {});

/// Commented config with the root keys and every section the experiment
/// reads; loading it gives back those values exactly.
std::string render_config(const RunConfig& cfg);

struct OutputFile {
  std::string suffix;  // appended to the output prefix
  std::string content;
};

struct RunOutput {
  std::string summary;  // JSON
  std::vector<OutputFile> files;
  std::vector<std::pair<std::string, double>> metrics;

  std::optional<double> metric(const std::string& name) const;
};

/// Runs the configured experiment. `workers` only changes the wall time.
RunOutput run(const RunConfig& cfg, int workers = 1);

/// Writes the CSVs and `<prefix>summary.json`; returns the paths written.
std::vector<std::string> write_outputs(const RunOutput& out, const std::string& prefix);

// --- synthetic coherence data ---------------------------------------------

struct SpinDataset {
  std::string name;  // exp_decay, ramsey, hahn, nuclear_ramsey, nuclear_hahn, rabi, pump
  analysis::FitModel model;
  std::string time_unit;
  std::vector<double> truth;
  std::vector<double> t;
  double sigma;
};

std::vector<SpinDataset> spin_datasets(const SpinConfig& c);
/// Noisy samples of `d` (Gaussian, sigma d.sigma).
std::vector<double> spin_sample(const SpinDataset& d, std::uint64_t seed);

}  // namespace tcsim::cli
