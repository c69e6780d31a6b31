#pragma once

// Shot-by-shot simulation of the two-module apparatus: pulse sequences,
// optical losses, a 50:50 beamsplitter, two threshold detectors with dark
// counts, gating and dead time. Produces time-tag streams.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcsim/emitter.hpp"

namespace tcsim::harness {

class HarnessError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PulseKind { optical_pump, optical_excite, mw_pulse, rf_pulse, detect_gate, delay, readout };
enum class Target { module1, module2, both, detectors };

const char* to_string(PulseKind k);

struct PulseElement {
  PulseKind kind;
  double start_ns;
  double duration_ns;
  Target target;
  double angle_rad = 0.0;    // mw/rf rotation angle
  double selectivity = 1.0;  // spectral selectivity of a mw pulse (1 = selective)
  std::string label;

  double end_ns() const { return start_ns + duration_ns; }
  bool acts_on(int module) const;
};

struct Window {
  double open_ns;
  double close_ns;
  bool contains(double t) const { return t >= open_ns && t < close_ns; }
  double width() const { return close_ns - open_ns; }
};

struct PulseSequence {
  std::vector<PulseElement> elements;
  double period_ns = 0.0;

  /// Non-negative times, elements inside the period, no overlap per channel.
  void validate() const;
  std::vector<Window> gates() const;
  bool has_gates() const;
  /// Elements ordered by start time (stable for ties).
  std::vector<PulseElement> ordered() const;
};

struct LossElement {
  std::string label;
  double db;  // stored as <= 0, e.g. -3 for a 50 % loss
};

/// Transmission 10^(dB/10) of a loss (dB <= 0).
double db_to_linear(double db);

struct OpticalPath {
  std::vector<LossElement> losses;
  // per-pulse excitation probability in dB, a factor on the emission
  // probability rather than an optical transmission
  double excitation_db = 0.0;

  void validate() const;
  double transmission() const;
  double excitation_probability() const { return db_to_linear(excitation_db); }
};

/// Loss chain of the measured setup: detector -1.97 dB, cavity -3 dB,
/// path -7 dB, quantum efficiency -0.46 dB; excitation -14.9 dB.
OpticalPath measured_path();

struct DetectorModel {
  double efficiency = 0.9;
  double dark_rate_hz = 10.0;
  double dead_time_ns = 30.0;
  // Multiply `efficiency` on top of the path losses. The measured loss
  // table lists both a detector loss and a detector efficiency.
  bool stack_efficiency = true;

  void validate() const;
  double effective_efficiency() const { return stack_efficiency ? efficiency : 1.0; }
};

struct Module {
  emitter::EmitterParams emitter;
  OpticalPath path;
  double init_fidelity = 1.0;

  void validate() const;
};

struct Apparatus {
  std::array<Module, 2> modules;
  std::optional<DetectorModel> detectors;

  void validate() const;
  /// Probability that one excitation of a bright spin in `module` yields a
  /// detected photon somewhere in an infinitely long gate.
  double detection_probability(int module) const;
};

enum class Detector : std::uint8_t { D1 = 1, D2 = 2 };

struct ClickRecord {
  std::uint32_t shot;
  Detector detector;
  std::int64_t timestamp_ps;  // absolute, from experiment start

  double timestamp_ns() const { return static_cast<double>(timestamp_ps) * 1e-3; }
  bool operator==(const ClickRecord&) const = default;
};

struct TagStream {
  std::vector<ClickRecord> clicks;
  double shot_period_ns = 0.0;
  std::uint64_t shots = 0;

  std::int64_t shot_start_ps(std::uint32_t shot) const;
  /// Time since the start of the click's own shot.
  double in_shot_ns(const ClickRecord& c) const;
};

struct RunOptions {
  std::uint64_t shots = 1;
  std::uint64_t seed = 0;
  int workers = 1;
};

TagStream run_sequence(const PulseSequence& seq, const Apparatus& app, const RunOptions& opt);

/// Per-shot random stream seed derived from the root seed.
std::uint64_t shot_seed(std::uint64_t seed, std::uint64_t shot);

// --- canned sequences ------------------------------------------------------

inline constexpr double hom_excite_ns = 1100.0;
inline constexpr double hom_delay_ns = 500.0;
inline constexpr double gate_length_ns = 130.0;
inline constexpr double early_late_separation_ns = 1910.0;

PulseSequence build_hom_sequence(bool indistinguishable);

struct BkSequenceOptions {
  double repetition_rate_hz = 11.8e3;
  double pi_pulse_ns = 50.0;
  double early_late_separation_ns = harness::early_late_separation_ns;
  double gate_ns = gate_length_ns;
  std::optional<double> basis_angle_rad;  // optional basis-selection mw pulse
};

PulseSequence build_bk_sequence(const BkSequenceOptions& opt = {});

struct HeraldEvent {
  std::uint32_t shot;
  Detector early;
  Detector late;
  double early_ns;  // in-shot click times of the first click per gate
  double late_ns;
};

/// Shots with at least one click in the first (early) gate and one in the
/// second (late) gate.
std::vector<HeraldEvent> find_heralds(const TagStream& stream, const PulseSequence& seq);

// --- export ----------------------------------------------------------------

void write_csv(const TagStream& s, std::ostream& out);
TagStream read_csv(std::istream& in, double shot_period_ns, std::uint64_t shots = 0);
void write_binary(const TagStream& s, std::ostream& out);
TagStream read_binary(std::istream& in);

}  // namespace tcsim::harness
