#include "tcsim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

namespace tcsim::cli {

using config::ConfigError;
using config::format_number;
using config::Range;
using config::SectionReader;
using json = nlohmann::ordered_json;

const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::hom: return "hom";
    case Experiment::bk: return "bk";
    case Experiment::tcnot: return "tcnot";
    case Experiment::spin: return "spin";
    case Experiment::ssro: return "ssro";
    case Experiment::forecast: return "forecast";
  }
  return "?";
}

std::vector<std::string> experiment_names() { return {"hom", "bk", "tcnot", "spin", "ssro", "forecast"}; }

Experiment parse_experiment(const std::string& name) {
  for (auto e : {Experiment::hom, Experiment::bk, Experiment::tcnot, Experiment::spin, Experiment::ssro,
                 Experiment::forecast})
    if (name == to_string(e)) return e;
  throw ConfigError(fmt::format("unknown experiment '{}' (expected one of hom, bk, tcnot, spin, ssro, forecast)", name),
                    0, "experiment");
}

harness::OpticalPath HardwareConfig::path() const {
  harness::OpticalPath p;
  p.losses = {{"detector", detector_loss_db},
              {"cavity", cavity_loss_db},
              {"path", path_loss_db},
              {"quantum_efficiency", quantum_efficiency_db}};
  p.excitation_db = excitation_db;
  return p;
}

protocol::BKModelParams RunConfig::bk_params() const {
  protocol::BKModelParams p;
  p.emitters = {emitters[0].params, emitters[1].params};
  p.gate_fidelity = hardware.gate_fidelity;
  p.init_fidelity = {emitters[0].init_fidelity, emitters[1].init_fidelity};
  p.dark_rate_hz = hardware.detector.dark_rate_hz;
  p.gate_window_ns = hardware.gate_ns;
  const auto path = hardware.path();
  const double eta = path.transmission() * hardware.detector.effective_efficiency();
  p.detection_efficiency = {eta, eta};
  p.excitation_probability = {path.excitation_probability(), path.excitation_probability()};
  p.timebin_ns = protocol.timebins_ns.front();
  p.tau_lim_ns = protocol.tau_lim_ns;
  p.pi_pulse_ns = protocol.pi_pulse_ns;
  p.repetition_rate_hz = protocol.repetition_rate_hz;
  p.early_late_separation_ns = protocol.early_late_separation_ns;
  p.gate_error = hardware.gate_error;
  return p;
}

harness::Apparatus RunConfig::apparatus() const {
  harness::Apparatus a;
  for (int i = 0; i < 2; ++i) a.modules[i] = {emitters[i].params, hardware.path(), emitters[i].init_fidelity};
  a.detectors = hardware.detector;
  return a;
}

std::uint64_t default_shots(Experiment e) {
  switch (e) {
    case Experiment::hom: return 1000000;
    case Experiment::bk: return 200000;
    case Experiment::ssro: return 20000;
    default: return 1;
  }
}

RunConfig default_config(Experiment e) {
  RunConfig c;
  c.experiment = e;
  c.shots = default_shots(e);
  c.output = fmt::format("out/{}/", to_string(e));
  return c;
}

std::optional<double> RunOutput::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  return std::nullopt;
}

// --- config schema ---------------------------------------------------------

namespace {

template <class E>
struct Choice {
  E value;
  const char* name;
};

const std::vector<Choice<protocol::GateErrorModel>> gate_errors{
    {protocol::GateErrorModel::depolarizing, "depolarizing"}, {protocol::GateErrorModel::coherent, "coherent"}};
const std::vector<Choice<protocol::TcnotMode>> tcnot_modes{{protocol::TcnotMode::feed_forward, "feed_forward"},
                                                           {protocol::TcnotMode::postselect_00, "postselect_00"}};

const Range pos = Range::positive();
const Range nonneg = Range::non_negative();
const Range unit = Range::unit();
const Range nonpos = Range::non_positive();
const Range half_open_unit{0, 1, false, true};
const Range open_closed_unit{0, 1, true, false};

class Loader {
 public:
  Loader(const config::Document& d, const std::string& s) : r_(d, s) {}
  void num(const char* k, double& v, Range r, const char*) { v = r_.number(k, v, r); }
  void opt(const char* k, std::optional<double>& v, Range r, const char*) { v = r_.optional_number(k, v, r); }
  void integer(const char* k, int& v, int lo, int hi, const char*) {
    v = static_cast<int>(r_.integer(k, v, lo, hi));
  }
  void flag(const char* k, bool& v, const char*) { v = r_.flag(k, v); }
  void list(const char* k, std::vector<double>& v, Range r, const char*) { v = r_.numbers(k, v, r); }
  template <class E>
  void choice(const char* k, E& v, const std::vector<Choice<E>>& opts, const char*) {
    std::vector<std::string> names;
    std::string cur;
    for (const auto& o : opts) {
      names.push_back(o.name);
      if (o.value == v) cur = o.name;
    }
    const auto w = r_.word(k, cur, names);
    for (const auto& o : opts)
      if (w == o.name) v = o.value;
  }
  SectionReader& reader() { return r_; }

 private:
  SectionReader r_;
};

class Renderer {
 public:
  explicit Renderer(std::string& out) : out_(out) {}
  void num(const char* k, double& v, Range, const char* doc) { line(k, format_number(v), doc); }
  void opt(const char* k, std::optional<double>& v, Range, const char* doc) {
    line(k, v ? format_number(*v) : "auto", doc);
  }
  void integer(const char* k, int& v, int, int, const char* doc) { line(k, std::to_string(v), doc); }
  void flag(const char* k, bool& v, const char* doc) { line(k, v ? "true" : "false", doc); }
  void list(const char* k, std::vector<double>& v, Range, const char* doc) { line(k, config::format_list(v), doc); }
  template <class E>
  void choice(const char* k, E& v, const std::vector<Choice<E>>& opts, const char* doc) {
    for (const auto& o : opts)
      if (o.value == v) line(k, o.name, doc);
  }
  void line(const std::string& k, const std::string& v, const char* doc) {
    const auto kv = fmt::format("{} = {}", k, v);
    out_ += doc && *doc ? fmt::format("{:<34}  # {}\n", kv, doc) : kv + "\n";
  }

 private:
  std::string& out_;
};

class JsonWriter {
 public:
  explicit JsonWriter(json& j) : j_(j) {}
  void num(const char* k, double& v, Range, const char*) { j_[k] = v; }
  void opt(const char* k, std::optional<double>& v, Range, const char*) {
    if (v)
      j_[k] = *v;
    else
      j_[k] = "auto";
  }
  void integer(const char* k, int& v, int, int, const char*) { j_[k] = v; }
  void flag(const char* k, bool& v, const char*) { j_[k] = v; }
  void list(const char* k, std::vector<double>& v, Range, const char*) { j_[k] = v; }
  template <class E>
  void choice(const char* k, E& v, const std::vector<Choice<E>>& opts, const char*) {
    for (const auto& o : opts)
      if (o.value == v) j_[k] = o.name;
  }

 private:
  json& j_;
};

template <class V>
void visit(V& v, EmitterConfig& e) {
  auto& p = e.params;
  v.num("lifetime_ns", p.lifetime_ns, pos, "excited-state lifetime");
  v.num("pure_dephasing_mhz", p.pure_dephasing_mhz, nonneg, "pure dephasing rate");
  v.num("spectral_diffusion_mhz", p.diffusion_sigma_mhz, nonneg, "Gaussian spectral diffusion sigma");
  v.num("excitation_bandwidth_mhz", p.excitation_bandwidth_mhz, nonneg,
        "detunings beyond half this are never excited, 0 = no cut");
  v.num("mean_detuning_mhz", p.mean_detuning_mhz, {}, "mean emission frequency offset");
  v.num("polarization_deg", p.polarization_mismatch_deg, {}, "polarization angle");
  v.num("p_double", p.p_double, half_open_unit, "double excitation probability per pulse");
  v.num("g2_zero", e.g2_zero, Range{0, 0.5, false, true}, "HBT g2(0), sets the pair capture");
  v.num("br_radiative", p.br_radiative, unit, "radiative decay outside the zero-phonon line");
  v.num("br_nonradiative", p.br_nonradiative, unit, "non-radiative decay");
  v.num("desync_ns", p.desync_ns, nonneg, "emission delay");
  v.num("init_fidelity", e.init_fidelity, unit, "spin initialization fidelity");
}

template <class V>
void visit(V& v, HardwareConfig& h) {
  v.num("detector_loss_db", h.detector_loss_db, nonpos, "");
  v.num("cavity_loss_db", h.cavity_loss_db, nonpos, "");
  v.num("path_loss_db", h.path_loss_db, nonpos, "");
  v.num("quantum_efficiency_db", h.quantum_efficiency_db, nonpos, "");
  v.num("excitation_db", h.excitation_db, nonpos, "excitation probability per pulse");
  v.num("detector_efficiency", h.detector.efficiency, open_closed_unit, "");
  v.flag("stack_detector_efficiency", h.detector.stack_efficiency,
         "apply detector_efficiency on top of the losses");
  v.num("dark_rate_hz", h.detector.dark_rate_hz, nonneg, "per detector");
  v.num("dead_time_ns", h.detector.dead_time_ns, nonneg, "");
  v.num("gate_ns", h.gate_ns, pos, "detection gate length");
  v.num("gate_fidelity", h.gate_fidelity, Range{0.5, 1}, "average fidelity of one spin rotation");
  v.choice("gate_error", h.gate_error, gate_errors, "depolarizing | coherent");
}

template <class V>
void visit(V& v, ProtocolConfig& p) {
  v.list("timebins_ns", p.timebins_ns, pos, "coincidence filter widths");
  v.num("early_late_separation_ns", p.early_late_separation_ns, pos, "time between the two rounds");
  v.num("repetition_rate_hz", p.repetition_rate_hz, pos, "");
  v.num("pi_pulse_ns", p.pi_pulse_ns, nonneg, "");
  v.num("tau_lim_ns", p.tau_lim_ns, pos, "span of the visibility profile");
  v.flag("monte_carlo", p.monte_carlo, "also simulate herald streams (needs many shots)");
}

template <class V>
void visit(V& v, HomConfig& h) {
  v.list("windows_ns", h.windows_ns, pos, "visibility windows T");
  v.num("grid_step_ns", h.grid_step_ns, pos, "correlation trace resolution");
  v.num("bin_width_ns", h.bin_width_ns, pos, "coincidence histogram bins");
  v.flag("monte_carlo", h.monte_carlo, "simulate tag streams at `shots` per run");
  v.flag("lossless", h.lossless, "Monte Carlo with unit efficiencies and no dark counts");
}

template <class V>
void visit(V& v, TcnotConfig& t) {
  v.num("timebin_ns", t.timebin_ns, pos, "filter width of the Bell pair");
  v.choice("mode", t.mode, tcnot_modes, "feed_forward | postselect_00");
}

template <class V>
void visit(V& v, SpinConfig& s) {
  v.integer("points", s.points, 20, 1000000, "samples per dataset");
  v.num("noise", s.noise, pos, "Gaussian noise on unit-amplitude signals");
  v.num("exp_decay_tau_ns", s.exp_decay_tau_ns, pos, "optical lifetime");
  v.num("ramsey_t2_us", s.ramsey_t2_us, pos, "electron T2*");
  v.num("ramsey_n", s.ramsey_n, Range{0.5, 3}, "");
  v.num("ramsey_detuning_mhz", s.ramsey_detuning_mhz, nonneg, "");
  v.num("hahn_t2_us", s.hahn_t2_us, pos, "electron T2");
  v.num("hahn_n", s.hahn_n, Range{0.5, 3}, "");
  v.num("nuclear_t2star_ms", s.nuclear_t2star_ms, pos, "");
  v.num("nuclear_t2_ms", s.nuclear_t2_ms, pos, "");
  v.num("nuclear_detuning_khz", s.nuclear_detuning_khz, nonneg, "");
  v.num("rabi_frequency_mhz", s.rabi_frequency_mhz, pos, "");
  v.num("rabi_decay_us", s.rabi_decay_us, pos, "");
  v.num("pump_ratio", s.pump_ratio, Range{0, 1, true, true}, "population kept per pump pulse");
  v.num("gate_time_us", s.gate_time_us, pos, "gate fidelity is read off the ramsey fit here");
}

template <class V>
void visit(V& v, analysis::SsroParams& s) {
  v.num("bright_rate", s.bright_rate, nonneg, "mean photons per round, bright");
  v.num("dark_rate", s.dark_rate, nonneg, "mean photons per round, dark");
  v.num("flip_probability", s.flip_probability, unit, "nuclear flip per round");
  v.integer("rounds", s.rounds, 1, 100000, "");
  v.num("map_fidelity", s.map_fidelity, unit, "nucleus to electron mapping");
}

template <class V>
void visit(V& v, ForecastConfig& f) {
  auto& p = f.projection;
  v.num("lifetime_ns", p.lifetime_ns, pos, "");
  v.num("intrinsic_dephasing_khz", p.intrinsic_dephasing_khz, nonneg, "");
  v.num("slow_diffusion_mhz", p.slow_diffusion_mhz, nonneg, "");
  v.num("pulse_width_ps", p.pulse_width_ps, nonneg, "");
  v.opt("p_double", p.p_double, half_open_unit, "auto = pulse_width / (4 lifetime)");
  v.num("field_mt", p.field_mt, nonneg, "recorded only");
  v.num("acquisition_window_ns", p.acquisition_window_ns, pos, "");
  v.num("grid_step_ns", p.grid_step_ns, pos, "");
  v.list("fractions", f.fractions, open_closed_unit, "coincidence fractions f");
}

const std::vector<std::string> plain_sections{"tc1",  "tc2",      "hardware", "protocol", "hom",
                                              "tcnot", "spin", "ssro.tc1", "ssro.tc2", "forecast"};
const std::vector<std::string> table_sections{"forecast.steps", "forecast.efficiencies"};

template <class V>
void visit_section(V& v, const std::string& name, RunConfig& c) {
  if (name == "tc1") visit(v, c.emitters[0]);
  else if (name == "tc2") visit(v, c.emitters[1]);
  else if (name == "hardware") visit(v, c.hardware);
  else if (name == "protocol") visit(v, c.protocol);
  else if (name == "hom") visit(v, c.hom);
  else if (name == "tcnot") visit(v, c.tcnot);
  else if (name == "spin") visit(v, c.spin);
  else if (name == "ssro.tc1") visit(v, c.ssro.tc1);
  else if (name == "ssro.tc2") visit(v, c.ssro.tc2);
  else if (name == "forecast") visit(v, c.forecast);
}

std::vector<std::string> sections_for(Experiment e) {
  switch (e) {
    case Experiment::hom: return {"tc1", "tc2", "hardware", "hom"};
    case Experiment::bk: return {"tc1", "tc2", "hardware", "protocol"};
    case Experiment::tcnot: return {"tc1", "tc2", "hardware", "protocol", "tcnot"};
    case Experiment::spin: return {"spin"};
    case Experiment::ssro: return {"ssro.tc1", "ssro.tc2"};
    case Experiment::forecast: return {"forecast", "forecast.steps", "forecast.efficiencies"};
  }
  return {};
}

const char* section_doc(const std::string& name) {
  if (name == "tc1") return "emitter of module 1";
  if (name == "tc2") return "emitter of module 2";
  if (name == "hardware") return "loss chain, detectors and spin gates, shared by both modules";
  if (name == "protocol") return "two-round heralded entanglement";
  if (name == "hom") return "two-photon interference";
  if (name == "tcnot") return "teleported CNOT";
  if (name == "spin") return "synthetic coherence datasets and fits";
  if (name == "ssro.tc1") return "single-shot readout of module 1";
  if (name == "ssro.tc2") return "single-shot readout of module 2";
  if (name == "forecast") return "projected emitter and coincidence-window sweep";
  if (name == "forecast.steps") return "time per protocol step";
  if (name == "forecast.efficiencies") return "efficiency per element";
  return "";
}

bool is_table(const std::string& name) {
  return std::find(table_sections.begin(), table_sections.end(), name) != table_sections.end();
}

int line_of(const config::Document& doc, const std::string& section, const std::string& key) {
  const auto* s = doc.find(section);
  if (!s) return 0;
  for (const auto& e : s->entries)
    if (e.key == key) return e.line;
  return s->line;
}

// The budgets are small lists of (label, value, count).
int parse_count(const std::string& s) {
  const double v = config::parse_number(s);
  if (v < 1 || v > 1e6 || v != std::floor(v)) throw std::invalid_argument(fmt::format("count '{}' must be a positive integer", s));
  return static_cast<int>(v);
}

template <class Item>
std::vector<Item> read_rows(const config::Table& t, const std::string& section) {
  std::vector<Item> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    try {
      if (r[0].empty()) throw std::invalid_argument("label is empty");
      out.push_back({r[0], config::parse_number(r[1]), parse_count(r[2])});
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("[{}] row: {}", section, e.what()), t.lines[i], "row");
    }
  }
  return out;
}

template <class F>
void check(F&& f, const config::Document& doc, const std::string& section, const std::string& key) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("[{}] {}: {}", section, key, e.what()), line_of(doc, section, key), key);
  }
}

}  // namespace

RunConfig load_config(const config::Document& doc, std::optional<Experiment> experiment) {
  for (const auto& s : doc.sections) {
    if (s.name.empty()) continue;
    const bool known = std::find(plain_sections.begin(), plain_sections.end(), s.name) != plain_sections.end() ||
                       is_table(s.name);
    if (!known) throw ConfigError(fmt::format("unknown section [{}]", s.name), s.line, s.name);
  }

  SectionReader root(doc, "");
  const auto names = experiment_names();
  const auto exp_name = root.word("experiment", experiment ? to_string(*experiment) : "", names);
  if (!experiment && exp_name.empty())
    throw ConfigError("no experiment given (set `experiment` or pass --experiment)", 0, "experiment");
  const Experiment exp = experiment ? *experiment : parse_experiment(exp_name);

  RunConfig c = default_config(exp);
  c.shots = static_cast<std::uint64_t>(root.integer("shots", static_cast<long long>(c.shots), 1, 1000000000000LL));
  c.seed = static_cast<std::uint64_t>(
      root.integer("seed", static_cast<long long>(c.seed), 0, std::numeric_limits<long long>::max()));
  c.output = root.text("output", c.output);
  if (c.output.empty()) throw ConfigError("output: empty prefix", root.line_of("output"), "output");
  root.finish();

  for (const auto& name : plain_sections) {
    Loader l(doc, name);
    visit_section(l, name, c);
    l.reader().finish();
  }
  {
    SectionReader r(doc, "forecast.steps");
    const auto t = r.table({"label", "time_ns", "count"}, {});
    if (r.present()) c.forecast.steps.steps = read_rows<forecast::Step>(t, r.name());
    r.finish();
  }
  {
    SectionReader r(doc, "forecast.efficiencies");
    const auto t = r.table({"label", "efficiency", "count"}, {});
    if (r.present()) c.forecast.efficiencies.elements = read_rows<forecast::EfficiencyItem>(t, r.name());
    r.finish();
  }

  // cross-field checks, reported against the key that is most likely wrong
  for (int i = 0; i < 2; ++i) {
    const std::string sec = i == 0 ? "tc1" : "tc2";
    auto& e = c.emitters[i];
    check([&] { e.params.pair_capture = emitter::pair_capture_for_g2(e.params.p_double, e.g2_zero); }, doc, sec,
          "g2_zero");
    check([&] { e.params.validate(); }, doc, sec, "lifetime_ns");
  }
  check([&] { c.hardware.path().validate(); }, doc, "hardware", "path_loss_db");
  check([&] { c.hardware.detector.validate(); }, doc, "hardware", "detector_efficiency");
  check(
      [&] {
        for (double t : c.protocol.timebins_ns) {
          auto p = c.bk_params();
          p.timebin_ns = t;
          p.validate();
        }
      },
      doc, "protocol", "timebins_ns");
  if (c.protocol.monte_carlo)
    check(
        [&] {
          harness::BkSequenceOptions so;
          so.repetition_rate_hz = c.protocol.repetition_rate_hz;
          so.pi_pulse_ns = c.protocol.pi_pulse_ns;
          so.early_late_separation_ns = c.protocol.early_late_separation_ns;
          so.gate_ns = c.hardware.gate_ns;
          harness::build_bk_sequence(so).validate();
        },
        doc, "protocol", "repetition_rate_hz");
  check([&] { emitter::TimeGrid{c.hom.grid_step_ns, c.hardware.gate_ns}.validate(); }, doc, "hom", "grid_step_ns");
  for (double w : c.hom.windows_ns)
    if (w > c.hardware.gate_ns)
      throw ConfigError(fmt::format("[hom] windows_ns: window {} ns exceeds the {} ns gate", w, c.hardware.gate_ns),
                        line_of(doc, "hom", "windows_ns"), "windows_ns");
  check(
      [&] {
        auto p = c.bk_params();
        p.timebin_ns = c.tcnot.timebin_ns;
        p.validate();
      },
      doc, "tcnot", "timebin_ns");
  check([&] { c.ssro.tc1.validate(); }, doc, "ssro.tc1", "rounds");
  check([&] { c.ssro.tc2.validate(); }, doc, "ssro.tc2", "rounds");
  check([&] { c.forecast.projection.validate(); }, doc, "forecast", "grid_step_ns");
  check([&] { c.forecast.steps.validate(); }, doc, "forecast.steps", "row");
  check([&] { c.forecast.efficiencies.validate(); }, doc, "forecast.efficiencies", "row");
  return c;
}

RunConfig load_config(std::string_view text, std::optional<Experiment> experiment) {
  return load_config(config::Document::parse(text), experiment);
}

std::string render_config(const RunConfig& cfg) {
  RunConfig c = cfg;
  std::string out = fmt::format("# tcsim {} run\n\n", to_string(c.experiment));
  Renderer root(out);
  root.line("experiment", to_string(c.experiment), "hom | bk | tcnot | spin | ssro | forecast");
  root.line("shots", std::to_string(c.shots), "");
  root.line("seed", std::to_string(c.seed), "TCSIM_SEED and --seed take precedence");
  root.line("output", c.output, "prefix of every output file");
  for (const auto& name : sections_for(c.experiment)) {
    out += fmt::format("\n[{}]  # {}\n", name, section_doc(name));
    if (name == "forecast.steps") {
      out += "columns = label, time_ns, count\n";
      for (const auto& s : c.forecast.steps.steps)
        out += fmt::format("row = {}, {}, {}\n", s.label, format_number(s.time_ns), s.count);
    } else if (name == "forecast.efficiencies") {
      out += "columns = label, efficiency, count\n";
      for (const auto& e : c.forecast.efficiencies.elements)
        out += fmt::format("row = {}, {}, {}\n", e.label, format_number(e.efficiency), e.count);
    } else {
      Renderer r(out);
      visit_section(r, name, c);
    }
  }
  return out;
}

// --- running ---------------------------------------------------------------

namespace {

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) text_ += (i ? "," : "") + columns[i];
    text_ += '\n';
  }
  template <class... T>
  void row(const T&... cells) {
    bool first = true;
    ((text_ += (first ? "" : ","), text_ += cell(cells), first = false), ...);
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::uint64_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  std::string text_;
};

struct Collector {
  RunOutput out;
  void metric(const std::string& k, double v) { out.metrics.emplace_back(k, v); }
  void file(const std::string& suffix, const Csv& c) { out.files.push_back({suffix, c.text()}); }
};

std::string key(double v) { return format_number(v); }

void run_hom(const RunConfig& c, int workers, Collector& col) {
  const auto& e1 = c.emitters[0].params;
  const auto& e2 = c.emitters[1].params;
  const double lim = c.hardware.gate_ns;
  const auto tr = emitter::hom_correlations(e1, e2, emitter::TimeGrid{c.hom.grid_step_ns, lim}, lim);

  Csv traces({"tau_ns", "g_indistinguishable", "g_distinguishable"});
  for (std::size_t i = 0; i < tr.indistinguishable.tau_ns.size(); ++i)
    traces.row(tr.indistinguishable.tau_ns[i], tr.indistinguishable.values[i], tr.distinguishable.values[i]);
  col.file("hom_traces.csv", traces);

  std::optional<analysis::CoincidenceHistogram> hi, hd;
  if (c.hom.monte_carlo) {
    auto app = c.apparatus();
    if (c.hom.lossless) {
      for (auto& m : app.modules) m.path = harness::OpticalPath{};
      app.detectors = harness::DetectorModel{1.0, 0.0, c.hardware.detector.dead_time_ns, true};
    }
    analysis::CoincidenceOptions oi;
    oi.window_ns = lim;
    oi.bin_width_ns = c.hom.bin_width_ns;
    auto od = oi;
    od.realign_shift_ns = harness::hom_delay_ns;
    od.realign_after_ns = harness::hom_excite_ns + harness::hom_delay_ns;
    hi = analysis::coincidences(
        harness::run_sequence(harness::build_hom_sequence(true), app, {c.shots, c.seed, workers}), oi);
    hd = analysis::coincidences(
        harness::run_sequence(harness::build_hom_sequence(false), app, {c.shots, c.seed + 1, workers}), od);
    Csv hist({"center_ns", "count_indistinguishable", "count_distinguishable"});
    for (std::size_t i = 0; i < hi->centers_ns.size(); ++i) hist.row(hi->centers_ns[i], hi->counts[i], hd->counts[i]);
    col.file("hom_histogram.csv", hist);
  }

  Csv vis({"window_ns", "v_analytic", "v_monte_carlo", "v_monte_carlo_err", "n_indistinguishable",
           "n_distinguishable"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double w : c.hom.windows_ns) {
    const double va = emitter::visibility(tr.indistinguishable, tr.distinguishable, w);
    col.metric("analytic.visibility.T" + key(w), va);
    double vm = nan, err = nan;
    std::uint64_t ni = 0, nd = 0;
    if (hi) {
      ni = hi->within(w);
      nd = hd->within(w);
      if (nd > 0) {
        const auto est = analysis::hom_visibility(*hi, *hd, w);
        vm = est.value;
        err = est.error;
      }
      col.metric("mc.visibility.T" + key(w), vm);
      col.metric("mc.visibility_err.T" + key(w), err);
    }
    vis.row(w, va, vm, err, ni, nd);
  }
  col.file("hom_visibility.csv", vis);
}

void run_bk(const RunConfig& c, int workers, Collector& col) {
  const auto p = c.bk_params();
  col.metric("herald_probability", protocol::total_success(protocol::bk_conditional_state(p)));
  const auto rows = protocol::simulate_bk_experiment(p, c.protocol.timebins_ns);
  Csv sweep({"timebin_ns", "visibility", "fidelity", "rate_hz"});
  for (const auto& r : rows) {
    sweep.row(r.timebin_ns, r.visibility, r.fidelity, r.rate_hz);
    col.metric("visibility.T" + key(r.timebin_ns), r.visibility);
    col.metric("fidelity.T" + key(r.timebin_ns), r.fidelity);
    col.metric("rate_hz.T" + key(r.timebin_ns), r.rate_hz);
  }
  col.file("bk_sweep.csv", sweep);

  if (c.protocol.monte_carlo) {
    const auto mc =
        protocol::simulate_bk_experiment(p, c.protocol.timebins_ns, {c.apparatus(), c.shots, c.seed, workers});
    Csv t({"timebin_ns", "fidelity", "fidelity_err", "rate_hz", "heralds"});
    for (const auto& r : mc) {
      t.row(r.timebin_ns, r.fidelity, r.fidelity_err, r.rate_hz, r.heralds);
      col.metric("mc.fidelity.T" + key(r.timebin_ns), r.fidelity);
      col.metric("mc.fidelity_err.T" + key(r.timebin_ns), r.fidelity_err);
      col.metric("mc.heralds.T" + key(r.timebin_ns), static_cast<double>(r.heralds));
    }
    col.file("bk_sweep_mc.csv", t);
  }
}

void run_tcnot(const RunConfig& c, Collector& col) {
  auto p = c.bk_params();
  p.timebin_ns = c.tcnot.timebin_ns;
  const auto states = protocol::bk_conditional_state(p);
  const double total = protocol::total_success(states);
  protocol::TruthTable model{};
  for (const auto& s : states) {
    const auto t = protocol::tcnot_truth_table(s, c.tcnot.mode);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) model[i][j] += s.success_probability / total * t[i][j];
  }
  const auto ideal = protocol::tcnot_truth_table(protocol::bk_conditional_state(protocol::ideal_bk_params())[0],
                                                 c.tcnot.mode);

  Csv csv({"bell_pair", "control_in", "target_in", "p_c0_t0", "p_c1_t0", "p_c0_t1", "p_c1_t1"});
  for (const auto& [name, table] : {std::pair{"ideal", ideal}, std::pair{"model", model}}) {
    double correct = 0;
    for (int i = 0; i < 4; ++i) {
      const int ctl = i & 1, tgt = i >> 1;
      csv.row(name, ctl, tgt, table[i][0], table[i][1], table[i][2], table[i][3]);
      correct += table[i][ctl + 2 * (tgt ^ ctl)] / 4;
    }
    col.metric(std::string(name) + ".truth_table_fidelity", correct);
  }
  col.metric("model.bell_pair_fidelity", protocol::mean_fidelity(states));
  col.file("tcnot_truth_table.csv", csv);
}

void run_spin(const RunConfig& c, Collector& col) {
  const auto sets = spin_datasets(c.spin);
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& d = sets[k];
    const auto y = spin_sample(d, harness::shot_seed(c.seed, k));
    analysis::FitOptions o;
    o.sigma.assign(y.size(), d.sigma);
    const auto r = analysis::fit(d.model, d.t, y, o);
    Csv csv({"t_" + d.time_unit, "y", "sigma", "fit"});
    for (std::size_t i = 0; i < y.size(); ++i) csv.row(d.t[i], y[i], d.sigma, analysis::evaluate(d.model, r.params, d.t[i]));
    col.file("spin_" + d.name + ".csv", csv);
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      col.metric(d.name + "." + r.names[i], r.params[i]);
      col.metric(d.name + "." + r.names[i] + "_err", r.std_errors[i]);
    }
    col.metric(d.name + ".reduced_chi2", r.reduced_chi2());
    if (d.name == "ramsey") col.metric("gate_fidelity", analysis::gate_fidelity_from_envelope(r, c.spin.gate_time_us));
  }
}

void run_ssro(const RunConfig& c, Collector& col) {
  const std::array<std::pair<const char*, analysis::SsroParams>, 2> mods{
      {{"tc1", c.ssro.tc1}, {"tc2", c.ssro.tc2}}};
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& [name, params] = mods[k];
    const auto d = analysis::ssro_simulate(params, c.shots, harness::shot_seed(c.seed, k));
    const int top = std::max(*std::max_element(d.bright.begin(), d.bright.end()),
                             *std::max_element(d.dark.begin(), d.dark.end()));
    std::vector<std::uint64_t> hb(top + 1), hd(top + 1);
    for (int n : d.bright) ++hb[n];
    for (int n : d.dark) ++hd[n];
    Csv hist({"photons", "bright_shots", "dark_shots"});
    for (int n = 0; n <= top; ++n) hist.row(n, hb[n], hd[n]);
    col.file(fmt::format("ssro_{}_histogram.csv", name), hist);

    const auto th = analysis::ssro_threshold(d.bright, d.dark);
    Csv curve({"threshold", "spam"});
    for (std::size_t t = 0; t < th.curve.size(); ++t) curve.row(static_cast<int>(t), th.curve[t]);
    col.file(fmt::format("ssro_{}_threshold.csv", name), curve);
    col.metric(fmt::format("{}.threshold", name), th.threshold);
    col.metric(fmt::format("{}.spam", name), th.spam);
  }
}

void run_forecast(const RunConfig& c, Collector& col) {
  const auto& f = c.forecast;
  const auto rr = forecast::repetition_rate(f.steps);
  const double ps = forecast::success_probability(f.efficiencies);
  col.metric("total_time_ns", rr.total_time_ns);
  col.metric("repetition_rate_hz", rr.rate_hz);
  col.metric("success_probability", ps);
  col.metric("p_double", f.projection.double_excitation());
  const auto curve = forecast::fidelity_rate_curve(f.projection, f.steps, f.efficiencies, f.fractions);
  Csv csv({"fraction", "fidelity", "rate_hz"});
  for (const auto& pt : curve) {
    csv.row(pt.fraction, pt.fidelity, pt.rate_hz);
    col.metric("timebin_ns.f" + key(pt.fraction), pt.timebin_ns);
    col.metric("fidelity.f" + key(pt.fraction), pt.fidelity);
    col.metric("rate_hz.f" + key(pt.fraction), pt.rate_hz);
  }
  col.file("forecast.csv", csv);
}

json config_json(const RunConfig& cfg) {
  RunConfig c = cfg;
  json j;
  j["experiment"] = to_string(c.experiment);
  j["shots"] = c.shots;
  j["seed"] = c.seed;
  j["output"] = c.output;
  for (const auto& name : sections_for(c.experiment)) {
    if (name == "forecast.steps") {
      j[name] = json::array();
      for (const auto& s : c.forecast.steps.steps)
        j[name].push_back({{"label", s.label}, {"time_ns", s.time_ns}, {"count", s.count}});
    } else if (name == "forecast.efficiencies") {
      j[name] = json::array();
      for (const auto& e : c.forecast.efficiencies.elements)
        j[name].push_back({{"label", e.label}, {"efficiency", e.efficiency}, {"count", e.count}});
    } else {
      j[name] = json::object();
      JsonWriter w(j[name]);
      visit_section(w, name, c);
    }
  }
  return j;
}

}  // namespace

RunOutput run(const RunConfig& c, int workers) {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  Collector col;
  switch (c.experiment) {
    case Experiment::hom: run_hom(c, workers, col); break;
    case Experiment::bk: run_bk(c, workers, col); break;
    case Experiment::tcnot: run_tcnot(c, col); break;
    case Experiment::spin: run_spin(c, col); break;
    case Experiment::ssro: run_ssro(c, col); break;
    case Experiment::forecast: run_forecast(c, col); break;
  }

  json j;
  j["schema_version"] = schema_version;
  j["experiment"] = to_string(c.experiment);
  j["seed"] = c.seed;
  j["config"] = config_json(c);
  j["metrics"] = json::object();
  for (const auto& [k, v] : col.out.metrics) j["metrics"][k] = v;  // NaN is written as null
  j["files"] = json::array();
  for (const auto& f : col.out.files) j["files"].push_back(f.suffix);
  col.out.summary = j.dump(2) + "\n";
  return std::move(col.out);
}

std::vector<std::string> write_outputs(const RunOutput& out, const std::string& prefix) {
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  const auto put = [&](const std::string& suffix, const std::string& content) {
    const fs::path path(prefix + suffix);
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", path.parent_path().string(), ec.message()));
    std::ofstream f(path, std::ios::binary);
    f << content;
    f.close();
    if (!f) throw IoError(fmt::format("cannot write {}", path.string()));
    written.push_back(path.string());
  };
  for (const auto& f : out.files) put(f.suffix, f.content);
  put("summary.json", out.summary);
  return written;
}

// --- synthetic coherence data ---------------------------------------------

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

std::vector<SpinDataset> spin_datasets(const SpinConfig& c) {
  using analysis::FitModel;
  constexpr double two_pi = 2 * std::numbers::pi;
  const int n = c.points;
  std::vector<double> pulses(n);
  for (int i = 0; i < n; ++i) pulses[i] = i;
  return {
      {"exp_decay", FitModel::exp_decay, "ns", {1.0, c.exp_decay_tau_ns, 0.02},
       linspace(0, 5 * c.exp_decay_tau_ns, n), c.noise},
      {"ramsey", FitModel::ramsey, "us", {0.5, c.ramsey_detuning_mhz, 0.0, c.ramsey_t2_us, c.ramsey_n, 0.5},
       linspace(0, 3 * c.ramsey_t2_us, n), c.noise},
      {"hahn", FitModel::hahn, "us", {0.5, c.hahn_t2_us, c.hahn_n, 0.5}, linspace(0, 3 * c.hahn_t2_us, n), c.noise},
      {"nuclear_ramsey", FitModel::ramsey, "ms",
       {0.5, c.nuclear_detuning_khz, 0.0, c.nuclear_t2star_ms, c.ramsey_n, 0.5},
       linspace(0, 3 * c.nuclear_t2star_ms, n), c.noise},
      {"nuclear_hahn", FitModel::hahn, "ms", {0.5, c.nuclear_t2_ms, c.hahn_n, 0.5},
       linspace(0, 3 * c.nuclear_t2_ms, n), c.noise},
      {"rabi", FitModel::rabi, "us", {0.5, two_pi * c.rabi_frequency_mhz, 0.0, c.rabi_decay_us, 0.5},
       linspace(0, 2 * c.rabi_decay_us, n), c.noise},
      {"pump", FitModel::pump_decay, "pulses", {1.0, c.pump_ratio, 0.05}, pulses, c.noise},
  };
}

std::vector<double> spin_sample(const SpinDataset& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, d.sigma);
  std::vector<double> y(d.t.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = analysis::evaluate(d.model, d.truth, d.t[i]) + noise(rng);
  return y;
}

}  // namespace tcsim::cli
