#include "tcsim/harness.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace tcsim::harness {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw HarnessError(msg);
}

}  // namespace

const char* to_string(PulseKind k) {
  switch (k) {
    case PulseKind::optical_pump: return "optical_pump";
    case PulseKind::optical_excite: return "optical_excite";
    case PulseKind::mw_pulse: return "mw_pulse";
    case PulseKind::rf_pulse: return "rf_pulse";
    case PulseKind::detect_gate: return "detect_gate";
    case PulseKind::delay: return "delay";
    case PulseKind::readout: return "readout";
  }
  return "?";
}

bool PulseElement::acts_on(int module) const {
  return target == Target::both || (module == 0 && target == Target::module1) ||
         (module == 1 && target == Target::module2);
}

// ---------------------------------------------------------------------------
// Sequences

void PulseSequence::validate() const {
  require(period_ns > 0, "sequence period must be positive");
  // channel id -> occupied windows
  std::map<std::string, std::vector<Window>> channels;
  for (const auto& e : elements) {
    const std::string name = e.label.empty() ? to_string(e.kind) : e.label;
    require(std::isfinite(e.start_ns) && e.start_ns >= 0,
            fmt::format("{}: start time must be >= 0", name));
    require(std::isfinite(e.duration_ns) && e.duration_ns >= 0,
            fmt::format("{}: duration must be >= 0", name));
    require(e.end_ns() <= period_ns, fmt::format("{}: ends after the sequence period", name));
    if (e.kind == PulseKind::delay) continue;
    if (e.kind == PulseKind::detect_gate) {
      require(e.target == Target::detectors, fmt::format("{}: gates target the detectors", name));
      require(e.duration_ns > 0, fmt::format("{}: gate must have positive width", name));
    } else {
      require(e.target != Target::detectors,
              fmt::format("{}: {} must target a module", name, to_string(e.kind)));
    }
    std::string kind;
    switch (e.kind) {
      case PulseKind::optical_pump:
      case PulseKind::optical_excite:
      case PulseKind::readout: kind = "optical"; break;
      case PulseKind::mw_pulse: kind = "mw"; break;
      case PulseKind::rf_pulse: kind = "rf"; break;
      default: kind = "gate"; break;
    }
    std::vector<std::string> ids;
    if (e.target == Target::detectors) {
      ids.push_back("gate");
    } else {
      for (int m = 0; m < 2; ++m)
        if (e.acts_on(m)) ids.push_back(fmt::format("{}{}", kind, m + 1));
    }
    for (const auto& id : ids) {
      for (const auto& w : channels[id]) {
        const bool overlap = e.start_ns < w.close_ns && w.open_ns < e.end_ns();
        require(!overlap, fmt::format("{}: overlaps another element on channel {}", name, id));
      }
      channels[id].push_back({e.start_ns, e.end_ns()});
    }
  }
}

std::vector<Window> PulseSequence::gates() const {
  std::vector<Window> out;
  for (const auto& e : elements)
    if (e.kind == PulseKind::detect_gate) out.push_back({e.start_ns, e.end_ns()});
  std::sort(out.begin(), out.end(),
            [](const Window& a, const Window& b) { return a.open_ns < b.open_ns; });
  return out;
}

bool PulseSequence::has_gates() const {
  return std::any_of(elements.begin(), elements.end(),
                     [](const auto& e) { return e.kind == PulseKind::detect_gate; });
}

std::vector<PulseElement> PulseSequence::ordered() const {
  auto out = elements;
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.start_ns < b.start_ns; });
  return out;
}

PulseSequence build_hom_sequence(bool indistinguishable) {
  PulseSequence s;
  s.period_ns = 2000.0;
  const double second = hom_excite_ns + (indistinguishable ? 0.0 : hom_delay_ns);
  s.elements = {
      {PulseKind::optical_pump, 0.0, 1000.0, Target::both, 0, 1, "init"},
      {PulseKind::mw_pulse, 1000.0, 50.0, Target::both, std::numbers::pi, 1, "pi"},
      {PulseKind::optical_excite, hom_excite_ns, 1.0, Target::module1, 0, 1, "excite_1"},
      {PulseKind::optical_excite, second, 1.0, Target::module2, 0, 1, "excite_2"},
      {PulseKind::detect_gate, hom_excite_ns, gate_length_ns, Target::detectors, 0, 1, "gate_1"},
  };
  if (!indistinguishable) {
    s.elements.push_back(
        {PulseKind::detect_gate, second, gate_length_ns, Target::detectors, 0, 1, "gate_2"});
  }
  return s;
}

PulseSequence build_bk_sequence(const BkSequenceOptions& opt) {
  require(opt.repetition_rate_hz > 0, "repetition rate must be positive");
  require(opt.early_late_separation_ns > opt.gate_ns + opt.pi_pulse_ns,
          "early/late separation too short for gate and pi pulse");
  PulseSequence s;
  s.period_ns = 1e9 / opt.repetition_rate_hz;
  const double early = 1100.0;
  const double late = early + opt.early_late_separation_ns;
  const double pi_start = 0.5 * (early + late) - 0.5 * opt.pi_pulse_ns;
  s.elements = {
      {PulseKind::optical_pump, 0.0, 1000.0, Target::both, 0, 1, "init"},
      {PulseKind::mw_pulse, 1000.0, 0.5 * opt.pi_pulse_ns, Target::both, std::numbers::pi / 2, 1,
       "half_pi"},
      {PulseKind::optical_excite, early, 1.0, Target::both, 0, 1, "excite_early"},
      {PulseKind::detect_gate, early, opt.gate_ns, Target::detectors, 0, 1, "gate_early"},
      {PulseKind::mw_pulse, pi_start, opt.pi_pulse_ns, Target::both, std::numbers::pi, 1, "pi"},
      {PulseKind::optical_excite, late, 1.0, Target::both, 0, 1, "excite_late"},
      {PulseKind::detect_gate, late, opt.gate_ns, Target::detectors, 0, 1, "gate_late"},
  };
  double t = late + opt.gate_ns + 20.0;
  if (opt.basis_angle_rad) {
    s.elements.push_back({PulseKind::mw_pulse, t, 0.5 * opt.pi_pulse_ns, Target::both,
                          *opt.basis_angle_rad, 1, "basis"});
    t += 0.5 * opt.pi_pulse_ns + 20.0;
  }
  const double readout = std::min(50000.0, s.period_ns - t);
  require(readout > 0, "repetition period too short for the sequence");
  s.elements.push_back({PulseKind::readout, t, readout, Target::both, 0, 1, "readout"});
  return s;
}

// ---------------------------------------------------------------------------
// Optics and detectors

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

void OpticalPath::validate() const {
  for (const auto& l : losses) {
    require(std::isfinite(l.db) && l.db <= 0,
            fmt::format("loss element '{}': dB must be <= 0 (got {})", l.label, l.db));
  }
  require(std::isfinite(excitation_db) && excitation_db <= 0,
          "excitation_db must be <= 0");
}

double OpticalPath::transmission() const {
  double t = 1.0;
  for (const auto& l : losses) t *= db_to_linear(l.db);
  return t;
}

OpticalPath measured_path() {
  OpticalPath p;
  p.losses = {{"detector", -1.97}, {"cavity", -3.0}, {"path", -7.0}, {"quantum_efficiency", -0.46}};
  p.excitation_db = -14.9;
  return p;
}

void DetectorModel::validate() const {
  require(efficiency > 0 && efficiency <= 1, "detector efficiency must be in (0, 1]");
  require(dark_rate_hz >= 0, "dark rate must be >= 0");
  require(dead_time_ns >= 0, "dead time must be >= 0");
}

void Module::validate() const {
  emitter.validate();
  path.validate();
  require(init_fidelity >= 0 && init_fidelity <= 1, "init_fidelity must be in [0, 1]");
}

void Apparatus::validate() const {
  for (const auto& m : modules) m.validate();
  if (detectors) detectors->validate();
}

double Apparatus::detection_probability(int module) const {
  const auto& m = modules.at(module);
  const double eff = detectors ? detectors->effective_efficiency() : 1.0;
  return m.path.excitation_probability() * m.emitter.zpl_fraction() * m.path.transmission() * eff;
}

// ---------------------------------------------------------------------------
// Streams

std::int64_t TagStream::shot_start_ps(std::uint32_t shot) const {
  return std::llround(static_cast<double>(shot) * shot_period_ns * 1000.0);
}

double TagStream::in_shot_ns(const ClickRecord& c) const {
  return static_cast<double>(c.timestamp_ps - shot_start_ps(c.shot)) * 1e-3;
}

std::uint64_t shot_seed(std::uint64_t seed, std::uint64_t shot) {
  // two rounds of splitmix64 over (seed, shot)
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) ^ shot);
}

namespace {

struct Photon {
  double t_ns;       // in-shot arrival time
  double excite_ns;  // start of the exciting pulse
  int module;
  bool primary;      // first photon of the excitation (interferes)
};

struct Event {
  double t_ns;
  Detector det;
};

using Rng = std::mt19937_64;

double uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double sample_detuning(const emitter::EmitterParams& p, Rng& rng) {
  if (p.diffusion_sigma_mhz == 0) return p.mean_detuning_mhz;
  std::normal_distribution<double> n(0.0, p.diffusion_sigma_mhz);
  if (!p.truncated()) return p.mean_detuning_mhz + n(rng);
  const double half = 0.5 * p.excitation_bandwidth_mhz;
  for (;;) {
    const double x = n(rng);
    if (std::abs(x) <= half) return p.mean_detuning_mhz + x;
  }
}

class ShotSimulator {
 public:
  ShotSimulator(const PulseSequence& seq, const Apparatus& app)
      : elements_(seq.ordered()), gates_(seq.gates()), app_(app) {
    for (int m = 0; m < 2; ++m) {
      const auto& mod = app.modules[m];
      survive_[m] = mod.path.transmission() *
                    (app.detectors ? app.detectors->effective_efficiency() : 1.0);
      excite_[m] = mod.path.excitation_probability();
    }
    overlap_ = emitter::mode_overlap(app.modules[0].emitter, app.modules[1].emitter);
  }

  void run(std::uint32_t shot, std::uint64_t seed, std::vector<Event>& events) {
    Rng rng(shot_seed(seed, shot));
    events.clear();
    photons_.clear();
    std::array<int, 2> spin{};  // 0 bright, 1 dark
    std::array<double, 2> detuning{};
    for (int m = 0; m < 2; ++m) {
      detuning[m] = sample_detuning(app_.modules[m].emitter, rng);
      spin[m] = uniform(rng) < 0.5 ? 0 : 1;
    }
    for (const auto& e : elements_) {
      for (int m = 0; m < 2; ++m) {
        if (!e.acts_on(m)) continue;
        const auto& mod = app_.modules[m];
        switch (e.kind) {
          case PulseKind::optical_pump:
            spin[m] = uniform(rng) < mod.init_fidelity ? 1 : 0;
            break;
          case PulseKind::mw_pulse: {
            const double s = std::sin(0.5 * e.angle_rad);
            if (uniform(rng) < e.selectivity * s * s) spin[m] ^= 1;
            break;
          }
          case PulseKind::optical_excite:
            excite(m, e.start_ns, spin[m], rng);
            break;
          default:
            break;
        }
      }
    }
    route(detuning, rng, events);
    if (app_.detectors && app_.detectors->dark_rate_hz > 0) {
      for (const auto& g : gates_) {
        for (Detector d : {Detector::D1, Detector::D2}) {
          std::poisson_distribution<int> pois(app_.detectors->dark_rate_hz * g.width() * 1e-9);
          const int n = pois(rng);
          for (int i = 0; i < n; ++i) events.push_back({g.open_ns + uniform(rng) * g.width(), d});
        }
      }
    }
  }

 private:
  void excite(int m, double start, int& spin, Rng& rng) {
    if (spin != 0) return;
    if (uniform(rng) >= excite_[m]) return;
    const auto& p = app_.modules[m].emitter;
    const double r = uniform(rng);
    if (r < p.zpl_fraction()) {
      std::exponential_distribution<double> decay(p.decay_rate());
      photons_.push_back({start + p.desync_ns + decay(rng), start, m, true});
      if (uniform(rng) < p.pair_probability()) {
        photons_.push_back({start + p.desync_ns + decay(rng), start, m, false});
      }
    } else if (r < p.zpl_fraction() + p.br_radiative) {
      spin = 1;  // decay through the other spin branch
    }
  }

  // Every emitted photon consumes the same two draws whether or not it
  // survives, so runs that differ only in losses share their randomness.
  void route(const std::array<double, 2>& detuning, Rng& rng, std::vector<Event>& events) {
    photon_draws(rng);
    std::vector<Photon> alive;
    std::vector<double> port;
    for (std::size_t i = 0; i < photons_.size(); ++i) {
      if (draws_[2 * i] < survive_[photons_[i].module]) {
        alive.push_back(photons_[i]);
        port.push_back(draws_[2 * i + 1]);
      }
    }
    std::vector<bool> done(alive.size(), false);
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (done[i] || !alive[i].primary) continue;
      for (std::size_t j = i + 1; j < alive.size(); ++j) {
        if (done[j] || !alive[j].primary) continue;
        if (alive[j].module == alive[i].module || alive[j].excite_ns != alive[i].excite_ns) continue;
        const bool i_first = alive[i].module == 0;
        const Photon& a = i_first ? alive[i] : alive[j];
        const Photon& b = i_first ? alive[j] : alive[i];
        interfere(a, b, detuning, port[i], port[j], events);
        done[i] = done[j] = true;
        break;
      }
    }
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (done[i]) continue;
      events.push_back({alive[i].t_ns, port[i] < 0.5 ? Detector::D1 : Detector::D2});
    }
  }

  void photon_draws(Rng& rng) {
    draws_.resize(2 * photons_.size());
    for (auto& d : draws_) d = uniform(rng);
  }

  // Two-photon port statistics: given emission times x (module 1) and
  // y (module 2), the probability of leaving by different ports is
  // (1 - c/S)/2 with S the symmetrised product of emission densities and c
  // the interference overlap for this shot's detunings.
  void interfere(const Photon& a, const Photon& b, const std::array<double, 2>& detuning,
                 double u_split, double u_side, std::vector<Event>& events) {
    const auto& p1 = app_.modules[0].emitter;
    const auto& p2 = app_.modules[1].emitter;
    const double x = a.t_ns - a.excite_ns;
    const double y = b.t_ns - b.excite_ns;
    const double f1x = emitter::emission_density(p1, x), f1y = emitter::emission_density(p1, y);
    const double f2x = emitter::emission_density(p2, x), f2y = emitter::emission_density(p2, y);
    const double s = 0.5 * (f1x * f2y + f2x * f1y);
    const double tau = y - x;
    const double c = overlap_ * std::sqrt(f1x * f2x * f1y * f2y) *
                     std::cos(2 * std::numbers::pi * (detuning[0] - detuning[1]) * tau * 1e-3) *
                     emitter::dephasing_factor(p1, p2, tau);
    const double p_split = s > 0 ? 0.5 * (1.0 - c / s) : 0.5;
    const bool first_d1 = u_side < 0.5;
    const Detector da = first_d1 ? Detector::D1 : Detector::D2;
    const Detector other = first_d1 ? Detector::D2 : Detector::D1;
    events.push_back({a.t_ns, da});
    events.push_back({b.t_ns, u_split < p_split ? other : da});
  }

  std::vector<PulseElement> elements_;
  std::vector<Window> gates_;
  const Apparatus& app_;
  std::array<double, 2> survive_{};
  std::array<double, 2> excite_{};
  double overlap_ = 1.0;
  std::vector<Photon> photons_;
  std::vector<double> draws_;
};

void detect(std::uint32_t shot, const TagStream& frame, std::vector<Event>& events,
            const std::vector<Window>& gates, double dead_time_ns,
            std::vector<ClickRecord>& out) {
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.t_ns < b.t_ns || (a.t_ns == b.t_ns && a.det < b.det);
  });
  const std::int64_t base = frame.shot_start_ps(shot);
  const auto dead_ps = std::llround(dead_time_ns * 1000.0);
  std::array<std::int64_t, 2> last{INT64_MIN, INT64_MIN};
  for (const auto& ev : events) {
    const bool gated =
        std::any_of(gates.begin(), gates.end(), [&](const Window& w) { return w.contains(ev.t_ns); });
    if (!gated) continue;
    const std::int64_t t = std::llround(ev.t_ns * 1000.0);
    auto& prev = last[static_cast<int>(ev.det) - 1];
    if (prev != INT64_MIN && (t - prev < dead_ps || t == prev)) continue;
    prev = t;
    out.push_back({shot, ev.det, base + t});
  }
}

}  // namespace

TagStream run_sequence(const PulseSequence& seq, const Apparatus& app, const RunOptions& opt) {
  seq.validate();
  app.validate();
  require(opt.shots >= 1, "shots must be >= 1");
  require(opt.shots <= UINT32_MAX, "shot count exceeds the 32-bit shot index");
  require(opt.workers >= 1, "workers must be >= 1");
  require(!seq.has_gates() || app.detectors.has_value(),
          "sequence has detection gates but no detector model");

  TagStream stream;
  stream.shot_period_ns = seq.period_ns;
  stream.shots = opt.shots;
  const auto gates = seq.gates();
  const double dead = app.detectors ? app.detectors->dead_time_ns : 0.0;

  const auto workers = static_cast<std::uint64_t>(opt.workers);
  std::vector<std::vector<ClickRecord>> parts(workers);
  auto job = [&](std::uint64_t w) {
    ShotSimulator sim(seq, app);
    std::vector<Event> events;
    const std::uint64_t lo = opt.shots * w / workers;
    const std::uint64_t hi = opt.shots * (w + 1) / workers;
    for (std::uint64_t s = lo; s < hi; ++s) {
      const auto shot = static_cast<std::uint32_t>(s);
      sim.run(shot, opt.seed, events);
      detect(shot, stream, events, gates, dead, parts[w]);
    }
  };
  if (workers == 1) {
    job(0);
  } else {
    std::vector<std::thread> threads;
    for (std::uint64_t w = 0; w < workers; ++w) threads.emplace_back(job, w);
    for (auto& t : threads) t.join();
  }
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  stream.clicks.reserve(total);
  for (auto& p : parts) stream.clicks.insert(stream.clicks.end(), p.begin(), p.end());
  return stream;
}

// ---------------------------------------------------------------------------
// Heralds

std::vector<HeraldEvent> find_heralds(const TagStream& stream, const PulseSequence& seq) {
  const auto gates = seq.gates();
  require(gates.size() >= 2, "herald logic needs an early and a late gate");
  const Window early = gates[0];
  const Window late = gates[1];
  std::vector<HeraldEvent> out;
  std::size_t i = 0;
  while (i < stream.clicks.size()) {
    const auto shot = stream.clicks[i].shot;
    std::optional<std::pair<Detector, double>> e, l;
    for (; i < stream.clicks.size() && stream.clicks[i].shot == shot; ++i) {
      const auto& c = stream.clicks[i];
      const double t = stream.in_shot_ns(c);
      if (!e && early.contains(t)) e = {c.detector, t};
      if (!l && late.contains(t)) l = {c.detector, t};
    }
    if (e && l) out.push_back({shot, e->first, l->first, e->second, l->second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace {

constexpr char binary_magic[8] = {'T', 'C', 'S', 'T', 'A', 'G', 'S', '1'};

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("truncated binary stream");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

std::string format_ns(std::int64_t ps) {
  const bool neg = ps < 0;
  const std::uint64_t a = neg ? static_cast<std::uint64_t>(-ps) : static_cast<std::uint64_t>(ps);
  return fmt::format("{}{}.{:03}", neg ? "-" : "", a / 1000, a % 1000);
}

std::int64_t parse_ns(const std::string& s) {
  // exact decimal parse with up to 3 fractional digits
  std::size_t pos = 0;
  bool neg = false;
  if (pos < s.size() && (s[pos] == '-' || s[pos] == '+')) neg = s[pos++] == '-';
  std::int64_t whole = 0;
  std::size_t digits = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    whole = whole * 10 + (s[pos++] - '0');
    ++digits;
  }
  std::int64_t frac = 0;
  int fdig = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      if (fdig == 3) throw FormatError(fmt::format("timestamp '{}' has sub-ps digits", s));
      frac = frac * 10 + (s[pos++] - '0');
      ++fdig;
    }
  }
  if (digits == 0 || pos != s.size()) throw FormatError(fmt::format("bad timestamp '{}'", s));
  while (fdig < 3) {
    frac *= 10;
    ++fdig;
  }
  const std::int64_t ps = whole * 1000 + frac;
  return neg ? -ps : ps;
}

}  // namespace

void write_csv(const TagStream& s, std::ostream& out) {
  out << "shot,detector,timestamp_ns\n";
  for (const auto& c : s.clicks) {
    out << c.shot << ',' << static_cast<int>(c.detector) << ',' << format_ns(c.timestamp_ps) << '\n';
  }
}

TagStream read_csv(std::istream& in, double shot_period_ns, std::uint64_t shots) {
  TagStream s;
  s.shot_period_ns = shot_period_ns;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "shot,detector,timestamp_ns") throw FormatError("unexpected CSV header: " + line);
  std::size_t lineno = 1;
  std::uint64_t max_shot = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw FormatError(fmt::format("line {}: expected three fields", lineno));
    }
    try {
      const auto shot = std::stoull(a);
      const int det = std::stoi(b);
      if (det != 1 && det != 2) throw FormatError("detector must be 1 or 2");
      if (shot > UINT32_MAX) throw FormatError("shot index exceeds 32 bits");
      s.clicks.push_back({static_cast<std::uint32_t>(shot), static_cast<Detector>(det), parse_ns(c)});
      max_shot = std::max<std::uint64_t>(max_shot, shot);
    } catch (const std::logic_error& e) {
      throw FormatError(fmt::format("line {}: {}", lineno, e.what()));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  s.shots = shots > 0 ? shots : (s.clicks.empty() ? 0 : max_shot + 1);
  return s;
}

void write_binary(const TagStream& s, std::ostream& out) {
  out.write(binary_magic, sizeof(binary_magic));
  put_le<std::uint64_t>(out, s.shots);
  std::uint64_t period_bits;
  static_assert(sizeof(period_bits) == sizeof(double));
  std::memcpy(&period_bits, &s.shot_period_ns, sizeof(double));
  put_le<std::uint64_t>(out, period_bits);
  put_le<std::uint64_t>(out, s.clicks.size());
  for (const auto& c : s.clicks) {
    put_le<std::uint32_t>(out, c.shot);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(c.detector));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(c.timestamp_ps));
  }
}

TagStream read_binary(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, binary_magic)) {
    throw FormatError("not a tag stream (bad magic)");
  }
  TagStream s;
  s.shots = get_le<std::uint64_t>(in);
  const auto period_bits = get_le<std::uint64_t>(in);
  std::memcpy(&s.shot_period_ns, &period_bits, sizeof(double));
  const auto n = get_le<std::uint64_t>(in);
  s.clicks.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) {
    ClickRecord c;
    c.shot = get_le<std::uint32_t>(in);
    const auto det = get_le<std::uint8_t>(in);
    if (det != 1 && det != 2) throw FormatError("bad detector id in binary stream");
    c.detector = static_cast<Detector>(det);
    c.timestamp_ps = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
    s.clicks.push_back(c);
  }
  return s;
}

}  // namespace tcsim::harness
