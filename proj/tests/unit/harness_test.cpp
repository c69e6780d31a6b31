#include <catch2/catch.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "../oracles/herald_oracle.hpp"
#include "../oracles/stats.hpp"
#include "tcsim/harness.hpp"

using namespace tcsim::harness;
using tcsim::emitter::EmitterParams;

namespace {

EmitterParams clean_emitter() {
  EmitterParams p = tcsim::emitter::tc1_params();
  p.br_radiative = 0;
  p.br_nonradiative = 0;
  p.p_double = 0;
  return p;
}

Apparatus lossless() {
  Apparatus a;
  for (auto& m : a.modules) {
    m.emitter = clean_emitter();
    m.path = OpticalPath{};
    m.init_fidelity = 1.0;
  }
  a.detectors = DetectorModel{1.0, 0.0, 30.0, true};
  return a;
}

PulseSequence single_excitation(double gate_ns) {
  PulseSequence s;
  s.period_ns = 1200 + gate_ns;
  s.elements = {
      {PulseKind::optical_pump, 0, 1000, Target::module1, 0, 1, "init"},
      {PulseKind::mw_pulse, 1000, 50, Target::module1, std::numbers::pi, 1, "pi"},
      {PulseKind::optical_excite, 1100, 1, Target::module1, 0, 1, "excite"},
      {PulseKind::detect_gate, 1100, gate_ns, Target::detectors, 0, 1, "gate"},
  };
  return s;
}

}  // namespace

TEST_CASE("sequence validation", "[harness]") {
  auto s = build_hom_sequence(true);
  CHECK_NOTHROW(s.validate());
  s.elements.push_back({PulseKind::optical_excite, 500, 1, Target::module2, 0, 1, "clash"});
  CHECK_THROWS_WITH(s.validate(), Catch::Contains("clash"));

  s = build_hom_sequence(true);
  s.elements.push_back({PulseKind::mw_pulse, 1900, 200, Target::both, 1, 1, "late"});
  CHECK_THROWS_AS(s.validate(), HarnessError);

  s = build_hom_sequence(true);
  s.elements.push_back({PulseKind::detect_gate, 10, 10, Target::module1, 0, 1, "bad"});
  CHECK_THROWS_AS(s.validate(), HarnessError);
}

TEST_CASE("canned sequences", "[harness]") {
  auto start_of = [](const PulseSequence& s, const std::string& label) {
    for (const auto& e : s.elements)
      if (e.label == label) return e.start_ns;
    FAIL("missing element " << label);
    return 0.0;
  };
  const auto ind = build_hom_sequence(true);
  const auto dis = build_hom_sequence(false);
  CHECK(start_of(ind, "excite_1") == start_of(ind, "excite_2"));
  CHECK(start_of(dis, "excite_2") - start_of(dis, "excite_1") == 500.0);
  CHECK_NOTHROW(dis.validate());

  const auto bk = build_bk_sequence();
  CHECK_NOTHROW(bk.validate());
  const auto g = bk.gates();
  REQUIRE(g.size() == 2);
  CHECK(g[1].open_ns - g[0].open_ns == 1910.0);
  CHECK(bk.period_ns == Approx(1e9 / 11.8e3));

  BkSequenceOptions opt;
  opt.basis_angle_rad = std::numbers::pi / 2;
  CHECK_NOTHROW(build_bk_sequence(opt).validate());
}

TEST_CASE("lossless single excitation gives one click per shot", "[harness]") {
  const auto app = lossless();
  const auto s = run_sequence(single_excitation(5000), app, {1000, 1, 1});
  CHECK(s.clicks.size() == 1000);
}

TEST_CASE("dark counts follow the Poisson expectation", "[harness]") {
  Apparatus app = lossless();
  app.detectors->dark_rate_hz = 2e5;
  app.detectors->dead_time_ns = 0;
  PulseSequence s;
  s.period_ns = 2000;
  const double W = 1000;
  s.elements = {{PulseKind::detect_gate, 500, W, Target::detectors, 0, 1, "gate"}};
  const std::uint64_t shots = 50000;
  const auto stream = run_sequence(s, app, {shots, 3, 1});
  std::array<double, 2> n{};
  for (const auto& c : stream.clicks) {
    n[static_cast<int>(c.detector) - 1] += 1;
    const double t = stream.in_shot_ns(c);
    CHECK((t >= 500 && t < 500 + W));
  }
  const double expect = 2e5 * W * shots * 1e-9;
  for (double v : n) CHECK(std::abs(v - expect) < 5 * std::sqrt(expect));
}

TEST_CASE("loss chain", "[harness]") {
  const auto path = measured_path();
  const double hand = std::pow(10, -1.97 / 10) * std::pow(10, -3.0 / 10) *
                      std::pow(10, -7.0 / 10) * std::pow(10, -0.46 / 10);
  CHECK(path.transmission() == Approx(hand).epsilon(1e-14));
  CHECK(path.excitation_probability() == Approx(std::pow(10, -1.49)).epsilon(1e-14));

  Apparatus app;
  for (auto& m : app.modules) {
    m.emitter = tcsim::emitter::tc1_params();
    m.path = path;
  }
  app.detectors = DetectorModel{};
  const double z = 1 - 0.025 - 0.025;
  CHECK(app.detection_probability(0) == Approx(std::pow(10, -1.49) * z * hand * 0.9).epsilon(1e-14));
  app.detectors->stack_efficiency = false;
  CHECK(app.detection_probability(0) == Approx(std::pow(10, -1.49) * z * hand).epsilon(1e-14));

  OpticalPath bad;
  bad.losses = {{"gain", 1.0}};
  CHECK_THROWS_AS(bad.validate(), HarnessError);
}

TEST_CASE("gates, dead time and detector requirement", "[harness]") {
  Apparatus app = lossless();
  app.modules[0].emitter.p_double = 0.5;
  app.modules[0].emitter.pair_capture = 1.0;
  app.detectors->dark_rate_hz = 1e5;
  const auto seq = single_excitation(100);
  const auto s = run_sequence(seq, app, {20000, 5, 1});
  for (std::size_t i = 0; i < s.clicks.size(); ++i) {
    const double t = s.in_shot_ns(s.clicks[i]);
    CHECK((t >= 1100 && t < 1200));
    for (std::size_t j = i + 1; j < s.clicks.size() && s.clicks[j].shot == s.clicks[i].shot; ++j) {
      if (s.clicks[j].detector == s.clicks[i].detector) {
        CHECK(s.clicks[j].timestamp_ps - s.clicks[i].timestamp_ps >= 30000);
      }
    }
  }
  Apparatus blind = app;
  blind.detectors.reset();
  CHECK_THROWS_WITH(run_sequence(seq, blind, {10, 1, 1}), Catch::Contains("detector"));
}

TEST_CASE("determinism and worker independence", "[harness]") {
  Apparatus app = lossless();
  app.detectors->dark_rate_hz = 1e4;
  const auto seq = build_hom_sequence(true);
  const auto a = run_sequence(seq, app, {20000, 42, 1});
  const auto b = run_sequence(seq, app, {20000, 42, 1});
  const auto c = run_sequence(seq, app, {20000, 42, 4});
  CHECK(a.clicks == b.clicks);
  CHECK(a.clicks == c.clicks);
  const auto d = run_sequence(seq, app, {20000, 43, 1});
  CHECK_FALSE(a.clicks == d.clicks);
  // shot i does not depend on how many shots were run
  const auto e = run_sequence(seq, app, {500, 42, 1});
  std::vector<ClickRecord> prefix;
  for (const auto& k : a.clicks)
    if (k.shot < 500) prefix.push_back(k);
  CHECK(prefix == e.clicks);
}

TEST_CASE("click counts scale with shots", "[harness]") {
  Apparatus app = lossless();
  for (auto& m : app.modules) m.path = measured_path();
  app.modules[0].path.excitation_db = -3;
  app.modules[1].path.excitation_db = -3;
  const auto seq = build_hom_sequence(true);
  const double base = static_cast<double>(run_sequence(seq, app, {20000, 100, 1}).clicks.size()) / 20000;
  for (int k = 1; k <= 10; ++k) {
    const std::uint64_t shots = 2000 * k;
    const double n = static_cast<double>(run_sequence(seq, app, {shots, 200 + std::uint64_t(k), 1}).clicks.size());
    const double expect = base * shots;
    CHECK(std::abs(n - expect) < 5 * std::sqrt(expect));
  }
}

TEST_CASE("removing losses never reduces clicks", "[harness]") {
  Apparatus lossy = lossless();
  for (auto& m : lossy.modules) {
    m.path = measured_path();
    m.path.excitation_db = -3;
  }
  Apparatus clean = lossy;
  for (auto& m : clean.modules) m.path.losses.clear();
  const auto seq = build_hom_sequence(false);
  const auto a = run_sequence(seq, lossy, {20000, 9, 1});
  const auto b = run_sequence(seq, clean, {20000, 9, 1});
  CHECK(b.clicks.size() > a.clicks.size());
}

TEST_CASE("distinguishable stream realigns after a 500 ns shift", "[harness]") {
  Apparatus app = lossless();
  app.modules[1].emitter = app.modules[0].emitter;
  const auto seq = build_hom_sequence(false);
  const auto s = run_sequence(seq, app, {20000, 11, 1});
  std::vector<double> first, second;
  for (const auto& c : s.clicks) {
    const double t = s.in_shot_ns(c);
    (t < 1600 ? first : second).push_back(t < 1600 ? t : t - 500);
  }
  REQUIRE(first.size() > 1000);
  REQUIRE(second.size() > 1000);
  CHECK(oracle::ks_statistic(first, second) < oracle::ks_critical(first.size(), second.size()));
}

TEST_CASE("herald predicate and analytic herald rate", "[harness]") {
  const auto seq = build_bk_sequence();
  SECTION("early click alone does not herald") {
    TagStream s;
    s.shot_period_ns = seq.period_ns;
    s.shots = 1;
    s.clicks = {{0, Detector::D1, 1150000}};
    CHECK(find_heralds(s, seq).empty());
    s.clicks.push_back({0, Detector::D2, 3050000});
    const auto h = find_heralds(s, seq);
    REQUIRE(h.size() == 1);
    CHECK(h[0].early == Detector::D1);
    CHECK(h[0].late == Detector::D2);
  }
  SECTION("Monte Carlo herald probability matches the enumeration") {
    Apparatus app;
    app.modules[0].emitter = tcsim::emitter::tc1_params();
    app.modules[1].emitter = tcsim::emitter::tc2_params();
    for (auto& m : app.modules) {
      m.path.excitation_db = -3;
      m.init_fidelity = 0.983;
    }
    app.detectors = DetectorModel{0.9, 1e5, 30, true};
    const std::uint64_t shots = 100000;
    const auto s = run_sequence(seq, app, {shots, 21, 1});
    const double n = static_cast<double>(find_heralds(s, seq).size());
    const double expect = oracle::herald_probability(app, gate_length_ns) * shots;
    CHECK(std::abs(n - expect) < 5 * std::sqrt(expect));

    // measured loss chain: analytic herald rate at 11.8 kHz stays tiny
    for (auto& m : app.modules) m.path = measured_path();
    app.detectors->dark_rate_hz = 10;
    const double rate = oracle::herald_probability(app, gate_length_ns) * 11.8e3;
    CHECK(rate > 0);
    CHECK(rate < 0.1);
  }
}

TEST_CASE("tag stream export round trip", "[harness]") {
  Apparatus app = lossless();
  app.detectors->dark_rate_hz = 1e5;
  const auto seq = build_bk_sequence();
  const auto s = run_sequence(seq, app, {3000, 4, 1});
  REQUIRE(!s.clicks.empty());

  std::stringstream csv;
  write_csv(s, csv);
  CHECK(csv.str().rfind("shot,detector,timestamp_ns\n", 0) == 0);
  const auto back = read_csv(csv, s.shot_period_ns, s.shots);
  CHECK(back.clicks == s.clicks);

  std::stringstream bin;
  write_binary(s, bin);
  CHECK(bin.str().size() == 8 + 24 + 13 * s.clicks.size());
  const auto back2 = read_binary(bin);
  CHECK(back2.clicks == s.clicks);
  CHECK(back2.shots == s.shots);
  CHECK(back2.shot_period_ns == s.shot_period_ns);

  std::stringstream bad("shot,detector,timestamp_ns\n1,3,5.000\n");
  CHECK_THROWS_AS(read_csv(bad, 100), FormatError);
  std::stringstream junk("not a stream");
  CHECK_THROWS_AS(read_binary(junk), FormatError);

  TagStream one;
  one.clicks = {{7, Detector::D2, 1234567}};
  std::stringstream o;
  write_csv(one, o);
  CHECK(o.str() == "shot,detector,timestamp_ns\n7,2,1234.567\n");
}
