#include "tcsim/forecast.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace tcsim::forecast {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ForecastError(msg);
}

}  // namespace

void StepBudget::validate() const {
  require(!steps.empty(), "step budget is empty");
  for (const auto& s : steps) {
    require(s.time_ns > 0, fmt::format("step '{}': time_ns must be positive", s.label));
    require(s.count >= 1, fmt::format("step '{}': count must be >= 1", s.label));
  }
}

void EfficiencyBudget::validate() const {
  require(!elements.empty(), "efficiency budget is empty");
  for (const auto& e : elements) {
    require(e.efficiency > 0 && e.efficiency <= 1,
            fmt::format("element '{}': efficiency must be in (0, 1]", e.label));
    require(e.count >= 1, fmt::format("element '{}': count must be >= 1", e.label));
  }
}

StepBudget minimum_step_budget() {
  return {{{"Initialization", 100, 1},
           {"Excitation", 1, 2},
           {"Detection", 30, 2},
           {"Pi pulse", 10, 1},
           {"Signal latency", 10, 2},
           {"Feedback", 100, 1}}};
}

EfficiencyBudget projected_efficiency_budget() {
  return {{{"BK intrinsic", 0.5, 1},
           {"Excitation", 0.99, 2},
           {"Emission", 0.99, 2},
           {"Detector", 0.99, 2},
           {"Chip-fibre", 0.97, 2}}};
}

RepetitionRate repetition_rate(const StepBudget& b) {
  b.validate();
  double total = 0;
  for (const auto& s : b.steps) total += s.time_ns * s.count;
  return {total, 1e9 / total};
}

double success_probability(const EfficiencyBudget& b) {
  b.validate();
  double p = 1;
  for (const auto& e : b.elements) p *= std::pow(e.efficiency, e.count);
  return p;
}

void ProjectionParams::validate() const {
  require(lifetime_ns > 0, "lifetime_ns must be positive");
  require(intrinsic_dephasing_khz >= 0, "intrinsic_dephasing_khz must be >= 0");
  require(slow_diffusion_mhz >= 0, "slow_diffusion_mhz must be >= 0");
  require(pulse_width_ps >= 0, "pulse_width_ps must be >= 0");
  if (p_double) require(*p_double >= 0 && *p_double < 1, "p_double must be in [0, 1)");
  require(field_mt >= 0, "field_mt must be >= 0");
  require(acquisition_window_ns > 0, "acquisition_window_ns must be positive");
  require(grid_step_ns > 0 && grid_step_ns <= acquisition_window_ns / 10,
          "grid_step_ns must be positive and at most a tenth of the window");
}

double ProjectionParams::double_excitation() const {
  if (p_double) return *p_double;
  return pulse_width_ps * 1e-3 / (4 * lifetime_ns);
}

emitter::EmitterParams ProjectionParams::emitter() const {
  emitter::EmitterParams e = emitter::projected_params();
  e.lifetime_ns = lifetime_ns;
  e.pure_dephasing_mhz = intrinsic_dephasing_khz * 1e-3;
  e.diffusion_sigma_mhz = slow_diffusion_mhz;
  e.excitation_bandwidth_mhz = slow_diffusion_mhz;
  e.p_double = 0;
  return e;
}

std::vector<CurvePoint> fidelity_rate_curve(const ProjectionParams& p, const StepBudget& sb,
                                            const EfficiencyBudget& eb,
                                            const std::vector<double>& fractions) {
  p.validate();
  require(!fractions.empty(), "no coincidence fractions requested");
  for (double f : fractions)
    require(f > 0 && f <= 1, fmt::format("coincidence fraction {} is outside (0, 1]", f));

  const double rate = repetition_rate(sb).rate_hz * success_probability(eb);
  const double pd = p.double_excitation();
  const double L = p.acquisition_window_ns;
  const double steps = std::round(L / p.grid_step_ns);
  const emitter::TimeGrid grid{L / steps, L};
  const auto e = p.emitter();
  const auto traces = emitter::two_photon_correlations(e, e, grid, L);
  const auto capture = [&](double t) { return emitter::timebin_capture(traces.distinguishable, t); };

  std::vector<CurvePoint> out;
  for (double f : fractions) {
    double lo = 0, hi = L;
    if (capture(hi) < f)
      throw ForecastError(fmt::format("fraction {} is not reachable within the {} ns window", f, L));
    while (hi - lo > 1e-3) {
      const double mid = 0.5 * (lo + hi);
      (capture(mid) < f ? lo : hi) = mid;
    }
    const double t = hi;
    const double v = std::clamp(
        emitter::visibility(traces.indistinguishable, traces.distinguishable, t), 0.0, 1.0);
    const double fid = std::min(0.5 * (1 + v), 1.0) * (1 - pd / 2);
    out.push_back({f, t, v, fid, rate * f});
  }
  return out;
}

}  // namespace tcsim::forecast
