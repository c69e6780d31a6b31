#include "tcsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <ceres/ceres.h>
#include <fmt/format.h>

namespace tcsim::analysis {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw AnalysisError(msg);
}

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------
// Coincidences

std::uint64_t CoincidenceHistogram::within(double window_ns) const {
  return static_cast<std::uint64_t>(std::count_if(
      delays_ns.begin(), delays_ns.end(), [&](double d) { return std::abs(d) <= window_ns; }));
}

CoincidenceHistogram coincidences(const harness::TagStream& stream, const CoincidenceOptions& opt) {
  require(opt.window_ns > 0, "coincidence window must be positive");
  require(opt.bin_width_ns > 0, "bin width must be positive");
  require(stream.shot_period_ns > 0 || stream.clicks.empty(), "stream has no shot period");

  CoincidenceHistogram h;
  h.bin_width_ns = opt.bin_width_ns;
  const auto half = static_cast<long>(std::floor(opt.window_ns / opt.bin_width_ns + 0.5));
  for (long k = -half; k <= half; ++k) h.centers_ns.push_back(k * opt.bin_width_ns);
  h.counts.assign(h.centers_ns.size(), 0);

  auto clicks = stream.clicks;
  std::stable_sort(clicks.begin(), clicks.end(),
                   [](const auto& a, const auto& b) { return a.shot < b.shot; });

  std::vector<double> d1, d2;
  std::size_t i = 0;
  while (i < clicks.size()) {
    const auto shot = clicks[i].shot;
    d1.clear();
    d2.clear();
    for (; i < clicks.size() && clicks[i].shot == shot; ++i) {
      const auto& c = clicks[i];
      double t = stream.in_shot_ns(c);
      if (opt.realign_after_ns) {
        if (t >= *opt.realign_after_ns) t -= opt.realign_shift_ns;
      } else if (c.detector == harness::Detector::D2) {
        t -= opt.realign_shift_ns;
      }
      (c.detector == harness::Detector::D1 ? d1 : d2).push_back(t);
    }
    for (double a : d1)
      for (double b : d2) {
        const double d = b - a;
        if (std::abs(d) > opt.window_ns) continue;
        h.delays_ns.push_back(d);
        const auto k = static_cast<long>(std::floor(d / opt.bin_width_ns + 0.5));
        if (k >= -half && k <= half) ++h.counts[static_cast<std::size_t>(k + half)];
      }
  }
  h.empty = h.delays_ns.empty();
  return h;
}

VisibilityEstimate hom_visibility(const CoincidenceHistogram& indist,
                                  const CoincidenceHistogram& dist, double window_ns) {
  require(window_ns > 0, "visibility window must be positive");
  const auto ni = indist.within(window_ns);
  const auto nd = dist.within(window_ns);
  require(nd > 0, "no distinguishable coincidences inside the window");
  const double r = static_cast<double>(ni) / static_cast<double>(nd);
  const double err = r * std::sqrt(1.0 / std::max<std::uint64_t>(ni, 1) + 1.0 / nd);
  return {1 - r, err, ni, nd};
}

// ---------------------------------------------------------------------------
// Fit models

const char* to_string(FitModel m) {
  switch (m) {
    case FitModel::exp_decay: return "exp_decay";
    case FitModel::rabi: return "rabi";
    case FitModel::ramsey: return "ramsey";
    case FitModel::hahn: return "hahn";
    case FitModel::pump_decay: return "pump_decay";
  }
  return "?";
}

std::vector<std::string> parameter_names(FitModel m) {
  switch (m) {
    case FitModel::exp_decay: return {"A", "tau", "c"};
    case FitModel::rabi: return {"A", "omega", "phi", "T_R", "c"};
    case FitModel::ramsey: return {"A", "delta", "phi", "T2", "n", "c"};
    case FitModel::hahn: return {"A", "T2", "n", "c"};
    case FitModel::pump_decay: return {"A", "r", "c"};
  }
  return {};
}

namespace {

template <typename T>
T stretched(double t, const T& width, const T& n) {
  using std::exp, std::pow;
  if (t <= 0) return T(1.0);
  return exp(-pow(T(t) / width, n));
}

template <typename T>
T model_value(FitModel m, const T* p, double t) {
  using std::cos, std::exp, std::pow;
  switch (m) {
    case FitModel::exp_decay: return p[0] * exp(-T(t) / p[1]) + p[2];
    case FitModel::rabi: return p[0] * cos(p[1] * t + p[2]) * exp(-T(t) / p[3]) + p[4];
    case FitModel::ramsey:
      return p[0] * cos(2 * std::numbers::pi * p[1] * t + p[2]) * stretched(t, p[3], p[4]) + p[5];
    case FitModel::hahn: return p[0] * stretched(t, p[1], p[2]) + p[3];
    case FitModel::pump_decay: return p[0] * pow(p[1], t) + p[2];
  }
  return T(0.0);
}

struct Residuals {
  FitModel model;
  const std::vector<double>* t;
  const std::vector<double>* y;
  const std::vector<double>* w;

  template <typename T>
  bool operator()(T const* const* params, T* res) const {
    for (std::size_t i = 0; i < t->size(); ++i)
      res[i] = (model_value(model, params[0], (*t)[i]) - (*y)[i]) * (*w)[i];
    return true;
  }
};

struct Bound {
  int index;
  double lo, hi;
};

std::vector<Bound> bounds(FitModel m, double span) {
  const double tiny = 1e-9 * span;
  const double inf = std::numeric_limits<double>::infinity();
  switch (m) {
    case FitModel::exp_decay: return {{1, tiny, inf}};
    case FitModel::rabi: return {{3, tiny, inf}};
    case FitModel::ramsey: return {{1, 0.0, inf}, {3, tiny, inf}, {4, 0.5, 3.0}};
    case FitModel::hahn: return {{1, tiny, inf}, {2, 0.5, 3.0}};
    case FitModel::pump_decay: return {{1, 1e-9, 2.0}};
  }
  return {};
}

struct Series {
  std::vector<double> t, y;
};

Series sorted(const std::vector<double>& t, const std::vector<double>& y) {
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return t[a] < t[b]; });
  Series s;
  for (auto i : idx) {
    s.t.push_back(t[i]);
    s.y.push_back(y[i]);
  }
  return s;
}

double tail_mean(const Series& s) {
  const std::size_t n = std::max<std::size_t>(1, s.y.size() / 10);
  return std::accumulate(s.y.end() - static_cast<long>(n), s.y.end(), 0.0) / static_cast<double>(n);
}

// slope and intercept of ln(y - c) against t, using points well above c
std::pair<double, double> log_linear(const Series& s, double c) {
  double peak = 0;
  for (double v : s.y) peak = std::max(peak, v - c);
  double sw = 0, st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double d = s.y[i] - c;
    if (!(d > 0.1 * peak)) continue;
    const double l = std::log(d);
    const double w = d;  // counts-like weighting
    sw += w;
    st += w * s.t[i];
    sl += w * l;
    stt += w * s.t[i] * s.t[i];
    stl += w * s.t[i] * l;
  }
  const double den = sw * stt - st * st;
  if (!(sw > 0) || std::abs(den) < 1e-300) return {0.0, std::log(std::max(peak, 1e-300))};
  const double slope = (sw * stl - st * sl) / den;
  return {slope, (sl - slope * st) / sw};
}

// 1/e crossing of (y - c) relative to the first point
double efold_time(const Series& s, double c) {
  const double y0 = s.y.front() - c;
  for (std::size_t i = 1; i < s.t.size(); ++i)
    if ((s.y[i] - c) < y0 / std::numbers::e) return s.t[i] - s.t.front();
  return s.t.back() - s.t.front();
}

// dominant frequency (cycles per unit t) and the phase at t = 0
std::pair<double, double> dft_peak(const Series& s) {
  const double mean = std::accumulate(s.y.begin(), s.y.end(), 0.0) / static_cast<double>(s.y.size());
  const double span = s.t.back() - s.t.front();
  const double nyquist = 0.5 * static_cast<double>(s.t.size() - 1) / span;
  const double df = 1.0 / (8 * span);
  double best = -1, f_best = df, phi = 0;
  for (double f = df; f <= nyquist; f += df) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < s.t.size(); ++i)
      acc += (s.y[i] - mean) * std::polar(1.0, -2 * std::numbers::pi * f * s.t[i]);
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      f_best = f;
      phi = std::arg(acc);
    }
  }
  return {f_best, phi};
}

std::vector<std::vector<double>> initial_guesses(FitModel m, const Series& s) {
  const double span = s.t.back() - s.t.front();
  const auto [ymin, ymax] = std::minmax_element(s.y.begin(), s.y.end());
  const double c0 = tail_mean(s);
  std::vector<std::vector<double>> out;
  switch (m) {
    case FitModel::exp_decay: {
      for (double c : {c0, 0.0}) {
        const auto [slope, icpt] = log_linear(s, c);
        const double tau = slope < 0 ? -1 / slope : span / 3;
        out.push_back({std::exp(icpt), tau, c});
      }
      break;
    }
    case FitModel::pump_decay: {
      for (double c : {c0, 0.0}) {
        const auto [slope, icpt] = log_linear(s, c);
        out.push_back({std::exp(icpt), std::clamp(std::exp(slope), 1e-6, 1.5), c});
      }
      break;
    }
    case FitModel::hahn: {
      for (double c : {c0, 0.0}) {
        const double a = s.y.front() - c;
        const double te = std::max(efold_time(s, c), 1e-3 * span);
        for (double n : {1.0, 2.0}) out.push_back({a, te, n, c});
      }
      break;
    }
    case FitModel::ramsey:
    case FitModel::rabi: {
      const auto [f, phi] = dft_peak(s);
      const double mean = std::accumulate(s.y.begin(), s.y.end(), 0.0) / static_cast<double>(s.y.size());
      const double a = 0.5 * (*ymax - *ymin);
      for (double width : {span / 2, span / 5, 2 * span}) {
        if (m == FitModel::rabi) {
          out.push_back({a, 2 * std::numbers::pi * f, phi, width, mean});
        } else {
          for (double n : {1.0, 2.0}) out.push_back({a, f, phi, width, n, mean});
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace

double evaluate(FitModel m, const std::vector<double>& params, double t) {
  require(params.size() == parameter_names(m).size(), "wrong number of fit parameters");
  return model_value(m, params.data(), t);
}

double FitResult::param(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return params[i];
  throw AnalysisError(fmt::format("fit has no parameter '{}'", name));
}

double FitResult::error(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return std_errors[i];
  throw AnalysisError(fmt::format("fit has no parameter '{}'", name));
}

FitResult fit(FitModel model, const std::vector<double>& t, const std::vector<double>& y,
              const FitOptions& opt) {
  const auto names = parameter_names(model);
  const std::size_t np = names.size();
  require(t.size() == y.size(), "t and y differ in length");
  require(t.size() >= 3 * np,
          fmt::format("{} needs at least {} points, got {}", to_string(model), 3 * np, t.size()));
  require(opt.sigma.empty() || opt.sigma.size() == y.size(), "sigma differs in length from y");
  require(opt.initial.empty() || opt.initial.size() == np, "wrong number of initial values");
  for (double v : t) require(std::isfinite(v), "t contains non-finite values");
  for (double v : y) require(std::isfinite(v), "y contains non-finite values");

  const Series s = sorted(t, y);
  const double span = s.t.back() - s.t.front();
  require(span > 0, "t values span no range");

  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double sg = opt.sigma.empty() ? std::sqrt(std::max(y[i], 1.0)) : opt.sigma[i];
    require(sg > 0, "sigma must be positive");
    w[i] = 1.0 / sg;
  }

  auto starts = opt.initial.empty() ? initial_guesses(model, s) : std::vector<std::vector<double>>{opt.initial};
  const auto bnds = bounds(model, span);

  std::vector<double> best;
  double best_cost = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (auto& x : starts) {
    for (const auto& b : bnds) x[b.index] = std::clamp(x[b.index], b.lo, b.hi);
    ceres::Problem problem;
    auto* cost = new ceres::DynamicAutoDiffCostFunction<Residuals, 8>(new Residuals{model, &t, &y, &w});
    cost->AddParameterBlock(static_cast<int>(np));
    cost->SetNumResiduals(static_cast<int>(t.size()));
    problem.AddResidualBlock(cost, nullptr, x.data());
    for (const auto& b : bnds) {
      if (std::isfinite(b.lo)) problem.SetParameterLowerBound(x.data(), b.index, b.lo);
      if (std::isfinite(b.hi)) problem.SetParameterUpperBound(x.data(), b.index, b.hi);
    }
    ceres::Solver::Options so;
    so.linear_solver_type = ceres::DENSE_QR;
    so.max_num_iterations = opt.max_iterations;
    so.function_tolerance = 1e-12;
    so.gradient_tolerance = 1e-14;
    so.parameter_tolerance = 1e-12;
    so.logging_type = ceres::SILENT;
    ceres::Solver::Summary summary;
    ceres::Solve(so, &problem, &summary);
    if (summary.termination_type != ceres::CONVERGENCE) continue;
    any_converged = true;
    if (summary.final_cost < best_cost) {
      best_cost = summary.final_cost;
      best = x;
    }
  }
  if (!any_converged) throw FitError(fmt::format("{} fit did not converge", to_string(model)));

  FitResult r;
  r.model = model;
  r.names = names;
  r.params = best;
  r.chi2 = 2 * best_cost;
  r.dof = static_cast<int>(t.size() - np);
  r.t_min = s.t.front();
  r.t_max = s.t.back();

  // Jacobian of the weighted residuals at the optimum
  Residuals res{model, &t, &y, &w};
  Eigen::MatrixXd jac(t.size(), np);
  {
    using Jet = ceres::Jet<double, 8>;
    std::vector<Jet> p(np);
    for (std::size_t k = 0; k < np; ++k) p[k] = Jet(best[k], static_cast<int>(k));
    std::vector<Jet> out(t.size());
    const Jet* blocks[] = {p.data()};
    res(blocks, out.data());
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t k = 0; k < np; ++k) jac(static_cast<long>(i), static_cast<long>(k)) = out[i].v[static_cast<long>(k)];
  }
  const Eigen::MatrixXd normal = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
  const double emax = es.eigenvalues().cwiseAbs().maxCoeff();
  r.degenerate = !(es.eigenvalues().minCoeff() > 1e-12 * emax) || !(emax > 0);
  r.covariance.assign(np, std::vector<double>(np, nan));
  r.std_errors.assign(np, nan);
  if (!r.degenerate) {
    const Eigen::MatrixXd cov = normal.inverse();
    for (std::size_t a = 0; a < np; ++a) {
      for (std::size_t b = 0; b < np; ++b) r.covariance[a][b] = cov(static_cast<long>(a), static_cast<long>(b));
      r.std_errors[a] = std::sqrt(std::max(0.0, cov(static_cast<long>(a), static_cast<long>(a))));
    }
  }
  return r;
}

double gate_fidelity_from_envelope(double envelope) {
  require(envelope >= 0 && envelope <= 1, "envelope must be in [0, 1]");
  return 0.5 * (1 + envelope);
}

double gate_fidelity_from_envelope(const FitResult& f, double t_gate) {
  require(f.model == FitModel::ramsey || f.model == FitModel::hahn,
          "gate fidelity needs a ramsey or hahn envelope");
  require(t_gate >= 0, "gate duration must be >= 0");
  require(t_gate <= 2 * f.t_max,
          fmt::format("gate duration {} exceeds twice the fitted range {}", t_gate, f.t_max));
  const double env = stretched(t_gate, f.param("T2"), f.param("n"));
  return gate_fidelity_from_envelope(env);
}

// ---------------------------------------------------------------------------
// Single-shot readout

void SsroParams::validate() const {
  require(bright_rate >= 0 && dark_rate >= 0, "photon rates must be >= 0");
  require(flip_probability >= 0 && flip_probability <= 1, "flip_probability must be in [0, 1]");
  require(rounds > 0, "rounds must be positive");
  require(map_fidelity >= 0 && map_fidelity <= 1, "map_fidelity must be in [0, 1]");
}

SsroParams ssro_tc1() { return {1.2, 0.2, 0.02, 12, 0.984}; }
SsroParams ssro_tc2() { return {6.0, 0.3, 0.02, 12, 0.984}; }

namespace {

int readout_shot(const SsroParams& p, bool bright, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::poisson_distribution<int> pb(p.bright_rate), pd(p.dark_rate);
  int total = 0;
  for (int r = 0; r < p.rounds; ++r) {
    const bool lit = bright && u(rng) < p.map_fidelity;
    total += lit ? pb(rng) : pd(rng);
    if (u(rng) < p.flip_probability) bright = !bright;
  }
  return total;
}

}  // namespace

SsroData ssro_simulate(const SsroParams& p, std::uint64_t shots, std::uint64_t seed) {
  p.validate();
  require(shots > 0, "shots must be positive");
  SsroData d;
  d.bright.reserve(shots);
  d.dark.reserve(shots);
  for (std::uint64_t i = 0; i < shots; ++i) {
    d.bright.push_back(readout_shot(p, true, harness::shot_seed(seed, 2 * i)));
    d.dark.push_back(readout_shot(p, false, harness::shot_seed(seed, 2 * i + 1)));
  }
  return d;
}

double ssro_spam(const std::vector<int>& bright, const std::vector<int>& dark, int threshold) {
  require(!bright.empty() && !dark.empty(), "readout series must be non-empty");
  const auto hi = std::count_if(bright.begin(), bright.end(), [&](int n) { return n >= threshold; });
  const auto lo = std::count_if(dark.begin(), dark.end(), [&](int n) { return n < threshold; });
  return 0.5 * (static_cast<double>(hi) / static_cast<double>(bright.size()) +
                static_cast<double>(lo) / static_cast<double>(dark.size()));
}

SsroThreshold ssro_threshold(const std::vector<int>& bright, const std::vector<int>& dark) {
  require(!bright.empty() && !dark.empty(), "readout series must be non-empty");
  const int lo = std::min(*std::min_element(bright.begin(), bright.end()),
                          *std::min_element(dark.begin(), dark.end()));
  const int hi = std::max(*std::max_element(bright.begin(), bright.end()),
                          *std::max_element(dark.begin(), dark.end()));
  require(lo >= 0, "photon counts must be >= 0");

  std::vector<std::uint64_t> hb(static_cast<std::size_t>(hi) + 2, 0), hd(hb.size(), 0);
  for (int n : bright) ++hb[static_cast<std::size_t>(n)];
  for (int n : dark) ++hd[static_cast<std::size_t>(n)];

  SsroThreshold out{0, -1, {}};
  const double nb = static_cast<double>(bright.size()), nd = static_cast<double>(dark.size());
  double below_b = 0, below_d = 0;
  for (int th = 0; th <= hi + 1; ++th) {
    const double spam = 0.5 * ((nb - below_b) / nb + below_d / nd);
    out.curve.push_back(spam);
    if (spam > out.spam) {
      out.spam = spam;
      out.threshold = th;
    }
    below_b += static_cast<double>(hb[static_cast<std::size_t>(th)]);
    below_d += static_cast<double>(hd[static_cast<std::size_t>(th)]);
  }
  return out;
}

}  // namespace tcsim::analysis
