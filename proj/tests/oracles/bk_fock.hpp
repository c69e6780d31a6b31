#pragma once

// Brute-force two-round herald simulation. Keeps pure spin branches, writes
// each emission into explicit photonic modes (two arms, two internal modes),
// records every which-path event as an orthogonal environment label, sends
// the arms through a 50:50 beamsplitter and applies the threshold-detector
// POVM with dark counts in the Fock basis. Shares no code with the protocol
// module except the parameter struct.

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "tcsim/protocol.hpp"

namespace oracle {

class BkFock {
 public:
  using cx = std::complex<double>;
  using Vec = Eigen::Vector4cd;
  using Mat = Eigen::Matrix4cd;
  using Mat2 = Eigen::Matrix2cd;

  struct Result {
    int early, late;  // 1 or 2
    double probability;
    Mat rho;  // normalised, A = bit 0
  };

  explicit BkFock(const tcsim::protocol::BKModelParams& p) : p_(p) {
    s_ = std::sqrt(*p.mean_visibility);
    q_ = 1 - std::exp(-p.dark_rate_hz * p.gate_window_ns * 1e-9);
  }

  std::vector<Result> run() const {
    Mat rho = Mat::Zero();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const double w = (a ? 1 - p_.init_fidelity[0] : p_.init_fidelity[0]) *
                         (b ? 1 - p_.init_fidelity[1] : p_.init_fidelity[1]);
        rho(a + 2 * b, a + 2 * b) = w;
      }
    const double h = std::numbers::sqrt2 / 2;
    Mat2 half;
    half << h, -h, h, h;
    Mat2 flip;
    flip << 0, 1, 1, 0;

    rho = rotate(rho, half);
    std::vector<Result> out;
    for (int k1 : {1, 2}) {
      Mat r1 = rotate(round(rho, k1), flip);
      for (int k2 : {1, 2}) {
        Mat r2 = round(r1, k2);
        const double pr = r2.trace().real();
        out.push_back({k1, k2, pr, r2 / pr});
      }
    }
    return out;
  }

 private:
  struct Branch {
    double w;
    Vec psi;
  };

  static std::vector<Branch> branches(const Mat& rho) {
    Eigen::SelfAdjointEigenSolver<Mat> es(rho);
    std::vector<Branch> out;
    for (int i = 0; i < 4; ++i)
      if (es.eigenvalues()(i) > 1e-300) out.push_back({es.eigenvalues()(i), es.eigenvectors().col(i)});
    return out;
  }

  static Vec on(const Vec& v, int module, const Mat2& u) {
    Vec out = Vec::Zero();
    for (int i = 0; i < 4; ++i) {
      const int bit = (i >> module) & 1;
      for (int nb = 0; nb < 2; ++nb) {
        const int j = (i & ~(1 << module)) | (nb << module);
        out(j) += u(nb, bit) * v(i);
      }
    }
    return out;
  }

  Mat rotate(const Mat& rho, const Mat2& u0) const {
    Mat2 u = u0;
    std::vector<std::pair<double, Mat2>> errs{{1.0, Mat2::Identity()}};
    if (p_.gate_error == tcsim::protocol::GateErrorModel::coherent) {
      const double c = std::sqrt((3 * p_.gate_fidelity - 1) / 2);
      const double sn = std::sqrt(1 - c * c);
      Mat2 e;
      e << c, -sn, sn, c;
      u = e * u0;
    } else {
      const double pdep = 2 * (1 - p_.gate_fidelity);
      Mat2 x, y, z;
      x << 0, 1, 1, 0;
      y << 0, cx(0, -1), cx(0, 1), 0;
      z << 1, 0, 0, -1;
      errs = {{1 - 3 * pdep / 4, Mat2::Identity()}, {pdep / 4, x}, {pdep / 4, y}, {pdep / 4, z}};
    }
    Mat out = Mat::Zero();
    for (const auto& b : branches(rho)) {
      const Vec v = on(on(b.psi, 0, u), 1, u);
      for (const auto& [wa, ea] : errs)
        for (const auto& [wb, eb] : errs) {
          const Vec r = on(on(v, 0, ea), 1, eb);
          out += b.w * wa * wb * r * r.adjoint();
        }
    }
    return out;
  }

  // environment labels per module
  enum Env { none, tagged, lost, lost_tagged, psb, nonrad };

  // one branch of a round for a single module
  struct Emission {
    int env;
    int spin;
    double amp;
    bool photon;
  };

  std::vector<Emission> emit(int module, int spin) const {
    if (spin == 1) return {{none, 1, 1.0, false}};
    const auto& e = p_.emitters[module];
    const double pe = p_.excitation_probability[module];
    const double eta = p_.detection_efficiency[module];
    const double z = 1 - e.br_radiative - e.br_nonradiative;
    const double zpl = std::sqrt(pe * z);
    const double clean = std::sqrt(1 - e.p_double), dbl = std::sqrt(e.p_double);
    return {{none, 0, std::sqrt(1 - pe), false},
            {none, 0, zpl * clean * std::sqrt(eta), true},
            {tagged, 0, zpl * dbl * std::sqrt(eta), true},
            {lost, 0, zpl * clean * std::sqrt(1 - eta), false},
            {lost_tagged, 0, zpl * dbl * std::sqrt(1 - eta), false},
            {psb, 1, std::sqrt(pe * e.br_radiative), false},
            {nonrad, 0, std::sqrt(pe * e.br_nonradiative), false}};
  }

  // output mode index: port * 2 + internal; port 0 = D1
  std::vector<std::pair<int, double>> arm_modes(int module) const {
    const double h = std::numbers::sqrt2 / 2;
    if (module == 0) return {{0, h}, {2, h}};
    const double s1 = std::sqrt(1 - s_ * s_);
    return {{0, h * s_}, {1, h * s1}, {2, -h * s_}, {3, -h * s1}};
  }

  Mat round(const Mat& rho, int k) const {
    using Key = std::tuple<int, int, std::array<int, 4>>;
    Mat out = Mat::Zero();
    const int mine = k == 1 ? 0 : 2, other = k == 1 ? 2 : 0;
    for (const auto& br : branches(rho)) {
      std::map<Key, Vec> field;
      for (int i = 0; i < 4; ++i) {
        if (std::abs(br.psi(i)) == 0) continue;
        const int sa = i & 1, sb = (i >> 1) & 1;
        for (const auto& ea : emit(0, sa))
          for (const auto& eb : emit(1, sb)) {
            const cx amp = std::sqrt(br.w) * br.psi(i) * ea.amp * eb.amp;
            if (amp == cx(0)) continue;
            const int j = ea.spin + 2 * eb.spin;
            // expand the photons over the output modes
            std::vector<std::pair<std::array<int, 4>, cx>> terms{{{0, 0, 0, 0}, amp}};
            for (int m = 0; m < 2; ++m) {
              if (!(m == 0 ? ea.photon : eb.photon)) continue;
              std::vector<std::pair<std::array<int, 4>, cx>> next;
              for (const auto& [occ, a] : terms)
                for (const auto& [mode, c] : arm_modes(m)) {
                  auto o = occ;
                  // a^dagger |n> = sqrt(n+1) |n+1>
                  const double boson = std::sqrt(o[mode] + 1.0);
                  o[mode] += 1;
                  next.push_back({o, a * c * boson});
                }
              terms = std::move(next);
            }
            for (const auto& [occ, a] : terms) {
              auto& v = field.try_emplace(Key{ea.env, eb.env, occ}, Vec::Zero()).first->second;
              v(j) += a;
            }
          }
      }
      for (const auto& [key, v] : field) {
        const auto& occ = std::get<2>(key);
        const int n_mine = occ[mine] + occ[mine + 1];
        const int n_other = occ[other] + occ[other + 1];
        if (n_other > 0) continue;
        const double w = n_mine > 0 ? 1 - q_ : q_ * (1 - q_);
        out += w * v * v.adjoint();
      }
    }
    return out;
  }

  tcsim::protocol::BKModelParams p_;
  double s_;
  double q_;
};

}  // namespace oracle
