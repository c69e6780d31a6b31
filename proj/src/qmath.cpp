#include "tcsim/qmath.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace tcsim::qmath {

namespace {

using Index = Eigen::Index;

bool bit(Index value, int position) { return ((value >> position) & 1) != 0; }

void check_targets(std::span<const int> targets, int register_qubits) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= register_qubits) {
      throw QmathError(fmt::format("qubit index {} out of range for a {}-qubit register",
                                   targets[i], register_qubits));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (targets[i] == targets[j]) {
        throw QmathError(fmt::format("qubit index {} repeated", targets[i]));
      }
    }
  }
}

// Sub-index formed by the bits of `full` at `targets`.
Index gather(Index full, std::span<const int> targets) {
  Index sub = 0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (bit(full, targets[k])) sub |= Index{1} << k;
  }
  return sub;
}

Index mask_of(std::span<const int> targets) {
  Index m = 0;
  for (int t : targets) m |= Index{1} << t;
  return m;
}

Matrix pauli(char which) {
  Matrix m(2, 2);
  switch (which) {
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, cplx(0, -1), cplx(0, 1), 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default: m = Matrix::Identity(2, 2);
  }
  return m;
}

}  // namespace

int qubits_for_dim(Index dim) {
  for (int n = 1; n <= max_qubits; ++n) {
    if (dim == (Index{1} << n)) return n;
  }
  throw QmathError(fmt::format("dimension {} is not 2^n with 1 <= n <= {}", dim, max_qubits));
}

// ---------------------------------------------------------------------------
// DensityMatrix

void check_density(const Matrix& m) {
  if (m.rows() != m.cols()) throw QmathError("density matrix must be square");
  qubits_for_dim(m.rows());
  const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (herm > hermitian_tol) {
    throw QmathError(fmt::format("density matrix not Hermitian (deviation {:.3e})", herm));
  }
  const double tr = m.trace().real();
  if (std::abs(tr - 1.0) > trace_tol) {
    throw QmathError(fmt::format("density matrix trace {:.15f} != 1", tr));
  }
  const Matrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -positivity_tol) {
    throw QmathError(fmt::format("density matrix has negative eigenvalue {:.3e}", lo));
  }
}

DensityMatrix::DensityMatrix(Matrix m) : m_(std::move(m)), qubits_(qubits_for_dim(m_.rows())) {}

DensityMatrix DensityMatrix::from_matrix(Matrix m) {
  check_density(m);
  return DensityMatrix(std::move(m));
}

DensityMatrix DensityMatrix::from_pure(const Vector& psi) {
  qubits_for_dim(psi.size());
  const double norm = psi.norm();
  if (std::abs(norm - 1.0) > 1e-10) {
    throw QmathError(fmt::format("state vector not normalised (norm {:.12f})", norm));
  }
  const Vector v = psi / norm;
  return from_matrix(v * v.adjoint());
}

DensityMatrix DensityMatrix::basis_state(int qubits, Index index) {
  return from_pure(states::ket(qubits, index));
}

DensityMatrix DensityMatrix::maximally_mixed(int qubits) {
  const Index d = Index{1} << qubits;
  return from_matrix(Matrix::Identity(d, d) / static_cast<double>(d));
}

DensityMatrix DensityMatrix::tensor(const DensityMatrix& other) const {
  if (qubits_ + other.qubits_ > max_qubits) {
    throw QmathError(fmt::format("register of {} qubits exceeds the {}-qubit cap",
                                 qubits_ + other.qubits_, max_qubits));
  }
  // little endian: this occupies the low bits, so the Kronecker product is
  // other (x) this in matrix terms.
  const Index da = dim();
  const Index db = other.dim();
  Matrix out(da * db, da * db);
  for (Index r = 0; r < da * db; ++r) {
    for (Index c = 0; c < da * db; ++c) {
      out(r, c) = m_(r % da, c % da) * other.m_(r / da, c / da);
    }
  }
  return from_matrix(std::move(out));
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m_ + m_.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// KrausChannel

KrausChannel::KrausChannel(std::vector<Matrix> operators, Kind kind)
    : ops_(std::move(operators)), kind_(kind) {
  if (ops_.empty()) throw QmathError("Kraus channel needs at least one operator");
  const Index d = ops_.front().rows();
  qubits_ = qubits_for_dim(d);
  Matrix sum = Matrix::Zero(d, d);
  for (const auto& k : ops_) {
    if (k.rows() != d || k.cols() != d) {
      throw QmathError("Kraus operators must share one square dimension");
    }
    sum += k.adjoint() * k;
  }
  const Matrix id = Matrix::Identity(d, d);
  if (kind_ == Kind::trace_preserving) {
    const double dev = (sum - id).cwiseAbs().maxCoeff();
    if (dev > channel_tol) {
      throw QmathError(fmt::format("channel is not trace preserving (deviation {:.3e})", dev));
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sum + sum.adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().maxCoeff() > 1.0 + channel_tol) {
      throw QmathError("channel is not trace non-increasing");
    }
  }
}

KrausChannel KrausChannel::identity(int qubits) {
  const Index d = Index{1} << qubits;
  return KrausChannel({Matrix::Identity(d, d)});
}

KrausChannel KrausChannel::unitary(const Matrix& u) {
  if (!is_unitary(u)) throw QmathError("operator is not unitary");
  return KrausChannel({u});
}

KrausChannel KrausChannel::depolarizing(double p) {
  if (p < 0.0 || p > 1.0) throw QmathError("depolarizing probability outside [0,1]");
  return KrausChannel({std::sqrt(1.0 - 0.75 * p) * pauli('I'), std::sqrt(p / 4) * pauli('X'),
                       std::sqrt(p / 4) * pauli('Y'), std::sqrt(p / 4) * pauli('Z')});
}

KrausChannel KrausChannel::bit_flip(double p) {
  if (p < 0.0 || p > 1.0) throw QmathError("flip probability outside [0,1]");
  return KrausChannel({std::sqrt(1.0 - p) * pauli('I'), std::sqrt(p) * pauli('X')});
}

KrausChannel KrausChannel::phase_flip(double p) {
  if (p < 0.0 || p > 1.0) throw QmathError("flip probability outside [0,1]");
  return KrausChannel({std::sqrt(1.0 - p) * pauli('I'), std::sqrt(p) * pauli('Z')});
}

KrausChannel KrausChannel::then(const KrausChannel& next) const {
  if (next.qubits_ != qubits_) throw QmathError("cannot compose channels of different width");
  std::vector<Matrix> ops;
  ops.reserve(ops_.size() * next.ops_.size());
  for (const auto& b : next.ops_) {
    for (const auto& a : ops_) ops.push_back(b * a);
  }
  const Kind k = (trace_preserving() && next.trace_preserving()) ? Kind::trace_preserving
                                                                  : Kind::trace_decreasing;
  return KrausChannel(std::move(ops), k);
}

// ---------------------------------------------------------------------------
// Register operations

Matrix embed(const Matrix& op, std::span<const int> targets, int register_qubits) {
  check_targets(targets, register_qubits);
  if (op.rows() != (Index{1} << targets.size()) || op.cols() != op.rows()) {
    throw QmathError(fmt::format("operator of dimension {} does not match {} target qubits",
                                 op.rows(), targets.size()));
  }
  const Index d = Index{1} << register_qubits;
  const Index mask = mask_of(targets);
  Matrix full = Matrix::Zero(d, d);
  for (Index r = 0; r < d; ++r) {
    for (Index c = 0; c < d; ++c) {
      if ((r & ~mask) != (c & ~mask)) continue;
      full(r, c) = op(gather(r, targets), gather(c, targets));
    }
  }
  return full;
}

Matrix apply_kraus(const Matrix& rho, const KrausChannel& ch, std::span<const int> targets) {
  const int n = qubits_for_dim(rho.rows());
  if (static_cast<int>(targets.size()) != ch.qubits()) {
    throw QmathError(fmt::format("{}-qubit channel applied to {} targets", ch.qubits(),
                                 targets.size()));
  }
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (const auto& k : ch.operators()) {
    const Matrix full = embed(k, targets, n);
    out.noalias() += full * rho * full.adjoint();
  }
  return out;
}

DensityMatrix apply_channel(const DensityMatrix& rho, const KrausChannel& ch,
                            std::span<const int> targets) {
  if (!ch.trace_preserving()) {
    throw QmathError("trace-decreasing channel requires apply_herald");
  }
  return DensityMatrix::from_matrix(apply_kraus(rho.matrix(), ch, targets));
}

Heralded apply_herald(const DensityMatrix& rho, const KrausChannel& branch,
                      std::span<const int> targets) {
  Matrix out = apply_kraus(rho.matrix(), branch, targets);
  const double p = out.trace().real();
  if (!(p > 0.0)) throw QmathError("herald branch has zero probability");
  out /= p;
  return {DensityMatrix::from_matrix(std::move(out)), p};
}

Matrix partial_trace(const Matrix& rho, std::span<const int> keep) {
  const int n = qubits_for_dim(rho.rows());
  if (keep.empty()) throw QmathError("partial trace must keep at least one qubit");
  check_targets(keep, n);
  std::vector<int> traced;
  for (int q = 0; q < n; ++q) {
    if (std::find(keep.begin(), keep.end(), q) == keep.end()) traced.push_back(q);
  }
  const Index dk = Index{1} << keep.size();
  const Index dt = Index{1} << traced.size();
  auto compose = [&](Index kept, Index tr) {
    Index full = 0;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      if (bit(kept, static_cast<int>(k))) full |= Index{1} << keep[k];
    }
    for (std::size_t k = 0; k < traced.size(); ++k) {
      if (bit(tr, static_cast<int>(k))) full |= Index{1} << traced[k];
    }
    return full;
  };
  Matrix out = Matrix::Zero(dk, dk);
  for (Index r = 0; r < dk; ++r) {
    for (Index c = 0; c < dk; ++c) {
      cplx s = 0;
      for (Index t = 0; t < dt; ++t) s += rho(compose(r, t), compose(c, t));
      out(r, c) = s;
    }
  }
  return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> keep) {
  return DensityMatrix::from_matrix(partial_trace(rho.matrix(), keep));
}

double fidelity_to_pure(const DensityMatrix& rho, const Vector& psi) {
  if (psi.size() != rho.dim()) {
    throw QmathError(fmt::format("state of dimension {} vs density matrix of dimension {}",
                                 psi.size(), rho.dim()));
  }
  if (std::abs(psi.norm() - 1.0) > 1e-10) throw QmathError("state vector not normalised");
  const double f = (psi.adjoint() * rho.matrix() * psi)(0, 0).real();
  return std::clamp(f, 0.0, 1.0);
}

std::vector<MeasurementOutcome> measure(const DensityMatrix& rho, int qubit, Basis basis) {
  const int n = rho.qubits();
  const int target[] = {qubit};
  check_targets(target, n);
  std::vector<MeasurementOutcome> out;
  for (int outcome = 0; outcome < 2; ++outcome) {
    Vector v(2);
    if (basis == Basis::Z) {
      v << (outcome == 0 ? 1.0 : 0.0), (outcome == 0 ? 0.0 : 1.0);
    } else {
      v = outcome == 0 ? states::plus() : states::minus();
    }
    const Matrix proj = embed(v * v.adjoint(), target, n);
    Matrix post = proj * rho.matrix() * proj;
    const double p = post.trace().real();
    if (p <= 1e-15) continue;
    post /= p;
    out.push_back({outcome, p, DensityMatrix::from_matrix(std::move(post))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gates

Matrix gate_matrix(const GateSpec& g) {
  const double c = std::cos(g.angle / 2);
  const double s = std::sin(g.angle / 2);
  Matrix m;
  auto need = [&](std::size_t k) {
    if (g.targets.size() != k) {
      throw QmathError(fmt::format("gate expects {} target qubit(s), got {}", k, g.targets.size()));
    }
  };
  switch (g.kind) {
    case GateKind::X: need(1); return pauli('X');
    case GateKind::Y: need(1); return pauli('Y');
    case GateKind::Z: need(1); return pauli('Z');
    case GateKind::H:
      need(1);
      m = Matrix(2, 2);
      m << 1, 1, 1, -1;
      return m / std::numbers::sqrt2;
    case GateKind::Rx:
      need(1);
      m = Matrix(2, 2);
      m << c, cplx(0, -s), cplx(0, -s), c;
      return m;
    case GateKind::Ry:
      need(1);
      m = Matrix(2, 2);
      m << c, -s, s, c;
      return m;
    case GateKind::Rz:
      need(1);
      m = Matrix(2, 2);
      m << std::polar(1.0, -g.angle / 2), 0, 0, std::polar(1.0, g.angle / 2);
      return m;
    case GateKind::CNOT:
    case GateKind::SelectiveX: {
      need(2);
      const int cv = g.kind == GateKind::CNOT ? 1 : g.control_value;
      if (cv != 0 && cv != 1) throw QmathError("control value must be 0 or 1");
      // local qubit 0 = control, local qubit 1 = target
      m = Matrix::Zero(4, 4);
      for (Index i = 0; i < 4; ++i) {
        const Index j = bit(i, 0) == (cv == 1) ? (i ^ 2) : i;
        m(j, i) = 1;
      }
      return m;
    }
    case GateKind::SWAP:
      need(2);
      m = Matrix::Zero(4, 4);
      m(0, 0) = m(3, 3) = 1;
      m(1, 2) = m(2, 1) = 1;
      return m;
  }
  throw QmathError("unknown gate");
}

DensityMatrix apply_gate(const DensityMatrix& rho, const GateSpec& g) {
  return apply_channel(rho, KrausChannel::unitary(gate_matrix(g)), g.targets);
}

bool is_unitary(const Matrix& u, double tol) {
  if (u.rows() != u.cols()) return false;
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() <= tol;
}

namespace states {

Vector ket(int qubits, Index index) {
  const Index d = Index{1} << qubits;
  if (qubits < 1 || qubits > max_qubits || index < 0 || index >= d) {
    throw QmathError("basis index out of range");
  }
  Vector v = Vector::Zero(d);
  v(index) = 1;
  return v;
}

Vector plus() {
  Vector v(2);
  v << 1, 1;
  return v / std::numbers::sqrt2;
}

Vector minus() {
  Vector v(2);
  v << 1, -1;
  return v / std::numbers::sqrt2;
}

// Two-qubit Bell states, index = q0 + 2 q1.
Vector phi_plus() {
  Vector v = Vector::Zero(4);
  v(0) = v(3) = 1 / std::numbers::sqrt2;
  return v;
}

Vector phi_minus() {
  Vector v = Vector::Zero(4);
  v(0) = 1 / std::numbers::sqrt2;
  v(3) = -1 / std::numbers::sqrt2;
  return v;
}

Vector psi_plus() {
  Vector v = Vector::Zero(4);
  v(1) = v(2) = 1 / std::numbers::sqrt2;
  return v;
}

// (|01> - |10>)/sqrt2 with qubit 0 written first: |q0=0,q1=1> is index 2.
Vector psi_minus() {
  Vector v = Vector::Zero(4);
  v(2) = 1 / std::numbers::sqrt2;
  v(1) = -1 / std::numbers::sqrt2;
  return v;
}

}  // namespace states

}  // namespace tcsim::qmath
