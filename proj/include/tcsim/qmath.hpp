#pragma once

// Dense complex linear algebra for registers of 1-4 qubits.
//
// Qubit ordering is little-endian throughout: qubit 0 is the least
// significant bit of a computational-basis index. When a ket is written
// out by hand in this code base (e.g. |01>), the leftmost symbol is
// qubit 0.

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tcsim::qmath {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr int max_qubits = 4;

inline constexpr double hermitian_tol = 1e-12;
inline constexpr double trace_tol = 1e-12;
inline constexpr double positivity_tol = 1e-10;
inline constexpr double channel_tol = 1e-10;

class QmathError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Number of qubits for a power-of-two dimension; throws otherwise.
int qubits_for_dim(Eigen::Index dim);

class DensityMatrix {
 public:
  /// Validates hermiticity, unit trace and positivity.
  static DensityMatrix from_matrix(Matrix m);
  static DensityMatrix from_pure(const Vector& psi);
  static DensityMatrix basis_state(int qubits, Eigen::Index index);
  static DensityMatrix maximally_mixed(int qubits);

  int qubits() const { return qubits_; }
  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  cplx operator()(Eigen::Index r, Eigen::Index c) const { return m_(r, c); }

  /// this (low qubits) tensor other (high qubits).
  DensityMatrix tensor(const DensityMatrix& other) const;

  /// Smallest eigenvalue; used by the invariant check and by tests.
  double min_eigenvalue() const;

 private:
  explicit DensityMatrix(Matrix m);
  Matrix m_;
  int qubits_ = 0;
};

/// Throws QmathError when `m` is not a valid density matrix.
void check_density(const Matrix& m);

class KrausChannel {
 public:
  enum class Kind { trace_preserving, trace_decreasing };

  explicit KrausChannel(std::vector<Matrix> operators,
                        Kind kind = Kind::trace_preserving);

  static KrausChannel identity(int qubits);
  static KrausChannel unitary(const Matrix& u);
  /// rho -> (1-p) rho + p I/2 on one qubit.
  static KrausChannel depolarizing(double p);
  static KrausChannel bit_flip(double p);
  static KrausChannel phase_flip(double p);

  /// Apply `this` first, then `next`.
  KrausChannel then(const KrausChannel& next) const;

  const std::vector<Matrix>& operators() const { return ops_; }
  int qubits() const { return qubits_; }
  Kind kind() const { return kind_; }
  bool trace_preserving() const { return kind_ == Kind::trace_preserving; }

 private:
  std::vector<Matrix> ops_;
  int qubits_ = 0;
  Kind kind_;
};

/// Lift an operator acting on `targets` (its qubit k acts on register
/// qubit targets[k]) to the full register of `register_qubits`.
Matrix embed(const Matrix& op, std::span<const int> targets,
             int register_qubits);

/// sum_i K_i rho K_i^dagger on the targets, without normalisation.
Matrix apply_kraus(const Matrix& rho, const KrausChannel& ch,
                   std::span<const int> targets);

/// Trace-preserving channel application. Throws for trace-decreasing
/// channels; those go through apply_herald.
DensityMatrix apply_channel(const DensityMatrix& rho, const KrausChannel& ch,
                            std::span<const int> targets);

struct Heralded {
  DensityMatrix state;
  double probability;
};

/// Trace-decreasing branch followed by renormalisation. Throws when the
/// branch has zero probability.
Heralded apply_herald(const DensityMatrix& rho, const KrausChannel& branch,
                      std::span<const int> targets);

Matrix partial_trace(const Matrix& rho, std::span<const int> keep);
DensityMatrix partial_trace(const DensityMatrix& rho,
                            std::span<const int> keep);

/// <psi|rho|psi>.
double fidelity_to_pure(const DensityMatrix& rho, const Vector& psi);

enum class Basis { Z, X };

struct MeasurementOutcome {
  int outcome;  // 0/1 for Z, 0 = |+>, 1 = |-> for X
  double probability;
  DensityMatrix post_state;
};

/// Projective single-qubit measurement. Zero-probability outcomes are
/// omitted from the list.
std::vector<MeasurementOutcome> measure(const DensityMatrix& rho, int qubit,
                                        Basis basis);

enum class GateKind { X, Y, Z, H, Rx, Ry, Rz, CNOT, SWAP, SelectiveX };

/// Named gate. For CNOT and SelectiveX targets = {control, target};
/// SelectiveX flips the target when the control equals control_value.
struct GateSpec {
  GateKind kind;
  std::vector<int> targets;
  double angle = 0.0;
  int control_value = 1;
};

Matrix gate_matrix(const GateSpec& g);
DensityMatrix apply_gate(const DensityMatrix& rho, const GateSpec& g);

namespace states {
Vector ket(int qubits, Eigen::Index index);
Vector plus();
Vector minus();
Vector phi_plus();
Vector phi_minus();
Vector psi_plus();
Vector psi_minus();
}  // namespace states

bool is_unitary(const Matrix& u, double tol = hermitian_tol);

}  // namespace tcsim::qmath
