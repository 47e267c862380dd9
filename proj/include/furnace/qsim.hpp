#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace furnace::qsim {

using Complex = std::complex<double>;

/// Exact state vector over n qubits, little-endian: qubit 0 is the least
/// significant bit of the amplitude index.
class QuantumState {
 public:
  explicit QuantumState(int n_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > 20)
      throw std::invalid_argument("QuantumState: unsupported qubit count " +
                                  std::to_string(n_qubits));
    amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
    amps_[0] = Complex{1.0, 0.0};
  }

  int n_qubits() const { return n_qubits_; }
  std::size_t dim() const { return amps_.size(); }
  const std::vector<Complex>& amplitudes() const { return amps_; }
  std::vector<Complex>& amplitudes() { return amps_; }

  double norm_sq() const {
    double s = 0.0;
    for (const Complex& a : amps_) s += std::norm(a);
    return s;
  }

 private:
  int n_qubits_;
  std::vector<Complex> amps_;
};

namespace detail {
inline void require_qubit(const QuantumState& s, int q, const char* op) {
  if (q < 0 || q >= s.n_qubits())
    throw std::out_of_range(std::string(op) + ": qubit " + std::to_string(q) +
                            " out of range for " + std::to_string(s.n_qubits()) +
                            " qubits");
}

// Applies a 2x2 unitary [[u00, u01], [u10, u11]] to one qubit.
inline void apply_single(QuantumState& s, int qubit, Complex u00, Complex u01,
                         Complex u10, Complex u11) {
  const std::size_t bit = std::size_t{1} << qubit;
  const std::size_t dim = s.dim();
  auto& a = s.amplitudes();
  for (std::size_t i = 0; i < dim; ++i) {
    if (i & bit) continue;
    const Complex a0 = a[i];
    const Complex a1 = a[i | bit];
    a[i] = u00 * a0 + u01 * a1;
    a[i | bit] = u10 * a0 + u11 * a1;
  }
}
}  // namespace detail

/// Rx(theta) = [[cos(t/2), -i sin(t/2)], [-i sin(t/2), cos(t/2)]].
inline void apply_rx(QuantumState& state, int qubit, double theta) {
  detail::require_qubit(state, qubit, "apply_rx");
  const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
  detail::apply_single(state, qubit, Complex{c, 0.0}, Complex{0.0, -s},
                       Complex{0.0, -s}, Complex{c, 0.0});
}

/// Ry(theta) = [[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]].
inline void apply_ry(QuantumState& state, int qubit, double theta) {
  detail::require_qubit(state, qubit, "apply_ry");
  const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
  detail::apply_single(state, qubit, Complex{c, 0.0}, Complex{-s, 0.0},
                       Complex{s, 0.0}, Complex{c, 0.0});
}

/// Flips `target` where `control` is set.
inline void apply_cnot(QuantumState& state, int control, int target) {
  detail::require_qubit(state, control, "apply_cnot");
  detail::require_qubit(state, target, "apply_cnot");
  if (control == target)
    throw std::invalid_argument("apply_cnot: control equals target");
  const std::size_t cbit = std::size_t{1} << control;
  const std::size_t tbit = std::size_t{1} << target;
  auto& a = state.amplitudes();
  for (std::size_t i = 0; i < state.dim(); ++i) {
    if ((i & cbit) && !(i & tbit)) std::swap(a[i], a[i | tbit]);
  }
}

/// <Z_qubit> = sum over basis states of (+1 if qubit bit clear else -1) |amp|^2.
inline double expectation_z(const QuantumState& state, int qubit) {
  detail::require_qubit(state, qubit, "expectation_z");
  const double norm = state.norm_sq();
  if (std::abs(norm - 1.0) > 1e-8)
    throw std::domain_error("expectation_z: state norm deviates from 1 by " +
                            std::to_string(std::abs(norm - 1.0)));
  const std::size_t bit = std::size_t{1} << qubit;
  double e = 0.0;
  const auto& a = state.amplitudes();
  for (std::size_t i = 0; i < state.dim(); ++i)
    e += (i & bit) ? -std::norm(a[i]) : std::norm(a[i]);
  return e;
}

}  // namespace furnace::qsim
