#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/autodiff.hpp"
#include "furnace/qsim.hpp"
#include "furnace/tensor.hpp"

namespace furnace::qsim {

/// Data re-uploading circuit: each depth block encodes n_qubits fresh input
/// components via Rx, applies one trainable Ry per qubit, then a CNOT ring
/// q -> (q+1) mod n_qubits. Readout is <Z_q> for every qubit.
struct QdiCircuitSpec {
  int n_qubits = 6;
  int depth = 4;

  std::size_t input_size() const { return static_cast<std::size_t>(n_qubits) * depth; }
  std::size_t angle_count() const { return static_cast<std::size_t>(n_qubits) * depth; }
  std::size_t output_size() const { return static_cast<std::size_t>(n_qubits); }

  void validate() const {
    if (n_qubits < 2 || depth < 1)
      throw std::invalid_argument("QdiCircuitSpec: need at least 2 qubits and depth 1");
  }
};

namespace detail {
inline void require_sizes(const QdiCircuitSpec& spec, std::span<const double> inputs,
                          std::span<const double> angles) {
  if (inputs.size() != spec.input_size())
    throw std::invalid_argument("qdi: expected " + std::to_string(spec.input_size()) +
                                " inputs, got " + std::to_string(inputs.size()));
  if (angles.size() != spec.angle_count())
    throw std::invalid_argument("qdi: expected " + std::to_string(spec.angle_count()) +
                                " angles, got " + std::to_string(angles.size()));
}
}  // namespace detail

inline std::vector<double> qdi_forward(const QdiCircuitSpec& spec,
                                       std::span<const double> inputs,
                                       std::span<const double> angles) {
  spec.validate();
  detail::require_sizes(spec, inputs, angles);
  QuantumState state(spec.n_qubits);
  const int n = spec.n_qubits;
  for (int d = 0; d < spec.depth; ++d) {
    for (int q = 0; q < n; ++q) apply_rx(state, q, inputs[d * n + q]);
    for (int q = 0; q < n; ++q) apply_ry(state, q, angles[d * n + q]);
    for (int q = 0; q < n; ++q) apply_cnot(state, q, (q + 1) % n);
  }
  std::vector<double> out(spec.output_size());
  for (int q = 0; q < n; ++q) out[q] = expectation_z(state, q);
  return out;
}

/// Jacobians of the QDI outputs, row-major [output_size x input_size] and
/// [output_size x angle_count].
struct QdiJacobians {
  std::vector<double> d_inputs;
  std::vector<double> d_angles;
};

/// Parameter-shift rule: every parameter enters through a rotation gate, so
/// df/dp = [f(p + pi/2) - f(p - pi/2)] / 2 exactly, for inputs and angles alike.
inline QdiJacobians qdi_gradients(const QdiCircuitSpec& spec,
                                  std::span<const double> inputs,
                                  std::span<const double> angles) {
  spec.validate();
  detail::require_sizes(spec, inputs, angles);
  const std::size_t n_in = spec.input_size();
  const std::size_t n_ang = spec.angle_count();
  const std::size_t n_out = spec.output_size();
  QdiJacobians jac;
  jac.d_inputs.assign(n_out * n_in, 0.0);
  jac.d_angles.assign(n_out * n_ang, 0.0);

  std::vector<double> shifted(inputs.begin(), inputs.end());
  constexpr double kShift = 1.5707963267948966;  // pi/2
  for (std::size_t k = 0; k < n_in; ++k) {
    const double orig = shifted[k];
    shifted[k] = orig + kShift;
    const auto plus = qdi_forward(spec, shifted, angles);
    shifted[k] = orig - kShift;
    const auto minus = qdi_forward(spec, shifted, angles);
    shifted[k] = orig;
    for (std::size_t o = 0; o < n_out; ++o)
      jac.d_inputs[o * n_in + k] = 0.5 * (plus[o] - minus[o]);
  }

  std::vector<double> shifted_ang(angles.begin(), angles.end());
  for (std::size_t k = 0; k < n_ang; ++k) {
    const double orig = shifted_ang[k];
    shifted_ang[k] = orig + kShift;
    const auto plus = qdi_forward(spec, inputs, shifted_ang);
    shifted_ang[k] = orig - kShift;
    const auto minus = qdi_forward(spec, inputs, shifted_ang);
    shifted_ang[k] = orig;
    for (std::size_t o = 0; o < n_out; ++o)
      jac.d_angles[o * n_ang + k] = 0.5 * (plus[o] - minus[o]);
  }
  return jac;
}

/// Graph node running the circuit on each row of a [B x input_size] batch
/// with one shared angle vector. Backward uses parameter-shift Jacobians.
inline ad::NodePtr qdi_apply(const QdiCircuitSpec& spec, const ad::NodePtr& inputs,
                             const ad::NodePtr& angles) {
  spec.validate();
  if (inputs->value.rank() != 2 || inputs->value.cols() != spec.input_size())
    throw std::invalid_argument("qdi_apply: inputs must be [B x " +
                                std::to_string(spec.input_size()) + "], got " +
                                shape_str(inputs->value.shape()));
  if (angles->value.numel() != spec.angle_count())
    throw std::invalid_argument("qdi_apply: expected " +
                                std::to_string(spec.angle_count()) + " angles");

  const std::size_t batch = inputs->value.rows();
  const std::size_t n_in = spec.input_size();
  const std::size_t n_out = spec.output_size();
  Tensor out(Shape{batch, n_out});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = qdi_forward(
        spec, std::span<const double>(inputs->value.data().data() + b * n_in, n_in),
        angles->value.data());
    for (std::size_t o = 0; o < n_out; ++o) out.at(b, o) = row[o];
  }

  return ad::detail::make_op(std::move(out), {inputs, angles}, [spec](ad::Node& n) {
    ad::Node& in = *n.parents[0];
    ad::Node& ang = *n.parents[1];
    const std::size_t batch = in.value.rows();
    const std::size_t n_in = spec.input_size();
    const std::size_t n_out = spec.output_size();
    for (std::size_t b = 0; b < batch; ++b) {
      const auto jac = qdi_gradients(
          spec, std::span<const double>(in.value.data().data() + b * n_in, n_in),
          ang.value.data());
      for (std::size_t o = 0; o < n_out; ++o) {
        const double g = n.adjoint.at(b, o);
        if (g == 0.0) continue;
        if (in.requires_grad)
          for (std::size_t k = 0; k < n_in; ++k)
            in.adjoint.at(b * n_in + k) += g * jac.d_inputs[o * n_in + k];
        if (ang.requires_grad)
          for (std::size_t k = 0; k < n_in; ++k)
            ang.adjoint.at(k) += g * jac.d_angles[o * n_in + k];
      }
    }
  });
}

}  // namespace furnace::qsim
