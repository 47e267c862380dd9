#pragma once

#include <string>
#include <vector>

#include "furnace/autodiff.hpp"
#include "furnace/params.hpp"

namespace furnace {

/// Single-layer LSTM with forget gate and no peepholes. Weights are stored
/// as [input x hidden] / [hidden x hidden] so activations left-multiply them.
struct LstmCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  // ParamStore entry indices, gate order i, f, o, c.
  std::size_t w[4]{}, u[4]{}, b[4]{};

  static LstmCell create(ParamStore& store, const std::string& prefix,
                         std::size_t input_size, std::size_t hidden_size) {
    LstmCell cell;
    cell.input_size = input_size;
    cell.hidden_size = hidden_size;
    static constexpr const char* kGate[4] = {"i", "f", "o", "c"};
    for (int g = 0; g < 4; ++g) {
      cell.w[g] = store.add(prefix + ".w_" + kGate[g], Shape{input_size, hidden_size});
      cell.u[g] = store.add(prefix + ".u_" + kGate[g], Shape{hidden_size, hidden_size});
      cell.b[g] = store.add(prefix + ".b_" + kGate[g], Shape{hidden_size});
    }
    return cell;
  }

  std::size_t param_count() const {
    return 4 * (hidden_size * input_size + hidden_size * hidden_size + hidden_size);
  }

  /// Runs the recurrence over `steps` (each [B x input]) from zero states and
  /// returns the final hidden state [B x hidden]. `leaves` must come from the
  /// same ParamStore the cell was registered in.
  ad::NodePtr forward(const std::vector<ad::NodePtr>& steps,
                      const std::vector<ad::NodePtr>& leaves, std::size_t batch) const {
    auto h = ad::constant(Tensor(Shape{batch, hidden_size}));
    auto c = ad::constant(Tensor(Shape{batch, hidden_size}));
    for (const auto& x : steps) {
      auto gate_pre = [&](int g) {
        return ad::add_row_bias(
            ad::add(ad::matmul(x, leaves[w[g]]), ad::matmul(h, leaves[u[g]])),
            leaves[b[g]]);
      };
      auto i_gate = ad::sigmoid(gate_pre(0));
      auto f_gate = ad::sigmoid(gate_pre(1));
      auto o_gate = ad::sigmoid(gate_pre(2));
      auto c_cand = ad::tanh(gate_pre(3));
      c = ad::add(ad::mul(f_gate, c), ad::mul(i_gate, c_cand));
      h = ad::mul(o_gate, ad::tanh(c));
    }
    return h;
  }
};

}  // namespace furnace
