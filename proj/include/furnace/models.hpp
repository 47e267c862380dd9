#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "furnace/io_util.hpp"
#include "furnace/lstm.hpp"
#include "furnace/params.hpp"
#include "furnace/preprocess.hpp"
#include "furnace/qdi.hpp"

namespace furnace {

struct BatchGraph {
  ad::NodePtr prediction;
  std::vector<ad::NodePtr> leaves;
};

namespace detail {

/// One constant [B x width] node per time step, rows taken from the samples.
inline std::vector<ad::NodePtr> batch_steps(const SampleSet& samples,
                                            std::span<const std::size_t> idx) {
  std::vector<ad::NodePtr> steps;
  steps.reserve(samples.window);
  for (std::size_t t = 0; t < samples.window; ++t) {
    Tensor x(Shape{idx.size(), samples.width});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto in = samples.input(idx[b]);
      for (std::size_t c = 0; c < samples.width; ++c)
        x.at(b, c) = in[t * samples.width + c];
    }
    steps.push_back(ad::constant(std::move(x)));
  }
  return steps;
}

inline void init_dense(ParamStore& store, std::size_t w, std::size_t b,
                       std::size_t fan_in, std::mt19937_64& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  store.init_uniform(w, -k, k, rng);
  store.init_uniform(b, -k, k, rng);
}

inline void init_lstm(ParamStore& store, const LstmCell& cell, std::mt19937_64& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(cell.hidden_size));
  for (int g = 0; g < 4; ++g) {
    store.init_uniform(cell.w[g], -k, k, rng);
    store.init_uniform(cell.u[g], -k, k, rng);
    store.init_uniform(cell.b[g], -k, k, rng);
  }
}

inline void save_model_files(const std::string& dir, const std::string& kind,
                             const std::vector<std::pair<std::string, std::string>>& meta,
                             const ParamStore& params) {
  std::filesystem::create_directories(dir);
  std::string manifest = "kind=" + kind + "\n";
  for (const auto& [k, v] : meta) manifest += k + "=" + v + "\n";
  manifest += "params:\n" + params.manifest();
  write_file_atomic(dir + "/manifest.txt", manifest);
  params.save_binary(dir + "/params.bin.tmp");
  std::filesystem::rename(dir + "/params.bin.tmp", dir + "/params.bin");
}

struct ManifestData {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::string param_manifest;
};

inline ManifestData read_manifest(const std::string& dir) {
  const std::string text = read_text_file(dir + "/manifest.txt");
  ManifestData out;
  std::istringstream in(text);
  std::string line;
  bool in_params = false;
  while (std::getline(in, line)) {
    if (in_params) {
      out.param_manifest += line + "\n";
      continue;
    }
    if (line == "params:") {
      in_params = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(dir + "/manifest.txt: bad line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "kind")
      out.kind = value;
    else
      out.meta[key] = value;
  }
  if (out.kind.empty()) throw std::runtime_error(dir + ": manifest has no kind");
  return out;
}

inline std::size_t meta_size_t(const ManifestData& m, const std::string& key,
                               const std::string& dir) {
  const auto it = m.meta.find(key);
  if (it == m.meta.end()) throw std::runtime_error(dir + ": manifest missing " + key);
  return static_cast<std::size_t>(std::stoull(it->second));
}

}  // namespace detail

enum class MtVariant { classical, hybrid };

inline std::string to_string(MtVariant v) {
  return v == MtVariant::classical ? "mt-classical" : "mt-hybrid";
}

/// Temperature forecaster: LSTM into either a single dense head (classical)
/// or dense -> QDI -> dense (hybrid).
class MtModel {
 public:
  explicit MtModel(MtVariant variant, std::size_t hidden = 143,
                   std::size_t input_width = 27, std::size_t horizon = 5)
      : variant_(variant), hidden_(hidden), input_width_(input_width), horizon_(horizon) {
    lstm_ = LstmCell::create(params_, "lstm", input_width_, hidden_);
    if (variant_ == MtVariant::classical) {
      head_w_ = params_.add("head.w", Shape{hidden_, horizon_});
      head_b_ = params_.add("head.b", Shape{horizon_});
    } else {
      qdi_.n_qubits = 6;
      qdi_.depth = 4;
      head1_w_ = params_.add("head1.w", Shape{hidden_, qdi_.input_size()});
      head1_b_ = params_.add("head1.b", Shape{qdi_.input_size()});
      qdi_angles_ = params_.add("qdi.angles", Shape{qdi_.angle_count()});
      head2_w_ = params_.add("head2.w", Shape{qdi_.output_size(), horizon_});
      head2_b_ = params_.add("head2.b", Shape{horizon_});
    }
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    detail::init_lstm(params_, lstm_, rng);
    if (variant_ == MtVariant::classical) {
      detail::init_dense(params_, head_w_, head_b_, hidden_, rng);
    } else {
      detail::init_dense(params_, head1_w_, head1_b_, hidden_, rng);
      params_.init_uniform(qdi_angles_, -0.1, 0.1, rng);  // start near identity
      detail::init_dense(params_, head2_w_, head2_b_, qdi_.output_size(), rng);
    }
  }

  BatchGraph forward_steps(const std::vector<ad::NodePtr>& steps,
                           std::size_t batch) const {
    BatchGraph g;
    g.leaves = params_.make_leaves();
    auto h = lstm_.forward(steps, g.leaves, batch);
    if (variant_ == MtVariant::classical) {
      g.prediction = ad::add_row_bias(ad::matmul(h, g.leaves[head_w_]), g.leaves[head_b_]);
    } else {
      auto enc = ad::add_row_bias(ad::matmul(h, g.leaves[head1_w_]), g.leaves[head1_b_]);
      auto q = qsim::qdi_apply(qdi_, enc, g.leaves[qdi_angles_]);
      g.prediction = ad::add_row_bias(ad::matmul(q, g.leaves[head2_w_]), g.leaves[head2_b_]);
    }
    return g;
  }

  BatchGraph forward_batch(const SampleSet& samples,
                           std::span<const std::size_t> idx) const {
    return forward_steps(detail::batch_steps(samples, idx), idx.size());
  }

  Tensor batch_targets(const SampleSet& samples, std::span<const std::size_t> idx) const {
    Tensor t(Shape{idx.size(), horizon_});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto tt = samples.target_t(idx[b]);
      for (std::size_t h = 0; h < horizon_; ++h) t.at(b, h) = tt[h];
    }
    return t;
  }

  MtVariant variant() const { return variant_; }
  std::size_t hidden_size() const { return hidden_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t input_width() const { return input_width_; }
  const qsim::QdiCircuitSpec& qdi_spec() const { return qdi_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t head_param_count() const {
    return params_.size() - lstm_.param_count();
  }

  void save(const std::string& dir) const {
    detail::save_model_files(dir, to_string(variant_),
                             {{"hidden", std::to_string(hidden_)},
                              {"input_width", std::to_string(input_width_)},
                              {"horizon", std::to_string(horizon_)}},
                             params_);
  }

  static MtModel load(const std::string& dir) {
    const auto m = detail::read_manifest(dir);
    MtVariant variant;
    if (m.kind == "mt-classical")
      variant = MtVariant::classical;
    else if (m.kind == "mt-hybrid")
      variant = MtVariant::hybrid;
    else
      throw std::runtime_error(dir + ": not a temperature model checkpoint (kind " +
                               m.kind + ")");
    MtModel model(variant, detail::meta_size_t(m, "hidden", dir),
                  detail::meta_size_t(m, "input_width", dir),
                  detail::meta_size_t(m, "horizon", dir));
    model.params_.check_manifest(m.param_manifest);
    model.params_.load_binary(dir + "/params.bin");
    return model;
  }

 private:
  MtVariant variant_;
  std::size_t hidden_, input_width_, horizon_;
  ParamStore params_;
  LstmCell lstm_;
  qsim::QdiCircuitSpec qdi_;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::size_t head1_w_ = 0, head1_b_ = 0, qdi_angles_ = 0, head2_w_ = 0, head2_b_ = 0;
};

/// Multi-feature forecaster: LSTM with a wider hidden state and one dense
/// head emitting all features for every horizon step ([horizon x width]).
class MallModel {
 public:
  explicit MallModel(std::size_t hidden = 256, std::size_t input_width = 27,
                     std::size_t horizon = 5)
      : hidden_(hidden), input_width_(input_width), horizon_(horizon) {
    lstm_ = LstmCell::create(params_, "lstm", input_width_, hidden_);
    head_w_ = params_.add("head.w", Shape{hidden_, horizon_ * input_width_});
    head_b_ = params_.add("head.b", Shape{horizon_ * input_width_});
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    detail::init_lstm(params_, lstm_, rng);
    detail::init_dense(params_, head_w_, head_b_, hidden_, rng);
  }

  /// Prediction is [B x horizon*width]; row b reshapes to [horizon x width].
  BatchGraph forward_steps(const std::vector<ad::NodePtr>& steps,
                           std::size_t batch) const {
    return forward_steps_with(params_.make_leaves(), steps, batch);
  }

  /// Same forward pass over caller-provided leaves (e.g. frozen constants).
  BatchGraph forward_steps_with(std::vector<ad::NodePtr> leaves,
                                const std::vector<ad::NodePtr>& steps,
                                std::size_t batch) const {
    BatchGraph g;
    g.leaves = std::move(leaves);
    auto h = lstm_.forward(steps, g.leaves, batch);
    g.prediction = ad::add_row_bias(ad::matmul(h, g.leaves[head_w_]), g.leaves[head_b_]);
    return g;
  }

  BatchGraph forward_batch(const SampleSet& samples,
                           std::span<const std::size_t> idx) const {
    return forward_steps(detail::batch_steps(samples, idx), idx.size());
  }

  /// Deterministic single-window forward pass on plain values.
  Tensor predict_window(const Tensor& window) const {
    if (window.rank() != 2 || window.cols() != input_width_)
      throw std::invalid_argument("MallModel: window must be [T x " +
                                  std::to_string(input_width_) + "]");
    std::vector<ad::NodePtr> steps;
    for (std::size_t t = 0; t < window.rows(); ++t) {
      Tensor x(Shape{1, input_width_});
      for (std::size_t c = 0; c < input_width_; ++c) x.at(0, c) = window.at(t, c);
      steps.push_back(ad::constant(std::move(x)));
    }
    const auto g = forward_steps(steps, 1);
    return g.prediction->value.reshaped(Shape{horizon_, input_width_});
  }

  Tensor batch_targets(const SampleSet& samples, std::span<const std::size_t> idx) const {
    const std::size_t w = horizon_ * input_width_;
    Tensor t(Shape{idx.size(), w});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto ta = samples.target_all(idx[b]);
      for (std::size_t k = 0; k < w; ++k) t.at(b, k) = ta[k];
    }
    return t;
  }

  std::size_t hidden_size() const { return hidden_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t horizon() const { return horizon_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void save(const std::string& dir) const {
    detail::save_model_files(dir, "mall",
                             {{"hidden", std::to_string(hidden_)},
                              {"input_width", std::to_string(input_width_)},
                              {"horizon", std::to_string(horizon_)}},
                             params_);
  }

  static MallModel load(const std::string& dir) {
    const auto m = detail::read_manifest(dir);
    if (m.kind != "mall")
      throw std::runtime_error(dir + ": not a multi-feature checkpoint (kind " + m.kind +
                               ")");
    MallModel model(detail::meta_size_t(m, "hidden", dir),
                    detail::meta_size_t(m, "input_width", dir),
                    detail::meta_size_t(m, "horizon", dir));
    model.params_.check_manifest(m.param_manifest);
    model.params_.load_binary(dir + "/params.bin");
    return model;
  }

 private:
  std::size_t hidden_, input_width_, horizon_;
  ParamStore params_;
  LstmCell lstm_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

/// Policy model of the optimization loop: one affine map from the flattened
/// stacked window to the proposed PCI values. No nonlinearity.
class MOptimModel {
 public:
  explicit MOptimModel(std::size_t stack_rows = 29, std::size_t input_width = 27,
                       std::size_t horizon = 5)
      : stack_rows_(stack_rows), input_width_(input_width), horizon_(horizon) {
    w_ = params_.add("w", Shape{stack_rows_ * input_width_, horizon_});
    b_ = params_.add("b", Shape{horizon_});
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    detail::init_dense(params_, w_, b_, stack_rows_ * input_width_, rng);
  }

  /// `stacked` is a [1 x stack_rows*width] node (kept in the graph so the
  /// optimization loss can differentiate through the policy).
  ad::NodePtr forward(const ad::NodePtr& stacked,
                      const std::vector<ad::NodePtr>& leaves) const {
    if (stacked->value.numel() != stack_rows_ * input_width_)
      throw std::invalid_argument("MOptimModel: expected " +
                                  std::to_string(stack_rows_ * input_width_) +
                                  " stacked values, got " +
                                  std::to_string(stacked->value.numel()));
    auto flat = ad::reshape(stacked, Shape{1, stack_rows_ * input_width_});
    return ad::reshape(
        ad::add_row_bias(ad::matmul(flat, leaves[w_]), leaves[b_]), Shape{horizon_});
  }

  std::size_t stack_rows() const { return stack_rows_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t horizon() const { return horizon_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void save(const std::string& dir) const {
    detail::save_model_files(dir, "moptim",
                             {{"stack_rows", std::to_string(stack_rows_)},
                              {"input_width", std::to_string(input_width_)},
                              {"horizon", std::to_string(horizon_)}},
                             params_);
  }

  static MOptimModel load(const std::string& dir) {
    const auto m = detail::read_manifest(dir);
    if (m.kind != "moptim")
      throw std::runtime_error(dir + ": not a policy checkpoint (kind " + m.kind + ")");
    MOptimModel model(detail::meta_size_t(m, "stack_rows", dir),
                      detail::meta_size_t(m, "input_width", dir),
                      detail::meta_size_t(m, "horizon", dir));
    model.params_.check_manifest(m.param_manifest);
    model.params_.load_binary(dir + "/params.bin");
    return model;
  }

 private:
  std::size_t stack_rows_, input_width_, horizon_;
  ParamStore params_;
  std::size_t w_ = 0, b_ = 0;
};

}  // namespace furnace
