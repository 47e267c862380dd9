#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/adam.hpp"
#include "furnace/models.hpp"
#include "furnace/plant.hpp"
#include "furnace/preprocess.hpp"

namespace furnace {

/// One prediction-based optimization window: scaled history, the scaled
/// target temperature, and the PCI box the policy must respect.
struct OptimProblem {
  Tensor history;  // [window x width], scaler-consistent with the trained model
  double target_degc = 1510.0;
  double target_scaled = 0.0;
  double pci_lo = 0.0;
  double pci_hi = 1.0;
  double lambda = 1.0;
  std::size_t pci_col = 25;
  std::size_t temp_col = 26;

  void validate(const MallModel& mall) const {
    if (history.rank() != 2 || history.cols() != mall.input_width())
      throw std::invalid_argument("OptimProblem: history must be [T x " +
                                  std::to_string(mall.input_width()) + "]");
    if (pci_col >= history.cols() || temp_col >= history.cols())
      throw std::invalid_argument("OptimProblem: column index out of range");
  }
};

struct PciPolicy {
  std::vector<double> pci;                // scaled values, length horizon
  std::vector<double> predicted_t_scaled; // model-predicted temperatures
  std::vector<double> predicted_t_degc;
  double loss = 0.0;
  int iteration = -1;
};

struct OptimizeConfig {
  int iterations = 500;
  double lr = 0.01;
  double divergence_limit = 1e6;
};

struct OptimTraceRow {
  int iteration = 0;
  double loss = 0.0;
  std::vector<double> policy;
  std::vector<double> temps_scaled;
};

struct OptimizeResult {
  PciPolicy best;
  std::vector<OptimTraceRow> trace;
};

/// Step 1: map the history window to the model's future block [horizon x width].
inline Tensor baseline_predict(const MallModel& mall, const Tensor& history) {
  return mall.predict_window(history);
}

/// Step 2: stack history on top of the predicted future with the future PCI
/// entries zeroed out.
inline Tensor stack_with_zeroed_pci(const Tensor& history, const Tensor& future,
                                    std::size_t pci_col) {
  if (history.rank() != 2 || future.rank() != 2 || history.cols() != future.cols())
    throw std::invalid_argument("stack_with_zeroed_pci: incompatible shapes " +
                                shape_str(history.shape()) + " and " +
                                shape_str(future.shape()));
  const std::size_t w = history.cols();
  Tensor out(Shape{history.rows() + future.rows(), w});
  for (std::size_t r = 0; r < history.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = history.at(r, c);
  for (std::size_t r = 0; r < future.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c)
      out.at(history.rows() + r, c) = c == pci_col ? 0.0 : future.at(r, c);
  return out;
}

namespace detail {

/// Steps 4-5 as a graph: write the policy into the PCI channel of the future
/// rows, feed the last `window` rows of the stack to the frozen model, and
/// gather its temperature-channel predictions.
inline ad::NodePtr simulate_policy_node(const MallModel& mall, const Tensor& stacked,
                                        const ad::NodePtr& policy, std::size_t window,
                                        std::size_t pci_col, std::size_t temp_col) {
  const std::size_t width = stacked.cols();
  const std::size_t horizon = policy->value.numel();
  const std::size_t offset = stacked.rows() - window;  // first row of the fed window

  Tensor window_base(Shape{window, width});
  for (std::size_t r = 0; r < window; ++r)
    for (std::size_t c = 0; c < width; ++c)
      window_base.at(r, c) = stacked.at(offset + r, c);

  std::vector<std::size_t> pci_idx(horizon);
  const std::size_t future_start = window - horizon;
  for (std::size_t h = 0; h < horizon; ++h)
    pci_idx[h] = (future_start + h) * width + pci_col;
  auto window_node = ad::scatter_into(window_base, policy, pci_idx);

  std::vector<ad::NodePtr> steps;
  steps.reserve(window);
  for (std::size_t t = 0; t < window; ++t)
    steps.push_back(ad::reshape(ad::row(window_node, t), Shape{1, width}));
  auto g = mall.forward_steps_with(mall.params().make_constant_leaves(), steps, 1);

  std::vector<std::size_t> temp_idx(horizon);
  for (std::size_t h = 0; h < horizon; ++h) temp_idx[h] = h * width + temp_col;
  return ad::gather(g.prediction, temp_idx);
}

}  // namespace detail

/// Steps 4-5 on plain values: predicted temperatures (scaled) under a policy.
inline std::vector<double> simulate_policy(const MallModel& mall, const Tensor& history,
                                           const Tensor& future,
                                           std::span<const double> policy,
                                           std::size_t pci_col, std::size_t temp_col) {
  if (policy.size() != mall.horizon())
    throw std::invalid_argument("simulate_policy: policy length must equal the horizon");
  Tensor stacked = stack_with_zeroed_pci(history, future, pci_col);
  auto policy_node = ad::constant(Tensor(Shape{policy.size()},
                                         std::vector<double>(policy.begin(), policy.end())));
  auto temps = detail::simulate_policy_node(mall, stacked, policy_node, history.rows(),
                                            pci_col, temp_col);
  return temps->value.data();
}

/// Step 6 loss on plain values: L1 deviation of the temperatures from the
/// scaled target plus the two-sided hinge on the policy box.
inline double composite_loss(std::span<const double> temps_scaled,
                             std::span<const double> policy, const OptimProblem& problem) {
  double loss = 0.0;
  for (double t : temps_scaled) loss += std::abs(t - problem.target_scaled);
  for (double p : policy)
    loss += problem.lambda *
            (std::max(0.0, problem.pci_lo - p) + std::max(0.0, p - problem.pci_hi));
  return loss;
}

/// The full prediction-based optimization loop: gradient steps on the policy
/// model only, the forecaster frozen. Returns the best policy encountered
/// (iteration -1 in the trace is the initial evaluation).
inline OptimizeResult optimize(const MallModel& mall, MOptimModel& moptim,
                               const OptimProblem& problem, const OptimizeConfig& cfg,
                               const MinMaxScaler* temp_scaler = nullptr,
                               std::size_t temp_feature = 0) {
  problem.validate(mall);
  const std::size_t horizon = mall.horizon();
  if (moptim.horizon() != horizon)
    throw std::invalid_argument("optimize: policy and forecaster horizons differ");
  if (moptim.stack_rows() != problem.history.rows() + horizon)
    throw std::invalid_argument("optimize: policy model expects a different stack height");

  const Tensor future = baseline_predict(mall, problem.history);
  const Tensor stacked = stack_with_zeroed_pci(problem.history, future, problem.pci_col);
  const Tensor target(Shape{horizon}, std::vector<double>(horizon, problem.target_scaled));

  AdamState adam(moptim.params().size(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  OptimizeResult result;
  result.best.loss = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= cfg.iterations; ++iter) {
    auto leaves = moptim.params().make_leaves();
    auto policy = moptim.forward(ad::constant(stacked), leaves);
    auto temps = detail::simulate_policy_node(mall, stacked, policy,
                                              problem.history.rows(), problem.pci_col,
                                              problem.temp_col);
    auto loss = ad::add(ad::l1_loss(temps, ad::constant(target)),
                        ad::scale(ad::interval_penalty(policy, problem.pci_lo,
                                                       problem.pci_hi),
                                  problem.lambda));
    const double value = loss->value.at(0);
    if (!std::isfinite(value) || value > cfg.divergence_limit)
      throw std::runtime_error("optimize: loss diverged (" + format_double(value) +
                               ") at iteration " + std::to_string(iter));

    OptimTraceRow row;
    row.iteration = iter;
    row.loss = value;
    row.policy = policy->value.data();
    row.temps_scaled = temps->value.data();
    result.trace.push_back(row);

    if (value < result.best.loss) {
      result.best.loss = value;
      result.best.iteration = iter;
      result.best.pci = policy->value.data();
      result.best.predicted_t_scaled = temps->value.data();
    }
    if (iter == cfg.iterations) break;

    ad::backward(loss);
    const auto grads = moptim.params().collect_grads(leaves);
    adam_step(moptim.params().values(), grads, adam);
  }

  result.best.predicted_t_degc = result.best.predicted_t_scaled;
  if (temp_scaler) {
    for (double& v : result.best.predicted_t_degc)
      v = temp_scaler->inverse_value(temp_feature, v);
  }
  return result;
}

inline std::string optimize_trace_to_csv(const OptimizeResult& result) {
  if (result.trace.empty()) return "iteration,loss\n";
  const std::size_t h = result.trace.front().policy.size();
  std::string out = "iteration,loss";
  for (std::size_t i = 0; i < h; ++i) out += ",pci_" + std::to_string(i);
  for (std::size_t i = 0; i < h; ++i) out += ",temp_scaled_" + std::to_string(i);
  out += "\n";
  for (const auto& row : result.trace) {
    out += std::to_string(row.iteration) + "," + format_double(row.loss);
    for (double v : row.policy) out += "," + format_double(v);
    for (double v : row.temps_scaled) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

// ---- Closed-loop evaluation against the synthetic plant ----

struct ClosedLoopConfig {
  int control_minutes = 2880;
  int replan_every_steps = 5;  // discretized steps between plans
  int iterations_first = 500;
  int iterations_warm = 150;
  bool warm_start = true;
  double lambda = 1.0;
  double opt_lr = 0.01;
  double band_degc = 10.0;
  double target_degc = 1510.0;
  std::uint64_t seed = 1;
};

struct ClosedLoopRow {
  std::int64_t minute = 0;
  double pci_applied = 0.0;
  double realized_t = 0.0;   // measured tap average
  double predicted_t = 0.0;  // active plan's prediction for this step (NaN outside)
};

struct ClosedLoopRunStats {
  double mean_abs_dev = 0.0;
  double max_abs_dev = 0.0;
  double std_dev = 0.0;
  double pct_in_band = 0.0;
};

struct ClosedLoopResult {
  std::vector<ClosedLoopRow> controlled;
  std::vector<ClosedLoopRow> uncontrolled;
  ClosedLoopRunStats controlled_stats;
  ClosedLoopRunStats uncontrolled_stats;
};

namespace detail {

inline ClosedLoopRunStats run_stats(const std::vector<ClosedLoopRow>& rows, double target,
                                    double band) {
  ClosedLoopRunStats s;
  if (rows.empty()) return s;
  double acc = 0.0, acc2 = 0.0;
  std::size_t inside = 0;
  for (const auto& r : rows) {
    const double d = r.realized_t - target;
    acc += std::abs(d);
    acc2 += d * d;
    s.max_abs_dev = std::max(s.max_abs_dev, std::abs(d));
    if (std::abs(d) <= band) ++inside;
  }
  s.mean_abs_dev = acc / static_cast<double>(rows.size());
  s.std_dev = std::sqrt(acc2 / static_cast<double>(rows.size()));
  s.pct_in_band = 100.0 * static_cast<double>(inside) / static_cast<double>(rows.size());
  return s;
}

/// Online mirror of the offline preprocessing for one plant run: clips each
/// minute against the stored bounds, averages l_window minutes, scales, and
/// maintains the rolling model window.
class OnlineFeaturePipeline {
 public:
  OnlineFeaturePipeline(const std::vector<std::string>& feature_order,
                        const std::vector<std::string>& plant_channels,
                        const StatsTable& stats, const PreprocessConfig& prep,
                        std::size_t window)
      : feature_order_(feature_order),
        scaler_(scaler_from_stats(stats, feature_order)),
        l_window_(prep.l_window),
        window_(window) {
    for (const auto& name : feature_order_) {
      if (name == kTemperatureColumn) {
        src_.push_back(SIZE_MAX);
      } else {
        auto it = std::find(plant_channels.begin(), plant_channels.end(), name);
        if (it == plant_channels.end())
          throw std::runtime_error("closed loop: model feature '" + name +
                                   "' does not exist in the plant");
        src_.push_back(static_cast<std::size_t>(it - plant_channels.begin()));
      }
      const auto st = stats.find(name);
      if (st == stats.end())
        throw std::runtime_error("closed loop: no sidecar stats for " + name);
      const bool excluded = std::find(prep.iqr_exclude.begin(), prep.iqr_exclude.end(),
                                      name) != prep.iqr_exclude.end();
      bounds_.push_back(excluded
                            ? IqrBounds{0, 0, 0, -std::numeric_limits<double>::infinity(),
                                        std::numeric_limits<double>::infinity()}
                            : IqrBounds::from_quartiles(st->second.q1, st->second.q3,
                                                        prep.iqr_k));
    }
    acc_.assign(feature_order_.size(), 0.0);
  }

  /// Returns true when a new discretized row was completed.
  bool push_minute(const SyntheticPlant::MinuteRow& row) {
    for (std::size_t f = 0; f < feature_order_.size(); ++f) {
      double v;
      if (src_[f] == SIZE_MAX) {
        v = (row.taps[0] + row.taps[1] + row.taps[2] + row.taps[3]) / 4.0;
      } else {
        v = row.channels[src_[f]];
      }
      acc_[f] += std::clamp(v, bounds_[f].lower, bounds_[f].upper);
    }
    if (++filled_ < l_window_) return false;
    std::vector<double> disc(feature_order_.size());
    for (std::size_t f = 0; f < feature_order_.size(); ++f) {
      disc[f] = scaler_.transform_value(f, acc_[f] / static_cast<double>(l_window_));
      acc_[f] = 0.0;
    }
    filled_ = 0;
    rows_.push_back(std::move(disc));
    if (rows_.size() > window_) rows_.pop_front();
    return true;
  }

  bool window_ready() const { return rows_.size() >= window_; }

  Tensor history() const {
    Tensor h(Shape{window_, feature_order_.size()});
    for (std::size_t r = 0; r < window_; ++r)
      for (std::size_t c = 0; c < feature_order_.size(); ++c)
        h.at(r, c) = rows_[r][c];
    return h;
  }

  const MinMaxScaler& scaler() const { return scaler_; }

 private:
  std::vector<std::string> feature_order_;
  MinMaxScaler scaler_;
  std::vector<std::size_t> src_;
  std::vector<IqrBounds> bounds_;
  std::size_t l_window_, window_;
  std::vector<double> acc_;
  std::size_t filled_ = 0;
  std::deque<std::vector<double>> rows_;
};

}  // namespace detail

/// Receding-horizon control against the synthetic plant, plus an identically
/// seeded uncontrolled run (the plant's own schedule) for comparison. The
/// controller re-plans every `replan_every_steps` discretized steps and holds
/// the first policy value until the next plan.
inline ClosedLoopResult closed_loop_eval(const PlantConfig& plant_cfg,
                                         const MallModel& mall,
                                         const StatsTable& sidecar,
                                         const std::vector<std::string>& feature_order,
                                         const PreprocessConfig& prep,
                                         const ClosedLoopConfig& cfg) {
  if (feature_order.size() != mall.input_width())
    throw std::invalid_argument("closed_loop_eval: feature order width mismatch");
  const std::size_t window = 24;
  const std::size_t horizon = mall.horizon();
  const std::size_t pci_col = [&] {
    const auto it = std::find(feature_order.begin(), feature_order.end(), "pci");
    if (it == feature_order.end())
      throw std::invalid_argument("closed_loop_eval: feature order lacks 'pci'");
    return static_cast<std::size_t>(it - feature_order.begin());
  }();
  const std::size_t temp_col = [&] {
    const auto it =
        std::find(feature_order.begin(), feature_order.end(), kTemperatureColumn);
    if (it == feature_order.end())
      throw std::invalid_argument("closed_loop_eval: feature order lacks temperature");
    return static_cast<std::size_t>(it - feature_order.begin());
  }();

  SyntheticPlant controlled_plant(plant_cfg);
  SyntheticPlant uncontrolled_plant(plant_cfg);
  detail::OnlineFeaturePipeline controlled_pipe(feature_order,
                                                controlled_plant.channel_names(), sidecar,
                                                prep, window);
  detail::OnlineFeaturePipeline uncontrolled_pipe(feature_order,
                                                  uncontrolled_plant.channel_names(),
                                                  sidecar, prep, window);

  // Warmup: fill the model window and flush the PCI delay line on the
  // built-in schedule, identically for both runs.
  const int warmup_minutes =
      static_cast<int>((window + horizon) * prep.l_window) + plant_cfg.pci_delay_minutes;
  for (int m = 0; m < warmup_minutes; ++m) {
    controlled_pipe.push_minute(controlled_plant.step());
    uncontrolled_pipe.push_minute(uncontrolled_plant.step());
  }

  MOptimModel moptim(window + horizon, feature_order.size(), horizon);
  moptim.init(cfg.seed);
  const MinMaxScaler& scaler = controlled_pipe.scaler();
  const std::size_t temp_feature = scaler.feature_index(kTemperatureColumn);

  OptimProblem problem;
  problem.target_degc = cfg.target_degc;
  problem.target_scaled = scaler.transform_value(temp_feature, cfg.target_degc);
  problem.lambda = cfg.lambda;
  problem.pci_col = pci_col;
  problem.temp_col = temp_col;

  ClosedLoopResult result;
  double pci_cmd = 0.5;
  bool have_plan = false;
  int plan_age_steps = 0;  // discretized steps since the active plan was made
  std::vector<double> plan_temps_degc;
  int steps_since_plan = cfg.replan_every_steps;  // plan immediately
  bool first_plan = true;

  for (int m = 0; m < cfg.control_minutes; ++m) {
    // Re-plan at discretized step boundaries.
    if (m % static_cast<int>(prep.l_window) == 0 &&
        steps_since_plan >= cfg.replan_every_steps && controlled_pipe.window_ready()) {
      problem.history = controlled_pipe.history();
      if (!cfg.warm_start && !first_plan) moptim.init(cfg.seed);
      OptimizeConfig ocfg;
      ocfg.iterations = first_plan || !cfg.warm_start ? cfg.iterations_first
                                                      : cfg.iterations_warm;
      ocfg.lr = cfg.opt_lr;
      const auto opt = optimize(mall, moptim, problem, ocfg, &scaler, temp_feature);
      const std::size_t pci_feature = scaler.feature_index("pci");
      pci_cmd = std::clamp(scaler.inverse_value(pci_feature, opt.best.pci[0]), 0.0, 1.0);
      plan_temps_degc = opt.best.predicted_t_degc;
      have_plan = true;
      plan_age_steps = 0;
      steps_since_plan = 0;
      first_plan = false;
    }

    const auto c_row = controlled_plant.step(have_plan ? pci_cmd : kMissing);
    const auto u_row = uncontrolled_plant.step();
    if (controlled_pipe.push_minute(c_row)) {
      ++plan_age_steps;
      ++steps_since_plan;
    }
    uncontrolled_pipe.push_minute(u_row);

    ClosedLoopRow cl;
    cl.minute = c_row.minute;
    cl.pci_applied = c_row.channels[0];
    cl.realized_t = (c_row.taps[0] + c_row.taps[1] + c_row.taps[2] + c_row.taps[3]) / 4.0;
    cl.predicted_t = (have_plan && plan_age_steps < static_cast<int>(horizon))
                         ? plan_temps_degc[plan_age_steps]
                         : kMissing;
    result.controlled.push_back(cl);

    ClosedLoopRow ul;
    ul.minute = u_row.minute;
    ul.pci_applied = u_row.channels[0];
    ul.realized_t = (u_row.taps[0] + u_row.taps[1] + u_row.taps[2] + u_row.taps[3]) / 4.0;
    ul.predicted_t = kMissing;
    result.uncontrolled.push_back(ul);
  }

  result.controlled_stats =
      detail::run_stats(result.controlled, cfg.target_degc, cfg.band_degc);
  result.uncontrolled_stats =
      detail::run_stats(result.uncontrolled, cfg.target_degc, cfg.band_degc);
  return result;
}

inline std::string closed_loop_to_csv(const ClosedLoopResult& result) {
  std::string out = "run,timestamp,pci_applied,realized_t,predicted_t\n";
  auto dump = [&out](const char* run, const std::vector<ClosedLoopRow>& rows) {
    for (const auto& r : rows) {
      out += std::string(run) + "," + minutes_to_iso(r.minute) + "," +
             format_double(r.pci_applied) + "," + format_double(r.realized_t) + "," +
             (is_missing(r.predicted_t) ? "null" : format_double(r.predicted_t)) + "\n";
    }
  };
  dump("controlled", result.controlled);
  dump("uncontrolled", result.uncontrolled);
  return out;
}

}  // namespace furnace
