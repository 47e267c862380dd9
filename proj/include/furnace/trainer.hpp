#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/adam.hpp"
#include "furnace/models.hpp"
#include "furnace/preprocess.hpp"

#include <nlohmann/json.hpp>

namespace furnace {

inline double rmse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size() || y.empty())
    throw std::invalid_argument("rmse: need equal, non-empty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(y.size()));
}

inline double mae(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size() || y.empty())
    throw std::invalid_argument("mae: need equal, non-empty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - y_hat[i]);
  return acc / static_cast<double>(y.size());
}

/// Chronological split: the first `ratio` of samples (by time) train, the
/// rest test. Samples are already time-ordered by construction.
inline std::pair<SampleSet, SampleSet> split_samples(const SampleSet& samples,
                                                     double ratio = 0.8) {
  if (samples.n < 5) throw std::invalid_argument("split_samples: need at least 5 samples");
  const std::size_t n_train =
      static_cast<std::size_t>(static_cast<double>(samples.n) * ratio);
  if (n_train == 0 || n_train == samples.n)
    throw std::invalid_argument("split_samples: degenerate ratio");
  return {samples.slice(0, n_train), samples.slice(n_train, samples.n)};
}

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::uint64_t seed = 1;
  double split_ratio = 0.8;
  int patience = 10;          // early stopping on validation RMSE
  double val_fraction = 0.1;  // tail share of the training split
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_rmse = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_rmse = 0.0;

  std::string to_csv() const {
    std::string out = "epoch,train_loss,val_rmse\n";
    for (const auto& e : epochs)
      out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
             format_double(e.val_rmse) + "\n";
    return out;
  }
};

namespace detail {

template <typename Model>
double batched_val_rmse(const Model& model, const SampleSet& samples,
                        const std::vector<std::size_t>& idx) {
  std::vector<double> pred, truth;
  for (std::size_t at = 0; at < idx.size(); at += 64) {
    const std::size_t take = std::min<std::size_t>(64, idx.size() - at);
    std::vector<std::size_t> chunk(idx.begin() + at, idx.begin() + at + take);
    const auto g = model.forward_batch(samples, chunk);
    const Tensor t = model.batch_targets(samples, chunk);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      pred.push_back(g.prediction->value.at(i));
      truth.push_back(t.at(i));
    }
  }
  return rmse(truth, pred);
}

}  // namespace detail

/// Mini-batch Adam training with a chronological validation tail and early
/// stopping. The parameters that scored the best validation RMSE are
/// restored before returning.
template <typename Model>
TrainLog train(Model& model, const SampleSet& train_set, const TrainConfig& cfg) {
  if (train_set.n == 0) throw std::invalid_argument("train: empty training set");
  std::size_t n_val = static_cast<std::size_t>(
      static_cast<double>(train_set.n) * cfg.val_fraction);
  if (cfg.val_fraction > 0.0 && n_val == 0 && train_set.n >= 2) n_val = 1;
  const std::size_t n_fit = train_set.n - n_val;
  if (n_fit == 0) throw std::invalid_argument("train: no samples left after validation split");

  std::vector<std::size_t> fit_idx(n_fit);
  std::iota(fit_idx.begin(), fit_idx.end(), 0);
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), n_fit);

  AdamState adam(model.params().size(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(cfg.seed);

  TrainLog log;
  std::vector<double> best_params;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(fit_idx.begin(), fit_idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t at = 0; at < fit_idx.size(); at += cfg.batch_size) {
      const std::size_t take = std::min(cfg.batch_size, fit_idx.size() - at);
      std::vector<std::size_t> batch(fit_idx.begin() + at, fit_idx.begin() + at + take);
      auto g = model.forward_batch(train_set, batch);
      auto loss = ad::l2_loss(g.prediction, ad::constant(model.batch_targets(train_set, batch)));
      const double value = loss->value.at(0);
      if (!std::isfinite(value))
        throw std::runtime_error("train: loss diverged to non-finite at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(at / cfg.batch_size));
      ad::backward(loss);
      const auto grads = model.params().collect_grads(g.leaves);
      adam_step(model.params().values(), grads, adam);
      loss_sum += value * static_cast<double>(take);
      seen += take;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    entry.val_rmse =
        n_val > 0 ? detail::batched_val_rmse(model, train_set, val_idx) : 0.0;
    log.epochs.push_back(entry);

    if (n_val > 0) {
      if (log.best_epoch < 0 || entry.val_rmse < log.best_val_rmse) {
        log.best_epoch = epoch;
        log.best_val_rmse = entry.val_rmse;
        best_params = model.params().values();
      } else if (epoch - log.best_epoch >= cfg.patience) {
        break;
      }
    }
  }
  if (!best_params.empty()) model.params().values() = best_params;
  return log;
}

// ---- Evaluation ----

/// Per-horizon and aggregate errors, in scaled units and in degC through the
/// temperature scaler range (RMSE/MAE commute with the affine inverse).
struct EvalReport {
  std::string model_name;
  std::size_t horizon = 0;
  std::size_t n_samples = 0;
  std::size_t param_count = 0;
  std::size_t head_param_count = 0;
  std::vector<double> rmse_scaled, mae_scaled;  // per horizon step
  double rmse_scaled_all = 0.0, mae_scaled_all = 0.0;
  std::vector<double> rmse_degc, mae_degc;
  double rmse_degc_all = 0.0, mae_degc_all = 0.0;
  double wall_seconds = 0.0;
};

namespace detail {

/// Temperature-channel predictions as one flat [n x horizon] array.
inline std::vector<double> predict_t_flat(const MtModel& model, const SampleSet& samples) {
  std::vector<double> out;
  out.reserve(samples.n * samples.horizon);
  std::vector<std::size_t> idx;
  for (std::size_t at = 0; at < samples.n; at += 64) {
    const std::size_t take = std::min<std::size_t>(64, samples.n - at);
    idx.resize(take);
    std::iota(idx.begin(), idx.end(), at);
    const auto g = model.forward_batch(samples, idx);
    for (std::size_t i = 0; i < g.prediction->value.numel(); ++i)
      out.push_back(g.prediction->value.at(i));
  }
  return out;
}

inline std::vector<double> predict_t_flat(const MallModel& model,
                                          const SampleSet& samples) {
  std::vector<double> out;
  out.reserve(samples.n * samples.horizon);
  std::vector<std::size_t> idx;
  for (std::size_t at = 0; at < samples.n; at += 64) {
    const std::size_t take = std::min<std::size_t>(64, samples.n - at);
    idx.resize(take);
    std::iota(idx.begin(), idx.end(), at);
    const auto g = model.forward_batch(samples, idx);
    for (std::size_t b = 0; b < take; ++b)
      for (std::size_t h = 0; h < samples.horizon; ++h)
        out.push_back(g.prediction->value.at(b, h * samples.width + samples.temp_col));
  }
  return out;
}

inline EvalReport metrics_from_predictions(const std::vector<double>& pred,
                                           const SampleSet& samples, double temp_range) {
  EvalReport rep;
  rep.horizon = samples.horizon;
  rep.n_samples = samples.n;
  std::vector<double> truth(samples.n * samples.horizon);
  for (std::size_t i = 0; i < samples.n; ++i)
    for (std::size_t h = 0; h < samples.horizon; ++h)
      truth[i * samples.horizon + h] = samples.target_t(i)[h];

  for (std::size_t h = 0; h < samples.horizon; ++h) {
    std::vector<double> y, yh;
    y.reserve(samples.n);
    yh.reserve(samples.n);
    for (std::size_t i = 0; i < samples.n; ++i) {
      y.push_back(truth[i * samples.horizon + h]);
      yh.push_back(pred[i * samples.horizon + h]);
    }
    rep.rmse_scaled.push_back(rmse(y, yh));
    rep.mae_scaled.push_back(mae(y, yh));
    rep.rmse_degc.push_back(rep.rmse_scaled.back() * temp_range);
    rep.mae_degc.push_back(rep.mae_scaled.back() * temp_range);
  }
  rep.rmse_scaled_all = rmse(truth, pred);
  rep.mae_scaled_all = mae(truth, pred);
  rep.rmse_degc_all = rep.rmse_scaled_all * temp_range;
  rep.mae_degc_all = rep.mae_scaled_all * temp_range;
  return rep;
}

}  // namespace detail

template <typename Model>
EvalReport evaluate(const Model& model, const SampleSet& test, double temp_range,
                    const std::string& name) {
  const auto start = std::chrono::steady_clock::now();
  const auto pred = detail::predict_t_flat(model, test);
  EvalReport rep = detail::metrics_from_predictions(pred, test, temp_range);
  rep.model_name = name;
  rep.param_count = model.params().size();
  if constexpr (std::is_same_v<Model, MtModel>)
    rep.head_param_count = model.head_param_count();
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Persistence baseline: every horizon step predicts the last observed
/// temperature of the input window.
inline EvalReport persistence_baseline(const SampleSet& test, double temp_range) {
  std::vector<double> pred(test.n * test.horizon);
  for (std::size_t i = 0; i < test.n; ++i) {
    const double last =
        test.input(i)[(test.window - 1) * test.width + test.temp_col];
    for (std::size_t h = 0; h < test.horizon; ++h) pred[i * test.horizon + h] = last;
  }
  EvalReport rep = detail::metrics_from_predictions(pred, test, temp_range);
  rep.model_name = "persistence";
  return rep;
}

/// Side-by-side table of two models on the same test set, with the relative
/// improvement of the second over the first: (rmse_a - rmse_b) / rmse_a.
struct ComparisonReport {
  EvalReport first;
  EvalReport second;
  std::vector<double> improvement_pct;  // per horizon step
  double improvement_all_pct = 0.0;
};

inline ComparisonReport compare_models(const EvalReport& first, const EvalReport& second) {
  if (first.horizon != second.horizon || first.n_samples != second.n_samples)
    throw std::invalid_argument("compare_models: reports cover different test sets");
  ComparisonReport cmp;
  cmp.first = first;
  cmp.second = second;
  for (std::size_t h = 0; h < first.horizon; ++h)
    cmp.improvement_pct.push_back(
        (first.rmse_scaled[h] - second.rmse_scaled[h]) / first.rmse_scaled[h] * 100.0);
  cmp.improvement_all_pct =
      (first.rmse_scaled_all - second.rmse_scaled_all) / first.rmse_scaled_all * 100.0;
  return cmp;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& rep,
                                                  bool include_timing = false) {
  nlohmann::ordered_json j;
  j["model"] = rep.model_name;
  j["n_samples"] = rep.n_samples;
  j["param_count"] = rep.param_count;
  if (rep.head_param_count > 0) j["head_param_count"] = rep.head_param_count;
  for (std::size_t h = 0; h < rep.horizon; ++h) {
    nlohmann::ordered_json row;
    row["horizon_steps"] = h + 1;
    row["rmse_scaled"] = rep.rmse_scaled[h];
    row["mae_scaled"] = rep.mae_scaled[h];
    row["rmse_degc"] = rep.rmse_degc[h];
    row["mae_degc"] = rep.mae_degc[h];
    j["per_horizon"].push_back(row);
  }
  j["rmse_scaled_all"] = rep.rmse_scaled_all;
  j["mae_scaled_all"] = rep.mae_scaled_all;
  j["rmse_degc_all"] = rep.rmse_degc_all;
  j["mae_degc_all"] = rep.mae_degc_all;
  if (include_timing) j["wall_seconds"] = rep.wall_seconds;
  return j;
}

inline nlohmann::ordered_json comparison_to_json(const ComparisonReport& cmp,
                                                 bool include_timing = false) {
  nlohmann::ordered_json j;
  j["models"].push_back(eval_report_to_json(cmp.first, include_timing));
  j["models"].push_back(eval_report_to_json(cmp.second, include_timing));
  j["rmse_improvement_pct_per_horizon"] = cmp.improvement_pct;
  j["rmse_improvement_pct"] = cmp.improvement_all_pct;
  return j;
}

}  // namespace furnace
