#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/frame.hpp"
#include "furnace/io_util.hpp"
#include "furnace/tensor.hpp"

namespace furnace {

struct ImputeConfig {
  int ffill_max = 30;  // minutes: short gaps are forward-filled
  int max_gap = 180;   // minutes: longer interior gaps are interpolated up to here
};

/// Fills missing runs in place. Interior runs up to ffill_max are forward
/// filled; longer ones up to max_gap are linearly interpolated between their
/// anchors; anything longer is an error (the caller should have split the
/// series there). Leading/trailing runs are nearest-filled up to max_gap.
inline void impute_series(std::vector<double>& x, const ImputeConfig& cfg,
                          const std::string& context) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_missing(x[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_missing(x[j])) ++j;
    const std::size_t run = j - i;
    if (run > static_cast<std::size_t>(cfg.max_gap))
      throw std::runtime_error(context + ": missing run of " + std::to_string(run) +
                               " exceeds the imputation horizon (" +
                               std::to_string(cfg.max_gap) + ")");
    const bool has_left = i > 0;
    const bool has_right = j < n;
    if (!has_left && !has_right)
      throw std::runtime_error(context + ": series is entirely missing");
    if (!has_left) {
      std::fill(x.begin(), x.begin() + j, x[j]);
    } else if (!has_right) {
      std::fill(x.begin() + i, x.end(), x[i - 1]);
    } else if (run <= static_cast<std::size_t>(cfg.ffill_max)) {
      std::fill(x.begin() + i, x.begin() + j, x[i - 1]);
    } else {
      const double a = x[i - 1], b = x[j];
      for (std::size_t k = i; k < j; ++k) {
        const double t = static_cast<double>(k - i + 1) / static_cast<double>(run + 1);
        x[k] = a + t * (b - a);
      }
    }
    i = j;
  }
}

/// Per-timestamp mean over the non-missing tap temperatures; rows where all
/// four taps are missing become gaps that are then imputed (or rejected when
/// longer than the horizon).
inline std::vector<double> assemble_temperature(const SensorFrame& frame,
                                                const ImputeConfig& cfg = {}) {
  std::vector<double> out(frame.rows(), kMissing);
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < 4; ++k) {
      const double v = frame.tap_temps[k][r];
      if (!is_missing(v)) {
        sum += v;
        ++count;
      }
    }
    if (count > 0) out[r] = sum / count;
  }
  impute_series(out, cfg, "assemble_temperature");
  return out;
}

/// Splits a frame at cadence gaps (all-missing runs) longer than max_gap.
/// The gap rows themselves are dropped; shorter gaps stay and are handled by
/// imputation.
inline std::vector<SensorFrame> split_segments(const SensorFrame& frame, int max_gap) {
  auto row_all_missing = [&](std::size_t r) {
    for (const auto& c : frame.channels)
      if (!is_missing(c[r])) return false;
    for (const auto& t : frame.tap_temps)
      if (!is_missing(t[r])) return false;
    return true;
  };

  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end)
  std::size_t begin = 0, r = 0;
  while (r < frame.rows()) {
    if (!row_all_missing(r)) {
      ++r;
      continue;
    }
    std::size_t j = r;
    while (j < frame.rows() && row_all_missing(j)) ++j;
    if (j - r > static_cast<std::size_t>(max_gap)) {
      if (r > begin) spans.emplace_back(begin, r);
      begin = j;
    }
    r = j;
  }
  if (frame.rows() > begin) spans.emplace_back(begin, frame.rows());

  std::vector<SensorFrame> out;
  for (const auto& [a, b] : spans) {
    SensorFrame seg;
    seg.channel_names = frame.channel_names;
    seg.timestamps.assign(frame.timestamps.begin() + a, frame.timestamps.begin() + b);
    for (const auto& c : frame.channels)
      seg.channels.emplace_back(c.begin() + a, c.begin() + b);
    for (int k = 0; k < 4; ++k)
      seg.tap_temps[k].assign(frame.tap_temps[k].begin() + a, frame.tap_temps[k].begin() + b);
    out.push_back(std::move(seg));
  }
  return out;
}

/// Quantile with linear interpolation between closest ranks.
inline double quantile_linear(std::vector<double> sorted_copy, double p) {
  auto& x = sorted_copy;
  x.erase(std::remove_if(x.begin(), x.end(), [](double v) { return is_missing(v); }),
          x.end());
  if (x.empty()) throw std::invalid_argument("quantile: empty series");
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] * (1.0 - frac) + x[lo + 1] * frac;
}

/// Outlier-clipping bounds at k interquartile ranges. Both bounds are
/// anchored at the first quartile: [q1 - k*iqr, q1 + k*iqr], which is what
/// the published reference bounds for the tap-temperature columns follow.
struct IqrBounds {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  static IqrBounds from_quartiles(double q1, double q3, double k = 5.0) {
    if (q3 < q1) throw std::invalid_argument("IqrBounds: q3 < q1");
    IqrBounds b;
    b.q1 = q1;
    b.q3 = q3;
    b.iqr = q3 - q1;
    b.lower = q1 - k * b.iqr;
    b.upper = q1 + k * b.iqr;
    return b;
  }

  static IqrBounds from_series(std::span<const double> x, double k = 5.0) {
    std::vector<double> copy(x.begin(), x.end());
    const double q1 = quantile_linear(copy, 0.25);
    const double q3 = quantile_linear(copy, 0.75);
    return from_quartiles(q1, q3, k);
  }
};

/// Clips values outside [lower, upper] to the violated bound; missing values
/// pass through.
inline std::vector<double> iqr_correct(std::span<const double> series,
                                       const IqrBounds& bounds) {
  std::vector<double> out(series.begin(), series.end());
  for (double& v : out) {
    if (is_missing(v)) continue;
    v = std::clamp(v, bounds.lower, bounds.upper);
  }
  return out;
}

/// Non-overlapping window means: steps = floor(len / l_window), window
/// advanced by l_window per output step, remainder dropped.
inline std::vector<double> discretize(std::span<const double> series,
                                      std::size_t l_window = 10) {
  if (l_window == 0) throw std::invalid_argument("discretize: l_window must be positive");
  if (series.size() < l_window)
    throw std::invalid_argument("discretize: series shorter than one window");
  const std::size_t steps = series.size() / l_window;
  std::vector<double> out(steps, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    double sum = 0.0;
    for (std::size_t k = 0; k < l_window; ++k) sum += series[s * l_window + k];
    out[s] = sum / static_cast<double>(l_window);
  }
  return out;
}

/// Window means of named columns plus the step-start timestamps.
struct DiscretizedSeries {
  std::size_t l_window = 10;
  std::vector<std::int64_t> step_minutes;  // start minute of each window
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;  // columns[c][step]

  std::size_t steps() const { return step_minutes.size(); }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw std::out_of_range("DiscretizedSeries: no column named " + name);
  }
};

/// Per-feature min-max scaling fitted on training data only. Constant
/// features are kept but mapped to 0 (and inverse back to their constant).
class MinMaxScaler {
 public:
  struct Feature {
    std::string name;
    double min = 0.0;
    double max = 0.0;
  };

  void fit(const std::vector<std::string>& names,
           const std::vector<std::span<const double>>& train_columns) {
    if (names.size() != train_columns.size())
      throw std::invalid_argument("MinMaxScaler: name/column count mismatch");
    feats_.clear();
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (train_columns[c].empty())
        throw std::invalid_argument("MinMaxScaler: empty training column " + names[c]);
      Feature f;
      f.name = names[c];
      f.min = *std::min_element(train_columns[c].begin(), train_columns[c].end());
      f.max = *std::max_element(train_columns[c].begin(), train_columns[c].end());
      feats_.push_back(f);
    }
  }

  void set_features(std::vector<Feature> feats) { feats_ = std::move(feats); }
  const std::vector<Feature>& features() const { return feats_; }
  bool fitted() const { return !feats_.empty(); }

  std::size_t feature_index(const std::string& name) const {
    require_fitted();
    for (std::size_t i = 0; i < feats_.size(); ++i)
      if (feats_[i].name == name) return i;
    throw std::out_of_range("MinMaxScaler: no feature named " + name);
  }

  bool is_constant(std::size_t f) const { return feats_.at(f).max <= feats_.at(f).min; }

  double range(std::size_t f) const { return feats_.at(f).max - feats_.at(f).min; }

  double transform_value(std::size_t f, double v) const {
    require_fitted();
    const Feature& ft = feats_.at(f);
    if (is_constant(f)) return 0.0;
    return (v - ft.min) / (ft.max - ft.min);
  }

  double inverse_value(std::size_t f, double v) const {
    require_fitted();
    const Feature& ft = feats_.at(f);
    if (is_constant(f)) return ft.min;
    return ft.min + v * (ft.max - ft.min);
  }

 private:
  void require_fitted() const {
    if (feats_.empty()) throw std::logic_error("MinMaxScaler: not fitted");
  }
  std::vector<Feature> feats_;
};

// ---- Sidecar: per-channel stats persisted for bit-exact reuse ----

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

using StatsTable = std::map<std::string, ChannelStats>;

inline std::string stats_to_text(const StatsTable& stats) {
  std::string out = "channel,min,max,q1,q3\n";
  for (const auto& [name, s] : stats) {
    out += name + "," + format_double(s.min) + "," + format_double(s.max) + "," +
           format_double(s.q1) + "," + format_double(s.q3) + "\n";
  }
  return out;
}

inline StatsTable stats_from_text(const std::string& text, const char* context) {
  StatsTable stats;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
          std::vector<std::string>{"channel", "min", "max", "q1", "q3"})
    throw std::runtime_error(std::string(context) + ": bad sidecar header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5)
      throw std::runtime_error(std::string(context) + ": bad sidecar row '" + line + "'");
    ChannelStats s;
    s.min = parse_double(cells[1], context);
    s.max = parse_double(cells[2], context);
    s.q1 = parse_double(cells[3], context);
    s.q3 = parse_double(cells[4], context);
    stats[cells[0]] = s;
  }
  return stats;
}

inline MinMaxScaler scaler_from_stats(const StatsTable& stats,
                                      const std::vector<std::string>& feature_order) {
  std::vector<MinMaxScaler::Feature> feats;
  for (const auto& name : feature_order) {
    const auto it = stats.find(name);
    if (it == stats.end())
      throw std::runtime_error("scaler_from_stats: no stats for feature " + name);
    feats.push_back({name, it->second.min, it->second.max});
  }
  MinMaxScaler scaler;
  scaler.set_features(std::move(feats));
  return scaler;
}

// ---- Full preprocessing pass over a raw frame ----

struct PreprocessConfig {
  std::size_t l_window = 10;
  double iqr_k = 5.0;
  ImputeConfig impute;
  std::vector<std::string> iqr_exclude;
  double train_fraction = 0.8;  // stats are fitted on this leading share
};

inline const std::string kTemperatureColumn = "temperature";

struct PreprocessOutput {
  std::vector<DiscretizedSeries> segments;  // channels..., temperature last
  StatsTable stats;
};

/// The full cleaning pipeline: split at long gaps, assemble the tap average,
/// impute every channel, clip at the training-split IQR bounds, discretize,
/// and record training-split min/max per column.
inline PreprocessOutput preprocess(const SensorFrame& raw, const PreprocessConfig& cfg) {
  const auto segments = split_segments(raw, cfg.impute.max_gap);
  if (segments.empty()) throw std::runtime_error("preprocess: no usable data");

  // Imputed per-segment columns, temperature appended last.
  std::vector<std::string> names = raw.channel_names;
  names.push_back(kTemperatureColumn);
  std::vector<std::vector<std::vector<double>>> cols(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const SensorFrame& seg = segments[s];
    cols[s].resize(names.size());
    for (std::size_t c = 0; c < seg.channels.size(); ++c) {
      cols[s][c] = seg.channels[c];
      impute_series(cols[s][c], cfg.impute, "preprocess channel " + names[c]);
    }
    cols[s].back() = assemble_temperature(seg, cfg.impute);
  }

  // Training split: leading train_fraction of all rows, in segment order.
  std::size_t total_rows = 0;
  for (const auto& seg : segments) total_rows += seg.rows();
  std::size_t train_rows =
      static_cast<std::size_t>(static_cast<double>(total_rows) * cfg.train_fraction);
  train_rows = std::max<std::size_t>(train_rows, 1);

  StatsTable stats;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<double> train;
    train.reserve(train_rows);
    for (const auto& seg_cols : cols) {
      for (double v : seg_cols[c]) {
        if (train.size() >= train_rows) break;
        train.push_back(v);
      }
      if (train.size() >= train_rows) break;
    }
    const bool excluded = std::find(cfg.iqr_exclude.begin(), cfg.iqr_exclude.end(),
                                    names[c]) != cfg.iqr_exclude.end();
    ChannelStats st;
    const IqrBounds bounds = IqrBounds::from_series(train, cfg.iqr_k);
    st.q1 = bounds.q1;
    st.q3 = bounds.q3;
    if (!excluded) {
      for (auto& seg_cols : cols) {
        auto clipped = iqr_correct(seg_cols[c], bounds);
        seg_cols[c] = std::move(clipped);
      }
    }
    stats[names[c]] = st;  // min/max filled after discretization
  }

  PreprocessOutput out;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].rows() < cfg.l_window) continue;
    DiscretizedSeries d;
    d.l_window = cfg.l_window;
    d.names = names;
    const std::size_t steps = segments[s].rows() / cfg.l_window;
    for (std::size_t k = 0; k < steps; ++k)
      d.step_minutes.push_back(segments[s].timestamps[k * cfg.l_window]);
    for (std::size_t c = 0; c < names.size(); ++c)
      d.columns.push_back(discretize(cols[s][c], cfg.l_window));
    out.segments.push_back(std::move(d));
  }
  if (out.segments.empty())
    throw std::runtime_error("preprocess: no segment is at least one window long");

  // Discretized training rows define the scaler statistics.
  std::size_t total_steps = 0;
  for (const auto& d : out.segments) total_steps += d.steps();
  std::size_t train_steps =
      static_cast<std::size_t>(static_cast<double>(total_steps) * cfg.train_fraction);
  train_steps = std::max<std::size_t>(train_steps, 1);
  for (std::size_t c = 0; c < names.size(); ++c) {
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t seen = 0;
    for (const auto& d : out.segments) {
      for (double v : d.columns[c]) {
        if (seen++ >= train_steps) break;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      if (seen >= train_steps) break;
    }
    stats[names[c]].min = mn;
    stats[names[c]].max = mx;
  }
  out.stats = std::move(stats);
  return out;
}

// ---- Discretized CSV round-trip (timestamp, segment, columns...) ----

inline std::string discretized_to_csv(const std::vector<DiscretizedSeries>& segments) {
  if (segments.empty()) throw std::invalid_argument("discretized_to_csv: no segments");
  std::string out = "timestamp,segment";
  for (const auto& n : segments[0].names) out += "," + n;
  out += "\n";
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& d = segments[s];
    for (std::size_t k = 0; k < d.steps(); ++k) {
      out += minutes_to_iso(d.step_minutes[k]) + "," + std::to_string(s);
      for (const auto& col : d.columns) out += "," + format_double(col[k]);
      out += "\n";
    }
  }
  return out;
}

inline std::vector<DiscretizedSeries> discretized_from_csv(const std::string& text,
                                                           std::size_t l_window,
                                                           const char* context) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(std::string(context) + ": empty discretized file");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "segment")
    throw std::runtime_error(std::string(context) +
                             ": discretized header must start timestamp,segment");
  std::vector<std::string> names(header.begin() + 2, header.end());
  std::vector<DiscretizedSeries> segments;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error(std::string(context) + ": line " + std::to_string(lineno) +
                               ": wrong field count");
    const std::size_t seg = static_cast<std::size_t>(
        parse_double(cells[1], (std::string(context) + " segment").c_str()));
    while (segments.size() <= seg) {
      DiscretizedSeries d;
      d.l_window = l_window;
      d.names = names;
      d.columns.assign(names.size(), {});
      segments.push_back(std::move(d));
    }
    segments[seg].step_minutes.push_back(iso_to_minutes(cells[0]));
    for (std::size_t c = 0; c < names.size(); ++c)
      segments[seg].columns[c].push_back(parse_double(cells[2 + c], context));
  }
  if (segments.empty())
    throw std::runtime_error(std::string(context) + ": no discretized rows");
  return segments;
}

// ---- Model matrix and sliding-window samples ----

/// Scaled [steps x width] matrix with columns in the given feature order.
inline Tensor build_model_matrix(const DiscretizedSeries& seg,
                                 const std::vector<std::string>& feature_order,
                                 const MinMaxScaler& scaler) {
  Tensor m(Shape{seg.steps(), feature_order.size()});
  for (std::size_t c = 0; c < feature_order.size(); ++c) {
    const std::size_t src = seg.column_index(feature_order[c]);
    const std::size_t f = scaler.feature_index(feature_order[c]);
    for (std::size_t k = 0; k < seg.steps(); ++k)
      m.at(k, c) = scaler.transform_value(f, seg.columns[src][k]);
  }
  return m;
}

/// Stride-1 sliding windows: sample i pairs input steps [i, i+window-1] with
/// target steps [i+window, i+window+horizon-1].
struct SampleSet {
  std::size_t window = 24;
  std::size_t horizon = 5;
  std::size_t width = 27;
  std::size_t temp_col = 26;
  std::size_t n = 0;
  std::vector<double> inputs;       // n * window * width
  std::vector<double> targets_t;    // n * horizon
  std::vector<double> targets_all;  // n * horizon * width

  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * window * width, window * width};
  }
  std::span<const double> target_t(std::size_t i) const {
    return {targets_t.data() + i * horizon, horizon};
  }
  std::span<const double> target_all(std::size_t i) const {
    return {targets_all.data() + i * horizon * width, horizon * width};
  }

  /// Copy of samples [begin, end).
  SampleSet slice(std::size_t begin, std::size_t end) const {
    SampleSet out = *this;
    out.n = end - begin;
    out.inputs.assign(inputs.begin() + begin * window * width,
                      inputs.begin() + end * window * width);
    out.targets_t.assign(targets_t.begin() + begin * horizon,
                         targets_t.begin() + end * horizon);
    out.targets_all.assign(targets_all.begin() + begin * horizon * width,
                           targets_all.begin() + end * horizon * width);
    return out;
  }
};

inline void append_samples(SampleSet& set, const Tensor& matrix, std::size_t temp_col) {
  const std::size_t steps = matrix.rows();
  const std::size_t width = matrix.cols();
  if (width != set.width || temp_col != set.temp_col)
    throw std::invalid_argument("append_samples: width mismatch");
  const std::size_t need = set.window + set.horizon;
  if (steps < need) return;
  for (std::size_t i = 0; i + need <= steps; ++i) {
    for (std::size_t r = 0; r < set.window; ++r)
      for (std::size_t c = 0; c < width; ++c)
        set.inputs.push_back(matrix.at(i + r, c));
    for (std::size_t h = 0; h < set.horizon; ++h)
      set.targets_t.push_back(matrix.at(i + set.window + h, temp_col));
    for (std::size_t h = 0; h < set.horizon; ++h)
      for (std::size_t c = 0; c < width; ++c)
        set.targets_all.push_back(matrix.at(i + set.window + h, c));
    ++set.n;
  }
}

inline SampleSet make_samples(const Tensor& matrix, std::size_t temp_col,
                              std::size_t window = 24, std::size_t horizon = 5) {
  if (matrix.rank() != 2) throw std::invalid_argument("make_samples: need a matrix");
  SampleSet set;
  set.window = window;
  set.horizon = horizon;
  set.width = matrix.cols();
  set.temp_col = temp_col;
  if (matrix.rows() < window + horizon)
    throw std::invalid_argument("make_samples: need at least " +
                                std::to_string(window + horizon) + " steps, got " +
                                std::to_string(matrix.rows()));
  append_samples(set, matrix, temp_col);
  return set;
}

}  // namespace furnace
