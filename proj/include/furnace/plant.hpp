#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/frame.hpp"
#include "furnace/io_util.hpp"

namespace furnace {

/// Configuration of the synthetic plant. The seed fully determines every
/// generated value.
struct PlantConfig {
  int n_channels = 40;          // total sensor channels, pci included
  int pci_delay_minutes = 150;  // PCI-to-temperature transport delay, [120, 180]
  // Steady-state temperature change per unit of normalized PCI. Negative:
  // the informative channels mirror the negative coal/temperature
  // correlation seen in the plant data this generator stands in for.
  double response_gain = -30.0;
  double noise_std = 1.0;        // tap-temperature measurement noise, degC
  double process_noise = 0.02;   // per-minute latent heat noise, degC
  double disturbance_amplitude = 12.0;  // steady-state degC
  double disturbance_period_minutes = 1440.0;
  double ar_coeff = 0.98;        // per-minute latent pole
  int n_informative = 5;         // channels derived from the latent heat state
  int n_pci_echo = 2;            // channels derived from the PCI input
  double channel_noise = 0.05;   // measurement noise on derived channels
  int schedule_hold_min = 120;   // dwell of the built-in PCI schedule, minutes
  int schedule_hold_max = 240;
  std::uint64_t seed = 1;
  std::int64_t start_minute = 27866880;  // 2023-01-01T00:00

  void validate() const {
    if (pci_delay_minutes < 120 || pci_delay_minutes > 180)
      throw std::invalid_argument("PlantConfig: pci_delay_minutes must be in [120, 180]");
    if (n_channels < 1 + n_informative + n_pci_echo)
      throw std::invalid_argument("PlantConfig: n_channels too small for planted channels");
    if (n_informative < 0 || n_pci_echo < 0)
      throw std::invalid_argument("PlantConfig: negative planted channel count");
    if (!(ar_coeff > 0.0 && ar_coeff < 1.0))
      throw std::invalid_argument("PlantConfig: ar_coeff must be in (0, 1)");
    if (noise_std < 0.0 || process_noise < 0.0 || channel_noise < 0.0)
      throw std::invalid_argument("PlantConfig: negative noise level");
    if (schedule_hold_min < 1 || schedule_hold_max < schedule_hold_min)
      throw std::invalid_argument("PlantConfig: bad schedule hold range");
    if (disturbance_period_minutes <= 0.0)
      throw std::invalid_argument("PlantConfig: disturbance period must be positive");
  }
};

inline constexpr double kPlantBaseTemperature = 1510.0;

/// Minute-stepped furnace stand-in: a first-order latent heat state driven by
/// delayed PCI, a slow disturbance, and noise. Planted informative channels
/// are lagged transforms of the latent state or of the disturbance input;
/// the rest is noise. Per-minute RNG consumption is fixed, so runs with the
/// same seed see identical noise regardless of the PCI inputs applied.
class SyntheticPlant {
 public:
  struct MinuteRow {
    std::int64_t minute = 0;
    std::vector<double> channels;
    std::array<double, 4> taps{};
  };

  explicit SyntheticPlant(PlantConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 structure_rng(cfg_.seed * 0x9e3779b97f4a7c15ULL + 1);
    schedule_rng_.seed(cfg_.seed * 0xbf58476d1ce4e5b9ULL + 2);
    noise_rng_.seed(cfg_.seed * 0x94d049bb133111ebULL + 3);

    names_.push_back("pci");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    phase_ = unit(structure_rng) * 2.0 * std::numbers::pi;

    // Informative channels: even ones expose the disturbance input (leading
    // indicators), odd ones are lagged reflections of the latent heat state.
    for (int i = 0; i < cfg_.n_informative; ++i) {
      InformativeChannel ch;
      ch.leads = (i % 2 == 0);
      ch.lag = ch.leads ? 0 : 5 + static_cast<int>(unit(structure_rng) * 25.0);
      ch.scale = (0.5 + unit(structure_rng)) * (i == cfg_.n_informative - 1 ? 1.0 : -1.0);
      ch.offset = 40.0 * (unit(structure_rng) - 0.5);
      informative_.push_back(ch);
      names_.push_back("hearth_probe_" + std::to_string(i));
    }
    for (int i = 0; i < cfg_.n_pci_echo; ++i) {
      EchoChannel ch;
      ch.lag = 1 + static_cast<int>(unit(structure_rng) * 9.0);
      ch.scale = 20.0 + 60.0 * unit(structure_rng);
      ch.offset = 10.0 * unit(structure_rng);
      echoes_.push_back(ch);
      names_.push_back("coal_flow_" + std::to_string(i));
    }
    const int n_noise = cfg_.n_channels - 1 - cfg_.n_informative - cfg_.n_pci_echo;
    for (int i = 0; i < n_noise; ++i) {
      NoiseChannel ch;
      ch.mean = 200.0 * (unit(structure_rng) - 0.5);
      ch.std = 0.2 + 3.0 * unit(structure_rng);
      ch.ar = (i % 4 == 0) ? 0.995 : 0.0;  // a few slow nuisance drifts
      ch.state = ch.mean;
      noise_channels_.push_back(ch);
      names_.push_back("sensor_" + std::to_string(i));
    }

    heat_ = kPlantBaseTemperature;
    const std::size_t hist =
        static_cast<std::size_t>(cfg_.pci_delay_minutes) + 64;
    pci_history_.assign(hist, 0.5);
    heat_history_.assign(hist, kPlantBaseTemperature);
    dist_history_.assign(hist, disturbance_at(-1));
  }

  const std::vector<std::string>& channel_names() const { return names_; }
  const PlantConfig& config() const { return cfg_; }
  double latent_temperature() const { return heat_; }
  std::int64_t current_minute() const { return cfg_.start_minute + t_; }

  /// Names of the heat-informative planted channels.
  std::vector<std::string> informative_channel_names() const {
    std::vector<std::string> out;
    for (int i = 0; i < cfg_.n_informative; ++i)
      out.push_back("hearth_probe_" + std::to_string(i));
    return out;
  }

  /// Advances one minute. A NaN override lets the built-in schedule choose
  /// the PCI level; otherwise the given normalized value (clamped to [0,1])
  /// is applied.
  MinuteRow step(double pci_override = kMissing) {
    double pci = schedule_value();
    if (!is_missing(pci_override))
      pci = std::min(1.0, std::max(0.0, pci_override));

    const double dist = disturbance_at(t_);
    const double delayed_pci = pci_history_[pci_history_.size() -
                                            static_cast<std::size_t>(cfg_.pci_delay_minutes)];
    std::normal_distribution<double> g(0.0, 1.0);
    const double drive =
        cfg_.response_gain * (delayed_pci - 0.5) + dist;
    heat_ = kPlantBaseTemperature + cfg_.ar_coeff * (heat_ - kPlantBaseTemperature) +
            (1.0 - cfg_.ar_coeff) * drive + cfg_.process_noise * g(noise_rng_);

    MinuteRow row;
    row.minute = cfg_.start_minute + t_;
    row.channels.resize(names_.size());
    row.channels[0] = pci;
    std::size_t col = 1;
    for (const auto& ch : informative_) {
      const double base =
          ch.leads ? dist_at_lag(0)
                   : heat_at_lag(ch.lag) - kPlantBaseTemperature;
      row.channels[col++] = ch.scale * base + ch.offset + cfg_.channel_noise * g(noise_rng_);
    }
    for (const auto& ch : echoes_) {
      row.channels[col++] =
          ch.scale * pci_at_lag(ch.lag) + ch.offset + cfg_.channel_noise * g(noise_rng_);
    }
    for (auto& ch : noise_channels_) {
      if (ch.ar > 0.0) {
        ch.state = ch.mean + ch.ar * (ch.state - ch.mean) + ch.std * 0.1 * g(noise_rng_);
        row.channels[col++] = ch.state;
      } else {
        row.channels[col++] = ch.mean + ch.std * g(noise_rng_);
      }
    }
    for (int k = 0; k < 4; ++k) row.taps[k] = heat_ + cfg_.noise_std * g(noise_rng_);

    pci_history_.push_back(pci);
    pci_history_.pop_front();
    heat_history_.push_back(heat_);
    heat_history_.pop_front();
    dist_history_.push_back(dist);
    dist_history_.pop_front();
    ++t_;
    return row;
  }

 private:
  struct InformativeChannel {
    bool leads = false;
    int lag = 0;
    double scale = -1.0;
    double offset = 0.0;
  };
  struct EchoChannel {
    int lag = 0;
    double scale = 1.0;
    double offset = 0.0;
  };
  struct NoiseChannel {
    double mean = 0.0, std = 1.0, ar = 0.0, state = 0.0;
  };

  double disturbance_at(std::int64_t t) const {
    return cfg_.disturbance_amplitude *
           std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                        cfg_.disturbance_period_minutes +
                    phase_);
  }

  double heat_at_lag(int lag) const {
    return heat_history_[heat_history_.size() - 1 - static_cast<std::size_t>(lag)];
  }
  double pci_at_lag(int lag) const {
    return pci_history_[pci_history_.size() - static_cast<std::size_t>(lag)];
  }
  double dist_at_lag(int lag) const {
    return dist_history_[dist_history_.size() - 1 - static_cast<std::size_t>(lag)];
  }

  double schedule_value() {
    if (schedule_left_ == 0) {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::uniform_int_distribution<int> hold(cfg_.schedule_hold_min, cfg_.schedule_hold_max);
      schedule_level_ = unit(schedule_rng_);
      schedule_left_ = hold(schedule_rng_);
    }
    --schedule_left_;
    return schedule_level_;
  }

  PlantConfig cfg_;
  std::vector<std::string> names_;
  std::vector<InformativeChannel> informative_;
  std::vector<EchoChannel> echoes_;
  std::vector<NoiseChannel> noise_channels_;
  std::mt19937_64 schedule_rng_, noise_rng_;
  double phase_ = 0.0;
  double heat_ = kPlantBaseTemperature;
  std::int64_t t_ = 0;
  std::deque<double> pci_history_, heat_history_, dist_history_;
  double schedule_level_ = 0.5;
  int schedule_left_ = 0;
};

/// Runs the plant on its built-in PCI schedule for `minutes` and packs the
/// result as a SensorFrame.
inline SensorFrame generate_plant(const PlantConfig& cfg, int minutes) {
  cfg.validate();
  if (minutes <= cfg.pci_delay_minutes)
    throw std::invalid_argument("generate_plant: minutes must exceed the PCI delay");
  SyntheticPlant plant(cfg);
  SensorFrame frame;
  frame.channel_names = plant.channel_names();
  frame.channels.assign(frame.channel_names.size(), {});
  for (int m = 0; m < minutes; ++m) {
    const auto row = plant.step();
    frame.timestamps.push_back(row.minute);
    for (std::size_t c = 0; c < row.channels.size(); ++c)
      frame.channels[c].push_back(row.channels[c]);
    for (int k = 0; k < 4; ++k) frame.tap_temps[k].push_back(row.taps[k]);
  }
  frame.validate();
  return frame;
}

/// Plant config as a plain-text key=value file.
inline PlantConfig load_plant_config(const std::string& path) {
  const auto kv = parse_key_value_text(read_text_file(path), path.c_str());
  PlantConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "n_channels") cfg.n_channels = static_cast<int>(parse_double(value, "n_channels"));
    else if (key == "pci_delay_minutes") cfg.pci_delay_minutes = static_cast<int>(parse_double(value, "pci_delay_minutes"));
    else if (key == "response_gain") cfg.response_gain = parse_double(value, "response_gain");
    else if (key == "noise_std") cfg.noise_std = parse_double(value, "noise_std");
    else if (key == "process_noise") cfg.process_noise = parse_double(value, "process_noise");
    else if (key == "disturbance_amplitude") cfg.disturbance_amplitude = parse_double(value, "disturbance_amplitude");
    else if (key == "disturbance_period_minutes") cfg.disturbance_period_minutes = parse_double(value, "disturbance_period_minutes");
    else if (key == "ar_coeff") cfg.ar_coeff = parse_double(value, "ar_coeff");
    else if (key == "n_informative") cfg.n_informative = static_cast<int>(parse_double(value, "n_informative"));
    else if (key == "n_pci_echo") cfg.n_pci_echo = static_cast<int>(parse_double(value, "n_pci_echo"));
    else if (key == "channel_noise") cfg.channel_noise = parse_double(value, "channel_noise");
    else if (key == "schedule_hold_min") cfg.schedule_hold_min = static_cast<int>(parse_double(value, "schedule_hold_min"));
    else if (key == "schedule_hold_max") cfg.schedule_hold_max = static_cast<int>(parse_double(value, "schedule_hold_max"));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_double(value, "seed"));
    else if (key == "start_minute") cfg.start_minute = static_cast<std::int64_t>(parse_double(value, "start_minute"));
    else throw std::runtime_error(path + ": unknown plant config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline std::string plant_config_to_text(const PlantConfig& cfg) {
  std::string out;
  out += "n_channels=" + std::to_string(cfg.n_channels) + "\n";
  out += "pci_delay_minutes=" + std::to_string(cfg.pci_delay_minutes) + "\n";
  out += "response_gain=" + format_double(cfg.response_gain) + "\n";
  out += "noise_std=" + format_double(cfg.noise_std) + "\n";
  out += "process_noise=" + format_double(cfg.process_noise) + "\n";
  out += "disturbance_amplitude=" + format_double(cfg.disturbance_amplitude) + "\n";
  out += "disturbance_period_minutes=" + format_double(cfg.disturbance_period_minutes) + "\n";
  out += "ar_coeff=" + format_double(cfg.ar_coeff) + "\n";
  out += "n_informative=" + std::to_string(cfg.n_informative) + "\n";
  out += "n_pci_echo=" + std::to_string(cfg.n_pci_echo) + "\n";
  out += "channel_noise=" + format_double(cfg.channel_noise) + "\n";
  out += "schedule_hold_min=" + std::to_string(cfg.schedule_hold_min) + "\n";
  out += "schedule_hold_max=" + std::to_string(cfg.schedule_hold_max) + "\n";
  out += "seed=" + std::to_string(cfg.seed) + "\n";
  out += "start_minute=" + std::to_string(cfg.start_minute) + "\n";
  return out;
}

}  // namespace furnace
