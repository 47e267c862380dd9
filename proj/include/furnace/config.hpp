#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "furnace/gboost.hpp"
#include "furnace/io_util.hpp"
#include "furnace/pci_opt.hpp"
#include "furnace/plant.hpp"
#include "furnace/preprocess.hpp"
#include "furnace/trainer.hpp"

namespace furnace {

inline constexpr const char* kSeedEnvVar = "FURNACE_SEED";

/// Every tunable of the pipeline in one key=value file. Unknown keys are
/// rejected so typos cannot silently fall back to defaults.
class RunConfig {
 public:
  RunConfig() : values_(known_keys()) {}

  static RunConfig from_file(const std::string& path) {
    RunConfig cfg;
    const auto kv = parse_key_value_text(read_text_file(path), path.c_str());
    for (const auto& [key, value] : kv) {
      if (!cfg.values_.count(key))
        throw std::runtime_error(path + ": unknown config key '" + key + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  std::string get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
      throw std::logic_error("RunConfig: unregistered key " + key);
    return it->second;
  }

  double get_double(const std::string& key) const {
    return parse_double(get(key), key.c_str());
  }
  int get_int(const std::string& key) const {
    return static_cast<int>(get_double(key));
  }
  std::size_t get_size(const std::string& key) const {
    return static_cast<std::size_t>(get_double(key));
  }
  bool get_bool(const std::string& key) const {
    const std::string v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config key " + key + " must be true/false, got '" + v + "'");
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key))
      throw std::logic_error("RunConfig: unregistered key " + key);
    values_[key] = value;
  }

  /// Seed resolution: explicit flag, then the config file, then the
  /// environment variable, then 1.
  std::uint64_t seed(std::optional<std::uint64_t> flag = std::nullopt) const {
    if (flag) return *flag;
    const std::string from_file = get("seed");
    if (!from_file.empty())
      return static_cast<std::uint64_t>(parse_double(from_file, "seed"));
    if (const char* env = std::getenv(kSeedEnvVar))
      return static_cast<std::uint64_t>(parse_double(env, kSeedEnvVar));
    return 1;
  }

  PlantConfig plant(std::uint64_t seed) const {
    PlantConfig p;
    p.n_channels = get_int("plant.n_channels");
    p.pci_delay_minutes = get_int("plant.pci_delay_minutes");
    p.response_gain = get_double("plant.response_gain");
    p.noise_std = get_double("plant.noise_std");
    p.process_noise = get_double("plant.process_noise");
    p.disturbance_amplitude = get_double("plant.disturbance_amplitude");
    p.disturbance_period_minutes = get_double("plant.disturbance_period_minutes");
    p.ar_coeff = get_double("plant.ar_coeff");
    p.n_informative = get_int("plant.n_informative");
    p.n_pci_echo = get_int("plant.n_pci_echo");
    p.channel_noise = get_double("plant.channel_noise");
    p.schedule_hold_min = get_int("plant.schedule_hold_min");
    p.schedule_hold_max = get_int("plant.schedule_hold_max");
    p.seed = seed;
    return p;
  }

  PreprocessConfig preprocess_cfg() const {
    PreprocessConfig c;
    c.l_window = get_size("preprocess.l_window");
    c.iqr_k = get_double("preprocess.iqr_k");
    c.impute.ffill_max = get_int("preprocess.ffill_max");
    c.impute.max_gap = get_int("preprocess.max_gap");
    c.train_fraction = get_double("preprocess.train_fraction");
    const std::string excl = get("preprocess.iqr_exclude");
    if (!excl.empty()) {
      for (const auto& name : split_csv_line(excl))
        if (!name.empty()) c.iqr_exclude.push_back(name);
    }
    return c;
  }

  GbConfig gb() const {
    GbConfig c;
    c.rounds = get_int("featsel.rounds");
    c.depth = get_int("featsel.depth");
    c.shrinkage = get_double("featsel.shrinkage");
    c.min_leaf = get_size("featsel.min_leaf");
    return c;
  }

  TrainConfig train_cfg(std::uint64_t seed) const {
    TrainConfig c;
    c.epochs = get_int("train.epochs");
    c.batch_size = get_size("train.batch_size");
    c.lr = get_double("train.lr");
    c.split_ratio = get_double("train.split_ratio");
    c.patience = get_int("train.patience");
    c.val_fraction = get_double("train.val_fraction");
    c.seed = seed;
    return c;
  }

  ClosedLoopConfig closed_loop_cfg(std::uint64_t seed) const {
    ClosedLoopConfig c;
    c.control_minutes = get_int("closedloop.control_minutes");
    c.replan_every_steps = get_int("closedloop.replan_every_steps");
    c.iterations_first = get_int("closedloop.iterations_first");
    c.iterations_warm = get_int("closedloop.iterations_warm");
    c.warm_start = get_bool("closedloop.warm_start");
    c.lambda = get_double("optim.lambda");
    c.opt_lr = get_double("optim.lr");
    c.band_degc = get_double("closedloop.band_degc");
    c.target_degc = get_double("closedloop.target_degc");
    c.seed = seed;
    return c;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  static const std::map<std::string, std::string>& known_keys() {
    static const std::map<std::string, std::string> defaults = {
        {"seed", ""},
        // dataio: synthetic plant
        {"plant.n_channels", "40"},
        {"plant.pci_delay_minutes", "150"},
        {"plant.response_gain", "-30"},
        {"plant.noise_std", "1"},
        {"plant.process_noise", "0.02"},
        {"plant.disturbance_amplitude", "12"},
        {"plant.disturbance_period_minutes", "1440"},
        {"plant.ar_coeff", "0.98"},
        {"plant.n_informative", "5"},
        {"plant.n_pci_echo", "2"},
        {"plant.channel_noise", "0.05"},
        {"plant.schedule_hold_min", "120"},
        {"plant.schedule_hold_max", "240"},
        // preprocessing
        {"preprocess.l_window", "10"},
        {"preprocess.iqr_k", "5"},
        {"preprocess.ffill_max", "30"},
        {"preprocess.max_gap", "180"},
        {"preprocess.train_fraction", "0.8"},
        {"preprocess.iqr_exclude", ""},
        // feature selection
        {"featsel.rounds", "100"},
        {"featsel.depth", "3"},
        {"featsel.shrinkage", "0.1"},
        {"featsel.min_leaf", "2"},
        {"featsel.n_temp", "19"},
        {"featsel.n_pci", "6"},
        {"featsel.total", "25"},
        // model sizes
        {"model.hidden_mt", "143"},
        {"model.hidden_mall", "256"},
        {"model.window", "24"},
        {"model.horizon", "5"},
        // training
        {"train.epochs", "100"},
        {"train.batch_size", "32"},
        {"train.lr", "0.001"},
        {"train.split_ratio", "0.8"},
        {"train.patience", "10"},
        {"train.val_fraction", "0.1"},
        // policy optimization
        {"optim.iterations", "500"},
        {"optim.lr", "0.01"},
        {"optim.lambda", "1"},
        // closed loop
        {"closedloop.control_minutes", "2880"},
        {"closedloop.replan_every_steps", "5"},
        {"closedloop.iterations_first", "500"},
        {"closedloop.iterations_warm", "150"},
        {"closedloop.warm_start", "true"},
        {"closedloop.band_degc", "10"},
        {"closedloop.target_degc", "1510"},
        // pipeline meta-command budgets
        {"pipeline.minutes", "8640"},
        {"pipeline.train_epochs", "15"},
        {"pipeline.optimize_iterations", "200"},
        {"pipeline.closedloop_minutes", "600"},
    };
    return defaults;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace furnace
