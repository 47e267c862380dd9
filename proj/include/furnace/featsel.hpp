#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "furnace/gboost.hpp"
#include "furnace/io_util.hpp"

namespace furnace {

inline double pearson_correlation(const std::vector<double>& x,
                                  const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("pearson_correlation: size mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Per-feature influence scores normalized to sum 100, plus each feature's
/// linear correlation with the target and its rank (1 = most influential).
struct ImportanceReport {
  std::vector<std::string> features;
  std::vector<double> influence;
  std::vector<double> corr;
  std::vector<std::size_t> rank;  // rank[i] is 1-based

  /// Feature indices ordered by descending influence (ties: lowest index).
  std::vector<std::size_t> order() const {
    std::vector<std::size_t> idx(features.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return influence[a] > influence[b];
    });
    return idx;
  }
};

inline ImportanceReport importance(const GbModel& model,
                                   const std::vector<std::vector<double>>& columns,
                                   const std::vector<double>& target,
                                   const std::vector<std::string>& names) {
  if (names.size() != model.n_features() || columns.size() != names.size())
    throw std::invalid_argument("importance: feature count mismatch");
  ImportanceReport rep;
  rep.features = names;
  rep.influence = model.raw_importance();
  const double total = std::accumulate(rep.influence.begin(), rep.influence.end(), 0.0);
  if (total > 0.0)
    for (double& v : rep.influence) v = v / total * 100.0;
  rep.corr.reserve(names.size());
  for (const auto& col : columns) rep.corr.push_back(pearson_correlation(col, target));
  rep.rank.assign(names.size(), 0);
  const auto ord = rep.order();
  for (std::size_t pos = 0; pos < ord.size(); ++pos) rep.rank[ord[pos]] = pos + 1;
  return rep;
}

/// Union of the top n_temp features by temperature influence and the top
/// n_pci by PCI influence, deduplicated with temperature-rank priority and
/// padded from the temperature ranking back up to `total` names.
inline std::vector<std::string> select_features(const ImportanceReport& report_temp,
                                                const ImportanceReport& report_pci,
                                                std::size_t n_temp = 19,
                                                std::size_t n_pci = 6,
                                                std::size_t total = 25) {
  if (report_temp.features != report_pci.features)
    throw std::invalid_argument("select_features: reports cover different features");
  if (report_temp.features.size() < total)
    throw std::invalid_argument("select_features: fewer than " + std::to_string(total) +
                                " distinct features available");

  std::vector<std::string> out;
  auto contains = [&](const std::string& name) {
    return std::find(out.begin(), out.end(), name) != out.end();
  };

  const auto ord_t = report_temp.order();
  const auto ord_p = report_pci.order();
  for (std::size_t i = 0; i < n_temp && i < ord_t.size(); ++i)
    out.push_back(report_temp.features[ord_t[i]]);
  for (std::size_t i = 0; i < n_pci && i < ord_p.size(); ++i) {
    const auto& name = report_pci.features[ord_p[i]];
    if (!contains(name)) out.push_back(name);
  }
  for (std::size_t i = n_temp; i < ord_t.size() && out.size() < total; ++i) {
    const auto& name = report_temp.features[ord_t[i]];
    if (!contains(name)) out.push_back(name);
  }
  if (out.size() != total)
    throw std::logic_error("select_features: could not assemble " + std::to_string(total) +
                           " features");
  return out;
}

/// CSV mirroring the reference importance table: feature,influence,corr,rank,
/// rows ordered by rank.
inline std::string importance_to_csv(const ImportanceReport& rep) {
  std::string out = "feature,influence,corr,rank\n";
  for (std::size_t idx : rep.order()) {
    out += rep.features[idx] + "," + format_double(rep.influence[idx]) + "," +
           format_double(rep.corr[idx]) + "," + std::to_string(rep.rank[idx]) + "\n";
  }
  return out;
}

}  // namespace furnace
