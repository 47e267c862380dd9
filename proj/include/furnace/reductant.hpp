#pragma once

#include <cmath>
#include <stdexcept>

namespace furnace {

/// Inputs of the reductant-rate bookkeeping formulas.
struct ReductantInputs {
  double corrected_reductant_rate = 0.0;  // R_c, ton/hr
  double dropped_coal_rate = 0.0;         // R_d
  double hot_metal_production = 0.0;      // P
  double pci_total = 0.0;
  double production_realtime = 0.0;  // P_real
  double coke_spt_total = 0.0;       // C_c
  double pig_burden_change = 0.0;    // C_pb
};

namespace detail {
inline void require_finite_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0)
    throw std::domain_error(std::string("reductant: ") + name +
                            " must be finite and non-negative");
}
}  // namespace detail

/// PCI rate in ton/hr: R_c - R_d * P * 1000 / 24.
inline double pci_rate(const ReductantInputs& r) {
  detail::require_finite_nonneg(r.corrected_reductant_rate, "R_c");
  detail::require_finite_nonneg(r.dropped_coal_rate, "R_d");
  detail::require_finite_nonneg(r.hot_metal_production, "P");
  return r.corrected_reductant_rate -
         r.dropped_coal_rate * r.hot_metal_production * 1000.0 / 24.0;
}

/// Total reductant ratio: (PCI_total / P_real * 24 + C_c / C_pb) * 1000.
inline double rar(const ReductantInputs& r) {
  detail::require_finite_nonneg(r.pci_total, "PCI_total");
  detail::require_finite_nonneg(r.coke_spt_total, "C_c");
  if (!(r.production_realtime > 0.0))
    throw std::domain_error("rar: P_real must be positive");
  if (!(r.pig_burden_change > 0.0))
    throw std::domain_error("rar: C_pb must be positive");
  return (r.pci_total / r.production_realtime * 24.0 +
          r.coke_spt_total / r.pig_burden_change) *
         1000.0;
}

}  // namespace furnace
