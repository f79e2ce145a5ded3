#pragma once

#include <cmath>
#include <span>

#include "lagdose/errors.hpp"

namespace lagdose {

// Penalty for a single glucose reading (mg/dL): zero inside the 80-140
// target band, quadratic below it, exponent-1.35 above it, both scaled
// by 1/30. Always <= 0.
inline double igc_penalty(double glucose) {
  if (glucose < 80.0) {
    const double d = 80.0 - glucose;
    return -d * d / 30.0;
  }
  if (glucose > 140.0) return -std::pow(glucose - 140.0, 1.35) / 30.0;
  return 0.0;
}

// Mean index of glycemic control over a set of readings.
inline double compute_igc(std::span<const double> readings) {
  if (readings.empty()) throw data_error("cannot compute IGC of zero readings");
  double acc = 0.0;
  for (double g : readings) {
    if (!(g > 0.0)) throw data_error("glucose readings must be positive");
    acc += igc_penalty(g);
  }
  return acc / static_cast<double>(readings.size());
}

}  // namespace lagdose
