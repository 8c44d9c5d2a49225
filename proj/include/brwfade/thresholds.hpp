#pragma once

#include "json.hpp"

// Every pass/fail threshold used by the verification commands. Reports print
// this block so a verdict can be re-checked against the numbers it used.
namespace brwfade::thresholds {

inline constexpr double kRatioLo = 0.7;
inline constexpr double kRatioHi = 1.3;
inline constexpr int kTrendPoints = 3;
/// A deviation counts as shrinking if it grows by at most this many ratio standard errors.
inline constexpr double kTrendNoiseSe = 2.0;
inline constexpr double kResidualFraction = 0.10;
inline constexpr double kBatteryMaxDeviation = 0.3;
inline constexpr double kSeriesSlopeTol = 0.05;
inline constexpr double kSimulatedSlopeTol = 0.1;
inline constexpr double kIdentityRelTol = 1e-5;
inline constexpr double kSupercriticalFactor = 5.0;
inline constexpr double kBandSe = 3.0;
inline constexpr double kMartingaleSe = 3.0;

inline nlohmann::json as_json() {
  return {{"ratio_lo", kRatioLo},
          {"ratio_hi", kRatioHi},
          {"trend_points", kTrendPoints},
          {"trend_noise_se", kTrendNoiseSe},
          {"residual_fraction", kResidualFraction},
          {"battery_max_deviation", kBatteryMaxDeviation},
          {"series_slope_tol", kSeriesSlopeTol},
          {"simulated_slope_tol", kSimulatedSlopeTol},
          {"identity_rel_tol", kIdentityRelTol},
          {"supercritical_factor", kSupercriticalFactor},
          {"band_se", kBandSe},
          {"martingale_se", kMartingaleSe}};
}

}  // namespace brwfade::thresholds
