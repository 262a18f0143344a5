#pragma once

#include <string>
#include <string_view>

namespace iamod::units {

// Canonical internal units: seconds, meters, joules, kilograms, USD,
// flows in customers (or vehicles) per hour. All conversion happens at the
// I/O boundary; everything downstream assumes canonical values.

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kMetersPerMile = 1609.344;
inline constexpr double kMetersPerKm = 1000.0;
inline constexpr double kJoulesPerKwh = 3.6e6;

/// Converts a tagged value to canonical units. Throws UnitError on an
/// unrecognized tag. Supported tags:
///   time costs:      usd_per_hour, usd_per_minute, usd_per_second
///   distance costs:  usd_per_mile, usd_per_km, usd_per_meter
///   energy costs:    usd_per_kwh, usd_per_joule
///   emissions:       kg_per_kwh, kg_per_joule
///   regularization:  usd_per_flow_sq   (USD per (customers/hour)^2)
double to_canonical(double value, std::string_view unit);

/// Inverse of to_canonical for the same tag set (used for display/round-trip).
double from_canonical(double value, std::string_view unit);

bool known_unit(std::string_view unit);

}  // namespace iamod::units
