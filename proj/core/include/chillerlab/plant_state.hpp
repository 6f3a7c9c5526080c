#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace chillerlab {

// One 5-minute observation of the plant. `sensors` is aligned with the
// facility config's sensor list; NaN marks a missing reading.
struct PlantState {
    std::int64_t timestamp_min = 0;
    std::vector<double> sensors;

    static bool missing(double v) { return std::isnan(v); }
};

// One setpoint vector, aligned with the facility config's action dims.
struct ActionVector {
    std::vector<double> values;

    bool operator==(const ActionVector& other) const { return values == other.values; }
};

constexpr int kStepMinutes = 5;
constexpr int kStepsPerHour = 12;
constexpr int kStepsPerDay = 288;

} // namespace chillerlab
