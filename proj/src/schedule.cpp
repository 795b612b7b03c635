#include "sgtlab/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace sgtlab {

double lr_schedule(int64_t step, int64_t total_steps, double gamma) {
  if (total_steps < 10) throw std::invalid_argument("lr_schedule: total_steps below 10");
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_schedule: step out of range");
  constexpr double kMinRatio = 2.5e-5;
  const double warm_end = static_cast<double>(total_steps) / 10.0;
  const double hold_end = warm_end + static_cast<double>(total_steps) / 1000.0;
  const double s = static_cast<double>(step);
  const double floor_lr = gamma / 10.0;
  if (s <= warm_end) {
    const double f = s / warm_end;
    return floor_lr * (1.0 - f) + gamma * f;  // lerp keeps both endpoints exact
  }
  if (s <= hold_end) return gamma;
  return gamma * std::pow(kMinRatio, (s - hold_end) / (static_cast<double>(total_steps) - hold_end));
}

}  // namespace sgtlab
