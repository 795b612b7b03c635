#pragma once

#include <cstdint>

namespace sgtlab {

// Warmup from gamma/10 over the first total/10 steps, hold for total/1000,
// then exponential decay reaching 2.5e-5 * gamma exactly at total_steps.
double lr_schedule(int64_t step, int64_t total_steps, double gamma);

}  // namespace sgtlab
