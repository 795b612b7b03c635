#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgtlab/scene.hpp"
#include "sgtlab/tensor.hpp"

namespace sgtlab {

struct RankReport {
  double ravg = 0;              // mean 1-based rank of the correct label
  std::map<int, double> hits;   // k -> fraction with rank <= k
  int64_t count = 0;

  std::string to_json() const;
};

// Rank of a target = 1 + number of other labels scoring >= the target's score
// (pessimistic ties). Cells whose target label is in `exclude` are skipped.
RankReport rank_metrics(const Tensor& scores, const std::vector<int>& targets,
                        const std::set<int>& exclude, const std::vector<int>& hit_ks = {1, 3, 5});

struct MiouReport {
  std::optional<double> novel;
  std::optional<double> existing;
  std::optional<double> total;  // count-weighted average over nonempty groups
};

double iou(const Box& a, const Box& b);

MiouReport miou_report(const Layout& pred, const Layout& gt,
                       const std::vector<bool>& novel_flags);

// Counts raster cells whose centers fall inside each box; converges to the
// analytic IoU as resolution grows.
double iou_grid_oracle(const Box& a, const Box& b, int resolution);

}  // namespace sgtlab
