#include "sgtlab/metrics.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace sgtlab {

std::string RankReport::to_json() const {
  nlohmann::json doc;
  doc["ravg"] = ravg;
  nlohmann::json h;
  for (const auto& [k, frac] : hits) h["hit@" + std::to_string(k)] = frac;
  doc["hits"] = std::move(h);
  doc["count"] = count;
  return doc.dump();
}

RankReport rank_metrics(const Tensor& scores, const std::vector<int>& targets,
                        const std::set<int>& exclude, const std::vector<int>& hit_ks) {
  if (scores.rank() != 2) throw std::invalid_argument("rank_metrics: rank-2 scores required");
  const int rows = scores.rows(), labels = scores.cols();
  if (static_cast<int>(targets.size()) != rows)
    throw std::invalid_argument("rank_metrics: target count mismatch");

  RankReport report;
  double rank_sum = 0;
  std::map<int, int64_t> hit_counts;
  for (int k : hit_ks) hit_counts[k] = 0;
  for (int r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || t >= labels) throw std::invalid_argument("rank_metrics: target out of range");
    if (exclude.count(t)) continue;
    const double ts = scores.at(r, t);
    int rank = 1;
    for (int c = 0; c < labels; ++c) {
      if (c != t && scores.at(r, c) >= ts) ++rank;  // ties count against the target
    }
    rank_sum += rank;
    for (int k : hit_ks)
      if (rank <= k) ++hit_counts[k];
    ++report.count;
  }
  if (report.count == 0) throw std::runtime_error("rank_metrics: empty effective set");
  report.ravg = rank_sum / static_cast<double>(report.count);
  for (int k : hit_ks)
    report.hits[k] = static_cast<double>(hit_counts[k]) / static_cast<double>(report.count);
  return report;
}

double iou(const Box& a, const Box& b) {
  // areas from the same edge arithmetic as the intersection, so identical
  // boxes give exactly 1
  const double area_a = (a.right() - a.left()) * (a.bottom() - a.top());
  const double area_b = (b.right() - b.left()) * (b.bottom() - b.top());
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  const double inter = std::max(iw, 0.0) * std::max(ih, 0.0);
  const double uni = area_a + area_b - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

MiouReport miou_report(const Layout& pred, const Layout& gt,
                       const std::vector<bool>& novel_flags) {
  if (pred.n() != gt.n() || static_cast<int>(novel_flags.size()) != gt.n())
    throw std::invalid_argument("miou_report: layout length mismatch");
  double sum_novel = 0, sum_existing = 0;
  int64_t n_novel = 0, n_existing = 0;
  for (int i = 0; i < gt.n(); ++i) {
    const double v = iou(pred.boxes[i], gt.boxes[i]);
    if (novel_flags[i]) {
      sum_novel += v;
      ++n_novel;
    } else {
      sum_existing += v;
      ++n_existing;
    }
  }
  MiouReport report;
  if (n_novel > 0) report.novel = sum_novel / static_cast<double>(n_novel);
  if (n_existing > 0) report.existing = sum_existing / static_cast<double>(n_existing);
  if (n_novel + n_existing > 0)
    report.total = (sum_novel + sum_existing) / static_cast<double>(n_novel + n_existing);
  return report;
}

double iou_grid_oracle(const Box& a, const Box& b, int resolution) {
  if (resolution < 64) throw std::invalid_argument("iou_grid_oracle: resolution below 64");
  auto inside = [](const Box& bx, double x, double y) {
    return x >= bx.left() && x <= bx.right() && y >= bx.top() && y <= bx.bottom();
  };
  int64_t in_a = 0, in_b = 0, in_both = 0;
  const double step = 1.0 / resolution;
  for (int r = 0; r < resolution; ++r) {
    const double y = (r + 0.5) * step;
    for (int c = 0; c < resolution; ++c) {
      const double x = (c + 0.5) * step;
      const bool pa = inside(a, x, y);
      const bool pb = inside(b, x, y);
      in_a += pa;
      in_b += pb;
      in_both += pa && pb;
    }
  }
  const int64_t uni = in_a + in_b - in_both;
  return uni == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(uni);
}

}  // namespace sgtlab
