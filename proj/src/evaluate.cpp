#include "exconsist/evaluate.hpp"

#include <cmath>
#include <stdexcept>

namespace exconsist {

double hard_dice_plane(const double* fg_prob, const double* gt_fg,
                       std::size_t hw, double threshold) {
  double inter = 0.0, pred_sum = 0.0, gt_sum = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    const double pi = fg_prob[i] >= threshold ? 1.0 : 0.0;
    inter += pi * gt_fg[i];
    pred_sum += pi;
    gt_sum += gt_fg[i];
  }
  const double denom = pred_sum + gt_sum;
  return denom == 0.0 ? 1.0 : 2.0 * inter / denom;
}

std::vector<double> eval_dice(const SegNetwork& net, const Dataset& ds,
                              double threshold) {
  if (ds.size() == 0) throw std::invalid_argument("eval_dice: empty dataset");
  std::vector<double> out;
  out.reserve(ds.size());
  for (const DataItem& item : ds.items) {
    if (!item.has_mask)
      throw std::invalid_argument("eval_dice: item '" + item.stem +
                                  "' has no mask");
    ProbMap p = net.infer(ImageBatch(item.image));
    out.push_back(hard_dice_plane(p.t.plane(0, 1), item.mask.plane(0, 1),
                                  p.t.plane_size(), threshold));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean_of: empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace exconsist
