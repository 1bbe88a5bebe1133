#pragma once

#include <vector>

#include "exconsist/data.hpp"
#include "exconsist/segnet.hpp"

namespace exconsist {

// Hard Dice of one plane pair: foreground probability thresholded
// (>= threshold), overlap 2|P∩G|/(|P|+|G|), with the empty-vs-empty case
// defined as 1.
double hard_dice_plane(const double* fg_prob, const double* gt_fg,
                       std::size_t hw, double threshold);

// Per-image hard Dice of an eval-mode forward over a fully labeled dataset.
std::vector<double> eval_dice(const SegNetwork& net, const Dataset& ds,
                              double threshold = 0.5);

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);  // population std over trial means

}  // namespace exconsist
