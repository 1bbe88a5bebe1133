#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exconsist/data.hpp"
#include "exconsist/evaluate.hpp"
#include "exconsist/trainer.hpp"

namespace exconsist {

enum class Protocol { LimitedAnnotation, DomainShift };

std::string to_string(Protocol p);

// The four datasets a study consumes. Selection only ever sees `validation`;
// `test` is touched strictly after training, so in the domain-shift protocol
// (validation = source val, test = target test) no target-test statistic can
// influence model selection by construction.
struct StudyData {
    Dataset labeled;     // limited: the small labeled split; shift: source train
    Dataset unlabeled;   // limited: remaining images; shift: target train (no labels)
    Dataset validation;  // limited: own val split; shift: SOURCE val split
    Dataset test;        // limited: own test split; shift: TARGET test split
};

struct TrialReport {
    std::uint64_t trial_seed = 0;
    double test_dice_mean = 0.0;
    std::vector<double> per_image_dice;
    std::int64_t best_val_step = -1;
    bool diverged = false;
    std::string error;  // divergence message when diverged
};

struct StudyReport {
    std::string config_id;
    double dice_mean = 0.0;
    double dice_std = 0.0;  // population std over completed trial means
    int n_trials = 0;       // completed (non-divergent) trials
    int n_diverged = 0;
    std::optional<double> p_value;  // vs baseline trial means, when supplied
    std::string baseline_id;
    bool reference = false;  // the full-method row of an ablation grid
};

struct StudyResult {
    Protocol protocol = Protocol::LimitedAnnotation;
    StudyReport report;
    std::vector<TrialReport> trials;  // ordered by sorted trial seed

    std::vector<double> trial_means() const;  // completed trials only
};

// Two-sided Welch's t-test p-value. Needs at least two samples per side.
// Degenerate case (both variances zero) is defined as 1 when the means are
// equal and 0 otherwise.
double welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// One multi-trial study: for each seed (processed in sorted order) train on
// labeled+unlabeled with selection on `validation`, then evaluate the
// selected network on `test`. Divergent trials are recorded and flagged;
// the study continues. Trials run in parallel when EXCONSIST_THREADS > 1.
// When baseline trial means are supplied, the report carries a Welch p-value
// against them.
StudyResult run_study(Protocol protocol, const NetworkConfig& net_cfg,
                      const TrainConfig& train_cfg, const StudyData& data,
                      std::vector<std::uint64_t> seeds, const std::string& config_id,
                      const std::vector<double>* baseline_trial_means = nullptr,
                      const std::string& baseline_id = "",
                      std::int64_t validate_every = 200);

// The ablation grid: the full method (reference row) plus every single-switch
// variant — transform-family restrictions, exclusivity off, unlabeled off,
// teacher off, and extreme ops as plain supervised augmentation.
// `base` must be the full method.
std::vector<StudyResult> run_ablation_grid(const NetworkConfig& net_cfg,
                                           const TrainConfig& base,
                                           const StudyData& data,
                                           const std::vector<std::uint64_t>& seeds,
                                           std::int64_t validate_every = 200);

// Deterministic serializations: rows = studies, columns = mean/std/n/p.
std::string study_csv(const std::vector<StudyResult>& studies);
std::string study_json(const std::vector<StudyResult>& studies);

// Worker cap from EXCONSIST_THREADS (default 1, clamped to [1,64]).
int worker_threads();

}  // namespace exconsist
