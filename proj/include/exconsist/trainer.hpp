#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "exconsist/data.hpp"
#include "exconsist/losses.hpp"
#include "exconsist/optim.hpp"
#include "exconsist/segnet.hpp"
#include "exconsist/transforms.hpp"

namespace exconsist {

// Switches that carve variants out of the full method. Defaults are the
// full method; each flag removes exactly one ingredient.
struct AblationFlags {
    bool use_unlabeled = true;       // false: drop the unlabeled branch
    bool exclusive = true;           // false: extreme ops also hit the reference input
    bool diverse_intensity = true;   // extreme-op family gates
    bool diverse_geometric = true;
    bool diverse_mixing = true;
    bool use_teacher = true;         // false: reference = eval-mode student
    bool supervised_extreme_aug = false;  // extreme ops as plain supervised
                                          // augmentation, consistency off

    bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
    double alpha = 0.999;         // teacher EMA decay
    double learning_rate = 0.001;
    RampSchedule ramp;
    std::int64_t total_steps = 0;
    int batch_labeled = 4;
    int batch_unlabeled = 4;
    double smooth = 1.0;          // Dice smoothing for both loss forms
    std::uint64_t seed = 0;
    AblationFlags ablation;

    // Consistency branches exist at all only when the ramp can become
    // positive and extreme ops are not rerouted into supervised augmentation.
    bool consistency_enabled() const {
        return ramp.lambda_max > 0.0 && !ablation.supervised_extreme_aug;
    }
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct TrainState {
    SegNetwork student;
    SegNetwork teacher;
    AdamState optim;
    std::int64_t step = 0;
};

// Raised when a loss or network output stops being finite.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Student and teacher drawn from independent init streams of cfg.seed;
// fresh optimizer; step 0.
TrainState init_train(const NetworkConfig& net_cfg, const TrainConfig& cfg);

// Identity on values. Reference predictions pass through here before any
// loss sees them: they come from tape-free eval forwards, so no gradient
// path back to their producer exists, and this marks that boundary.
ProbMap stopgrad(const ProbMap& p);

// What a step actually applied, for contract checks: serialized transform
// instances at their exact application sites, and whether the teacher ran.
struct StepTrace {
    std::string basic;
    std::string extreme_labeled_student, extreme_labeled_reference;
    std::string extreme_unlabeled_student, extreme_unlabeled_reference;
    bool teacher_forward_ran = false;
    bool consistency_ran = false;
};

// One full update: basic transform on the labeled pair, supervised Dice,
// the two consistency branches (when enabled and the ramp is positive),
// one Adam step on the student, one EMA update of the teacher.
// labeled/unlabeled batches are taken as-is; unlabeled_x may be empty
// whenever the unlabeled branch is off.
LossReport train_step(TrainState& st, const ImageBatch& labeled_x,
                      const MaskBatch& labeled_y, const ImageBatch& unlabeled_x,
                      const TrainConfig& cfg, StepTrace* trace = nullptr);

struct RunOptions {
    std::string out_dir;               // empty: nothing written to disk
    std::int64_t validate_every = 200; // 0: only the final validation
    std::int64_t checkpoint_every = 0; // 0: only best + final checkpoints
};

struct RunResult {
    TrainState state;
    bool teacher_is_inference = true;
    std::vector<std::string> metrics;  // JSONL records, one per line
    std::int64_t best_val_step = -1;
    double best_val_dice = -1.0;
    double final_val_dice = -1.0;
    // snapshot of the inference network at the best validation score;
    // empty when no validation ever ran
    std::optional<SegNetwork> best_net;

    const SegNetwork& inference_net() const {
        return teacher_is_inference ? state.teacher : state.student;
    }
    // model selection: the best-validation snapshot, falling back to the
    // final inference network when there is none
    const SegNetwork& selected_net() const {
        return best_net ? *best_net : inference_net();
    }
};

// Full training loop: seeded samplers over the datasets, per-step metrics,
// periodic validation of the inference network, checkpoints under out_dir
// (ckpt_best.bin / ckpt_final.bin / ckpt_NNNNNN.bin) plus metrics.jsonl.
// validation may be empty (no val records). total_steps == 0 returns the
// initial state untouched.
RunResult run_training(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                       const Dataset& labeled, const Dataset& unlabeled,
                       const Dataset& validation, const RunOptions& opts = {});

}  // namespace exconsist
