#pragma once

#include <cstdint>
#include <string>

#include "exconsist/experiments.hpp"
#include "exconsist/segnet.hpp"
#include "exconsist/trainer.hpp"

namespace exconsist {

// Where the datasets come from and how they are partitioned. Which keys are
// meaningful depends on `protocol` x `source`; unknown keys are always
// rejected, inapplicable known keys are ignored.
struct DataConfig {
    std::string protocol = "limited_annotation";  // or "domain_shift"
    std::string source = "synthetic";             // or "dirs"
    int height = 64;                              // multiples of 16
    int width = 64;

    // dirs + limited_annotation
    std::string train_dir;
    std::string val_dir;
    std::string test_dir;  // may stay empty for plain training runs

    // dirs + domain_shift
    std::string source_train_dir;
    std::string source_val_dir;
    std::string target_train_dir;
    std::string target_test_dir;

    // limited_annotation partition of the training set
    int n_labeled = 8;
    std::uint64_t split_seed = 0;

    // synthetic source
    int train_n = 200;
    int val_n = 8;
    int test_n = 16;
    std::uint64_t synth_seed = 0;
    bool shifted_target = false;  // domain_shift: remap the target domain
    double synth_noise = 0.05;
    double synth_contrast = 0.35;
    double synth_jitter = 0.25;

    bool operator==(const DataConfig&) const = default;
};

// Orchestration knobs: how studies fan out trials and how single runs are
// monitored and checkpointed.
struct StudyConfig {
    std::string type = "method_vs_supervised";  // or "ablation"
    int trials = 5;
    std::uint64_t seed_base = 100;  // trial i uses seed_base + i
    std::int64_t validate_every = 200;
    std::int64_t checkpoint_every = 0;  // 0 = only best + final

    bool operator==(const StudyConfig&) const = default;
};

// Complete declarative description of a run or study. Parsing is strict:
// any key not listed here is rejected with a message naming the key, and
// serialize_run_config() writes every field back out, so a parsed config
// round-trips identically.
struct RunConfig {
    NetworkConfig network;
    TrainConfig train;  // carries ramp + ablation sections
    DataConfig data;
    StudyConfig study;

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_run_config(const std::string& json_text);
std::string serialize_run_config(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);  // throws if unreadable

Protocol protocol_of(const DataConfig& d);  // validates the protocol string

// Materializes the four dataset roles from the data section. `require_test`
// demands a nonempty labeled test split (studies); training runs only need
// labeled/unlabeled/validation. Emits a note to `warning` when the domain
// pair degenerates (source == target).
StudyData build_study_data(const DataConfig& d, bool require_test,
                           std::string* warning = nullptr);

}  // namespace exconsist
