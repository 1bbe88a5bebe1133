#pragma once

#include <cstdint>
#include <string>

#include "exconsist/optim.hpp"
#include "exconsist/segnet.hpp"

namespace exconsist {

// Everything needed to resume training or run inference. Serialization
// round-trips bit-exactly: save -> load -> save produces identical bytes.
struct Checkpoint {
    NetworkConfig net_cfg;
    std::int64_t step = 0;
    std::vector<ParamArray> student;
    std::vector<ParamArray> teacher;
    AdamState optim;
};

Checkpoint checkpoint_capture(const SegNetwork& student, const SegNetwork& teacher,
                              const AdamState& optim, std::int64_t step);

// Overwrites both networks' arrays and the optimizer state from `ck`.
// The networks must have been constructed with ck.net_cfg.
void checkpoint_restore(const Checkpoint& ck, SegNetwork& student,
                        SegNetwork& teacher, AdamState& optim);

void checkpoint_save(const Checkpoint& ck, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

}  // namespace exconsist
