#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exconsist/rng.hpp"
#include "exconsist/tensor.hpp"

namespace exconsist {

struct NetworkConfig {
    int depth = 4;          // encoder blocks; only 4 is supported
    int in_channels = 3;
    int num_classes = 2;
    int base_width = 32;    // channels of the first block, doubled per block
    double dropout_rate = 0.5;
    std::string upsample = "bilinear";

    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

enum class Mode { Train, Eval };

// One named weight/buffer array. Buffers (BN running statistics) are not
// trainable but still take part in EMA updates and checkpoints.
struct ParamArray {
    std::string name;
    bool trainable = true;
    std::vector<double> v;
};

// Per-pass saved state. One forward pass in train mode records everything
// backward needs, so several passes can be kept alive and backpropagated
// after all losses of a step are known.
struct Tape {
    Mode mode = Mode::Eval;
    std::vector<Tensor4> tensors;
    std::vector<std::vector<std::int32_t>> ints;
};

// Gradient accumulators aligned index-by-index with params(); entries for
// buffers stay empty.
using GradSet = std::vector<std::vector<double>>;

// U-Net with 4 encoder blocks (2x Conv3x3-BN-ReLU, 2x2 max-pool, dropout),
// 4 decoder blocks (bilinear 2x upsample, skip concat, 2x Conv3x3-BN-ReLU)
// and a 1x1 conv + softmax head. Student and teacher are two instances of
// this class built from the same config.
class SegNetwork {
public:
    SegNetwork(const NetworkConfig& cfg, std::uint64_t seed);

    const NetworkConfig& config() const { return cfg_; }
    std::vector<ParamArray>& params() { return params_; }
    const std::vector<ParamArray>& params() const { return params_; }
    std::size_t num_trainable_values() const;

    // Train mode samples dropout from `dropout_rng` (required) and updates
    // BN running statistics; eval mode is deterministic and mutates nothing.
    ProbMap forward(const ImageBatch& x, Mode mode, Rng* dropout_rng = nullptr,
                    Tape* tape = nullptr);

    // Eval-mode forward on an immutable network; safe for concurrent use.
    ProbMap infer(const ImageBatch& x) const;

    // Accumulates dLoss/dparams into `grads` given dLoss/dProbMap of a
    // recorded train-mode pass.
    void backward(const Tape& tape, const Tensor4& dprob, GradSet& grads) const;

    GradSet make_grads() const;

private:
    struct Conv {
        int cin = 0, cout = 0, ksize = 3;
        int wi = -1, bi = -1;   // param indices
        int slot = -1;          // tape tensor slot: layer input
    };
    struct Bn {
        int ch = 0;
        int gi = -1, bi = -1, rmi = -1, rvi = -1;
        int slot_xhat = -1, slot_invstd = -1;
    };
    struct Block {
        Conv conv_a, conv_b;
        Bn bn_a, bn_b;
        int slot_relu_a = -1, slot_relu_b = -1;
    };

    // stats_update points at params_ during train-mode forwards (running BN
    // statistics get refreshed there) and is null otherwise.
    ProbMap forward_impl(const ImageBatch& x, Mode mode, Rng* dropout_rng,
                         Tape* tape, std::vector<ParamArray>* stats_update) const;

    Conv make_conv(const std::string& name, int cin, int cout, int ksize, Rng& init);
    Bn make_bn(const std::string& name, int ch);
    Block make_block(const std::string& name, int cin, int cout, Rng& init);

    NetworkConfig cfg_;
    std::vector<ParamArray> params_;

    Block enc_[4];
    int slot_pool_[4] = {-1, -1, -1, -1};
    int slot_drop_[4] = {-1, -1, -1, -1};
    Block dec_[4];
    Conv head_;
    int slot_softmax_ = -1;
    int n_tensor_slots_ = 0, n_int_slots_ = 0;
};

// Exponential-moving-average filter: every teacher array (weights and BN
// buffers alike) becomes alpha*teacher + (1-alpha)*student. The student is
// untouched.
void ema_update(SegNetwork& teacher, const SegNetwork& student, double alpha);

}  // namespace exconsist
