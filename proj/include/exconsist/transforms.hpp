#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "exconsist/rng.hpp"
#include "exconsist/tensor.hpp"

namespace exconsist {

// Flip naming: Horizontal mirrors left-right (x reversed), Vertical mirrors
// top-bottom (y reversed).
enum class FlipState { None, Horizontal, Vertical };

// Mild augmentation applied to labeled pairs only: color jitter parts touch
// the image, geometric parts (flip + one affine) touch image and mask alike.
struct BasicTransformInstance {
    double saturation_factor = 1.0;  // [0.9, 1.1]
    double hue_shift = 0.0;          // [-0.1, 0.1] of the hue circle
    FlipState flip = FlipState::None;
    std::array<int, 3> channel_perm = {0, 1, 2};
    double rotation_deg = 0.0;   // [-10, 10]
    double scale = 1.0;          // [0.75, 1.25]
    double translate_x = 0.0;    // [-32, 32] px
    double translate_y = 0.0;    // [-32, 32] px
};

enum class IntensityKind {
    Autocontrast, Brightness, Color, Contrast, Equalize, Invert, Solarize, Posterize
};
constexpr int kNumIntensityKinds = 8;

struct IntensityOp {
    IntensityKind kind = IntensityKind::Brightness;
    double param = 1.0;  // blend ratio / factor / threshold / bit count per kind
};

enum class GeometricKind { Rotation, Translation, Scale, Flip };

struct GeometricOp {
    GeometricKind kind = GeometricKind::Rotation;
    double param = 0.0;  // degrees / pixels / scale factor; unused for flip
    int axis = 0;        // translation & flip: 0 = x (left-right), 1 = y (top-bottom)
};

struct MixingOp {
    bool active = false;
    int x = 0, y = 0, size = 0;  // square patch, in-bounds by construction
    int source_index = 0;        // into the labeled batch
    double size_ratio = 0.0;     // [0, 0.5]; size = round(ratio * min(H, W))
};

// Which op families the sampler may draw from; the trainer's diverse_*
// ablation flags map directly onto this.
struct ExtremePool {
    bool intensity = true;
    bool geometric = true;
    bool mixing = true;
};

struct ExtremeTransformInstance {
    std::vector<IntensityOp> intensity_ops;  // 3 distinct kinds, or empty if pooled out
    bool has_geometric = false;
    GeometricOp geometric;
    MixingOp mixing;
};

// Samplers: parameters drawn uniformly from the published ranges, in a fixed
// documented order, fully determined by the seed.
BasicTransformInstance sample_basic(std::uint64_t seed);

// Needs the image geometry and labeled-batch size to place an in-bounds
// mixing patch. mixing.active is Bernoulli(0.5) iff mixing_allowed and the
// pool admits mixing.
ExtremeTransformInstance sample_extreme(std::uint64_t seed, bool mixing_allowed,
                                        int h, int w, int n_source,
                                        const ExtremePool& pool = {});

enum class Interp { Bilinear, Nearest };

// Core warp: applies one geometric op to any rank-4 raster. Out-of-bounds
// samples read `fill` for every channel.
Tensor4 apply_geometric(const GeometricOp& op, const Tensor4& x, Interp interp,
                        double fill);

// Probability-safe variant: bilinear warp, out-of-bounds reads background
// one-hot (class 0 = 1), per-pixel renormalization afterwards.
ProbMap apply_geometric_prob(const GeometricOp& op, const ProbMap& p);

// One-hot-safe variant: nearest warp, background one-hot fill.
MaskBatch apply_geometric_mask(const GeometricOp& op, const MaskBatch& m);

ImageBatch apply_intensity(const IntensityOp& op, const ImageBatch& x);

// Pastes the patch of labeled_source[op.source_index] into every image of
// `target` at the same coordinates.
ImageBatch apply_mixing_images(const MixingOp& op, const ImageBatch& target,
                               const ImageBatch& labeled_source);
ProbMap apply_mixing_predictions(const MixingOp& op, const ProbMap& target,
                                 const ProbMap& labeled_ref);

// T_b on a labeled pair; the mask pointer may be null for image-only use.
std::pair<ImageBatch, MaskBatch> apply_basic(const BasicTransformInstance& t,
                                             const ImageBatch& x, const MaskBatch* y);

// T_e image path: intensity ops in stored order, then geometric, then
// mixing. The pasted patch content is the labeled source after the same
// intensity+geometric ops, so patch and background share a coordinate frame.
ImageBatch apply_extreme_to_images(const ExtremeTransformInstance& t, const ImageBatch& x,
                                   const ImageBatch* labeled_source);

// T_e prediction path: intensity ops are identity on predictions; geometric
// warps the map probability-safely; mixing pastes the geometrically-warped
// labeled reference patch.
ProbMap apply_extreme_to_predictions(const ExtremeTransformInstance& t, const ProbMap& p,
                                     const ProbMap* labeled_ref);

// T_e as plain supervised augmentation: intensity+geometric on the image,
// geometric on the mask, mixing ignored.
std::pair<ImageBatch, MaskBatch> apply_extreme_to_labeled_pair(
    const ExtremeTransformInstance& t, const ImageBatch& x, const MaskBatch& y);

// Human-readable replay records; equal strings imply equal parameters.
std::string to_string(const BasicTransformInstance& t);
std::string to_string(const ExtremeTransformInstance& t);
std::string to_string(const IntensityOp& op);
std::string to_string(const GeometricOp& op);

}  // namespace exconsist
