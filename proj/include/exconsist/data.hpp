#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "exconsist/rng.hpp"
#include "exconsist/tensor.hpp"

namespace exconsist {

// ---- 8-bit PNG IO ----
// Readers normalize gray/palette/alpha inputs; writers quantize round(v*255).
Tensor4 png_read_rgb(const std::string& path);   // 1x3xHxW in [0,1]
Tensor4 png_read_gray(const std::string& path);  // 1x1xHxW in [0,1]
void png_write_rgb(const std::string& path, const Tensor4& t, int item = 0);
void png_write_gray(const std::string& path, const Tensor4& t, int item = 0,
                    int channel = 0);

// ---- resampling (align-corners-false sampling grid) ----
Tensor4 resize_bilinear(const Tensor4& in, int out_h, int out_w);
Tensor4 resize_nearest(const Tensor4& in, int out_h, int out_w);

struct DataItem {
    std::string stem;
    Tensor4 image;  // 1x3xHxW in [0,1]
    bool has_mask = false;
    Tensor4 mask;   // 1x2xHxW one-hot (background, foreground) when has_mask
};

struct Dataset {
    std::string name;
    int height = 0, width = 0;
    std::vector<DataItem> items;

    int size() const { return static_cast<int>(items.size()); }
    int n_labeled() const;
    bool fully_labeled() const { return size() > 0 && n_labeled() == size(); }
};

// Loads root/{images,masks}; masks are optional per item, matched by stem,
// binarized at >= 128/255 before nearest-resize. Items sorted by filename.
// Height/width must be multiples of 16. Errors name the offending stem.
Dataset load_dataset(const std::string& root_dir, int height, int width,
                     const std::string& name = "");

// Writes images/ (RGB8) and masks/ (GRAY8, 0/255; labeled items only).
void write_dataset(const Dataset& ds, const std::string& out_dir);

Dataset strip_masks(const Dataset& ds);

// Seed-deterministic labeled/unlabeled partition: n_labeled items keep their
// masks, the rest are stripped. Disjoint and exhaustive; 1 <= n <= size.
std::pair<Dataset, Dataset> split_limited(const Dataset& train, int n_labeled,
                                          std::uint64_t seed);

// Labeled = source train (must be fully labeled); unlabeled = target train
// with labels removed. source == target is permitted; `warning` (if given)
// receives a note in that case, empty otherwise.
std::pair<Dataset, Dataset> split_domain_shift(const Dataset& source,
                                               const Dataset& target,
                                               std::string* warning = nullptr);

// Uniform-with-replacement sampler driven by its own seeded stream; never
// exhausts. Each next_indices() call draws `batch` fresh indices.
class InfiniteSampler {
public:
    InfiniteSampler(const Dataset& ds, int batch, std::uint64_t seed);
    std::vector<int> next_indices();

private:
    const Dataset* ds_;
    int batch_;
    Rng rng_;
};

ImageBatch gather_images(const Dataset& ds, const std::vector<int>& idx);
MaskBatch gather_masks(const Dataset& ds, const std::vector<int>& idx);

// ---- synthetic segmentation task ----
struct SynthParams {
    int n_vessels = 2;        // curved strokes per image
    int n_lesions = 2;        // elliptical blobs per image
    double noise = 0.05;      // background pixel-noise amplitude
    double contrast = 0.35;   // foreground/background separation
    double jitter = 0.25;     // per-image appearance variation
    bool shifted = false;     // apply the fixed domain-shift remap
};

// Deterministic generator: vessel-like strokes and lesions on textured,
// per-image-jittered backgrounds with pixel-exact masks (never empty).
Dataset synth_generate(int n, int height, int width, const SynthParams& p,
                       std::uint64_t seed);

// The fixed pixelwise color remap used by the shifted synthetic domain.
void shift_domain_inplace(Tensor4& img);

// JSON record of split membership for run manifests.
std::string split_manifest_json(const Dataset& labeled, const Dataset& unlabeled,
                                std::uint64_t seed, const std::string& protocol);

}  // namespace exconsist
