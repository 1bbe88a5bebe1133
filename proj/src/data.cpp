#include "exconsist/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace exconsist {

namespace {

// align-corners-false source coordinate for output index o
double src_coord(int o, int out_len, int in_len) {
    return (o + 0.5) * static_cast<double>(in_len) / out_len - 0.5;
}

Tensor4 mask_from_gray(const Tensor4& gray) {
    Tensor4 m(1, 2, gray.h, gray.w);
    for (int px = 0; px < gray.plane_size(); ++px) {
        const bool fg = gray.v[px] >= 128.0 / 255.0;
        m.plane(0, 0)[px] = fg ? 0.0 : 1.0;
        m.plane(0, 1)[px] = fg ? 1.0 : 0.0;
    }
    return m;
}

std::vector<std::string> png_stems(const fs::path& dir) {
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

}  // namespace

Tensor4 resize_bilinear(const Tensor4& in, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0)
        throw std::invalid_argument("resize_bilinear: bad target size");
    if (in.h == out_h && in.w == out_w) return in;
    Tensor4 out(in.n, in.c, out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        const double sy = src_coord(oy, out_h, in.h);
        const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, in.h - 1);
        const int y1 = std::min(y0 + 1, in.h - 1);
        const double ay = std::clamp(sy - y0, 0.0, 1.0);
        for (int ox = 0; ox < out_w; ++ox) {
            const double sx = src_coord(ox, out_w, in.w);
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, in.w - 1);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const double ax = std::clamp(sx - x0, 0.0, 1.0);
            for (int i = 0; i < in.n; ++i)
                for (int c = 0; c < in.c; ++c) {
                    const double* p = in.plane(i, c);
                    const double top = p[y0 * in.w + x0] * (1 - ax) + p[y0 * in.w + x1] * ax;
                    const double bot = p[y1 * in.w + x0] * (1 - ax) + p[y1 * in.w + x1] * ax;
                    out.at(i, c, oy, ox) = top * (1 - ay) + bot * ay;
                }
        }
    }
    return out;
}

Tensor4 resize_nearest(const Tensor4& in, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0)
        throw std::invalid_argument("resize_nearest: bad target size");
    if (in.h == out_h && in.w == out_w) return in;
    Tensor4 out(in.n, in.c, out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        const int sy = std::clamp(
            static_cast<int>(std::floor((oy + 0.5) * static_cast<double>(in.h) / out_h)),
            0, in.h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const int sx = std::clamp(
                static_cast<int>(std::floor((ox + 0.5) * static_cast<double>(in.w) / out_w)),
                0, in.w - 1);
            for (int i = 0; i < in.n; ++i)
                for (int c = 0; c < in.c; ++c)
                    out.at(i, c, oy, ox) = in.at(i, c, sy, sx);
        }
    }
    return out;
}

int Dataset::n_labeled() const {
    int n = 0;
    for (const auto& it : items) n += it.has_mask ? 1 : 0;
    return n;
}

Dataset load_dataset(const std::string& root_dir, int height, int width,
                     const std::string& name) {
    if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
        throw std::invalid_argument("load_dataset: resolution must be a positive multiple of 16");
    const fs::path root(root_dir);
    const fs::path img_dir = root / "images";
    const fs::path mask_dir = root / "masks";
    if (!fs::is_directory(img_dir))
        throw std::runtime_error("load_dataset: missing directory " + img_dir.string());
    const auto img_stems = png_stems(img_dir);
    std::vector<std::string> mask_stems;
    if (fs::is_directory(mask_dir)) mask_stems = png_stems(mask_dir);
    for (const auto& ms : mask_stems)
        if (!std::binary_search(img_stems.begin(), img_stems.end(), ms))
            throw std::runtime_error("load_dataset: mask without matching image, stem '" +
                                     ms + "'");
    Dataset ds;
    ds.name = name.empty() ? root.filename().string() : name;
    ds.height = height;
    ds.width = width;
    for (const auto& stem : img_stems) {
        DataItem item;
        item.stem = stem;
        const Tensor4 raw = png_read_rgb((img_dir / (stem + ".png")).string());
        item.image = resize_bilinear(raw, height, width);
        const fs::path mp = mask_dir / (stem + ".png");
        if (fs::exists(mp)) {
            const Tensor4 gray = png_read_gray(mp.string());
            if (gray.h != raw.h || gray.w != raw.w)
                throw std::runtime_error("load_dataset: mask size mismatch for stem '" +
                                         stem + "'");
            item.mask = resize_nearest(mask_from_gray(gray), height, width);
            item.has_mask = true;
        }
        ds.items.push_back(std::move(item));
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& out_dir) {
    const fs::path root(out_dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (const auto& item : ds.items) {
        png_write_rgb((root / "images" / (item.stem + ".png")).string(), item.image);
        if (item.has_mask)
            png_write_gray((root / "masks" / (item.stem + ".png")).string(), item.mask,
                           0, /*channel=*/1);
    }
}

Dataset strip_masks(const Dataset& ds) {
    Dataset out = ds;
    for (auto& item : out.items) {
        item.has_mask = false;
        item.mask = Tensor4();
    }
    return out;
}

std::pair<Dataset, Dataset> split_limited(const Dataset& train, int n_labeled,
                                          std::uint64_t seed) {
    if (n_labeled < 1 || n_labeled > train.size())
        throw std::invalid_argument("split_limited: n_labeled out of range");
    if (!train.fully_labeled())
        throw std::invalid_argument("split_limited: train set must be fully labeled");
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, Stream::Split));
    for (int i = train.size() - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(i + 1));
        std::swap(order[i], order[j]);
    }
    std::vector<int> lab(order.begin(), order.begin() + n_labeled);
    std::vector<int> unl(order.begin() + n_labeled, order.end());
    std::sort(lab.begin(), lab.end());
    std::sort(unl.begin(), unl.end());
    Dataset labeled, unlabeled;
    labeled.name = train.name + "-labeled";
    unlabeled.name = train.name + "-unlabeled";
    labeled.height = unlabeled.height = train.height;
    labeled.width = unlabeled.width = train.width;
    for (int i : lab) labeled.items.push_back(train.items[i]);
    for (int i : unl) {
        DataItem item = train.items[i];
        item.has_mask = false;
        item.mask = Tensor4();
        unlabeled.items.push_back(std::move(item));
    }
    return {std::move(labeled), std::move(unlabeled)};
}

std::pair<Dataset, Dataset> split_domain_shift(const Dataset& source,
                                               const Dataset& target,
                                               std::string* warning) {
    if (!source.fully_labeled())
        throw std::invalid_argument("split_domain_shift: source must be fully labeled");
    if (warning) warning->clear();
    if (source.name == target.name && source.size() == target.size() && warning)
        *warning = "source and target are the same dataset; unlabeled pool duplicates "
                   "the labeled train set";
    return {source, strip_masks(target)};
}

InfiniteSampler::InfiniteSampler(const Dataset& ds, int batch, std::uint64_t seed)
    : ds_(&ds), batch_(batch), rng_(seed) {
    if (ds.size() == 0) throw std::invalid_argument("InfiniteSampler: empty dataset");
    if (batch < 1) throw std::invalid_argument("InfiniteSampler: batch must be >= 1");
}

std::vector<int> InfiniteSampler::next_indices() {
    std::vector<int> out(batch_);
    for (int& i : out) i = static_cast<int>(rng_.uniform_index(ds_->size()));
    return out;
}

ImageBatch gather_images(const Dataset& ds, const std::vector<int>& idx) {
    if (idx.empty()) throw std::invalid_argument("gather_images: empty index list");
    ImageBatch out(static_cast<int>(idx.size()), 3, ds.height, ds.width);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& img = ds.items.at(idx[k]).image;
        for (int c = 0; c < 3; ++c)
            std::copy(img.plane(0, c), img.plane(0, c) + img.plane_size(),
                      out.t.plane(static_cast<int>(k), c));
    }
    return out;
}

MaskBatch gather_masks(const Dataset& ds, const std::vector<int>& idx) {
    if (idx.empty()) throw std::invalid_argument("gather_masks: empty index list");
    MaskBatch out(static_cast<int>(idx.size()), 2, ds.height, ds.width);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& item = ds.items.at(idx[k]);
        if (!item.has_mask)
            throw std::invalid_argument("gather_masks: item '" + item.stem +
                                        "' has no mask");
        for (int c = 0; c < 2; ++c)
            std::copy(item.mask.plane(0, c), item.mask.plane(0, c) + item.mask.plane_size(),
                      out.t.plane(static_cast<int>(k), c));
    }
    return out;
}

std::string split_manifest_json(const Dataset& labeled, const Dataset& unlabeled,
                                std::uint64_t seed, const std::string& protocol) {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["seed"] = seed;
    j["labeled"] = nlohmann::ordered_json::array();
    for (const auto& it : labeled.items) j["labeled"].push_back(it.stem);
    j["unlabeled"] = nlohmann::ordered_json::array();
    for (const auto& it : unlabeled.items) j["unlabeled"].push_back(it.stem);
    return j.dump(2) + "\n";
}

}  // namespace exconsist
