#include "exconsist/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "exconsist/rng.hpp"

namespace exconsist {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

// Strictness: every section enumerates its allowed keys up front so a typo
// fails loudly with the offending path instead of silently using a default.
void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad("section '" + section + "' must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) bad("unknown key '" + section + "." + item.key() + "'");
    }
}

std::string path_of(const std::string& section, const char* key) {
    return section.empty() ? std::string(key) : section + "." + key;
}

void take_int(const json& j, const std::string& sec, const char* key, int& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) bad("'" + path_of(sec, key) + "' must be an integer");
    out = it->get<int>();
}

void take_i64(const json& j, const std::string& sec, const char* key, std::int64_t& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) bad("'" + path_of(sec, key) + "' must be an integer");
    out = it->get<std::int64_t>();
}

void take_u64(const json& j, const std::string& sec, const char* key, std::uint64_t& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() &&
                                     it->get<std::int64_t>() < 0))
        bad("'" + path_of(sec, key) + "' must be a non-negative integer");
    out = it->get<std::uint64_t>();
}

void take_double(const json& j, const std::string& sec, const char* key, double& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) bad("'" + path_of(sec, key) + "' must be a number");
    out = it->get<double>();
}

void take_string(const json& j, const std::string& sec, const char* key, std::string& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) bad("'" + path_of(sec, key) + "' must be a string");
    out = it->get<std::string>();
}

void take_bool(const json& j, const std::string& sec, const char* key, bool& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_boolean()) bad("'" + path_of(sec, key) + "' must be a boolean");
    out = it->get<bool>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        bad(std::string("not valid JSON: ") + e.what());
    }
    check_keys(root, "", {"network", "train", "ramp", "data", "ablation", "study"});

    RunConfig cfg;
    if (auto it = root.find("network"); it != root.end()) {
        const json& j = *it;
        check_keys(j, "network",
                   {"depth", "in_channels", "num_classes", "base_width",
                    "dropout_rate", "upsample"});
        take_int(j, "network", "depth", cfg.network.depth);
        take_int(j, "network", "in_channels", cfg.network.in_channels);
        take_int(j, "network", "num_classes", cfg.network.num_classes);
        take_int(j, "network", "base_width", cfg.network.base_width);
        take_double(j, "network", "dropout_rate", cfg.network.dropout_rate);
        take_string(j, "network", "upsample", cfg.network.upsample);
    }
    if (auto it = root.find("train"); it != root.end()) {
        const json& j = *it;
        check_keys(j, "train",
                   {"alpha", "learning_rate", "total_steps", "batch_labeled",
                    "batch_unlabeled", "smooth", "seed"});
        take_double(j, "train", "alpha", cfg.train.alpha);
        take_double(j, "train", "learning_rate", cfg.train.learning_rate);
        take_i64(j, "train", "total_steps", cfg.train.total_steps);
        take_int(j, "train", "batch_labeled", cfg.train.batch_labeled);
        take_int(j, "train", "batch_unlabeled", cfg.train.batch_unlabeled);
        take_double(j, "train", "smooth", cfg.train.smooth);
        take_u64(j, "train", "seed", cfg.train.seed);
    }
    if (auto it = root.find("ramp"); it != root.end()) {
        const json& j = *it;
        check_keys(j, "ramp", {"t1", "t2", "lambda_max"});
        take_int(j, "ramp", "t1", cfg.train.ramp.t1);
        take_int(j, "ramp", "t2", cfg.train.ramp.t2);
        take_double(j, "ramp", "lambda_max", cfg.train.ramp.lambda_max);
    }
    if (auto it = root.find("ablation"); it != root.end()) {
        const json& j = *it;
        check_keys(j, "ablation",
                   {"use_unlabeled", "exclusive", "diverse_intensity",
                    "diverse_geometric", "diverse_mixing", "use_teacher",
                    "supervised_extreme_aug"});
        AblationFlags& a = cfg.train.ablation;
        take_bool(j, "ablation", "use_unlabeled", a.use_unlabeled);
        take_bool(j, "ablation", "exclusive", a.exclusive);
        take_bool(j, "ablation", "diverse_intensity", a.diverse_intensity);
        take_bool(j, "ablation", "diverse_geometric", a.diverse_geometric);
        take_bool(j, "ablation", "diverse_mixing", a.diverse_mixing);
        take_bool(j, "ablation", "use_teacher", a.use_teacher);
        take_bool(j, "ablation", "supervised_extreme_aug", a.supervised_extreme_aug);
    }
    if (auto it = root.find("data"); it != root.end()) {
        const json& j = *it;
        check_keys(j, "data",
                   {"protocol", "source", "height", "width", "train_dir",
                    "val_dir", "test_dir", "source_train_dir", "source_val_dir",
                    "target_train_dir", "target_test_dir", "n_labeled",
                    "split_seed", "train_n", "val_n", "test_n", "synth_seed",
                    "shifted_target", "synth_noise", "synth_contrast",
                    "synth_jitter"});
        DataConfig& d = cfg.data;
        take_string(j, "data", "protocol", d.protocol);
        take_string(j, "data", "source", d.source);
        take_int(j, "data", "height", d.height);
        take_int(j, "data", "width", d.width);
        take_string(j, "data", "train_dir", d.train_dir);
        take_string(j, "data", "val_dir", d.val_dir);
        take_string(j, "data", "test_dir", d.test_dir);
        take_string(j, "data", "source_train_dir", d.source_train_dir);
        take_string(j, "data", "source_val_dir", d.source_val_dir);
        take_string(j, "data", "target_train_dir", d.target_train_dir);
        take_string(j, "data", "target_test_dir", d.target_test_dir);
        take_int(j, "data", "n_labeled", d.n_labeled);
        take_u64(j, "data", "split_seed", d.split_seed);
        take_int(j, "data", "train_n", d.train_n);
        take_int(j, "data", "val_n", d.val_n);
        take_int(j, "data", "test_n", d.test_n);
        take_u64(j, "data", "synth_seed", d.synth_seed);
        take_bool(j, "data", "shifted_target", d.shifted_target);
        take_double(j, "data", "synth_noise", d.synth_noise);
        take_double(j, "data", "synth_contrast", d.synth_contrast);
        take_double(j, "data", "synth_jitter", d.synth_jitter);
        if (d.protocol != "limited_annotation" && d.protocol != "domain_shift")
            bad("'data.protocol' must be 'limited_annotation' or 'domain_shift'");
        if (d.source != "synthetic" && d.source != "dirs")
            bad("'data.source' must be 'synthetic' or 'dirs'");
    }
    if (auto it = root.find("study"); it != root.end()) {
        const json& j = *it;
        check_keys(j, "study",
                   {"type", "trials", "seed_base", "validate_every",
                    "checkpoint_every"});
        StudyConfig& s = cfg.study;
        take_string(j, "study", "type", s.type);
        take_int(j, "study", "trials", s.trials);
        take_u64(j, "study", "seed_base", s.seed_base);
        take_i64(j, "study", "validate_every", s.validate_every);
        take_i64(j, "study", "checkpoint_every", s.checkpoint_every);
        if (s.type != "method_vs_supervised" && s.type != "ablation")
            bad("'study.type' must be 'method_vs_supervised' or 'ablation'");
        if (s.trials < 1) bad("'study.trials' must be >= 1");
    }
    return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
    json root;
    root["network"] = {{"depth", cfg.network.depth},
                       {"in_channels", cfg.network.in_channels},
                       {"num_classes", cfg.network.num_classes},
                       {"base_width", cfg.network.base_width},
                       {"dropout_rate", cfg.network.dropout_rate},
                       {"upsample", cfg.network.upsample}};
    root["train"] = {{"alpha", cfg.train.alpha},
                     {"learning_rate", cfg.train.learning_rate},
                     {"total_steps", cfg.train.total_steps},
                     {"batch_labeled", cfg.train.batch_labeled},
                     {"batch_unlabeled", cfg.train.batch_unlabeled},
                     {"smooth", cfg.train.smooth},
                     {"seed", cfg.train.seed}};
    root["ramp"] = {{"t1", cfg.train.ramp.t1},
                    {"t2", cfg.train.ramp.t2},
                    {"lambda_max", cfg.train.ramp.lambda_max}};
    const AblationFlags& a = cfg.train.ablation;
    root["ablation"] = {{"use_unlabeled", a.use_unlabeled},
                        {"exclusive", a.exclusive},
                        {"diverse_intensity", a.diverse_intensity},
                        {"diverse_geometric", a.diverse_geometric},
                        {"diverse_mixing", a.diverse_mixing},
                        {"use_teacher", a.use_teacher},
                        {"supervised_extreme_aug", a.supervised_extreme_aug}};
    const DataConfig& d = cfg.data;
    root["data"] = {{"protocol", d.protocol},
                    {"source", d.source},
                    {"height", d.height},
                    {"width", d.width},
                    {"train_dir", d.train_dir},
                    {"val_dir", d.val_dir},
                    {"test_dir", d.test_dir},
                    {"source_train_dir", d.source_train_dir},
                    {"source_val_dir", d.source_val_dir},
                    {"target_train_dir", d.target_train_dir},
                    {"target_test_dir", d.target_test_dir},
                    {"n_labeled", d.n_labeled},
                    {"split_seed", d.split_seed},
                    {"train_n", d.train_n},
                    {"val_n", d.val_n},
                    {"test_n", d.test_n},
                    {"synth_seed", d.synth_seed},
                    {"shifted_target", d.shifted_target},
                    {"synth_noise", d.synth_noise},
                    {"synth_contrast", d.synth_contrast},
                    {"synth_jitter", d.synth_jitter}};
    root["study"] = {{"type", cfg.study.type},
                     {"trials", cfg.study.trials},
                     {"seed_base", cfg.study.seed_base},
                     {"validate_every", cfg.study.validate_every},
                     {"checkpoint_every", cfg.study.checkpoint_every}};
    return root.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) bad("cannot read config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

Protocol protocol_of(const DataConfig& d) {
    if (d.protocol == "limited_annotation") return Protocol::LimitedAnnotation;
    if (d.protocol == "domain_shift") return Protocol::DomainShift;
    bad("'data.protocol' must be 'limited_annotation' or 'domain_shift'");
}

namespace {

SynthParams synth_params_of(const DataConfig& d, bool shifted) {
    SynthParams p;
    p.noise = d.synth_noise;
    p.contrast = d.synth_contrast;
    p.jitter = d.synth_jitter;
    p.shifted = shifted;
    return p;
}

}  // namespace

StudyData build_study_data(const DataConfig& d, bool require_test,
                           std::string* warning) {
    if (d.height <= 0 || d.width <= 0 || d.height % 16 != 0 || d.width % 16 != 0)
        bad("'data.height'/'data.width' must be positive multiples of 16");
    const Protocol proto = protocol_of(d);
    StudyData out;

    if (d.source == "synthetic") {
        if (d.train_n < 1 || d.val_n < 1 || (require_test && d.test_n < 1))
            bad("'data.train_n'/'val_n'/'test_n' must be >= 1");
        if (proto == Protocol::LimitedAnnotation) {
            const Dataset base = synth_generate(
                d.train_n, d.height, d.width, synth_params_of(d, false),
                derive_seed(d.synth_seed, Stream::Synth, {0}));
            auto parts = split_limited(base, d.n_labeled, d.split_seed);
            out.labeled = std::move(parts.first);
            out.unlabeled = std::move(parts.second);
            out.validation = synth_generate(
                d.val_n, d.height, d.width, synth_params_of(d, false),
                derive_seed(d.synth_seed, Stream::Synth, {1}));
            if (d.test_n > 0)
                out.test = synth_generate(
                    d.test_n, d.height, d.width, synth_params_of(d, false),
                    derive_seed(d.synth_seed, Stream::Synth, {2}));
        } else {
            const Dataset source = synth_generate(
                d.train_n, d.height, d.width, synth_params_of(d, false),
                derive_seed(d.synth_seed, Stream::Synth, {0}));
            const Dataset target = synth_generate(
                d.train_n, d.height, d.width, synth_params_of(d, d.shifted_target),
                derive_seed(d.synth_seed, Stream::Synth, {3}));
            auto parts = split_domain_shift(source, target, warning);
            out.labeled = std::move(parts.first);
            out.unlabeled = std::move(parts.second);
            out.validation = synth_generate(
                d.val_n, d.height, d.width, synth_params_of(d, false),
                derive_seed(d.synth_seed, Stream::Synth, {1}));
            if (d.test_n > 0)
                out.test = synth_generate(
                    d.test_n, d.height, d.width, synth_params_of(d, d.shifted_target),
                    derive_seed(d.synth_seed, Stream::Synth, {4}));
        }
    } else {  // dirs
        if (proto == Protocol::LimitedAnnotation) {
            if (d.train_dir.empty() || d.val_dir.empty())
                bad("'data.train_dir' and 'data.val_dir' are required");
            const Dataset train = load_dataset(d.train_dir, d.height, d.width, "train");
            auto parts = split_limited(train, d.n_labeled, d.split_seed);
            out.labeled = std::move(parts.first);
            out.unlabeled = std::move(parts.second);
            out.validation = load_dataset(d.val_dir, d.height, d.width, "val");
            if (!d.test_dir.empty())
                out.test = load_dataset(d.test_dir, d.height, d.width, "test");
        } else {
            if (d.source_train_dir.empty() || d.source_val_dir.empty() ||
                d.target_train_dir.empty())
                bad("'data.source_train_dir', 'data.source_val_dir' and "
                    "'data.target_train_dir' are required");
            const Dataset source =
                load_dataset(d.source_train_dir, d.height, d.width, "source_train");
            const Dataset target =
                load_dataset(d.target_train_dir, d.height, d.width, "target_train");
            auto parts = split_domain_shift(source, target, warning);
            out.labeled = std::move(parts.first);
            out.unlabeled = std::move(parts.second);
            out.validation =
                load_dataset(d.source_val_dir, d.height, d.width, "source_val");
            if (!d.target_test_dir.empty())
                out.test = load_dataset(d.target_test_dir, d.height, d.width,
                                        "target_test");
        }
    }

    if (require_test && (out.test.size() == 0 || !out.test.fully_labeled()))
        bad("a nonempty labeled test split is required for studies");
    return out;
}

}  // namespace exconsist
