#include "exconsist/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "exconsist/checkpoint.hpp"
#include "exconsist/config.hpp"
#include "exconsist/evaluate.hpp"
#include "exconsist/experiments.hpp"
#include "exconsist/trainer.hpp"

namespace fs = std::filesystem;

namespace exconsist {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("short write to " + path);
}

std::uint64_t manifest_seed(const DataConfig& d) {
    return d.protocol == "limited_annotation" ? d.split_seed : 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              bool seed_given, std::uint64_t seed) {
    RunConfig cfg = load_run_config(config_path);
    if (seed_given) cfg.train.seed = seed;
    cfg.network.validate();
    cfg.train.validate();
    if (cfg.train.total_steps < 1)
        throw std::invalid_argument("config: 'train.total_steps' must be >= 1");

    std::string warning;
    StudyData data = build_study_data(cfg.data, false, &warning);
    if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());

    // outputs appear only after the whole configuration has been accepted
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "config.json").string(),
               serialize_run_config(cfg));
    write_text((fs::path(out_dir) / "split.json").string(),
               split_manifest_json(data.labeled, data.unlabeled,
                                   manifest_seed(cfg.data), cfg.data.protocol));

    RunOptions opts;
    opts.out_dir = out_dir;
    opts.validate_every = cfg.study.validate_every;
    opts.checkpoint_every = cfg.study.checkpoint_every;
    RunResult rr = run_training(cfg.network, cfg.train, data.labeled,
                                data.unlabeled, data.validation, opts);

    std::printf("trained %lld steps  best_val_dice=%.6f@%lld  final_val_dice=%.6f\n",
                static_cast<long long>(rr.state.step), rr.best_val_dice,
                static_cast<long long>(rr.best_val_step), rr.final_val_dice);
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_path, const std::string& which,
             bool config_given, const std::string& config_path) {
    const Checkpoint ck = checkpoint_load(ckpt_path);

    int h = 0, w = 0;
    if (config_given) {
        const RunConfig rc = load_run_config(config_path);
        if (!(rc.network == ck.net_cfg))
            throw std::invalid_argument(
                "checkpoint/config mismatch: the 'network' section differs from "
                "the checkpoint's architecture");
        h = rc.data.height;
        w = rc.data.width;
    } else {
        // native resolution of the first image decides the eval size
        const fs::path img_dir = fs::path(data_dir) / "images";
        std::vector<std::string> names;
        if (fs::is_directory(img_dir))
            for (const auto& e : fs::directory_iterator(img_dir))
                if (e.path().extension() == ".png") names.push_back(e.path().string());
        if (names.empty())
            throw std::invalid_argument("no PNG images under " + img_dir.string());
        std::sort(names.begin(), names.end());
        const Tensor4 probe = png_read_rgb(names.front());
        h = probe.h;
        w = probe.w;
        if (h % 16 != 0 || w % 16 != 0)
            throw std::invalid_argument(
                "native image size is not a multiple of 16; pass --config to "
                "choose a resize resolution");
    }

    const Dataset ds = load_dataset(data_dir, h, w, "eval");
    if (ds.size() == 0) throw std::invalid_argument("no images in " + data_dir);
    if (!ds.fully_labeled())
        throw std::invalid_argument(
            "eval requires ground-truth masks for every image in " + data_dir);

    SegNetwork student(ck.net_cfg, 0), teacher(ck.net_cfg, 0);
    AdamState optim = adam_init(student, AdamConfig{});
    checkpoint_restore(ck, student, teacher, optim);
    const SegNetwork& net = which == "student" ? student : teacher;

    const std::vector<double> per = eval_dice(net, ds);
    nlohmann::ordered_json out;
    out["network"] = which;
    out["checkpoint_step"] = ck.step;
    out["mean_dice"] = mean_of(per);
    out["per_image"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < per.size(); ++i)
        out["per_image"][ds.items[i].stem] = per[i];
    write_text(out_path, out.dump(2) + "\n");

    std::printf("mean_dice=%.6f over %zu images (%s network)\n", mean_of(per),
                per.size(), which.c_str());
    return 0;
}

int cmd_study(const std::string& config_path, const std::string& out_dir,
              bool trials_given, int trials, bool seed_given, std::uint64_t seed) {
    RunConfig cfg = load_run_config(config_path);
    if (trials_given) cfg.study.trials = trials;
    if (seed_given) cfg.study.seed_base = seed;
    if (cfg.study.trials < 1)
        throw std::invalid_argument("config: 'study.trials' must be >= 1");
    cfg.network.validate();
    cfg.train.validate();

    std::string warning;
    const StudyData data = build_study_data(cfg.data, true, &warning);
    if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());

    const Protocol proto = protocol_of(cfg.data);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.study.trials; ++i)
        seeds.push_back(cfg.study.seed_base + static_cast<std::uint64_t>(i));

    std::vector<StudyResult> rows;
    if (cfg.study.type == "method_vs_supervised") {
        TrainConfig sup = cfg.train;
        sup.ramp = RampSchedule{0, 0, 0.0};
        sup.ablation = AblationFlags{};
        rows.push_back(run_study(proto, cfg.network, sup, data, seeds, "supervised",
                                 nullptr, "", cfg.study.validate_every));
        const std::vector<double> base_means = rows.front().trial_means();
        const bool with_p = base_means.size() >= 2;
        rows.push_back(run_study(proto, cfg.network, cfg.train, data, seeds,
                                 "method", with_p ? &base_means : nullptr,
                                 with_p ? "supervised" : "",
                                 cfg.study.validate_every));
    } else {
        rows = run_ablation_grid(cfg.network, cfg.train, data, seeds,
                                 cfg.study.validate_every);
    }

    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "config.json").string(),
               serialize_run_config(cfg));
    const std::string csv = study_csv(rows);
    write_text((fs::path(out_dir) / "study.csv").string(), csv);
    write_text((fs::path(out_dir) / "study.json").string(), study_json(rows));
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int cmd_make_synth(int n, int resolution, const std::string& out_dir,
                   std::uint64_t seed, bool shifted) {
    if (n < 1) throw std::invalid_argument("--n must be >= 1");
    if (resolution < 16 || resolution % 16 != 0)
        throw std::invalid_argument("--resolution must be a positive multiple of 16");
    SynthParams p;
    p.shifted = shifted;
    const Dataset ds = synth_generate(n, resolution, resolution, p, seed);
    write_dataset(ds, out_dir);
    std::printf("wrote %d image/mask pairs to %s\n", n, out_dir.c_str());
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"extreme-consistency semi-supervised segmentation"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_dir, ckpt_path;
    std::string network = "teacher";
    std::uint64_t seed = 0;
    int trials = 0, n = 12, resolution = 64;
    bool shifted = false;

    CLI::App* train = app.add_subcommand("train", "train one model from a config");
    train->add_option("--config", config_path, "run config (JSON)")->required();
    train->add_option("--out", out_path, "output run directory")->required();
    train->add_option("--seed", seed, "override train.seed");

    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset dir");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset dir with images/ and masks/")
        ->required();
    eval->add_option("--out", out_path, "output JSON path")->required();
    eval->add_option("--network", network, "which weights to score")
        ->check(CLI::IsMember({"teacher", "student"}));
    eval->add_option("--config", config_path,
                     "config supplying the eval resolution (must match the "
                     "checkpoint architecture)");

    CLI::App* study = app.add_subcommand("study", "run a multi-trial study from a config");
    study->add_option("--config", config_path, "run config (JSON)")->required();
    study->add_option("--out", out_path, "output directory for CSV/JSON")->required();
    study->add_option("--trials", trials, "override study.trials");
    study->add_option("--seed", seed, "override study.seed_base");

    CLI::App* make_synth =
        app.add_subcommand("make-synth", "write a synthetic dataset to disk");
    make_synth->add_option("--n", n, "number of items")->required();
    make_synth->add_option("--resolution", resolution, "square image size");
    make_synth->add_option("--out", out_path, "output dataset directory")->required();
    make_synth->add_option("--seed", seed, "generator seed");
    make_synth->add_flag("--shifted", shifted, "produce the shifted domain variant");

    std::vector<const char*> argv;
    argv.push_back("exconsist");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*train)
            return cmd_train(config_path, out_path, train->count("--seed") > 0, seed);
        if (*eval)
            return cmd_eval(ckpt_path, data_dir, out_path, network,
                            eval->count("--config") > 0, config_path);
        if (*study)
            return cmd_study(config_path, out_path, study->count("--trials") > 0,
                             trials, study->count("--seed") > 0, seed);
        if (*make_synth) return cmd_make_synth(n, resolution, out_path, seed, shifted);
        return 1;  // unreachable with require_subcommand(1)
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace exconsist
