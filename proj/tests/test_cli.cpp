#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exconsist/cli.hpp"
#include "exconsist/config.hpp"

using namespace exconsist;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        char tmpl[] = "/tmp/exconsist_cli_XXXXXX";
        path = mkdtemp(tmpl);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

int call(const std::vector<std::string>& args) { return run_cli(args); }

// minimal fast config: synthetic limited-annotation task at 32x32
std::string tiny_config_text() {
    return R"({
  "network": {"base_width": 2, "dropout_rate": 0.5},
  "train": {"alpha": 0.9, "learning_rate": 0.001, "total_steps": 10,
            "batch_labeled": 2, "batch_unlabeled": 2, "seed": 7},
  "ramp": {"t1": 0, "t2": 4, "lambda_max": 0.5},
  "data": {"protocol": "limited_annotation", "source": "synthetic",
           "train_n": 6, "val_n": 2, "test_n": 2, "n_labeled": 3,
           "height": 32, "width": 32},
  "study": {"type": "method_vs_supervised", "trials": 2, "seed_base": 50,
            "validate_every": 5}
})";
}

double last_val_dice(const std::string& metrics_text) {
    std::istringstream in(metrics_text);
    std::string line;
    double val = -1.0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("val_dice")) val = j["val_dice"].get<double>();
    }
    REQUIRE(val >= 0.0);
    return val;
}

}  // namespace

TEST_CASE("config defaults and round-trip") {
    const RunConfig defaults;
    CHECK(parse_run_config("{}") == defaults);

    RunConfig cfg = parse_run_config(tiny_config_text());
    CHECK(cfg.network.base_width == 2);
    CHECK(cfg.train.alpha == 0.9);
    CHECK(cfg.train.ramp.t2 == 4);
    CHECK(cfg.train.seed == 7);
    CHECK(cfg.data.n_labeled == 3);
    CHECK(cfg.study.trials == 2);

    const std::string s1 = serialize_run_config(cfg);
    const RunConfig again = parse_run_config(s1);
    CHECK(again == cfg);
    CHECK(serialize_run_config(again) == s1);  // byte-stable round trip
}

TEST_CASE("config rejects unknown keys by name") {
    auto expect_bad = [](const std::string& text, const std::string& needle) {
        try {
            parse_run_config(text);
            FAIL_CHECK("expected rejection of " << needle);
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_bad(R"({"trian": {}})", "trian");
    expect_bad(R"({"train": {"learning_rat": 0.1}})", "train.learning_rat");
    expect_bad(R"({"ablation": {"exclusiv": true}})", "ablation.exclusiv");
    expect_bad(R"({"data": {"hieght": 64}})", "data.hieght");
    expect_bad(R"({"study": {"type": "banana"}})", "study.type");
    expect_bad(R"({"data": {"protocol": "zero_shot"}})", "data.protocol");
    expect_bad(R"({"data": {"source": "ftp"}})", "data.source");
    expect_bad("not json at all", "JSON");
}

TEST_CASE("config type errors name the offending key") {
    auto expect_bad = [](const std::string& text, const std::string& needle) {
        try {
            parse_run_config(text);
            FAIL_CHECK("expected type error for " << needle);
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_bad(R"({"train": {"alpha": "high"}})", "train.alpha");
    expect_bad(R"({"train": {"total_steps": 1.5}})", "train.total_steps");
    expect_bad(R"({"train": {"seed": -4}})", "train.seed");
    expect_bad(R"({"ablation": {"exclusive": 1}})", "ablation.exclusive");
    expect_bad(R"({"network": {"upsample": 4}})", "network.upsample");
}

TEST_CASE("build_study_data assembles the synthetic limited protocol") {
    RunConfig cfg = parse_run_config(tiny_config_text());
    StudyData d = build_study_data(cfg.data, true);
    CHECK(d.labeled.size() == 3);
    CHECK(d.unlabeled.size() == 3);
    CHECK(d.validation.size() == 2);
    CHECK(d.test.size() == 2);
    CHECK(d.labeled.fully_labeled());
    for (const auto& item : d.unlabeled.items) CHECK_FALSE(item.has_mask);

    // deterministic rebuild
    StudyData e = build_study_data(cfg.data, true);
    REQUIRE(e.labeled.size() == d.labeled.size());
    CHECK(e.labeled.items[0].stem == d.labeled.items[0].stem);
    CHECK(e.labeled.items[0].image.v == d.labeled.items[0].image.v);

    cfg.data.test_n = 0;
    CHECK_THROWS_AS(build_study_data(cfg.data, true), std::invalid_argument);
    CHECK_NOTHROW(build_study_data(cfg.data, false));

    cfg.data.height = 33;
    CHECK_THROWS_AS(build_study_data(cfg.data, false), std::invalid_argument);
}

TEST_CASE("build_study_data assembles the synthetic domain-shift protocol") {
    RunConfig cfg = parse_run_config(tiny_config_text());
    cfg.data.protocol = "domain_shift";
    cfg.data.shifted_target = true;
    StudyData d = build_study_data(cfg.data, true);
    CHECK(d.labeled.size() == 6);  // whole source train set, fully labeled
    CHECK(d.labeled.fully_labeled());
    CHECK(d.unlabeled.size() == 6);
    for (const auto& item : d.unlabeled.items) CHECK_FALSE(item.has_mask);

    // the shifted flag must actually move the target pixels
    cfg.data.shifted_target = false;
    StudyData plain = build_study_data(cfg.data, true);
    CHECK(plain.unlabeled.items[0].image.v != d.unlabeled.items[0].image.v);
    CHECK(plain.test.items[0].image.v != d.test.items[0].image.v);
    // masks describe the same geometry either way
    CHECK(plain.test.items[0].mask.v == d.test.items[0].mask.v);
}

TEST_CASE("build_study_data loads dataset directories") {
    TempDir tmp;
    const Dataset train = synth_generate(5, 32, 32, SynthParams{}, 901);
    const Dataset val = synth_generate(2, 32, 32, SynthParams{}, 902);
    write_dataset(train, tmp.sub("train"));
    write_dataset(val, tmp.sub("val"));

    RunConfig cfg = parse_run_config(tiny_config_text());
    cfg.data.source = "dirs";
    cfg.data.train_dir = tmp.sub("train");
    cfg.data.val_dir = tmp.sub("val");
    cfg.data.test_dir = "";
    cfg.data.n_labeled = 2;
    StudyData d = build_study_data(cfg.data, false);
    CHECK(d.labeled.size() == 2);
    CHECK(d.unlabeled.size() == 3);
    CHECK(d.validation.size() == 2);
    CHECK(d.test.size() == 0);

    cfg.data.train_dir = "";
    CHECK_THROWS_AS(build_study_data(cfg.data, false), std::invalid_argument);
}

TEST_CASE("cli usage errors exit 1 and leave no outputs") {
    CHECK(call({}) == 1);
    CHECK(call({"--help"}) == 0);
    CHECK(call({"launder"}) == 1);
    CHECK(call({"train"}) == 1);  // missing required flags

    TempDir tmp;
    CHECK(call({"train", "--config", tmp.sub("absent.json"), "--out",
                tmp.sub("run")}) == 1);
    CHECK_FALSE(fs::exists(tmp.sub("run")));

    write_file(tmp.sub("bad.json"), R"({"train": {"learning_rat": 1}})");
    CHECK(call({"train", "--config", tmp.sub("bad.json"), "--out",
                tmp.sub("run2")}) == 1);
    CHECK_FALSE(fs::exists(tmp.sub("run2")));
}

TEST_CASE("cli train writes a self-describing run directory") {
    TempDir tmp;
    write_file(tmp.sub("cfg.json"), tiny_config_text());
    REQUIRE(call({"train", "--config", tmp.sub("cfg.json"), "--out",
                  tmp.sub("run"), "--seed", "99"}) == 0);

    for (const char* f :
         {"config.json", "split.json", "metrics.jsonl", "ckpt_best.bin",
          "ckpt_final.bin"})
        CHECK(fs::exists(fs::path(tmp.sub("run")) / f));

    // the frozen copy records the --seed override
    const RunConfig frozen =
        parse_run_config(read_file(tmp.sub("run") + "/config.json"));
    CHECK(frozen.train.seed == 99);

    // the split manifest is valid JSON naming both partitions
    const auto manifest =
        nlohmann::json::parse(read_file(tmp.sub("run") + "/split.json"));
    CHECK(manifest["labeled"].size() == 3);
    CHECK(manifest["unlabeled"].size() == 3);

    // rerunning from the frozen copy reproduces the metrics byte for byte
    REQUIRE(call({"train", "--config", tmp.sub("run") + "/config.json", "--out",
                  tmp.sub("rerun")}) == 0);
    CHECK(read_file(tmp.sub("run") + "/metrics.jsonl") ==
          read_file(tmp.sub("rerun") + "/metrics.jsonl"));
}

TEST_CASE("cli eval matches the recorded validation dice") {
    TempDir tmp;
    REQUIRE(call({"make-synth", "--n", "6", "--resolution", "32", "--out",
                  tmp.sub("train"), "--seed", "11"}) == 0);
    REQUIRE(call({"make-synth", "--n", "2", "--resolution", "32", "--out",
                  tmp.sub("val"), "--seed", "12"}) == 0);

    RunConfig cfg = parse_run_config(tiny_config_text());
    cfg.data.source = "dirs";
    cfg.data.train_dir = tmp.sub("train");
    cfg.data.val_dir = tmp.sub("val");
    cfg.data.n_labeled = 2;
    write_file(tmp.sub("cfg.json"), serialize_run_config(cfg));
    REQUIRE(call({"train", "--config", tmp.sub("cfg.json"), "--out",
                  tmp.sub("run")}) == 0);

    REQUIRE(call({"eval", "--checkpoint", tmp.sub("run") + "/ckpt_final.bin",
                  "--data", tmp.sub("val"), "--out", tmp.sub("eval.json")}) == 0);
    const auto ev = nlohmann::json::parse(read_file(tmp.sub("eval.json")));
    CHECK(ev["network"] == "teacher");
    CHECK(ev["per_image"].size() == 2);
    // same weights, same data, same code path as the final in-run validation
    CHECK(ev["mean_dice"].get<double>() ==
          last_val_dice(read_file(tmp.sub("run") + "/metrics.jsonl")));

    // student weights are a different model
    REQUIRE(call({"eval", "--checkpoint", tmp.sub("run") + "/ckpt_final.bin",
                  "--data", tmp.sub("val"), "--out", tmp.sub("eval_s.json"),
                  "--network", "student"}) == 0);
    const auto evs = nlohmann::json::parse(read_file(tmp.sub("eval_s.json")));
    CHECK(evs["network"] == "student");
    CHECK(evs["mean_dice"].get<double>() != ev["mean_dice"].get<double>());
}

TEST_CASE("cli eval rejects bad inputs") {
    TempDir tmp;
    REQUIRE(call({"make-synth", "--n", "3", "--resolution", "32", "--out",
                  tmp.sub("ds"), "--seed", "4"}) == 0);

    RunConfig cfg = parse_run_config(tiny_config_text());
    cfg.train.total_steps = 2;
    cfg.study.validate_every = 2;
    write_file(tmp.sub("cfg.json"), serialize_run_config(cfg));
    REQUIRE(call({"train", "--config", tmp.sub("cfg.json"), "--out",
                  tmp.sub("run")}) == 0);
    const std::string ckpt = tmp.sub("run") + "/ckpt_final.bin";

    // unlabeled dir: masks removed
    fs::remove_all(tmp.sub("ds") + "/masks");
    CHECK(call({"eval", "--checkpoint", ckpt, "--data", tmp.sub("ds"), "--out",
                tmp.sub("e.json")}) == 1);

    // architecture mismatch between --config and checkpoint
    RunConfig other = cfg;
    other.network.base_width = 4;
    write_file(tmp.sub("other.json"), serialize_run_config(other));
    REQUIRE(call({"make-synth", "--n", "2", "--resolution", "32", "--out",
                  tmp.sub("ds2"), "--seed", "5"}) == 0);
    CHECK(call({"eval", "--checkpoint", ckpt, "--data", tmp.sub("ds2"), "--out",
                tmp.sub("e2.json"), "--config", tmp.sub("other.json")}) == 1);

    // native size that no 4-level U-Net can take
    fs::create_directories(tmp.sub("odd") + "/images");
    fs::create_directories(tmp.sub("odd") + "/masks");
    Tensor4 t(1, 3, 24, 24);
    png_write_rgb(tmp.sub("odd") + "/images/a.png", t);
    png_write_gray(tmp.sub("odd") + "/masks/a.png", t, 0, 0);
    CHECK(call({"eval", "--checkpoint", ckpt, "--data", tmp.sub("odd"), "--out",
                tmp.sub("e3.json")}) == 1);
}

TEST_CASE("cli study writes deterministic CSV and JSON") {
    TempDir tmp;
    write_file(tmp.sub("cfg.json"), tiny_config_text());
    REQUIRE(call({"study", "--config", tmp.sub("cfg.json"), "--out",
                  tmp.sub("s1")}) == 0);
    REQUIRE(call({"study", "--config", tmp.sub("cfg.json"), "--out",
                  tmp.sub("s2")}) == 0);

    const std::string csv = read_file(tmp.sub("s1") + "/study.csv");
    CHECK(csv.rfind("config_id,dice_mean,dice_std,n_trials,p_value\n", 0) == 0);
    CHECK(csv.find("supervised,") != std::string::npos);
    CHECK(csv.find("method,") != std::string::npos);
    CHECK(csv == read_file(tmp.sub("s2") + "/study.csv"));
    CHECK(read_file(tmp.sub("s1") + "/study.json") ==
          read_file(tmp.sub("s2") + "/study.json"));

    // --trials override shrinks the study
    REQUIRE(call({"study", "--config", tmp.sub("cfg.json"), "--out",
                  tmp.sub("s3"), "--trials", "1"}) == 0);
    const auto js =
        nlohmann::json::parse(read_file(tmp.sub("s3") + "/study.json"));
    for (const auto& st : js["studies"]) CHECK(st["n_trials"] == 1);
}

TEST_CASE("cli make-synth writes deterministic datasets") {
    TempDir tmp;
    REQUIRE(call({"make-synth", "--n", "5", "--resolution", "32", "--out",
                  tmp.sub("a"), "--seed", "21"}) == 0);
    std::size_t imgs = 0, masks = 0;
    for (const auto& e : fs::directory_iterator(tmp.sub("a") + "/images")) ++imgs, (void)e;
    for (const auto& e : fs::directory_iterator(tmp.sub("a") + "/masks")) ++masks, (void)e;
    CHECK(imgs == 5);
    CHECK(masks == 5);

    REQUIRE(call({"make-synth", "--n", "5", "--resolution", "32", "--out",
                  tmp.sub("b"), "--seed", "21"}) == 0);
    CHECK(read_file(tmp.sub("a") + "/images/synth_0000.png") ==
          read_file(tmp.sub("b") + "/images/synth_0000.png"));

    REQUIRE(call({"make-synth", "--n", "5", "--resolution", "32", "--out",
                  tmp.sub("c"), "--seed", "21", "--shifted"}) == 0);
    CHECK(read_file(tmp.sub("a") + "/images/synth_0000.png") !=
          read_file(tmp.sub("c") + "/images/synth_0000.png"));

    CHECK(call({"make-synth", "--n", "2", "--resolution", "20", "--out",
                tmp.sub("d")}) == 1);
}

TEST_CASE("cli train reports divergence with exit code 2") {
    TempDir tmp;
    RunConfig cfg = parse_run_config(tiny_config_text());
    cfg.train.learning_rate = 1e300;
    cfg.train.total_steps = 3;
    write_file(tmp.sub("cfg.json"), serialize_run_config(cfg));
    CHECK(call({"train", "--config", tmp.sub("cfg.json"), "--out",
                tmp.sub("run")}) == 2);
}
