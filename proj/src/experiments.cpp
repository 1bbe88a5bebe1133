#include "exconsist/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace exconsist {

std::string to_string(Protocol p) {
    return p == Protocol::LimitedAnnotation ? "limited_annotation" : "domain_shift";
}

std::vector<double> StudyResult::trial_means() const {
    std::vector<double> m;
    for (const TrialReport& t : trials)
        if (!t.diverged) m.push_back(t.test_dice_mean);
    return m;
}

namespace {

// Continued-fraction evaluation for the regularized incomplete beta
// function (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("betacf: continued fraction did not converge");
}

double betai(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("betai: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

void mean_var(const std::vector<double>& v, double& mean, double& var) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);  // sample variance
}

}  // namespace

double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("welch_t_test: need at least 2 samples per side");
    double ma, va, mb, vb;
    mean_var(a, ma, va);
    mean_var(b, mb, vb);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double se2 = va / na + vb / nb;
    if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;  // documented degenerate case
    const double t = (ma - mb) / std::sqrt(se2);
    const double df = se2 * se2 /
                      ((va / na) * (va / na) / (na - 1.0) +
                       (vb / nb) * (vb / nb) / (nb - 1.0));
    // two-sided p-value of Student's t with Welch-Satterthwaite df
    return betai(0.5 * df, 0.5, df / (df + t * t));
}

int worker_threads() {
    const char* env = std::getenv("EXCONSIST_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<int>(std::min(v, 64L));
}

namespace {

TrialReport run_trial(const NetworkConfig& net_cfg, TrainConfig cfg,
                      const StudyData& data, std::uint64_t seed,
                      std::int64_t validate_every) {
    cfg.seed = seed;
    TrialReport tr;
    tr.trial_seed = seed;
    RunOptions opts;
    opts.validate_every = validate_every;
    try {
        RunResult rr = run_training(net_cfg, cfg, data.labeled, data.unlabeled,
                                    data.validation, opts);
        tr.best_val_step = rr.best_val_step;
        // evaluation strictly after training and selection
        tr.per_image_dice = eval_dice(rr.selected_net(), data.test);
        tr.test_dice_mean = mean_of(tr.per_image_dice);
    } catch (const DivergenceError& e) {
        tr.diverged = true;
        tr.error = e.what();
    }
    return tr;
}

}  // namespace

StudyResult run_study(Protocol protocol, const NetworkConfig& net_cfg,
                      const TrainConfig& train_cfg, const StudyData& data,
                      std::vector<std::uint64_t> seeds, const std::string& config_id,
                      const std::vector<double>* baseline_trial_means,
                      const std::string& baseline_id, std::int64_t validate_every) {
    if (seeds.empty()) throw std::invalid_argument("run_study: no trial seeds");
    if (data.test.size() == 0 || !data.test.fully_labeled())
        throw std::invalid_argument("run_study: test set must be nonempty and labeled");
    if (baseline_trial_means && baseline_trial_means->size() < 2)
        throw std::invalid_argument("run_study: baseline needs at least 2 trial means");
    std::sort(seeds.begin(), seeds.end());

    StudyResult res;
    res.protocol = protocol;
    res.report.config_id = config_id;
    res.trials.assign(seeds.size(), TrialReport{});

    const int workers =
        std::min<int>(worker_threads(), static_cast<int>(seeds.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i)
            res.trials[i] = run_trial(net_cfg, train_cfg, data, seeds[i], validate_every);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex err_mutex;
        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= seeds.size()) return;
                try {
                    res.trials[i] =
                        run_trial(net_cfg, train_cfg, data, seeds[i], validate_every);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    const std::vector<double> means = res.trial_means();
    res.report.n_trials = static_cast<int>(means.size());
    res.report.n_diverged = static_cast<int>(seeds.size() - means.size());
    if (!means.empty()) {
        res.report.dice_mean = mean_of(means);
        res.report.dice_std = stddev_of(means);
    }
    if (baseline_trial_means) {
        res.report.baseline_id = baseline_id;
        // a comparison needs at least two completed trials on our side too
        if (means.size() >= 2)
            res.report.p_value = welch_t_test(means, *baseline_trial_means);
    }
    return res;
}

std::vector<StudyResult> run_ablation_grid(const NetworkConfig& net_cfg,
                                           const TrainConfig& base,
                                           const StudyData& data,
                                           const std::vector<std::uint64_t>& seeds,
                                           std::int64_t validate_every) {
    const AblationFlags full;
    if (!(base.ablation == full) || !base.consistency_enabled())
        throw std::invalid_argument(
            "run_ablation_grid: base config must be the full method");

    struct Variant {
        std::string id;
        AblationFlags flags;
    };
    std::vector<Variant> variants;
    variants.push_back({"full", full});
    {
        AblationFlags f = full;
        f.diverse_geometric = f.diverse_mixing = false;
        variants.push_back({"diversity_intensity", f});
    }
    {
        AblationFlags f = full;
        f.diverse_intensity = f.diverse_mixing = false;
        variants.push_back({"diversity_geometric", f});
    }
    {
        AblationFlags f = full;
        f.diverse_intensity = f.diverse_geometric = false;
        variants.push_back({"diversity_mixing", f});
    }
    {
        AblationFlags f = full;
        f.diverse_mixing = false;
        variants.push_back({"diversity_intensity_geometric", f});
    }
    {
        AblationFlags f = full;
        f.exclusive = false;
        variants.push_back({"no_exclusive", f});
    }
    {
        AblationFlags f = full;
        f.use_unlabeled = false;
        variants.push_back({"no_unlabeled", f});
    }
    {
        AblationFlags f = full;
        f.use_teacher = false;
        variants.push_back({"no_teacher", f});
    }
    {
        AblationFlags f = full;
        f.supervised_extreme_aug = true;
        variants.push_back({"supervised_extreme_aug", f});
    }

    std::vector<StudyResult> out;
    out.reserve(variants.size());
    std::vector<double> full_means;
    for (const Variant& v : variants) {
        TrainConfig cfg = base;
        cfg.ablation = v.flags;
        // every non-reference row is compared against the full method when
        // enough trials completed on both sides
        const bool with_p = v.id != "full" && full_means.size() >= 2;
        StudyResult r = run_study(Protocol::LimitedAnnotation, net_cfg, cfg, data,
                                  seeds, v.id, with_p ? &full_means : nullptr,
                                  with_p ? "full" : "", validate_every);
        r.report.reference = v.id == "full";
        if (v.id == "full") full_means = r.trial_means();
        out.push_back(std::move(r));
    }
    return out;
}

std::string study_csv(const std::vector<StudyResult>& studies) {
    std::string out = "config_id,dice_mean,dice_std,n_trials,p_value\n";
    char buf[128];
    for (const StudyResult& s : studies) {
        out += s.report.config_id;
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d,", s.report.dice_mean,
                      s.report.dice_std, s.report.n_trials);
        out += buf;
        if (s.report.p_value) {
            std::snprintf(buf, sizeof buf, "%.17g", *s.report.p_value);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::string study_json(const std::vector<StudyResult>& studies) {
    nlohmann::ordered_json root;
    root["studies"] = nlohmann::ordered_json::array();
    for (const StudyResult& s : studies) {
        nlohmann::ordered_json j;
        j["config_id"] = s.report.config_id;
        j["protocol"] = to_string(s.protocol);
        j["reference"] = s.report.reference;
        j["dice_mean"] = s.report.dice_mean;
        j["dice_std"] = s.report.dice_std;
        j["n_trials"] = s.report.n_trials;
        j["n_diverged"] = s.report.n_diverged;
        if (s.report.p_value)
            j["p_value"] = *s.report.p_value;
        else
            j["p_value"] = nullptr;
        if (!s.report.baseline_id.empty()) j["baseline"] = s.report.baseline_id;
        j["trials"] = nlohmann::ordered_json::array();
        for (const TrialReport& t : s.trials) {
            nlohmann::ordered_json tj;
            tj["seed"] = t.trial_seed;
            tj["diverged"] = t.diverged;
            if (t.diverged) {
                tj["error"] = t.error;
            } else {
                tj["test_dice_mean"] = t.test_dice_mean;
                tj["best_val_step"] = t.best_val_step;
                tj["per_image_dice"] = t.per_image_dice;
            }
            j["trials"].push_back(std::move(tj));
        }
        root["studies"].push_back(std::move(j));
    }
    return root.dump(2) + "\n";
}

}  // namespace exconsist
