#include "exconsist/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include "exconsist/checkpoint.hpp"
#include "exconsist/evaluate.hpp"
#include "exconsist/rng.hpp"

namespace exconsist {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    ramp.validate();
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("TrainConfig: alpha must be in [0,1]");
    if (!(smooth > 0.0))
        throw std::invalid_argument("TrainConfig: smooth must be positive");
    if (total_steps < 0)
        throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
    if (batch_labeled < 1)
        throw std::invalid_argument("TrainConfig: batch_labeled must be >= 1");
    const bool uses_extreme = consistency_enabled() || ablation.supervised_extreme_aug;
    if (uses_extreme && !ablation.diverse_intensity && !ablation.diverse_geometric &&
        !ablation.diverse_mixing)
        throw std::invalid_argument(
            "TrainConfig: at least one transform family must stay enabled");
    if (consistency_enabled()) {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument(
                "TrainConfig: alpha must be in (0,1) for consistency training");
        if (ablation.use_unlabeled && batch_unlabeled < 1)
            throw std::invalid_argument("TrainConfig: batch_unlabeled must be >= 1");
    }
}

TrainState init_train(const NetworkConfig& net_cfg, const TrainConfig& cfg) {
    net_cfg.validate();
    cfg.validate();
    SegNetwork student(net_cfg, derive_seed(cfg.seed, Stream::InitStudent));
    SegNetwork teacher(net_cfg, derive_seed(cfg.seed, Stream::InitTeacher));
    AdamConfig acfg;
    acfg.lr = cfg.learning_rate;
    AdamState optim = adam_init(student, acfg);
    return TrainState{std::move(student), std::move(teacher), std::move(optim), 0};
}

ProbMap stopgrad(const ProbMap& p) { return p; }

namespace {

bool finite_report(const LossReport& r) {
    return std::isfinite(r.l_seg) && std::isfinite(r.l_ec_labeled) &&
           std::isfinite(r.l_ec_unlabeled) && std::isfinite(r.total);
}

// One consistency branch: student sees the extreme-transformed input under
// fresh dropout; the reference network contributes values only (its forward
// is tape-free, so the gradient treats the reference as a constant).
double consistency_branch(TrainState& st, const TrainConfig& cfg,
                          const ExtremeTransformInstance& te, const ImageBatch& x,
                          const ImageBatch* mix_source, double lambda,
                          std::uint64_t dropout_branch, GradSet& grads,
                          std::string* trace_student, std::string* trace_reference,
                          bool* teacher_ran) {
    const SegNetwork& ref_net =
        cfg.ablation.use_teacher ? st.teacher : st.student;

    ImageBatch xs = apply_extreme_to_images(te, x, mix_source);
    if (trace_student) *trace_student = to_string(te);

    ProbMap ref;
    if (cfg.ablation.exclusive) {
        // Reference path: predict on the untransformed input, then move the
        // prediction through the same instance's prediction-path ops.
        ProbMap raw = stopgrad(ref_net.infer(x));
        if (te.mixing.active) {
            ProbMap src_ref = stopgrad(ref_net.infer(*mix_source));
            ref = apply_extreme_to_predictions(te, raw, &src_ref);
        } else {
            ref = apply_extreme_to_predictions(te, raw, nullptr);
        }
    } else {
        // Non-exclusive variant: the reference input is transformed instead
        // of the reference output.
        ref = stopgrad(ref_net.infer(xs));
    }
    if (trace_reference) *trace_reference = to_string(te);
    if (teacher_ran && cfg.ablation.use_teacher) *teacher_ran = true;

    Tape tape;
    Rng drop(derive_seed(cfg.seed, Stream::Dropout,
                         {static_cast<std::uint64_t>(st.step), dropout_branch}));
    ProbMap ps = st.student.forward(xs, Mode::Train, &drop, &tape);
    Tensor4 d(ps.t.n, ps.t.c, ps.t.h, ps.t.w);
    const double loss = soft_dice_consistency_grad(ps, ref, cfg.smooth, lambda, &d);
    st.student.backward(tape, d, grads);
    return loss;
}

}  // namespace

LossReport train_step(TrainState& st, const ImageBatch& labeled_x,
                      const MaskBatch& labeled_y, const ImageBatch& unlabeled_x,
                      const TrainConfig& cfg, StepTrace* trace) {
    cfg.validate();
    const std::uint64_t step_u = static_cast<std::uint64_t>(st.step);
    const double lambda = ramp_lambda(static_cast<int>(st.step), cfg.ramp);

    LossReport rep;
    rep.lambda = lambda;
    GradSet grads = st.student.make_grads();

    ExtremePool pool;
    pool.intensity = cfg.ablation.diverse_intensity;
    pool.geometric = cfg.ablation.diverse_geometric;
    pool.mixing = cfg.ablation.diverse_mixing;

    // Basic augmentation of the labeled pair; everything labeled-side
    // (supervised loss and labeled consistency) runs on this view.
    const BasicTransformInstance tb =
        sample_basic(derive_seed(cfg.seed, Stream::BasicTransform, {step_u}));
    auto [xb, yb] = apply_basic(tb, labeled_x, &labeled_y);
    if (trace) trace->basic = to_string(tb);

    if (cfg.ablation.supervised_extreme_aug) {
        const ExtremeTransformInstance te = sample_extreme(
            derive_seed(cfg.seed, Stream::ExtremeLabeled, {step_u}),
            /*mixing_allowed=*/false, xb.t.h, xb.t.w, xb.t.n, pool);
        std::tie(xb, yb) = apply_extreme_to_labeled_pair(te, xb, yb);
        if (trace) trace->extreme_labeled_student = to_string(te);
    }

    // Supervised Dice on the student.
    {
        Tape tape;
        Rng drop(derive_seed(cfg.seed, Stream::Dropout, {step_u, 0}));
        ProbMap p = st.student.forward(xb, Mode::Train, &drop, &tape);
        Tensor4 d(p.t.n, p.t.c, p.t.h, p.t.w);
        rep.l_seg = dice_loss_grad(p, yb, cfg.smooth, 1.0, &d);
        st.student.backward(tape, d, grads);
    }

    // Consistency branches. A zero weight skips them entirely: no forwards,
    // no normalization-statistics updates, so the step is bit-identical to a
    // purely supervised one.
    const bool consistency = cfg.consistency_enabled() && lambda > 0.0;
    if (trace) trace->consistency_ran = consistency;
    if (consistency) {
        {
            const ExtremeTransformInstance te = sample_extreme(
                derive_seed(cfg.seed, Stream::ExtremeLabeled, {step_u}),
                /*mixing_allowed=*/false, xb.t.h, xb.t.w, xb.t.n, pool);
            rep.l_ec_labeled = consistency_branch(
                st, cfg, te, xb, nullptr, lambda, 1, grads,
                trace ? &trace->extreme_labeled_student : nullptr,
                trace ? &trace->extreme_labeled_reference : nullptr,
                trace ? &trace->teacher_forward_ran : nullptr);
        }
        if (cfg.ablation.use_unlabeled) {
            if (unlabeled_x.t.n < 1)
                throw std::invalid_argument(
                    "train_step: unlabeled branch enabled but no unlabeled batch");
            const ExtremeTransformInstance te = sample_extreme(
                derive_seed(cfg.seed, Stream::ExtremeUnlabeled, {step_u}),
                /*mixing_allowed=*/true, unlabeled_x.t.h, unlabeled_x.t.w, xb.t.n,
                pool);
            rep.l_ec_unlabeled = consistency_branch(
                st, cfg, te, unlabeled_x, te.mixing.active ? &xb : nullptr, lambda,
                2, grads, trace ? &trace->extreme_unlabeled_student : nullptr,
                trace ? &trace->extreme_unlabeled_reference : nullptr,
                trace ? &trace->teacher_forward_ran : nullptr);
        }
    }

    rep.total = rep.l_seg + lambda * (rep.l_ec_labeled + rep.l_ec_unlabeled);
    if (!finite_report(rep)) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "training diverged at step %lld: l_seg=%g l_ec_labeled=%g "
                      "l_ec_unlabeled=%g",
                      static_cast<long long>(st.step), rep.l_seg, rep.l_ec_labeled,
                      rep.l_ec_unlabeled);
        throw DivergenceError(buf);
    }

    adam_step(st.student, st.optim, grads);
    ema_update(st.teacher, st.student, cfg.alpha);
    st.step += 1;
    return rep;
}

namespace {

std::string step_record(std::int64_t step, const LossReport& r) {
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "{\"step\":%lld,\"l_seg\":%.17g,\"l_ec_labeled\":%.17g,"
                  "\"l_ec_unlabeled\":%.17g,\"lambda\":%.17g,\"total\":%.17g}",
                  static_cast<long long>(step), r.l_seg, r.l_ec_labeled,
                  r.l_ec_unlabeled, r.lambda, r.total);
    return buf;
}

std::string val_record(std::int64_t step, double dice) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "{\"step\":%lld,\"val_dice\":%.17g}",
                  static_cast<long long>(step), dice);
    return buf;
}

void save_ckpt(const TrainState& st, const fs::path& path) {
    checkpoint_save(checkpoint_capture(st.student, st.teacher, st.optim, st.step),
                    path.string());
}

}  // namespace

RunResult run_training(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                       const Dataset& labeled, const Dataset& unlabeled,
                       const Dataset& validation, const RunOptions& opts) {
    cfg.validate();
    if (!labeled.fully_labeled())
        throw std::invalid_argument(
            "run_training: labeled set must be nonempty and fully labeled");
    const bool need_unlabeled =
        cfg.consistency_enabled() && cfg.ablation.use_unlabeled;
    if (need_unlabeled && unlabeled.size() == 0)
        throw std::invalid_argument("run_training: unlabeled set is empty");
    if (validation.size() > 0 && !validation.fully_labeled())
        throw std::invalid_argument("run_training: validation set must be labeled");

    RunResult res{init_train(net_cfg, cfg), cfg.ablation.use_teacher};

    const bool to_disk = !opts.out_dir.empty();
    std::ofstream metrics_file;
    if (to_disk) {
        fs::create_directories(opts.out_dir);
        metrics_file.open(fs::path(opts.out_dir) / "metrics.jsonl",
                          std::ios::trunc);
        if (!metrics_file)
            throw std::runtime_error("run_training: cannot write metrics in " +
                                     opts.out_dir);
    }
    auto emit = [&](const std::string& line) {
        res.metrics.push_back(line);
        if (to_disk) metrics_file << line << '\n';
    };

    InfiniteSampler lab_sampler(labeled, cfg.batch_labeled,
                                derive_seed(cfg.seed, Stream::DataLabeled));
    InfiniteSampler unl_sampler(need_unlabeled ? unlabeled : labeled,
                                need_unlabeled ? cfg.batch_unlabeled : 1,
                                derive_seed(cfg.seed, Stream::DataUnlabeled));

    for (std::int64_t s = 0; s < cfg.total_steps; ++s) {
        const std::vector<int> li = lab_sampler.next_indices();
        ImageBatch xl = gather_images(labeled, li);
        MaskBatch yl = gather_masks(labeled, li);
        ImageBatch xu;
        if (need_unlabeled)
            xu = gather_images(unlabeled, unl_sampler.next_indices());

        const LossReport rep = train_step(res.state, xl, yl, xu, cfg);
        const std::int64_t done = res.state.step;
        emit(step_record(done, rep));

        const bool last = done == cfg.total_steps;
        const bool val_due =
            validation.size() > 0 &&
            ((opts.validate_every > 0 && done % opts.validate_every == 0) || last);
        if (val_due) {
            const double vd = mean_of(eval_dice(res.inference_net(), validation));
            emit(val_record(done, vd));
            res.final_val_dice = vd;
            if (vd > res.best_val_dice) {
                res.best_val_dice = vd;
                res.best_val_step = done;
                res.best_net = res.inference_net();
                if (to_disk)
                    save_ckpt(res.state, fs::path(opts.out_dir) / "ckpt_best.bin");
            }
        }
        if (to_disk && opts.checkpoint_every > 0 &&
            done % opts.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "ckpt_%06lld.bin",
                          static_cast<long long>(done));
            save_ckpt(res.state, fs::path(opts.out_dir) / name);
        }
    }

    if (to_disk) {
        save_ckpt(res.state, fs::path(opts.out_dir) / "ckpt_final.bin");
        metrics_file.flush();
        if (!metrics_file)
            throw std::runtime_error("run_training: metrics write failed in " +
                                     opts.out_dir);
    }
    return res;
}

}  // namespace exconsist
