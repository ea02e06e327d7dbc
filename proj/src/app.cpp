#include "sign/app.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "sign/error.hpp"

namespace sign::app {

namespace fs = std::filesystem;

namespace {

using Summary = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
}

void write_summary(const fs::path& out, const Summary& s) {
    std::string text;
    for (const auto& [k, v] : s) text += k + "=" + v + "\n";
    write_text((out / "summary.txt").string(), text);
}

void add_report(Summary& s, const EvalReport& rep) {
    std::istringstream in(rep.summary());
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        s.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
}

class LineWriter {
public:
    LineWriter(const fs::path& path, bool append) : out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
    }
    void line(const std::string& s) {
        out_ << s << '\n';
        if (!out_) throw IoError("write failed");
    }

private:
    std::ofstream out_;
};

EvalOptions eval_options(const Config& cfg) {
    EvalOptions o;
    o.count = cfg.integer("eval.count");
    o.projections = cfg.integer("eval.projections");
    o.repeats = cfg.integer("eval.repeats");
    return o;
}

Dataset build_data(const Config& cfg) {
    Rng rng = stream(cfg.integer("seed"), "data");
    return generate(dataset_spec(cfg), rng);
}

bool needs_teacher(const Config& cfg) {
    return cfg.real("loss.lambda_f") > 0.0 || cfg.flag("dmd.enabled") ||
           (cfg.real("loss.lambda_r") > 0.0 && cfg.get("reg.pairs_file").empty());
}

// Data scale squared: mean per-dimension variance.
double data_scale2(const Tensor& x) {
    const auto s = column_std(x);
    double v = 0.0;
    for (double e : s) v += e * e;
    return v / static_cast<double>(s.size());
}

double masked_mse(const Tensor& a, const Tensor& b, const Mask& m) {
    double s = 0.0, w = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            const double k = m.at(r, c);
            s += k * (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
            w += k;
        }
    }
    return w > 0.0 ? s / w : 0.0;
}

void cmd_gen_data(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    save_samples((out / "data.csv").string(), ds.samples);
    if (ds.is_image()) {
        const std::size_t show = std::min<std::size_t>(64, ds.samples.rows());
        std::vector<std::size_t> rows(show);
        for (std::size_t i = 0; i < show; ++i) rows[i] = i;
        save_pgm((out / "data.pgm").string(), diff::gather_rows(ds.samples, rows), ds.height, ds.width);
    }
    Summary s{{"command", "gen-data"}, {"rows", std::to_string(ds.samples.rows())},
              {"dim", std::to_string(ds.dim())}};
    const auto m = column_mean(ds.samples);
    const auto sd = column_std(ds.samples);
    for (std::size_t c = 0; c < m.size() && c < 16; ++c) {
        s.emplace_back("mean_" + std::to_string(c), fmt(m[c]));
        s.emplace_back("std_" + std::to_string(c), fmt(sd[c]));
    }
    if (ds.mixture) s.emplace_back("mixture", ds.mixture->to_text());
    write_summary(out, s);
}

void cmd_pretrain_score(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const std::uint64_t seed = cfg.integer("seed");
    Rng init = stream(seed, "score-init");
    LearnedScore learned(ScoreNet::random(ds.dim(), cfg.sizes("score.hidden"), diff::Activation::silu,
                                          cfg.real("score.sigma_data"), init),
                         cfg.real("score.lr"));
    Rng rng = stream(seed, "score-train");
    const std::size_t steps = cfg.integer("score.steps");
    const std::size_t batch = cfg.integer("score.batch");
    LineWriter metrics(out / "metrics.csv", false);
    metrics.line("step,dsm_loss");
    double last = 0.0;
    learned.begin_update();
    for (std::size_t i = 0; i < steps; ++i) {
        last = learned.update(sample_rows(ds.samples, batch, rng), sched, rng);
        metrics.line(std::to_string(i) + "," + fmt(last));
    }
    learned.end_update();
    make_dir(out / "checkpoints");
    save_checkpoint((out / "checkpoints" / "score.ckpt").string(), score_checkpoint(learned.net(), steps, seed));
    Summary s{{"command", "pretrain-score"}, {"steps", std::to_string(steps)}, {"final_dsm_loss", fmt(last)}};
    if (ds.mixture) {
        AnalyticScore truth(*ds.mixture);
        Rng er = stream(seed, "score-eval");
        const Tensor pts = sample_rows(ds.samples, 1000, er);
        std::vector<std::size_t> idx;
        for (std::size_t n = 0; n <= sched.steps(); n += std::max<std::size_t>(1, sched.steps() / 4)) idx.push_back(n);
        const auto res = score_residual(learned, truth, noise(sched, pts, sched.steps() / 2, er), idx, sched);
        for (std::size_t k = 0; k < idx.size(); ++k) s.emplace_back("score_residual_n" + std::to_string(idx[k]), fmt(res[k]));
    }
    write_summary(out, s);
}

void cmd_pregen_pairs(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const auto teacher = make_teacher(cfg, ds);
    Rng rng = stream(cfg.integer("seed"), "pairs");
    const PairGeneration gen = pregenerate_pairs(*teacher, sched, cfg.integer("reg.pair_count"), rng,
                                                 parse_stepper(cfg.get("train.flow_stepper")));
    save_pairs((out / "pairs.bin").string(), gen.store);
    write_summary(out, {{"command", "pregen-pairs"},
                        {"pairs", std::to_string(gen.store.size())},
                        {"failures", std::to_string(gen.failures)}});
}

void cmd_train(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const TrainConfig tc = train_config(cfg);
    std::unique_ptr<ScoreSource> teacher;
    if (tc.mode == TrainMode::sign && needs_teacher(cfg)) teacher = make_teacher(cfg, ds);

    PairStore pairs;
    if (tc.mode == TrainMode::sign && tc.weights.lambda_r > 0.0) {
        if (!cfg.get("reg.pairs_file").empty()) {
            pairs = load_pairs(cfg.get("reg.pairs_file"));
        } else {
            Rng prng = stream(cfg.integer("seed"), "pairs");
            pairs = pregenerate_pairs(*teacher, sched, cfg.integer("reg.pair_count"), prng, tc.options.flow_stepper)
                        .store;
        }
        if (!pairs.empty() && pairs.z.cols() != ds.dim()) throw DataError("pair store width does not match the data");
    }

    TrainInputs in;
    in.data = &ds.samples;
    in.teacher = teacher.get();
    in.pairs = &pairs;
    in.sched = sched;
    Trainer trainer(initial_net(cfg, ds.dim()), tc, in, cfg.training_hash());

    const fs::path ckdir = out / "checkpoints";
    make_dir(ckdir);
    const fs::path metrics_path = out / "metrics.csv";
    bool append = false;
    if (!cfg.get("train.resume").empty()) {
        const Checkpoint ck = load_checkpoint(cfg.get("train.resume"));
        trainer.restore(ck);
        // Keep earlier rows of the same run directory, drop anything past the checkpoint.
        if (fs::exists(metrics_path)) {
            std::istringstream old(read_text(metrics_path.string()));
            std::string kept, line;
            std::getline(old, line);
            kept += line + "\n";
            while (std::getline(old, line)) {
                if (line.empty()) continue;
                if (std::stoull(line.substr(0, line.find(','))) < ck.step) kept += line + "\n";
            }
            write_text(metrics_path.string(), kept);
            append = true;
        }
    }
    LineWriter metrics(metrics_path, append);
    if (!append) metrics.line(kMetricsHeader);

    const std::size_t every = cfg.integer("train.checkpoint_every");
    const std::size_t log_every = std::max<std::uint64_t>(1, cfg.integer("train.log_every"));
    std::size_t negative_terms = 0;
    const TrainOutcome outcome = run_training(trainer, [&](const Trainer& t, const MetricsRow& row) {
        const LossReport& r = row.report;
        if (tc.mode == TrainMode::sign) {
            for (double v : {r.recon, r.idem, r.flow, r.denoise, r.reg}) negative_terms += (v < 0.0);
        }
        if (row.step % log_every == 0 || t.steps_done() == tc.steps) metrics.line(metrics_line(row));
        if (every > 0 && t.steps_done() % every == 0) {
            save_checkpoint((ckdir / ("step_" + std::to_string(t.steps_done()) + ".ckpt")).string(), t.checkpoint());
        }
    });
    save_checkpoint((ckdir / "final.ckpt").string(), trainer.checkpoint());

    std::vector<double> totals;
    for (const auto& row : outcome.history) totals.push_back(row.report.total);
    if (outcome.diverged) totals.push_back(std::numeric_limits<double>::quiet_NaN());
    const StabilityCounts st = stability_counts(totals);

    Summary s{{"command", "train"},
              {"mode", to_string(tc.mode)},
              {"steps_done", std::to_string(trainer.steps_done())},
              {"diverged", outcome.diverged ? "1" : "0"},
              {"divergence_step", std::to_string(outcome.divergence_step)},
              {"non_finite_steps", std::to_string(st.non_finite)},
              {"overshoot_steps", std::to_string(st.overshoot)},
              {"max_abs_total", fmt(st.max_abs_total)},
              {"negative_terms", std::to_string(negative_terms)}};
    if (!outcome.history.empty()) {
        const LossReport& last = outcome.history.back().report;
        s.emplace_back("final_total", fmt(last.total));
        s.emplace_back("final_flow", fmt(last.flow));
    }
    if (!outcome.diverged) {
        Rng er = stream(cfg.integer("seed"), "eval");
        const EvalReport rep = evaluate(trainer.net(), ds.samples, teacher.get(), sched, eval_options(cfg), er);
        write_text((out / "eval.csv").string(), rep.csv());
        add_report(s, rep);
    }
    write_summary(out, s);
    if (outcome.diverged && tc.mode == TrainMode::sign) {
        throw DivergenceError(outcome.divergence_message, outcome.divergence_step);
    }
}

Tensor draw_latents(const Config& cfg, const NoiseSchedule& sched, std::size_t count, std::size_t dim,
                    const std::string& tag) {
    Rng rng = stream(cfg.integer("seed"), tag);
    return gaussian({count, dim}, rng, sched.sigma_max());
}

EditSchedule edit_schedule(const Config& cfg, const NoiseSchedule& sched) {
    const double hi = cfg.real("edit.sigma_hi") > 0.0 ? cfg.real("edit.sigma_hi") : 0.5 * sched.sigma_max();
    const double lo = cfg.real("edit.sigma_lo") > 0.0 ? cfg.real("edit.sigma_lo") : sched.sigma_min();
    return EditSchedule::geometric(cfg.integer("edit.steps"), hi, lo);
}

void emit(const fs::path& path_stem, const Tensor& x, const Dataset& ds, const std::string& format) {
    const bool pgm = format == "pgm" || (format == "auto" && ds.is_image());
    save_samples(path_stem.string() + ".csv", x, true);
    if (pgm) {
        if (!ds.is_image()) throw ConfigError("sample.format=pgm needs image-shaped data");
        save_pgm(path_stem.string() + ".pgm", x, ds.height, ds.width);
    }
}

void cmd_sample(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const MlpNet net = initial_net(cfg, ds.dim());
    const Tensor z = draw_latents(cfg, sched, cfg.integer("sample.count"), ds.dim(), "sample");
    const std::string mode = cfg.get("sample.mode");
    Summary s{{"command", "sample"}, {"mode", mode}, {"count", std::to_string(z.rows())}};
    Tensor x;
    if (mode == "single") {
        x = sample_single(net, z);
    } else if (mode == "recursive") {
        const RecursiveSample r = sample_recursive(net, z, cfg.integer("sample.max_iters"), cfg.real("sample.tol"));
        x = r.x;
        s.emplace_back("max_iterations", std::to_string(r.iterations));
    } else {
        Rng rng = stream(cfg.integer("seed"), "sample-noise");
        x = sample_multistep_edit(net, z, Mask::ones(ds.dim()), edit_schedule(cfg, sched), rng);
    }
    make_dir(out / "samples");
    emit(out / "samples" / "samples", x, ds, cfg.get("sample.format"));
    s.emplace_back("idem_drift", fmt(idem_drift(net, z)));
    write_summary(out, s);
}

Mask build_mask(const Config& cfg, const Dataset& ds) {
    const std::string m = cfg.get("edit.mask");
    if (m == "checkerboard") {
        const std::size_t h = ds.is_image() ? ds.height : 1;
        const std::size_t w = ds.is_image() ? ds.width : ds.dim();
        return Mask::checkerboard(h, w, cfg.integer("edit.cell"));
    }
    if (m == "ones") return Mask::ones(ds.dim());
    if (m == "zeros") return Mask::zeros(ds.dim());
    Mask mask(load_samples(m));
    if (mask.dim() != ds.dim()) throw DataError("mask width does not match the data");
    return mask;
}

void cmd_edit(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const MlpNet net = initial_net(cfg, ds.dim());
    Tensor truth;
    if (!cfg.get("edit.input").empty()) {
        truth = load_samples(cfg.get("edit.input"));
        if (truth.cols() != ds.dim()) throw DataError("edit input width does not match the data");
    } else {
        DatasetSpec spec = dataset_spec(cfg);
        spec.count = cfg.integer("edit.count");
        Rng held = stream(cfg.integer("seed"), "held-out");
        if (ds.mixture) {
            truth = ds.mixture->sample(spec.count, held);  // fresh draws, unseen in training
        } else {
            truth = sample_rows(ds.samples, spec.count, held);
        }
    }
    const Mask mask = build_mask(cfg, ds);
    Rng rng = stream(cfg.integer("seed"), "edit");
    Tensor fill = Tensor::zeros_like(truth);
    const std::string how = cfg.get("edit.fill");
    if (how == "noise") fill = gaussian({truth.rows(), truth.cols()}, rng);
    if (how == "keep") fill = truth;
    const Tensor input = mask.blend(fill, truth);
    const Tensor edited = sample_multistep_edit(net, input, mask, edit_schedule(cfg, sched), rng);

    bool preserved = true;
    for (std::size_t r = 0; r < input.rows(); ++r) {
        for (std::size_t c = 0; c < input.cols(); ++c) {
            if (mask.at(r, c) == 0.0 && edited(r, c) != input(r, c)) preserved = false;
        }
    }
    const double before = masked_mse(input, truth, mask);
    const double after = masked_mse(edited, truth, mask);
    make_dir(out / "samples");
    emit(out / "samples" / "edit_input", input, ds, cfg.get("sample.format"));
    emit(out / "samples" / "edit_output", edited, ds, cfg.get("sample.format"));
    emit(out / "samples" / "edit_truth", truth, ds, cfg.get("sample.format"));
    write_summary(out, {{"command", "edit"},
                        {"count", std::to_string(truth.rows())},
                        {"masked_mse_input", fmt(before)},
                        {"masked_mse_output", fmt(after)},
                        {"masked_mse_ratio", fmt(before > 0.0 ? after / before : 0.0)},
                        {"unmasked_preserved", preserved ? "1" : "0"}});
}

void cmd_eval(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const MlpNet net = initial_net(cfg, ds.dim());
    std::unique_ptr<ScoreSource> teacher;
    if (cfg.get("score.kind") != "analytic" || ds.mixture) teacher = make_teacher(cfg, ds);
    Rng er = stream(cfg.integer("seed"), "eval");
    const EvalReport rep = evaluate(net, ds.samples, teacher.get(), sched, eval_options(cfg), er);
    write_text((out / "eval.csv").string(), rep.csv());
    Summary s{{"command", "eval"}};
    add_report(s, rep);
    write_summary(out, s);
}

void cmd_trace(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule sched = schedule(cfg);
    const auto teacher = make_teacher(cfg, ds);
    const Tensor x_T = draw_latents(cfg, sched, cfg.integer("trace.count"), ds.dim(), "trace");
    const Trajectory traj = solve(x_T, *teacher, sched, parse_stepper(cfg.get("trace.stepper")));
    std::string text = "traj_id,grid_index,t";
    for (std::size_t c = 0; c < ds.dim(); ++c) text += ",x" + std::to_string(c);
    text += "\n";
    for (std::size_t r = 0; r < x_T.rows(); ++r) {
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            const std::size_t n = traj.indices[k];
            text += std::to_string(r) + "," + std::to_string(n) + "," + fmt(sched.time(n));
            for (double v : traj.states[k].row(r)) text += "," + fmt(v);
            text += "\n";
        }
    }
    write_text((out / "trace.csv").string(), text);
    write_summary(out, {{"command", "trace"},
                        {"trajectories", std::to_string(x_T.rows())},
                        {"grid_points", std::to_string(traj.states.size())}});
}

void cmd_scaling_study(const Config& cfg, const fs::path& out) {
    const Dataset ds = build_data(cfg);
    const NoiseSchedule base = schedule(cfg);
    const auto teacher = make_teacher(cfg, ds);
    const Stepper stepper = parse_stepper(cfg.get("study.stepper"));
    const double tol = cfg.real("study.flow_tol") * data_scale2(ds.samples);
    const std::size_t check = std::max<std::uint64_t>(1, cfg.integer("study.check_every"));
    const std::uint64_t seed = cfg.integer("seed");

    std::vector<StudyRow> rows;
    std::string table = "N,stepper,sup_error,max_error,flow_loss,steps,flagged\n";
    for (std::size_t N : cfg.sizes("study.N")) {
        const NoiseSchedule sched = base.with_steps(N);
        TrainConfig tc = train_config(cfg);
        tc.mode = TrainMode::sign;
        tc.steps = cfg.integer("study.max_steps");
        tc.options.flow_stepper = stepper;
        tc.seed = seed + N;
        TrainInputs in;
        in.data = &ds.samples;
        in.teacher = teacher.get();
        in.sched = sched;
        Rng init = stream(seed + N, "init");
        MlpNet net = MlpNet::random(model_arch(cfg, ds.dim()), init, cfg.flag("model.identity_init"));
        Trainer trainer(std::move(net), tc, in);

        Rng probe_rng = stream(seed, "study-probe");
        const Tensor probe = sample_rows(ds.samples, 1024, probe_rng);
        double flow = 0.0;
        LineWriter metrics(out / ("metrics_N" + std::to_string(N) + ".csv"), false);
        metrics.line(kMetricsHeader);
        bool met = false;
        while (trainer.steps_done() < tc.steps) {
            metrics.line(metrics_line(trainer.step()));
            if (trainer.steps_done() % check == 0 || trainer.steps_done() == tc.steps) {
                Rng fr = stream(seed, "study-flow");
                const auto res = flow_residuals(trainer.net(), *teacher, probe, sched, fr, stepper);
                flow = 0.0;
                for (double v : res) flow += v / static_cast<double>(res.size());
                if (flow <= tol) {
                    met = true;
                    break;
                }
            }
        }
        Rng ref_rng = stream(seed, "study-reference");
        const TrajectoryReference ref = trajectory_reference(*teacher, sched, cfg.integer("study.trajectories"),
                                                             ref_rng, cfg.integer("study.reference_steps"));
        const SupError err = trajectory_sup_error(trainer.net(), ref);
        StudyRow row{N, stepper, err.mean_sup, err.max_sup, flow, !met};
        rows.push_back(row);
        table += std::to_string(N) + "," + to_string(stepper) + "," + fmt(row.sup_error) + "," + fmt(row.max_error) +
                 "," + fmt(row.flow_loss) + "," + std::to_string(trainer.steps_done()) + "," +
                 (row.flagged ? "1" : "0") + "\n";
        save_checkpoint((out / ("net_N" + std::to_string(N) + ".ckpt")).string(), trainer.checkpoint());
    }
    write_text((out / "study.csv").string(), table);
    Summary s{{"command", "scaling-study"}, {"stepper", to_string(stepper)}, {"rows", std::to_string(rows.size())}};
    bool monotone = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s.emplace_back("sup_error_N" + std::to_string(rows[i].N), fmt(rows[i].sup_error));
        s.emplace_back("flow_loss_N" + std::to_string(rows[i].N), fmt(rows[i].flow_loss));
        s.emplace_back("flagged_N" + std::to_string(rows[i].N), rows[i].flagged ? "1" : "0");
        if (i > 0 && rows[i].sup_error > rows[i - 1].sup_error) monotone = false;
    }
    const double slope = loglog_slope(rows);
    s.emplace_back("slope", std::isnan(slope) ? "none" : fmt(slope));
    s.emplace_back("non_increasing", monotone ? "1" : "0");
    write_summary(out, s);
}

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c = {"gen-data", "pretrain-score", "pregen-pairs", "train",
                                               "sample",   "edit",           "eval",         "trace",
                                               "scaling-study"};
    return c;
}

Rng stream(std::uint64_t seed, const std::string& tag) {
    return Rng(seed * 0x9E3779B97F4A7C15ull ^ fnv1a(tag));
}

DatasetSpec dataset_spec(const Config& cfg) {
    DatasetSpec s;
    s.kind = parse_dataset_kind(cfg.get("data.kind"));
    s.count = cfg.integer("data.count");
    s.normalize = cfg.flag("data.normalize");
    s.mixture = cfg.get("data.mixture");
    s.jitter = cfg.real("data.jitter");
    s.image_size = cfg.integer("data.image_size");
    s.templates = cfg.integer("data.templates");
    s.pixel_noise = cfg.real("data.pixel_noise");
    s.images_path = cfg.get("data.images");
    s.labels_path = cfg.get("data.labels");
    if (s.kind == DatasetKind::idx_images && s.images_path.empty()) {
        throw ConfigError("data.kind=idx_images needs data.images");
    }
    return s;
}

NoiseSchedule schedule(const Config& cfg) {
    NoiseSchedule::Params p;
    p.kind = parse_schedule_kind(cfg.get("schedule.kind"));
    p.sigma_min = cfg.real("schedule.sigma_min");
    p.sigma_max = cfg.real("schedule.sigma_max");
    p.eps = cfg.real("schedule.eps");
    p.T = cfg.real("schedule.T");
    p.N = cfg.integer("schedule.N");
    p.rho = cfg.real("schedule.rho");
    return NoiseSchedule(p);
}

LossOptions loss_options(const Config& cfg) {
    LossOptions o;
    o.distance = parse_distance(cfg.get("loss.distance"));
    o.idem_order = parse_idem_order(cfg.get("loss.idem_order"));
    o.tight_clamp = cfg.real("loss.tight_clamp");
    o.flow_stepper = parse_stepper(cfg.get("train.flow_stepper"));
    return o;
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig t;
    t.mode = parse_train_mode(cfg.get("train.mode"));
    t.steps = cfg.integer("train.steps");
    t.batch = cfg.integer("train.batch");
    t.lr = cfg.real("train.lr");
    t.beta1 = cfg.real("train.beta1");
    t.beta2 = cfg.real("train.beta2");
    t.cosine_decay = cfg.get("train.lr_decay") == "cosine";
    t.freeze = parse_freeze_mode(cfg.get("train.freeze"));
    t.ema_decay = cfg.real("train.ema_decay");
    t.grad_clip = cfg.real("train.grad_clip");
    t.auto_balance = cfg.flag("loss.auto_balance");
    t.weights.lambda_f = cfg.real("loss.lambda_f");
    t.weights.lambda_d = cfg.real("loss.lambda_d");
    t.weights.lambda_r = cfg.real("loss.lambda_r");
    t.weights.lambda_n = cfg.real("loss.lambda_n");
    t.weights.lambda_t = cfg.real("loss.lambda_t");
    t.weights.lambda_i = cfg.real("loss.lambda_i");
    const bool dmd = cfg.flag("dmd.enabled");
    if (dmd && !(t.weights.lambda_d > 0.0)) throw ConfigError("dmd.enabled needs loss.lambda_d > 0");
    if (!dmd && t.weights.lambda_d > 0.0) throw ConfigError("loss.lambda_d > 0 needs dmd.enabled = true");
    t.options = loss_options(cfg);
    t.dmd_score_steps = cfg.integer("dmd.score_steps");
    t.dmd_score_lr = cfg.real("dmd.score_lr");
    t.dmd_score_hidden = cfg.sizes("dmd.score_hidden");
    t.sigma_data = cfg.real("score.sigma_data");
    t.seed = cfg.integer("seed");
    if (t.mode == TrainMode::ign) t.grad_clip = 0.0;
    t.validate();
    return t;
}

diff::MlpArch model_arch(const Config& cfg, std::size_t dim) {
    diff::MlpArch a;
    a.widths.push_back(dim);
    for (std::size_t w : cfg.sizes("model.hidden")) a.widths.push_back(w);
    a.widths.push_back(dim);
    a.activation = diff::parse_activation(cfg.get("model.activation"));
    a.skip = cfg.flag("model.identity_init");
    return a;
}

std::unique_ptr<ScoreSource> make_teacher(const Config& cfg, const Dataset& data) {
    const std::string kind = cfg.get("score.kind");
    if (kind == "analytic") {
        if (!data.mixture) {
            throw ConfigError("score.kind=analytic needs a mixture-backed dataset (gaussian_mixture or toy_images)");
        }
        return std::make_unique<AnalyticScore>(*data.mixture);
    }
    if (kind == "kernel") return std::make_unique<KernelScore>(data.samples, cfg.real("kernel.sigma_floor"));
    if (kind == "zero") return std::make_unique<ZeroScore>(data.dim());
    const std::string path = cfg.get("score.checkpoint");
    if (path.empty()) throw ConfigError("score.kind=learned needs score.checkpoint");
    ScoreNet net = load_score_net(load_checkpoint(path));
    if (net.dim() != data.dim()) throw DataError("score network width does not match the data");
    return std::make_unique<LearnedScore>(std::move(net), cfg.real("score.lr"));
}

MlpNet initial_net(const Config& cfg, std::size_t dim) {
    const diff::MlpArch arch = model_arch(cfg, dim);
    const std::string path = cfg.get("model.checkpoint");
    if (!path.empty()) {
        const Checkpoint ck = load_checkpoint(path);
        check_arch(ck, arch);
        return load_net(ck);
    }
    Rng init = stream(cfg.integer("seed"), "init");
    return MlpNet::random(arch, init, cfg.flag("model.identity_init"));
}

void run(const std::string& command, const Config& cfg, const std::string& out_dir) {
    const fs::path out(out_dir);
    using Fn = void (*)(const Config&, const fs::path&);
    const std::pair<const char*, Fn> table[] = {
        {"gen-data", cmd_gen_data}, {"pretrain-score", cmd_pretrain_score}, {"pregen-pairs", cmd_pregen_pairs},
        {"train", cmd_train},       {"sample", cmd_sample},                 {"edit", cmd_edit},
        {"eval", cmd_eval},         {"trace", cmd_trace},                   {"scaling-study", cmd_scaling_study}};
    for (const auto& [name, fn] : table) {
        if (command == name) {
            make_dir(out);
            write_text((out / "resolved.cfg").string(), cfg.resolved());
            fn(cfg, out);
            return;
        }
    }
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace sign::app
