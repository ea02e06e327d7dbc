#include "sign/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "sign/data.hpp"
#include "sign/error.hpp"

namespace sign {

namespace {

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename U>
    void uint(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    void text(const std::string& s) {
        uint(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void array(std::span<const double> v) {
        uint(static_cast<std::uint64_t>(v.size()));
        for (double x : v) f64(x);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(std::string(what_) + " truncated at byte " + std::to_string(bytes_.size()) +
                                  " (needed " + std::to_string(pos_ + n) + ")",
                              bytes_.size());
        }
    }
    template <typename U>
    U uint() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U{bytes_[pos_ + i]} << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
    std::string text() {
        const auto n = uint<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::vector<double> array() {
        const auto n = uint<std::uint64_t>();
        if (n > (bytes_.size() - pos_) / 8) need(bytes_.size() - pos_ + 1);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    void magic(const char* expected) {
        need(8);
        if (std::memcmp(bytes_.data(), expected, 8) != 0) {
            throw FormatError(std::string(what_) + " has a bad magic number", 0);
        }
        pos_ = 8;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::vector<double> flatten(const std::vector<Tensor>& ts) {
    std::vector<double> out;
    for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
}

void unflatten(std::span<const double> flat, std::vector<Tensor>& ts, const char* what) {
    std::size_t total = 0;
    for (const auto& t : ts) total += t.size();
    if (flat.size() != total) throw FormatError(std::string("checkpoint ") + what + " has the wrong size", 0);
    std::size_t k = 0;
    for (auto& t : ts) {
        for (double& v : t.values()) v = flat[k++];
    }
}

// Six weights plus a flag telling whether auto-balancing already ran.
std::vector<double> weight_vector(const LossWeights& w, bool balanced) {
    return {w.lambda_f, w.lambda_d, w.lambda_r, w.lambda_n, w.lambda_t, w.lambda_i, balanced ? 1.0 : 0.0};
}

LossWeights weights_from(std::span<const double> v) {
    if (v.size() != 7) throw FormatError("checkpoint loss weights have the wrong size", 0);
    LossWeights w;
    w.lambda_f = v[0];
    w.lambda_d = v[1];
    w.lambda_r = v[2];
    w.lambda_n = v[3];
    w.lambda_t = v[4];
    w.lambda_i = v[5];
    return w;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

constexpr const char* kScorePrefix = "score sd=";

}  // namespace

const char* to_string(TrainMode m) { return m == TrainMode::sign ? "sign" : "ign"; }

TrainMode parse_train_mode(const std::string& name) {
    if (name == "sign") return TrainMode::sign;
    if (name == "ign") return TrainMode::ign;
    throw ConfigError("unknown training mode '" + name + "'");
}

const char* to_string(FreezeMode m) { return m == FreezeMode::copy ? "copy" : "ema"; }

FreezeMode parse_freeze_mode(const std::string& name) {
    if (name == "copy") return FreezeMode::copy;
    if (name == "ema") return FreezeMode::ema;
    throw ConfigError("unknown freeze mode '" + name + "'");
}

void TrainConfig::validate() const {
    if (batch == 0) throw ConfigError("train.batch must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    }
    if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("train.ema_decay must lie in [0, 1)");
    if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
    weights.validate();
}

std::string metrics_line(const MetricsRow& row) {
    const LossReport& r = row.report;
    std::string s = std::to_string(row.step);
    for (double v : {r.recon, r.idem, r.tight, r.flow, r.dmd_surrogate, r.denoise, r.reg, r.total, r.grad_norm}) {
        s += ',' + fmt(v);
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, ",%.3f", row.wall_ms);
    return s + buf;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    Writer w;
    w.raw(kCheckpointMagic, 8);
    w.uint(ck.version);
    w.text(ck.arch);
    w.uint(ck.step);
    w.uint(ck.seed);
    w.text(ck.rng_state);
    w.array(ck.params);
    w.uint(ck.config_hash);
    w.f64(ck.initial_grad_norm);
    w.uint(ck.adam_step);
    w.array(ck.adam_m);
    w.array(ck.adam_v);
    w.array(ck.frozen);
    w.array(ck.weights);
    w.uint(static_cast<std::uint8_t>(ck.has_score ? 1 : 0));
    if (ck.has_score) {
        w.text(ck.score_arch);
        w.array(ck.score_params);
        w.uint(ck.score_adam_step);
        w.array(ck.score_m);
        w.array(ck.score_v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "checkpoint");
    r.magic(kCheckpointMagic);
    Checkpoint ck;
    ck.version = r.uint<std::uint32_t>();
    if (ck.version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(ck.version), 8);
    }
    ck.arch = r.text();
    ck.step = r.uint<std::uint64_t>();
    ck.seed = r.uint<std::uint64_t>();
    ck.rng_state = r.text();
    ck.params = r.array();
    ck.config_hash = r.uint<std::uint64_t>();
    ck.initial_grad_norm = r.f64();
    ck.adam_step = r.uint<std::uint64_t>();
    ck.adam_m = r.array();
    ck.adam_v = r.array();
    ck.frozen = r.array();
    ck.weights = r.array();
    ck.has_score = r.uint<std::uint8_t>() != 0;
    if (ck.has_score) {
        ck.score_arch = r.text();
        ck.score_params = r.array();
        ck.score_adam_step = r.uint<std::uint64_t>();
        ck.score_m = r.array();
        ck.score_v = r.array();
    }
    if (r.pos() != bytes.size()) throw FormatError("trailing bytes after checkpoint", r.pos());
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

Checkpoint net_checkpoint(const MlpNet& net, std::uint64_t step, std::uint64_t seed) {
    Checkpoint ck;
    ck.arch = net.arch().descriptor();
    ck.step = step;
    ck.seed = seed;
    ck.params = net.flat_parameters();
    return ck;
}

void check_arch(const Checkpoint& ck, const diff::MlpArch& expected) {
    if (ck.arch != expected.descriptor()) {
        throw ConfigError("checkpoint architecture '" + ck.arch + "' does not match configured '" +
                          expected.descriptor() + "'");
    }
}

MlpNet load_net(const Checkpoint& ck) {
    if (ck.arch.rfind(kScorePrefix, 0) == 0) throw ConfigError("checkpoint holds a score network, not a generator");
    MlpNet net(diff::Mlp(diff::MlpArch::parse(ck.arch)));
    if (ck.params.size() != net.parameter_count()) {
        throw FormatError("checkpoint parameter count does not match its architecture", 0);
    }
    net.set_flat_parameters(ck.params);
    return net;
}

Checkpoint score_checkpoint(const ScoreNet& net, std::uint64_t updates, std::uint64_t seed) {
    Checkpoint ck;
    ck.arch = kScorePrefix + fmt(net.sigma_data()) + " " + net.mlp().arch().descriptor();
    ck.step = updates;
    ck.seed = seed;
    ck.params = net.mlp().flat_parameters();
    return ck;
}

ScoreNet load_score_net(const Checkpoint& ck) {
    if (ck.arch.rfind(kScorePrefix, 0) != 0) throw ConfigError("checkpoint does not hold a score network");
    const std::string rest = ck.arch.substr(std::strlen(kScorePrefix));
    const auto space = rest.find(' ');
    if (space == std::string::npos) throw FormatError("malformed score network descriptor", 0);
    const double sd = std::stod(rest.substr(0, space));
    diff::Mlp mlp(diff::MlpArch::parse(rest.substr(space + 1)));
    if (ck.params.size() != mlp.parameter_count()) {
        throw FormatError("score checkpoint parameter count does not match its architecture", 0);
    }
    mlp.set_flat_parameters(ck.params);
    return ScoreNet(std::move(mlp), sd);
}

std::vector<std::uint8_t> encode_pairs(const PairStore& pairs) {
    Writer w;
    w.raw(kPairMagic, 8);
    const std::uint64_t count = pairs.size();
    const auto d = static_cast<std::uint32_t>(count ? pairs.z.cols() : 0);
    w.uint(count);
    w.uint(d);
    for (std::size_t i = 0; i < count; ++i) {
        for (double v : pairs.z.row(i)) w.f64(v);
        for (double v : pairs.y.row(i)) w.f64(v);
    }
    return w.take();
}

PairStore decode_pairs(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "pair store");
    r.magic(kPairMagic);
    const auto count = r.uint<std::uint64_t>();
    const auto d = r.uint<std::uint32_t>();
    r.need(count * d * 16);
    PairStore p;
    p.z = Tensor({count, d});
    p.y = Tensor({count, d});
    for (std::size_t i = 0; i < count; ++i) {
        for (double& v : p.z.row(i)) v = r.f64();
        for (double& v : p.y.row(i)) v = r.f64();
    }
    if (r.pos() != bytes.size()) throw FormatError("trailing bytes after pair store", r.pos());
    return p;
}

void save_pairs(const std::string& path, const PairStore& pairs) { write_file(path, encode_pairs(pairs)); }

PairStore load_pairs(const std::string& path) { return decode_pairs(read_file(path)); }

PairGeneration pregenerate_pairs(const ScoreSource& teacher, const NoiseSchedule& sched, std::size_t count,
                                 Rng& rng, Stepper stepper) {
    if (count == 0) throw ConfigError("reg.pair_count must be at least 1");
    const std::size_t d = teacher.dim();
    const Tensor z = gaussian({count, d}, rng, sched.sigma_max());
    std::vector<double> zs, ys;
    PairGeneration out;
    auto keep = [&](const Tensor& zc, const Tensor& yc) {
        for (std::size_t r = 0; r < zc.rows(); ++r) {
            bool finite = true;
            for (double v : yc.row(r)) finite = finite && std::isfinite(v);
            if (!finite) {
                ++out.failures;
                continue;
            }
            zs.insert(zs.end(), zc.row(r).begin(), zc.row(r).end());
            ys.insert(ys.end(), yc.row(r).begin(), yc.row(r).end());
        }
    };
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < count; start += kChunk) {
        const std::size_t n = std::min(kChunk, count - start);
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = start + i;
        const Tensor zc = diff::gather_rows(z, rows);
        try {
            keep(zc, solve_endpoint(zc, teacher, sched, stepper));
        } catch (const DivergenceError&) {
            // Retry row by row so only the failing pairs are dropped.
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t one[] = {i};
                const Tensor zi = diff::gather_rows(zc, one);
                try {
                    keep(zi, solve_endpoint(zi, teacher, sched, stepper));
                } catch (const DivergenceError&) {
                    ++out.failures;
                }
            }
        }
    }
    const std::size_t kept = zs.size() / d;
    out.store.z = Tensor({kept, d}, std::move(zs));
    out.store.y = Tensor({kept, d}, std::move(ys));
    return out;
}

Trainer::Trainer(MlpNet net, TrainConfig cfg, TrainInputs inputs, std::uint64_t config_hash)
    : net_(std::move(net)),
      frozen_(net_),
      cfg_(std::move(cfg)),
      in_(std::move(inputs)),
      weights_(cfg_.weights),
      adam_(diff::AdamState::for_parameters(net_.parameters(), {cfg_.beta1, cfg_.beta2, 1e-8})),
      rng_(cfg_.seed),
      config_hash_(config_hash) {
    cfg_.validate();
    if (in_.data == nullptr || in_.data->rows() == 0) throw DataError("training needs a non-empty dataset");
    if (in_.data->cols() != net_.dim()) {
        throw DimensionError("dataset width " + std::to_string(in_.data->cols()) + " does not match the net width " +
                             std::to_string(net_.dim()));
    }
    if (cfg_.mode == TrainMode::sign) {
        if ((weights_.lambda_f > 0.0 || weights_.lambda_d > 0.0) && in_.teacher == nullptr) {
            throw ConfigError("flow and dmd terms need a teacher score");
        }
        if (weights_.lambda_r > 0.0 && (in_.pairs == nullptr || in_.pairs->empty())) {
            throw ConfigError("regression term needs a non-empty pair store");
        }
        if (weights_.lambda_d > 0.0) {
            Rng init = rng_.split();
            learned_ = std::make_shared<LearnedScore>(
                ScoreNet::random(net_.dim(), cfg_.dmd_score_hidden, diff::Activation::silu, cfg_.sigma_data, init),
                cfg_.dmd_score_lr);
        }
    }
}

double Trainer::learning_rate() const {
    if (!cfg_.cosine_decay || cfg_.steps == 0) return cfg_.lr;
    const double p = std::min(1.0, static_cast<double>(step_) / static_cast<double>(cfg_.steps));
    return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

void Trainer::refresh_frozen() {
    if (cfg_.freeze == FreezeMode::copy) {
        frozen_.refresh(net_);
    } else {
        frozen_.refresh_ema(net_, cfg_.ema_decay);
    }
}

void Trainer::update_learned_score() {
    learned_->begin_update();
    try {
        for (std::size_t k = 0; k < cfg_.dmd_score_steps; ++k) {
            const Tensor z = gaussian({cfg_.batch, net_.dim()}, rng_, in_.sched.sigma_max());
            learned_->update(net_.forward(z), in_.sched, rng_);
        }
    } catch (...) {
        learned_->end_update();
        throw;
    }
    learned_->end_update();
}

MetricsRow Trainer::step() {
    const auto t0 = std::chrono::steady_clock::now();
    refresh_frozen();
    const std::size_t d = net_.dim();
    const Tensor x = sample_rows(*in_.data, cfg_.batch, rng_);
    const Tensor z = gaussian({cfg_.batch, d}, rng_, in_.sched.sigma_max());

    LossResult res;
    net_.zero_grad();
    if (cfg_.mode == TrainMode::sign) {
        if (learned_) update_learned_score();
        if (cfg_.auto_balance && !balanced_) {
            diff::NoGradGuard guard;
            Rng probe = rng_;
            const SignSources src{in_.teacher, learned_.get(), in_.pairs};
            const LossResult cal = sign_total(net_, frozen_, x, z, weights_, cfg_.options, src, in_.sched, probe);
            weights_ = auto_balance(weights_, cal.report);
            balanced_ = true;
        }
        const SignSources src{in_.teacher, learned_.get(), in_.pairs};
        res = sign_total(net_, frozen_, x, z, weights_, cfg_.options, src, in_.sched, rng_);
    } else {
        res = ign_total(net_, frozen_, x, z, weights_, cfg_.options);
    }

    MetricsRow row;
    row.step = step_;
    row.report = res.report;
    const double objective = res.objective.value().item();
    if (!std::isfinite(objective) || !std::isfinite(res.report.total)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step_), step_);
    }
    res.objective.backward();
    const auto params = net_.parameters();
    row.report.grad_norm = diff::gradient_norm(params);
    if (!std::isfinite(row.report.grad_norm)) {
        throw DivergenceError("non-finite gradient at step " + std::to_string(step_), step_);
    }
    if (initial_grad_norm_ == 0.0 && row.report.grad_norm > 0.0) initial_grad_norm_ = row.report.grad_norm;
    if (cfg_.grad_clip > 0.0 && initial_grad_norm_ > 0.0) {
        diff::clip_gradients(params, cfg_.grad_clip * initial_grad_norm_);
    }
    diff::adam_step(params, adam_, learning_rate());
    ++step_;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck = net_checkpoint(net_, step_, cfg_.seed);
    ck.rng_state = rng_.state();
    ck.config_hash = config_hash_;
    ck.initial_grad_norm = initial_grad_norm_;
    ck.adam_step = adam_.step;
    ck.adam_m = flatten(adam_.first_moment);
    ck.adam_v = flatten(adam_.second_moment);
    ck.frozen = frozen_.flat_parameters();
    ck.weights = weight_vector(weights_, balanced_);
    if (learned_) {
        ck.has_score = true;
        const Checkpoint sc = score_checkpoint(learned_->net(), learned_->updates(), cfg_.seed);
        ck.score_arch = sc.arch;
        ck.score_params = sc.params;
        ck.score_adam_step = learned_->optimizer().step;
        ck.score_m = flatten(learned_->optimizer().first_moment);
        ck.score_v = flatten(learned_->optimizer().second_moment);
    }
    return ck;
}

void Trainer::restore(const Checkpoint& ck) {
    check_arch(ck, net_.arch());
    if (ck.config_hash != config_hash_) {
        throw ConfigError("checkpoint was written by a different configuration");
    }
    if (ck.params.size() != net_.parameter_count() || ck.frozen.size() != net_.parameter_count()) {
        throw FormatError("checkpoint parameter count does not match its architecture", 0);
    }
    net_.set_flat_parameters(ck.params);
    frozen_.set_flat_parameters(ck.frozen);
    unflatten(ck.adam_m, adam_.first_moment, "adam first moment");
    unflatten(ck.adam_v, adam_.second_moment, "adam second moment");
    adam_.step = ck.adam_step;
    weights_ = weights_from(ck.weights);
    balanced_ = ck.weights.back() != 0.0;
    initial_grad_norm_ = ck.initial_grad_norm;
    step_ = ck.step;
    rng_.restore(ck.rng_state);
    if (ck.has_score != static_cast<bool>(learned_)) {
        throw ConfigError("checkpoint score-network section does not match the dmd setting");
    }
    if (learned_) {
        Checkpoint sc;
        sc.arch = ck.score_arch;
        sc.params = ck.score_params;
        learned_->net() = load_score_net(sc);
        learned_->optimizer().step = ck.score_adam_step;
        unflatten(ck.score_m, learned_->optimizer().first_moment, "score first moment");
        unflatten(ck.score_v, learned_->optimizer().second_moment, "score second moment");
    }
}

TrainOutcome run_training(Trainer& trainer, const StepCallback& on_step) {
    TrainOutcome out;
    while (trainer.steps_done() < trainer.config().steps) {
        try {
            MetricsRow row = trainer.step();
            if (on_step) on_step(trainer, row);
            out.history.push_back(row);
        } catch (const DivergenceError& e) {
            out.diverged = true;
            out.divergence_step = trainer.steps_done();
            out.divergence_message = e.what();
            break;
        }
    }
    out.net = trainer.net().clone();
    return out;
}

TrainOutcome train_sign(const MlpNet& init, const TrainConfig& cfg, const TrainInputs& inputs) {
    TrainConfig c = cfg;
    c.mode = TrainMode::sign;
    Trainer trainer(init.clone(), c, inputs);
    return run_training(trainer);
}

TrainOutcome train_ign(const MlpNet& init, const TrainConfig& cfg, const Tensor& data) {
    TrainConfig c = cfg;
    c.mode = TrainMode::ign;
    TrainInputs in;
    in.data = &data;
    Trainer trainer(init.clone(), c, in);
    return run_training(trainer);
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace sign
