#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sign/losses.hpp"
#include "sign/mlp.hpp"
#include "sign/schedule.hpp"
#include "sign/score.hpp"

namespace sign {

enum class TrainMode { sign, ign };
enum class FreezeMode { copy, ema };

const char* to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& name);
const char* to_string(FreezeMode m);
FreezeMode parse_freeze_mode(const std::string& name);

struct TrainConfig {
    TrainMode mode = TrainMode::sign;
    std::size_t steps = 20000;
    std::size_t batch = 256;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool cosine_decay = true;
    FreezeMode freeze = FreezeMode::copy;
    double ema_decay = 0.999;
    // Gradients are clipped at grad_clip times the first step's norm; 0 disables.
    double grad_clip = 100.0;
    bool auto_balance = false;
    LossWeights weights;
    LossOptions options;
    // Learned (fake) score for the dmd term.
    std::size_t dmd_score_steps = 5;
    double dmd_score_lr = 1e-3;
    std::vector<std::size_t> dmd_score_hidden = {128, 128};
    double sigma_data = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricsRow {
    std::size_t step = 0;
    LossReport report;
    double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,l_recon,l_idem,l_tight,l_flow,l_dmd_surrogate,l_denoise,l_reg,total,grad_norm,wall_ms";
std::string metrics_line(const MetricsRow& row);

// Serialized training state. Layout (little-endian):
//   "SGNCKPT1" | version u32 | arch len u32 + text | step u64 | seed u64 |
//   rng len u32 + text | params u64 count + f64... | config hash u64 |
//   initial grad norm f64 | adam step u64 | adam m, v | frozen params |
//   weights | score flag u8 [+ score arch, params, adam step, m, v]
// Every array is a u64 count followed by f64 values.
struct Checkpoint {
    std::uint32_t version = 1;
    std::string arch;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::string rng_state;
    std::vector<double> params;
    std::uint64_t config_hash = 0;
    double initial_grad_norm = 0.0;
    std::uint64_t adam_step = 0;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::vector<double> frozen;
    std::vector<double> weights;
    bool has_score = false;
    std::string score_arch;
    std::vector<double> score_params;
    std::uint64_t score_adam_step = 0;
    std::vector<double> score_m;
    std::vector<double> score_v;
};

inline constexpr char kCheckpointMagic[9] = "SGNCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
// FormatError (with byte offset) on bad magic, unknown version or truncation.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Generator checkpoint helpers. load_net throws ConfigError when the stored
// architecture differs from `expected` (if given).
Checkpoint net_checkpoint(const MlpNet& net, std::uint64_t step = 0, std::uint64_t seed = 0);
MlpNet load_net(const Checkpoint& ck);
void check_arch(const Checkpoint& ck, const diff::MlpArch& expected);

// Standalone score network checkpoint ("score sd=<sigma_data> <mlp descriptor>").
Checkpoint score_checkpoint(const ScoreNet& net, std::uint64_t updates, std::uint64_t seed);
ScoreNet load_score_net(const Checkpoint& ck);

inline constexpr char kPairMagic[9] = "SGNPAIR1";
// "SGNPAIR1" | count u64 | d u32 | (z_i f64[d], y_i f64[d]) per pair.
std::vector<std::uint8_t> encode_pairs(const PairStore& pairs);
PairStore decode_pairs(std::span<const std::uint8_t> bytes);
void save_pairs(const std::string& path, const PairStore& pairs);
PairStore load_pairs(const std::string& path);

struct PairGeneration {
    PairStore store;
    std::size_t failures = 0;
};
// z_i ~ N(0, sigma_max^2 I), y_i = teacher PF-ODE endpoint. Pairs whose solve
// fails are left out and counted.
PairGeneration pregenerate_pairs(const ScoreSource& teacher, const NoiseSchedule& sched, std::size_t count,
                                 Rng& rng, Stepper stepper = Stepper::euler);

struct TrainInputs {
    const Tensor* data = nullptr;          // [M, d]
    const ScoreSource* teacher = nullptr;  // flow / dmd / pair teacher
    const PairStore* pairs = nullptr;
    NoiseSchedule sched;
};

// Training loop shared by SIGN and the IGN baseline.
class Trainer {
public:
    Trainer(MlpNet net, TrainConfig cfg, TrainInputs inputs, std::uint64_t config_hash = 0);

    // One optimization step. Throws DivergenceError (index = step) when the
    // loss or its gradient is not finite; the net is left at the previous step.
    MetricsRow step();

    const MlpNet& net() const { return net_; }
    MlpNet& net() { return net_; }
    const FrozenView& frozen() const { return frozen_; }
    const TrainConfig& config() const { return cfg_; }
    const LossWeights& weights() const { return weights_; }
    std::size_t steps_done() const { return step_; }
    const std::shared_ptr<LearnedScore>& learned() const { return learned_; }
    Rng& rng() { return rng_; }
    double learning_rate() const;

    Checkpoint checkpoint() const;
    // Restores a checkpoint produced by the same configuration. ConfigError on
    // architecture or configuration-hash mismatch.
    void restore(const Checkpoint& ck);

private:
    void refresh_frozen();
    void update_learned_score();

    MlpNet net_;
    FrozenView frozen_;
    TrainConfig cfg_;
    TrainInputs in_;
    LossWeights weights_;
    diff::AdamState adam_;
    Rng rng_;
    std::shared_ptr<LearnedScore> learned_;
    std::uint64_t config_hash_;
    std::size_t step_ = 0;
    double initial_grad_norm_ = 0.0;
    bool balanced_ = false;
};

struct TrainOutcome {
    MlpNet net;
    std::vector<MetricsRow> history;
    bool diverged = false;
    std::size_t divergence_step = 0;
    std::string divergence_message;
};

using StepCallback = std::function<void(const Trainer&, const MetricsRow&)>;

// Runs the trainer until cfg.steps steps are done. Divergence ends the run
// and is reported in the outcome rather than thrown.
TrainOutcome run_training(Trainer& trainer, const StepCallback& on_step = {});

TrainOutcome train_sign(const MlpNet& init, const TrainConfig& cfg, const TrainInputs& inputs);
TrainOutcome train_ign(const MlpNet& init, const TrainConfig& cfg, const Tensor& data);

// FNV-1a 64-bit.
std::uint64_t fnv1a(const std::string& text);

}  // namespace sign
