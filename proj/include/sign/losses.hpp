#pragma once

#include <span>
#include <string>
#include <vector>

#include "sign/autodiff.hpp"
#include "sign/mlp.hpp"
#include "sign/pfode.hpp"
#include "sign/schedule.hpp"
#include "sign/score.hpp"

namespace sign {

using diff::FrozenView;
using diff::MlpNet;
using diff::Var;

// D(a, b): squared Euclidean (default) or plain Euclidean distance per row.
enum class Distance { sq_l2, l2 };
// Composition order of the idempotence term:
//   eq4:  D(f(z), f'(f(z)))  gradient through the inner application
//   alg1: D(f'(z), f(f'(z))) gradient through the outer application
enum class IdemOrder { eq4, alg1 };

const char* to_string(Distance d);
Distance parse_distance(const std::string& name);
const char* to_string(IdemOrder o);
IdemOrder parse_idem_order(const std::string& name);

struct LossWeights {
    double lambda_f = 1.0;  // flow
    double lambda_d = 0.0;  // dmd
    double lambda_r = 0.0;  // regression on teacher pairs
    double lambda_n = 0.0;  // denoising
    double lambda_t = 1.0;  // IGN tightness
    double lambda_i = 1.0;  // IGN idempotence

    // Throws ConfigError unless every weight is finite and >= 0.
    void validate() const;
};

struct LossOptions {
    Distance distance = Distance::sq_l2;
    IdemOrder idem_order = IdemOrder::eq4;
    // > 0 replaces the tightness term by -a tanh(D / a), which keeps it bounded.
    double tight_clamp = 0.0;
    Stepper flow_stepper = Stepper::euler;
};

struct LossReport {
    double recon = 0.0;
    double idem = 0.0;
    double tight = 0.0;
    double flow = 0.0;
    double dmd_surrogate = 0.0;
    double denoise = 0.0;
    double reg = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;
};

// Teacher-solved (z_i, y_i) pairs for the regression term.
struct PairStore {
    Tensor z;  // [P, d]
    Tensor y;  // [P, d]

    std::size_t size() const { return z.size() == 0 ? 0 : z.rows(); }
    bool empty() const { return size() == 0; }
};

// Per-row distance [B].
Var distance_rows(Distance d, const Var& a, const Var& b);
// Mean over rows of the distance.
Var mean_distance(Distance d, const Var& a, const Var& b);

Var recon_loss(const MlpNet& net, const Tensor& x, Distance d = Distance::sq_l2);
Var idem_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& z, Distance d = Distance::sq_l2,
              IdemOrder order = IdemOrder::eq4);
Var tight_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& z, Distance d = Distance::sq_l2,
               double clamp = 0.0);

// Flow term on explicit endpoints: mean D(f(x_tn), f'(x_ts)).
Var flow_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& x_tn, const Tensor& x_ts,
              Distance d = Distance::sq_l2);
// Noises x to per-row indices n, steps once along the teacher flow and
// compares the two generator outputs.
Var flow_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& x, std::span<const std::size_t> n,
              const ScoreSource& src, const NoiseSchedule& sched, Rng& rng, Distance d = Distance::sq_l2,
              Stepper stepper = Stepper::euler);

// Pseudo-gradient g = s_learned(y_n) - s_teacher(y_n) at y_n = f(z) + sigma_n e.
struct DmdDirection {
    Tensor g;  // [B, d]
    Tensor generated;
};
DmdDirection dmd_direction(const MlpNet& net, const Tensor& z, std::span<const std::size_t> n,
                           const ScoreSource& learned, const ScoreSource& teacher, const NoiseSchedule& sched,
                           Rng& rng);
// Surrogate mean_b <g_b, f(z_b)> with g held constant. Its parameter gradient
// is the injected pseudo-gradient mean_b g_b . df(z_b)/dtheta.
Var dmd_surrogate(const MlpNet& net, const Tensor& z, const Tensor& g);
Var dmd_grad(const MlpNet& net, const Tensor& z, std::span<const std::size_t> n, const ScoreSource& learned,
             const ScoreSource& teacher, const NoiseSchedule& sched, Rng& rng);

// mean D(x, f(x + sigma_n e)).
Var denoise_loss(const MlpNet& net, const Tensor& x, const Tensor& noised, Distance d = Distance::sq_l2);
Var denoise_loss(const MlpNet& net, const Tensor& x, std::span<const std::size_t> n, const NoiseSchedule& sched,
                 Rng& rng, Distance d = Distance::sq_l2);

// mean D(f(z_i), y_i) over the selected pairs. ConfigError on an empty store.
Var reg_loss(const MlpNet& net, const PairStore& pairs, std::span<const std::size_t> rows,
             Distance d = Distance::sq_l2);
Var reg_loss(const MlpNet& net, const PairStore& pairs, std::size_t batch, Rng& rng,
             Distance d = Distance::sq_l2);

struct SignSources {
    const ScoreSource* teacher = nullptr;  // needed when lambda_f > 0 or lambda_d > 0
    const ScoreSource* learned = nullptr;  // needed when lambda_d > 0
    const PairStore* pairs = nullptr;      // needed when lambda_r > 0
};

struct LossResult {
    Var objective;  // differentiate this; includes the dmd surrogate
    LossReport report;
};

// recon + idem + lambda_f flow + lambda_d dmd + lambda_r reg + lambda_n denoise.
// Grid indices are drawn per row from {1..N}. report.total sums the scalar
// terms; the dmd surrogate only carries gradient and stays out of it.
LossResult sign_total(const MlpNet& net, const FrozenView& frozen, const Tensor& x, const Tensor& z,
                      const LossWeights& w, const LossOptions& opt, const SignSources& sources,
                      const NoiseSchedule& sched, Rng& rng);

// recon + lambda_i idem + lambda_t tight.
LossResult ign_total(const MlpNet& net, const FrozenView& frozen, const Tensor& x, const Tensor& z,
                     const LossWeights& w, const LossOptions& opt);

// Rescales the active SIGN weights so each weighted term matches a reference
// magnitude: L_recon, or the largest active term when recon is ~0. Weights stay in [0, 1].
LossWeights auto_balance(const LossWeights& w, const LossReport& calibration);

// Uniform grid indices in {lo..hi}, one per row.
std::vector<std::size_t> draw_indices(std::size_t rows, std::size_t lo, std::size_t hi, Rng& rng);

}  // namespace sign
