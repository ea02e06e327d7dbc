#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sign/mlp.hpp"
#include "sign/pfode.hpp"
#include "sign/rng.hpp"
#include "sign/schedule.hpp"
#include "sign/score.hpp"

namespace sign {

using diff::MlpNet;

// mean ||f(f(z)) - f(z)||_2
double idem_drift(const MlpNet& net, const Tensor& z);
// mean ||f(x) - x||_2^2
double recon_error(const MlpNet& net, const Tensor& x);

// Mean over random unit directions of the squared 1D Wasserstein-2 distance
// between the projected samples (sorted matching). Equal row counts required.
double sliced_w2(const Tensor& a, const Tensor& b, std::size_t projections, Rng& rng);
// 2 E|X-Y| - E|X-X'| - E|Y-Y'| on at most max_rows rows of each set.
double energy_distance(const Tensor& a, const Tensor& b, std::size_t max_rows = 2000);

// Mean ||s_learned - s_truth||_2 over `points`, one value per grid index.
std::vector<double> score_residual(const ScoreSource& learned, const ScoreSource& truth, const Tensor& points,
                                   std::span<const std::size_t> indices, const NoiseSchedule& sched);

// mean ||f(x_tn) - f(x_ts)||^2 at each n = 1..N (entry n-1), one teacher step apart.
std::vector<double> flow_residuals(const MlpNet& net, const ScoreSource& teacher, const Tensor& x,
                                   const NoiseSchedule& sched, Rng& rng, Stepper stepper = Stepper::euler);

// Reference points x_{t_n} on high-resolution teacher trajectories from
// x_T ~ N(0, sigma_max^2 I), at the grid times of `sched`.
struct TrajectoryReference {
    Trajectory traj;  // states from t_N down to t_0
    const Tensor& endpoint() const { return traj.endpoint(); }
};
TrajectoryReference trajectory_reference(const ScoreSource& teacher, const NoiseSchedule& sched, std::size_t count,
                                         Rng& rng, std::size_t total_substeps = 10000);

struct SupError {
    double mean_sup = 0.0;  // mean over trajectories of max_n ||f(x_tn) - x_eps||
    double max_sup = 0.0;   // max over every trajectory point
};
SupError trajectory_sup_error(const MlpNet& net, const TrajectoryReference& ref);

struct StudyRow {
    std::size_t N = 0;
    Stepper stepper = Stepper::euler;
    double sup_error = 0.0;  // mean_sup
    double max_error = 0.0;
    double flow_loss = 0.0;  // final mean flow residual
    bool flagged = false;    // flow tolerance not met
};

// Least-squares slope of log(sup_error) against log(N) over unflagged rows.
// NaN with fewer than two usable rows.
double loglog_slope(std::span<const StudyRow> rows);
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct StabilityCounts {
    std::size_t steps = 0;
    std::size_t non_finite = 0;
    // Steps where |total| exceeds factor times the running median of |total|
    // over the steps before it.
    std::size_t overshoot = 0;
    double max_abs_total = 0.0;
};
StabilityCounts stability_counts(std::span<const double> totals, double factor = 10.0);

struct EvalReport {
    double idem_drift = 0.0;
    double recon_error = 0.0;
    double sliced_w2 = 0.0;
    double sliced_w2_std = 0.0;  // spread over repeats
    double baseline_w2 = 0.0;    // data vs. data resample
    double energy_distance = 0.0;
    std::vector<double> flow_residuals;
    std::vector<StudyRow> study;

    // key=value lines.
    std::string summary() const;
    // metric,value rows; flow residuals as flow_residual_<n>.
    std::string csv() const;
};

struct EvalOptions {
    std::size_t count = 10000;
    std::size_t projections = 128;
    std::size_t repeats = 5;
};

// Single-step samples f(z), z ~ N(0, sigma_max^2 I), compared with rows of
// `data` (at least 2 * count rows are needed for the baseline; fewer are
// resampled with replacement). `teacher` may be null.
EvalReport evaluate(const MlpNet& net, const Tensor& data, const ScoreSource* teacher, const NoiseSchedule& sched,
                    const EvalOptions& opt, Rng& rng);

}  // namespace sign
