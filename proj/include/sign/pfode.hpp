#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sign/schedule.hpp"
#include "sign/score.hpp"

namespace sign {

enum class Stepper { euler, heun };

const char* to_string(Stepper s);
Stepper parse_stepper(const std::string& name);

// States of a batch of PF-ODE solves, ordered from grid index N down to 0.
struct Trajectory {
    std::vector<std::size_t> indices;
    std::vector<Tensor> states;  // each [B, d]

    const Tensor& endpoint() const { return states.back(); }
};

// Euler update of dx/dt = -sigma(t) sigma'(t) s(x, sigma(t)) from grid index
// n+1 down to n:
//   x_n = x_{n+1} + (t_n - t_{n+1}) * (-sigma(t_{n+1}) sigma'(t_{n+1}) s(x_{n+1}, n+1)).
// Throws DivergenceError carrying n+1 if the score is not finite.
Tensor euler_step(const Tensor& x, std::size_t n, const ScoreSource& src, const NoiseSchedule& sched);

// Heun (trapezoidal predictor-corrector) update between the same grid points.
Tensor heun_step(const Tensor& x, std::size_t n, const ScoreSource& src, const NoiseSchedule& sched);

Tensor ode_step(Stepper stepper, const Tensor& x, std::size_t n, const ScoreSource& src,
                const NoiseSchedule& sched);

// One step from index n down to n - 1 (n >= 1, RangeError otherwise).
Tensor flow_target(const Tensor& x_noised, std::size_t n, const ScoreSource& src, const NoiseSchedule& sched,
                   Stepper stepper = Stepper::euler);
// Per-row source indices; rows move from n[r] to n[r] - 1.
Tensor flow_target(const Tensor& x_noised, std::span<const std::size_t> n, const ScoreSource& src,
                   const NoiseSchedule& sched, Stepper stepper = Stepper::euler);

Trajectory solve(const Tensor& x_T, const ScoreSource& src, const NoiseSchedule& sched,
                 Stepper stepper = Stepper::euler);

// Endpoint only, without keeping intermediate states.
Tensor solve_endpoint(const Tensor& x_T, const ScoreSource& src, const NoiseSchedule& sched,
                      Stepper stepper = Stepper::euler);

// Integrates the PF-ODE from time t_from down to t_to with `steps` uniform
// substeps in t. Used for high-resolution reference solutions.
Tensor integrate(const Tensor& x, double t_from, double t_to, std::size_t steps, const ScoreSource& src,
                 const NoiseSchedule& sched, Stepper stepper = Stepper::heun);

// States at every grid time t_N..t_0 of `sched`, each interval refined into
// `substeps` Heun substeps. Ordered like solve().
Trajectory reference_solve(const Tensor& x_T, const ScoreSource& src, const NoiseSchedule& sched,
                           std::size_t substeps);

}  // namespace sign
