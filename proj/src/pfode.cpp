#include "sign/pfode.hpp"

#include <algorithm>

#include "sign/error.hpp"

namespace sign {

namespace {

void check_finite(const Tensor& s, std::size_t index) {
    if (!s.all_finite()) {
        throw DivergenceError("non-finite score at grid index " + std::to_string(index), index);
    }
}

// Moves row r from grid index from[r] to from[r] - 1.
Tensor advance(Stepper stepper, const Tensor& x, std::span<const std::size_t> from, const ScoreSource& src,
               const NoiseSchedule& sched) {
    const std::size_t B = x.rows();
    const std::size_t d = x.cols();
    if (from.size() != B) throw DimensionError("ode step: one grid index per row required");
    std::vector<double> t_hi(B), t_lo(B), sig_hi(B), sig_lo(B);
    for (std::size_t r = 0; r < B; ++r) {
        if (from[r] == 0 || from[r] > sched.steps()) {
            throw RangeError("ode step from grid index " + std::to_string(from[r]) + " is not in [1, " +
                             std::to_string(sched.steps()) + "]");
        }
        t_hi[r] = sched.time(from[r]);
        t_lo[r] = sched.time(from[r] - 1);
        sig_hi[r] = sched.sigma(t_hi[r]);
        sig_lo[r] = sched.sigma(t_lo[r]);
    }
    const Tensor s_hi = src.score(x, sig_hi);
    check_finite(s_hi, from.empty() ? 0 : from[0]);

    Tensor out = x;
    // drift = -sigma sigma' s; the update adds h * drift with h = t_lo - t_hi < 0.
    for (std::size_t r = 0; r < B; ++r) {
        const double h = t_lo[r] - t_hi[r];
        const double k = -sig_hi[r] * sched.sigma_dot(t_hi[r]);
        for (std::size_t c = 0; c < d; ++c) out(r, c) += h * k * s_hi(r, c);
    }
    if (stepper == Stepper::euler) return out;

    const Tensor s_lo = src.score(out, sig_lo);
    check_finite(s_lo, from.empty() ? 0 : from[0] - 1);
    Tensor heun = x;
    for (std::size_t r = 0; r < B; ++r) {
        const double h = t_lo[r] - t_hi[r];
        const double k_hi = -sig_hi[r] * sched.sigma_dot(t_hi[r]);
        const double k_lo = -sig_lo[r] * sched.sigma_dot(t_lo[r]);
        for (std::size_t c = 0; c < d; ++c) {
            heun(r, c) += 0.5 * h * (k_hi * s_hi(r, c) + k_lo * s_lo(r, c));
        }
    }
    return heun;
}

}  // namespace

const char* to_string(Stepper s) { return s == Stepper::euler ? "euler" : "heun"; }

Stepper parse_stepper(const std::string& name) {
    if (name == "euler") return Stepper::euler;
    if (name == "heun") return Stepper::heun;
    throw ConfigError("unknown ODE stepper '" + name + "'");
}

Tensor ode_step(Stepper stepper, const Tensor& x, std::size_t n, const ScoreSource& src,
                const NoiseSchedule& sched) {
    std::vector<std::size_t> from(x.rows(), n + 1);
    return advance(stepper, x, from, src, sched);
}

Tensor euler_step(const Tensor& x, std::size_t n, const ScoreSource& src, const NoiseSchedule& sched) {
    return ode_step(Stepper::euler, x, n, src, sched);
}

Tensor heun_step(const Tensor& x, std::size_t n, const ScoreSource& src, const NoiseSchedule& sched) {
    return ode_step(Stepper::heun, x, n, src, sched);
}

Tensor flow_target(const Tensor& x_noised, std::size_t n, const ScoreSource& src, const NoiseSchedule& sched,
                   Stepper stepper) {
    if (n == 0) throw RangeError("flow target needs a grid index of at least 1");
    return ode_step(stepper, x_noised, n - 1, src, sched);
}

Tensor flow_target(const Tensor& x_noised, std::span<const std::size_t> n, const ScoreSource& src,
                   const NoiseSchedule& sched, Stepper stepper) {
    return advance(stepper, x_noised, n, src, sched);
}

Trajectory solve(const Tensor& x_T, const ScoreSource& src, const NoiseSchedule& sched, Stepper stepper) {
    Trajectory traj;
    traj.indices.push_back(sched.steps());
    traj.states.push_back(x_T);
    for (std::size_t n = sched.steps(); n-- > 0;) {
        traj.states.push_back(ode_step(stepper, traj.states.back(), n, src, sched));
        traj.indices.push_back(n);
    }
    return traj;
}

Tensor solve_endpoint(const Tensor& x_T, const ScoreSource& src, const NoiseSchedule& sched, Stepper stepper) {
    Tensor x = x_T;
    for (std::size_t n = sched.steps(); n-- > 0;) x = ode_step(stepper, x, n, src, sched);
    return x;
}

Tensor integrate(const Tensor& x, double t_from, double t_to, std::size_t steps, const ScoreSource& src,
                 const NoiseSchedule& sched, Stepper stepper) {
    if (steps == 0) throw RangeError("integrate needs at least one substep");
    const std::size_t B = x.rows();
    const std::size_t d = x.cols();
    const double h = (t_to - t_from) / static_cast<double>(steps);
    Tensor cur = x;
    std::vector<double> sig(B);
    auto drift = [&](const Tensor& at, double t) {
        std::fill(sig.begin(), sig.end(), sched.sigma(t));
        Tensor s = src.score(at, sig);
        check_finite(s, 0);
        const double k = -sched.sigma(t) * sched.sigma_dot(t);
        for (double& v : s.values()) v *= k;
        return s;
    };
    for (std::size_t i = 0; i < steps; ++i) {
        const double t0 = t_from + h * static_cast<double>(i);
        const double t1 = i + 1 == steps ? t_to : t_from + h * static_cast<double>(i + 1);
        const Tensor k0 = drift(cur, t0);
        Tensor pred = cur;
        for (std::size_t j = 0; j < B * d; ++j) pred[j] += (t1 - t0) * k0[j];
        if (stepper == Stepper::euler) {
            cur = std::move(pred);
            continue;
        }
        const Tensor k1 = drift(pred, t1);
        for (std::size_t j = 0; j < B * d; ++j) cur[j] += 0.5 * (t1 - t0) * (k0[j] + k1[j]);
    }
    return cur;
}

Trajectory reference_solve(const Tensor& x_T, const ScoreSource& src, const NoiseSchedule& sched,
                           std::size_t substeps) {
    Trajectory traj;
    traj.indices.push_back(sched.steps());
    traj.states.push_back(x_T);
    for (std::size_t n = sched.steps(); n-- > 0;) {
        traj.states.push_back(
            integrate(traj.states.back(), sched.time(n + 1), sched.time(n), substeps, src, sched, Stepper::heun));
        traj.indices.push_back(n);
    }
    return traj;
}

}  // namespace sign
