#include "sign/schedule.hpp"

#include <cmath>

#include "sign/error.hpp"

namespace sign {

const char* to_string(ScheduleKind kind) {
    return kind == ScheduleKind::identity ? "identity" : "linear";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "identity") return ScheduleKind::identity;
    if (name == "linear") return ScheduleKind::linear;
    throw ConfigError("unknown schedule.kind '" + name + "'");
}

NoiseSchedule::NoiseSchedule(Params params) : params_(params) {
    const auto& p = params_;
    if (!(p.eps > 0.0) || !(p.T > p.eps)) {
        throw ConfigError("schedule needs 0 < eps < T (eps=" + std::to_string(p.eps) +
                          ", T=" + std::to_string(p.T) + ")");
    }
    if (p.N < 1) throw ConfigError("schedule.N must be at least 1");
    if (!(p.rho > 0.0)) throw ConfigError("schedule.rho must be positive");
    if (p.kind == ScheduleKind::linear && !(p.sigma_max > p.sigma_min && p.sigma_min >= 0.0)) {
        throw ConfigError("linear schedule needs 0 <= sigma_min < sigma_max");
    }
    const double lo = std::pow(p.eps, 1.0 / p.rho);
    const double hi = std::pow(p.T, 1.0 / p.rho);
    grid_.resize(p.N + 1);
    for (std::size_t i = 0; i <= p.N; ++i) {
        grid_[i] = std::pow(lo + double(i) / double(p.N) * (hi - lo), p.rho);
    }
    grid_.front() = p.eps;
    grid_.back() = p.T;
}

double NoiseSchedule::sigma(double t) const {
    const auto& p = params_;
    if (!(t >= p.eps && t <= p.T)) {
        throw RangeError("time " + std::to_string(t) + " outside [" + std::to_string(p.eps) + ", " +
                         std::to_string(p.T) + "]");
    }
    if (p.kind == ScheduleKind::identity) return t;
    return p.sigma_min + (p.sigma_max - p.sigma_min) * (t - p.eps) / (p.T - p.eps);
}

double NoiseSchedule::sigma_dot(double t) const {
    sigma(t);  // range check
    const auto& p = params_;
    if (p.kind == ScheduleKind::identity) return 1.0;
    return (p.sigma_max - p.sigma_min) / (p.T - p.eps);
}

double NoiseSchedule::time(std::size_t n) const {
    if (n > params_.N) {
        throw RangeError("grid index " + std::to_string(n) + " outside [0, " + std::to_string(params_.N) + "]");
    }
    return grid_[n];
}

NoiseSchedule NoiseSchedule::with_steps(std::size_t n) const {
    Params p = params_;
    p.N = n;
    return NoiseSchedule(p);
}

diff::Tensor gaussian(std::vector<std::size_t> shape, Rng& rng, double scale) {
    diff::Tensor out(std::move(shape));
    for (double& v : out.values()) v = scale * rng.normal();
    return out;
}

diff::Tensor noise(const NoiseSchedule& sched, const diff::Tensor& x, std::size_t n, Rng& rng) {
    const double s = sched.sigma_at(n);
    diff::Tensor out = x;
    for (double& v : out.values()) v += s * rng.normal();
    return out;
}

diff::Tensor noise(const NoiseSchedule& sched, const diff::Tensor& x, std::span<const std::size_t> n,
                   Rng& rng) {
    if (n.size() != x.rows()) throw DimensionError("noise: one grid index per row required");
    diff::Tensor out = x;
    const std::size_t d = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double s = sched.sigma_at(n[r]);
        for (std::size_t c = 0; c < d; ++c) out(r, c) += s * rng.normal();
    }
    return out;
}

}  // namespace sign
