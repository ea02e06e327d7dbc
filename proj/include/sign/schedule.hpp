#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sign/rng.hpp"
#include "sign/tensor.hpp"

namespace sign {

enum class ScheduleKind { identity, linear };

const char* to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

// Noise level sigma(t) over [eps, T] and its warped discretization
//   t_i = (eps^(1/rho) + i/N (T^(1/rho) - eps^(1/rho)))^rho,  i = 0..N.
// identity: sigma(t) = t. linear: sigma rises affinely from sigma_min at eps
// to sigma_max at T.
class NoiseSchedule {
public:
    struct Params {
        ScheduleKind kind = ScheduleKind::identity;
        double sigma_min = 0.002;  // linear kind only; identity uses sigma(eps) = eps
        double sigma_max = 1.0;    // linear kind only; identity uses sigma(T) = T
        double eps = 0.002;
        double T = 1.0;
        std::size_t N = 18;
        double rho = 7.0;
    };

    NoiseSchedule() : NoiseSchedule(Params{}) {}
    explicit NoiseSchedule(Params params);

    const Params& params() const { return params_; }
    ScheduleKind kind() const { return params_.kind; }
    std::size_t steps() const { return params_.N; }

    double sigma(double t) const;
    double sigma_dot(double t) const;

    const std::vector<double>& grid() const { return grid_; }
    double time(std::size_t n) const;
    double sigma_at(std::size_t n) const { return sigma(time(n)); }
    double sigma_max() const { return sigma(params_.T); }
    double sigma_min() const { return sigma(params_.eps); }

    // Same schedule with a different number of grid intervals.
    NoiseSchedule with_steps(std::size_t n) const;

private:
    Params params_;
    std::vector<double> grid_;
};

// x + sigma(t_n) * e with e ~ N(0, I).
diff::Tensor noise(const NoiseSchedule& sched, const diff::Tensor& x, std::size_t n, Rng& rng);
// Per-row grid indices.
diff::Tensor noise(const NoiseSchedule& sched, const diff::Tensor& x, std::span<const std::size_t> n,
                   Rng& rng);

// Standard normal draws of the given shape, scaled by `scale`.
diff::Tensor gaussian(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0);

}  // namespace sign
