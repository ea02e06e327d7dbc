#include "sign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>

#include "sign/data.hpp"
#include "sign/error.hpp"

namespace sign {

namespace {

double row_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double mean_pairwise(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) s += row_distance(a.row(i), b.row(j));
    }
    return s / static_cast<double>(a.rows() * b.rows());
}

Tensor head(const Tensor& x, std::size_t n) {
    if (x.rows() <= n) return x;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return diff::gather_rows(x, idx);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.integer(0, i - 1)]);
    return p;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double idem_drift(const MlpNet& net, const Tensor& z) {
    const Tensor y = net.forward(z);
    const Tensor yy = net.forward(y);
    double s = 0.0;
    for (std::size_t r = 0; r < y.rows(); ++r) s += row_distance(yy.row(r), y.row(r));
    return s / static_cast<double>(y.rows());
}

double recon_error(const MlpNet& net, const Tensor& x) {
    const Tensor y = net.forward(x);
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double d = row_distance(y.row(r), x.row(r));
        s += d * d;
    }
    return s / static_cast<double>(x.rows());
}

double sliced_w2(const Tensor& a, const Tensor& b, std::size_t projections, Rng& rng) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("sliced_w2 needs equal sample counts and widths");
    }
    if (projections == 0) throw ConfigError("sliced_w2 needs at least one projection");
    const std::size_t M = a.rows();
    const std::size_t d = a.cols();
    std::vector<double> dir(d), pa(M), pb(M);
    double total = 0.0;
    for (std::size_t p = 0; p < projections; ++p) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : dir) v /= norm;
        for (std::size_t r = 0; r < M; ++r) {
            double sa = 0.0, sb = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                sa += a(r, c) * dir[c];
                sb += b(r, c) * dir[c];
            }
            pa[r] = sa;
            pb[r] = sb;
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double s = 0.0;
        for (std::size_t r = 0; r < M; ++r) s += (pa[r] - pb[r]) * (pa[r] - pb[r]);
        total += s / static_cast<double>(M);
    }
    return total / static_cast<double>(projections);
}

double energy_distance(const Tensor& a, const Tensor& b, std::size_t max_rows) {
    if (a.cols() != b.cols()) throw DimensionError("energy_distance needs equal widths");
    const Tensor x = head(a, max_rows);
    const Tensor y = head(b, max_rows);
    const double e = 2.0 * mean_pairwise(x, y) - mean_pairwise(x, x) - mean_pairwise(y, y);
    return std::max(0.0, e);
}

std::vector<double> score_residual(const ScoreSource& learned, const ScoreSource& truth, const Tensor& points,
                                   std::span<const std::size_t> indices, const NoiseSchedule& sched) {
    std::vector<double> out;
    for (std::size_t n : indices) {
        const Tensor a = learned.evaluate(points, n, sched);
        const Tensor b = truth.evaluate(points, n, sched);
        double s = 0.0;
        for (std::size_t r = 0; r < points.rows(); ++r) s += row_distance(a.row(r), b.row(r));
        out.push_back(s / static_cast<double>(points.rows()));
    }
    return out;
}

std::vector<double> flow_residuals(const MlpNet& net, const ScoreSource& teacher, const Tensor& x,
                                   const NoiseSchedule& sched, Rng& rng, Stepper stepper) {
    std::vector<double> out;
    for (std::size_t n = 1; n <= sched.steps(); ++n) {
        const Tensor x_tn = noise(sched, x, n, rng);
        const Tensor x_ts = flow_target(x_tn, n, teacher, sched, stepper);
        const Tensor a = net.forward(x_tn);
        const Tensor b = net.forward(x_ts);
        double s = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double d = row_distance(a.row(r), b.row(r));
            s += d * d;
        }
        out.push_back(s / static_cast<double>(x.rows()));
    }
    return out;
}

TrajectoryReference trajectory_reference(const ScoreSource& teacher, const NoiseSchedule& sched, std::size_t count,
                                         Rng& rng, std::size_t total_substeps) {
    const std::size_t per = std::max<std::size_t>(1, (total_substeps + sched.steps() - 1) / sched.steps());
    const Tensor x_T = gaussian({count, teacher.dim()}, rng, sched.sigma_max());
    return {reference_solve(x_T, teacher, sched, per)};
}

SupError trajectory_sup_error(const MlpNet& net, const TrajectoryReference& ref) {
    const Tensor& end = ref.endpoint();
    const std::size_t B = end.rows();
    std::vector<double> sup(B, 0.0);
    for (const Tensor& pts : ref.traj.states) {
        const Tensor f = net.forward(pts);
        for (std::size_t r = 0; r < B; ++r) sup[r] = std::max(sup[r], row_distance(f.row(r), end.row(r)));
    }
    SupError e;
    for (double s : sup) {
        e.mean_sup += s;
        e.max_sup = std::max(e.max_sup, s);
    }
    e.mean_sup /= static_cast<double>(B);
    return e;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

double loglog_slope(std::span<const StudyRow> rows) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
        if (r.flagged || !(r.sup_error > 0.0)) continue;
        x.push_back(static_cast<double>(r.N));
        y.push_back(r.sup_error);
    }
    return loglog_slope(x, y);
}

StabilityCounts stability_counts(std::span<const double> totals, double factor) {
    StabilityCounts c;
    // lower half in a max-heap, upper half in a min-heap
    std::priority_queue<double> lo;
    std::priority_queue<double, std::vector<double>, std::greater<>> hi;
    for (double t : totals) {
        ++c.steps;
        if (!std::isfinite(t)) {
            ++c.non_finite;
            continue;
        }
        const double a = std::abs(t);
        c.max_abs_total = std::max(c.max_abs_total, a);
        if (!lo.empty()) {
            const double median = lo.size() > hi.size() ? lo.top() : 0.5 * (lo.top() + hi.top());
            if (a > factor * median) ++c.overshoot;
        }
        if (lo.empty() || a <= lo.top()) {
            lo.push(a);
        } else {
            hi.push(a);
        }
        if (lo.size() > hi.size() + 1) {
            hi.push(lo.top());
            lo.pop();
        } else if (hi.size() > lo.size()) {
            lo.push(hi.top());
            hi.pop();
        }
    }
    return c;
}

std::string EvalReport::summary() const {
    std::string s;
    s += "idem_drift=" + fmt(idem_drift) + "\n";
    s += "recon_error=" + fmt(recon_error) + "\n";
    s += "sliced_w2=" + fmt(sliced_w2) + "\n";
    s += "sliced_w2_std=" + fmt(sliced_w2_std) + "\n";
    s += "baseline_w2=" + fmt(baseline_w2) + "\n";
    s += "sliced_w2_ratio=" + fmt(baseline_w2 > 0.0 ? sliced_w2 / baseline_w2 : 0.0) + "\n";
    s += "energy_distance=" + fmt(energy_distance) + "\n";
    double worst = 0.0;
    for (double v : flow_residuals) worst = std::max(worst, v);
    if (!flow_residuals.empty()) s += "flow_residual_max=" + fmt(worst) + "\n";
    return s;
}

std::string EvalReport::csv() const {
    std::string s = "metric,value\n";
    const std::pair<const char*, double> rows[] = {
        {"idem_drift", idem_drift},   {"recon_error", recon_error},         {"sliced_w2", sliced_w2},
        {"sliced_w2_std", sliced_w2_std}, {"baseline_w2", baseline_w2}, {"energy_distance", energy_distance}};
    for (const auto& [k, v] : rows) s += std::string(k) + "," + fmt(v) + "\n";
    for (std::size_t n = 0; n < flow_residuals.size(); ++n) {
        s += "flow_residual_" + std::to_string(n + 1) + "," + fmt(flow_residuals[n]) + "\n";
    }
    return s;
}

EvalReport evaluate(const MlpNet& net, const Tensor& data, const ScoreSource* teacher, const NoiseSchedule& sched,
                    const EvalOptions& opt, Rng& rng) {
    if (opt.count == 0) throw ConfigError("eval.count must be at least 1");
    EvalReport rep;
    const std::size_t M = opt.count;
    const std::size_t d = net.dim();
    // Each repeat draws fresh generator samples and a fresh disjoint pair of
    // data halves, so both the ratio's numerator and baseline get averaged.
    const std::size_t R = std::max<std::size_t>(1, opt.repeats);
    std::vector<double> sw(R), base(R);
    Tensor ref_a, ref_b, samples, z;
    for (std::size_t k = 0; k < R; ++k) {
        if (data.rows() >= 2 * M) {
            const auto p = permutation(data.rows(), rng);
            ref_a = diff::gather_rows(data, std::span<const std::size_t>(p.data(), M));
            ref_b = diff::gather_rows(data, std::span<const std::size_t>(p.data() + M, M));
        } else {
            ref_a = sample_rows(data, M, rng);
            ref_b = sample_rows(data, M, rng);
        }
        z = gaussian({M, d}, rng, sched.sigma_max());
        samples = net.forward(z);
        if (k == 0) {
            rep.idem_drift = idem_drift(net, z);
            rep.recon_error = recon_error(net, ref_a);
            rep.energy_distance = energy_distance(samples, ref_a);
        }
        sw[k] = sliced_w2(samples, ref_a, opt.projections, rng);
        base[k] = sliced_w2(ref_b, ref_a, opt.projections, rng);
    }
    for (std::size_t k = 0; k < R; ++k) {
        rep.sliced_w2 += sw[k] / static_cast<double>(R);
        rep.baseline_w2 += base[k] / static_cast<double>(R);
    }
    for (double v : sw) rep.sliced_w2_std += (v - rep.sliced_w2) * (v - rep.sliced_w2);
    rep.sliced_w2_std = R > 1 ? std::sqrt(rep.sliced_w2_std / static_cast<double>(R - 1)) : 0.0;
    if (teacher) {
        const Tensor x = head(ref_a, std::min<std::size_t>(M, 2000));
        rep.flow_residuals = flow_residuals(net, *teacher, x, sched, rng);
    }
    return rep;
}

}  // namespace sign
