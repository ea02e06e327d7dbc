#include "sign/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sign/error.hpp"

namespace sign {

using diff::constant;

namespace {

constexpr double kL2Offset = 1e-6;  // sqrt of the autodiff sqrt floor

Var input(const Tensor& t) { return constant(t); }

double value(const Var& v) { return v.value().item(); }

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace

const char* to_string(Distance d) { return d == Distance::sq_l2 ? "sq_l2" : "l2"; }

Distance parse_distance(const std::string& name) {
    if (name == "sq_l2") return Distance::sq_l2;
    if (name == "l2") return Distance::l2;
    throw ConfigError("unknown distance '" + name + "'");
}

const char* to_string(IdemOrder o) { return o == IdemOrder::eq4 ? "eq4" : "alg1"; }

IdemOrder parse_idem_order(const std::string& name) {
    if (name == "eq4") return IdemOrder::eq4;
    if (name == "alg1") return IdemOrder::alg1;
    throw ConfigError("unknown idempotence order '" + name + "'");
}

void LossWeights::validate() const {
    const std::pair<const char*, double> all[] = {{"lambda_f", lambda_f}, {"lambda_d", lambda_d},
                                                  {"lambda_r", lambda_r}, {"lambda_n", lambda_n},
                                                  {"lambda_t", lambda_t}, {"lambda_i", lambda_i}};
    for (const auto& [name, v] : all) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ConfigError(std::string("loss.") + name + " must be finite and >= 0");
        }
    }
}

Var distance_rows(Distance d, const Var& a, const Var& b) {
    Var sq = diff::squared_norm_rows(diff::sub(a, b));
    if (d == Distance::sq_l2) return sq;
    Var root = diff::apply(diff::Nonlinearity::sqrt, sq);
    return diff::add(root, constant(Tensor(root.value().shape(), -kL2Offset)));
}

Var mean_distance(Distance d, const Var& a, const Var& b) { return diff::mean(distance_rows(d, a, b)); }

Var recon_loss(const MlpNet& net, const Tensor& x, Distance d) {
    Var xv = input(x);
    return mean_distance(d, xv, net.forward(xv));
}

Var idem_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& z, Distance d, IdemOrder order) {
    Var zv = input(z);
    if (order == IdemOrder::eq4) {
        Var y = net.forward(zv);
        return mean_distance(d, y, frozen.forward(y));
    }
    Var u = constant(frozen.forward(z));
    return mean_distance(d, u, net.forward(u));
}

Var tight_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& z, Distance d, double clamp) {
    Var u = constant(frozen.forward(z));
    Var dist = distance_rows(d, net.forward(u), u);
    if (clamp > 0.0) {
        dist = diff::scale(diff::apply(diff::Nonlinearity::tanh, diff::scale(dist, 1.0 / clamp)), clamp);
    }
    return diff::scale(diff::mean(dist), -1.0);
}

Var flow_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& x_tn, const Tensor& x_ts, Distance d) {
    return mean_distance(d, net.forward(input(x_tn)), frozen.forward(input(x_ts)));
}

Var flow_loss(const MlpNet& net, const FrozenView& frozen, const Tensor& x, std::span<const std::size_t> n,
              const ScoreSource& src, const NoiseSchedule& sched, Rng& rng, Distance d, Stepper stepper) {
    const Tensor x_tn = noise(sched, x, n, rng);
    const Tensor x_ts = flow_target(x_tn, n, src, sched, stepper);
    return flow_loss(net, frozen, x_tn, x_ts, d);
}

DmdDirection dmd_direction(const MlpNet& net, const Tensor& z, std::span<const std::size_t> n,
                           const ScoreSource& learned, const ScoreSource& teacher, const NoiseSchedule& sched,
                           Rng& rng) {
    for (std::size_t k : n) {
        if (k == 0) throw RangeError("dmd noise index must be at least 1");
    }
    DmdDirection out;
    out.generated = net.forward(z);
    const Tensor y = noise(sched, out.generated, n, rng);
    std::vector<double> sig(n.size());
    for (std::size_t r = 0; r < n.size(); ++r) sig[r] = sched.sigma_at(n[r]);
    out.g = learned.score(y, sig);
    if (&learned != &teacher) {
        const Tensor s_real = teacher.score(y, sig);
        for (std::size_t i = 0; i < out.g.size(); ++i) out.g[i] -= s_real[i];
    } else {
        out.g = Tensor::zeros_like(out.g);
    }
    if (!out.g.all_finite()) throw DivergenceError("non-finite dmd direction", 0);
    return out;
}

Var dmd_surrogate(const MlpNet& net, const Tensor& z, const Tensor& g) {
    Var f = net.forward(input(z));
    return diff::mean(diff::sum_rows(diff::mul(constant(g), f)));
}

Var dmd_grad(const MlpNet& net, const Tensor& z, std::span<const std::size_t> n, const ScoreSource& learned,
             const ScoreSource& teacher, const NoiseSchedule& sched, Rng& rng) {
    const DmdDirection dir = dmd_direction(net, z, n, learned, teacher, sched, rng);
    return dmd_surrogate(net, z, dir.g);
}

Var denoise_loss(const MlpNet& net, const Tensor& x, const Tensor& noised, Distance d) {
    return mean_distance(d, input(x), net.forward(input(noised)));
}

Var denoise_loss(const MlpNet& net, const Tensor& x, std::span<const std::size_t> n, const NoiseSchedule& sched,
                 Rng& rng, Distance d) {
    return denoise_loss(net, x, noise(sched, x, n, rng), d);
}

Var reg_loss(const MlpNet& net, const PairStore& pairs, std::span<const std::size_t> rows, Distance d) {
    if (pairs.empty()) throw ConfigError("regression term needs a non-empty pair store");
    const Tensor z = diff::gather_rows(pairs.z, rows);
    const Tensor y = diff::gather_rows(pairs.y, rows);
    return mean_distance(d, net.forward(input(z)), input(y));
}

Var reg_loss(const MlpNet& net, const PairStore& pairs, std::size_t batch, Rng& rng, Distance d) {
    if (pairs.empty()) throw ConfigError("regression term needs a non-empty pair store");
    const auto rows = draw_indices(batch, 0, pairs.size() - 1, rng);
    return reg_loss(net, pairs, rows, d);
}

std::vector<std::size_t> draw_indices(std::size_t rows, std::size_t lo, std::size_t hi, Rng& rng) {
    std::vector<std::size_t> out(rows);
    for (auto& k : out) k = rng.integer(lo, hi);
    return out;
}

LossResult sign_total(const MlpNet& net, const FrozenView& frozen, const Tensor& x, const Tensor& z,
                      const LossWeights& w, const LossOptions& opt, const SignSources& sources,
                      const NoiseSchedule& sched, Rng& rng) {
    LossResult res;
    LossReport& rep = res.report;
    const Distance D = opt.distance;

    Var recon = recon_loss(net, x, D);
    Var idem = idem_loss(net, frozen, z, D, opt.idem_order);
    rep.recon = value(recon);
    rep.idem = value(idem);
    Var objective = diff::add(recon, idem);

    if (w.lambda_f > 0.0 || w.lambda_n > 0.0) {
        const auto n = draw_indices(x.rows(), 1, sched.steps(), rng);
        const Tensor x_tn = noise(sched, x, n, rng);
        Var f_tn = net.forward(input(x_tn));
        if (w.lambda_f > 0.0) {
            require(sources.teacher != nullptr, "flow term needs a teacher score source");
            const Tensor x_ts = flow_target(x_tn, n, *sources.teacher, sched, opt.flow_stepper);
            Var flow = mean_distance(D, f_tn, frozen.forward(input(x_ts)));
            rep.flow = value(flow);
            objective = diff::add(objective, diff::scale(flow, w.lambda_f));
        }
        if (w.lambda_n > 0.0) {
            Var den = mean_distance(D, input(x), f_tn);
            rep.denoise = value(den);
            objective = diff::add(objective, diff::scale(den, w.lambda_n));
        }
    }
    if (w.lambda_d > 0.0) {
        require(sources.teacher != nullptr && sources.learned != nullptr,
                "dmd term needs both a teacher and a learned score source");
        const auto n = draw_indices(z.rows(), 1, sched.steps(), rng);
        Var dmd = dmd_grad(net, z, n, *sources.learned, *sources.teacher, sched, rng);
        rep.dmd_surrogate = value(dmd);
        objective = diff::add(objective, diff::scale(dmd, w.lambda_d));
    }
    if (w.lambda_r > 0.0) {
        require(sources.pairs != nullptr, "regression term needs a pair store");
        Var reg = reg_loss(net, *sources.pairs, x.rows(), rng, D);
        rep.reg = value(reg);
        objective = diff::add(objective, diff::scale(reg, w.lambda_r));
    }
    rep.total = rep.recon + rep.idem + w.lambda_f * rep.flow + w.lambda_r * rep.reg + w.lambda_n * rep.denoise;
    res.objective = objective;
    return res;
}

LossResult ign_total(const MlpNet& net, const FrozenView& frozen, const Tensor& x, const Tensor& z,
                     const LossWeights& w, const LossOptions& opt) {
    LossResult res;
    LossReport& rep = res.report;
    Var recon = recon_loss(net, x, opt.distance);
    Var idem = idem_loss(net, frozen, z, opt.distance, IdemOrder::eq4);
    Var tight = tight_loss(net, frozen, z, opt.distance, opt.tight_clamp);
    rep.recon = value(recon);
    rep.idem = value(idem);
    rep.tight = value(tight);
    rep.total = rep.recon + w.lambda_i * rep.idem + w.lambda_t * rep.tight;
    res.objective = diff::add(recon, diff::add(diff::scale(idem, w.lambda_i), diff::scale(tight, w.lambda_t)));
    return res;
}

LossWeights auto_balance(const LossWeights& w, const LossReport& cal) {
    struct Term {
        double LossWeights::*weight;
        double value;
    };
    const Term terms[] = {{&LossWeights::lambda_f, cal.flow},
                          {&LossWeights::lambda_d, std::abs(cal.dmd_surrogate)},
                          {&LossWeights::lambda_r, cal.reg},
                          {&LossWeights::lambda_n, cal.denoise}};
    double reference = cal.recon;
    if (!(reference > 1e-12)) {
        reference = 0.0;
        for (const auto& t : terms) {
            if (w.*t.weight > 0.0) reference = std::max(reference, t.value);
        }
    }
    LossWeights out = w;
    if (!(reference > 0.0)) return out;
    for (const auto& t : terms) {
        if (w.*t.weight > 0.0 && t.value > 0.0) out.*t.weight = std::clamp(reference / t.value, 0.0, 1.0);
    }
    return out;
}

}  // namespace sign
