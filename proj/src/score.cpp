#include "sign/score.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "sign/error.hpp"

namespace sign {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Normalizes log-weights in place into probabilities.
void softmax_inplace(std::vector<double>& logw) {
    double hi = kNegInf;
    for (double v : logw) hi = std::max(hi, v);
    double z = 0.0;
    for (double& v : logw) {
        v = v == kNegInf ? 0.0 : std::exp(v - hi);
        z += v;
    }
    for (double& v : logw) v /= z;
}

std::vector<double> split(const std::string& text, char sep) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, sep)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + tok + "' in mixture spec");
        }
    }
    return out;
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<double> weights, Tensor means, std::vector<double> stds)
    : weights_(std::move(weights)), means_(std::move(means)), stds_(std::move(stds)) {
    if (weights_.empty() || means_.rows() != weights_.size() || stds_.size() != weights_.size()) {
        throw ConfigError("mixture needs matching numbers of weights, means and stds");
    }
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0)) throw ConfigError("mixture weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("mixture weights sum to " + std::to_string(total) + ", expected 1");
    }
    for (double& w : weights_) w /= total;
    for (double s : stds_) {
        if (!(s > 0.0)) throw ConfigError("mixture component stds must be positive");
    }
}

std::vector<double> GaussianMixture::mean() const {
    std::vector<double> m(dim(), 0.0);
    for (std::size_t k = 0; k < components(); ++k) {
        for (std::size_t j = 0; j < dim(); ++j) m[j] += weights_[k] * means_(k, j);
    }
    return m;
}

std::vector<double> GaussianMixture::variance() const {
    const auto m = mean();
    std::vector<double> v(dim(), 0.0);
    for (std::size_t k = 0; k < components(); ++k) {
        for (std::size_t j = 0; j < dim(); ++j) {
            const double dm = means_(k, j) - m[j];
            v[j] += weights_[k] * (stds_[k] * stds_[k] + dm * dm);
        }
    }
    return v;
}

GaussianMixture GaussianMixture::normalized(std::span<const double> shift, double scale) const {
    if (shift.size() != dim() || !(scale > 0.0)) throw ConfigError("bad mixture normalization");
    Tensor means = means_;
    for (std::size_t k = 0; k < components(); ++k) {
        for (std::size_t j = 0; j < dim(); ++j) means(k, j) = (means(k, j) - shift[j]) / scale;
    }
    std::vector<double> stds = stds_;
    for (double& s : stds) s /= scale;
    return GaussianMixture(weights_, std::move(means), std::move(stds));
}

Tensor GaussianMixture::sample(std::size_t count, Rng& rng) const {
    Tensor out({count, dim()});
    for (std::size_t i = 0; i < count; ++i) {
        double u = rng.uniform();
        std::size_t k = 0;
        while (k + 1 < components() && u >= weights_[k]) u -= weights_[k++];
        for (std::size_t j = 0; j < dim(); ++j) out(i, j) = means_(k, j) + stds_[k] * rng.normal();
    }
    return out;
}

GaussianMixture GaussianMixture::parse(const std::string& text) {
    std::vector<double> weights, stds, means;
    std::size_t d = 0;
    std::istringstream in(text);
    std::string comp;
    while (std::getline(in, comp, ';')) {
        const auto a = comp.find(':');
        const auto b = comp.rfind(':');
        if (a == std::string::npos || a == b) {
            throw ConfigError("mixture component '" + comp + "' is not weight:mean:std");
        }
        weights.push_back(split(comp.substr(0, a), ',').at(0));
        const auto mu = split(comp.substr(a + 1, b - a - 1), ',');
        if (d == 0) d = mu.size();
        if (mu.size() != d || d == 0) throw ConfigError("mixture means have inconsistent dimension");
        means.insert(means.end(), mu.begin(), mu.end());
        stds.push_back(split(comp.substr(b + 1), ',').at(0));
    }
    if (weights.empty()) throw ConfigError("empty mixture spec");
    return GaussianMixture(weights, Tensor::matrix(weights.size(), d, means), stds);
}

std::string GaussianMixture::to_text() const {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t k = 0; k < components(); ++k) {
        if (k) out << ';';
        out << weights_[k] << ':';
        for (std::size_t j = 0; j < dim(); ++j) out << (j ? "," : "") << means_(k, j);
        out << ':' << stds_[k];
    }
    return out.str();
}

std::vector<double> mixture_score(const GaussianMixture& gm, std::span<const double> x, double sigma) {
    if (x.size() != gm.dim()) throw DimensionError("mixture_score: point dimension mismatch");
    if (!(sigma >= 0.0)) throw RangeError("mixture_score: negative sigma");
    const std::size_t K = gm.components();
    const std::size_t d = gm.dim();
    std::vector<double> logw(K), var(K);
    for (std::size_t k = 0; k < K; ++k) {
        var[k] = gm.stds()[k] * gm.stds()[k] + sigma * sigma;
        if (!(var[k] > 0.0)) throw DataError("mixture_score: degenerate density (zero total variance)");
        double r2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dx = x[j] - gm.means()(k, j);
            r2 += dx * dx;
        }
        logw[k] = gm.weights()[k] > 0.0
                      ? std::log(gm.weights()[k]) - 0.5 * double(d) * std::log(var[k]) - 0.5 * r2 / var[k]
                      : kNegInf;
    }
    softmax_inplace(logw);
    std::vector<double> out(d, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        if (logw[k] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) out[j] += logw[k] * (gm.means()(k, j) - x[j]) / var[k];
    }
    return out;
}

std::vector<double> kernel_score(const Tensor& dataset, std::span<const double> x, double sigma) {
    if (dataset.rows() == 0) throw DataError("kernel_score: empty dataset");
    if (x.size() != dataset.cols()) throw DimensionError("kernel_score: point dimension mismatch");
    if (!(sigma > 0.0)) throw RangeError("kernel_score: sigma must be positive");
    const std::size_t M = dataset.rows();
    const std::size_t d = dataset.cols();
    const double inv2v = 0.5 / (sigma * sigma);
    std::vector<double> logw(M);
    for (std::size_t i = 0; i < M; ++i) {
        double r2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dx = x[j] - dataset(i, j);
            r2 += dx * dx;
        }
        logw[i] = -r2 * inv2v;
    }
    softmax_inplace(logw);
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        if (logw[i] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) out[j] += logw[i] * (dataset(i, j) - x[j]);
    }
    for (double& v : out) v /= sigma * sigma;
    return out;
}

Tensor ScoreSource::score(const Tensor& x, double sigma) const {
    std::vector<double> s(x.rows(), sigma);
    return score(x, s);
}

Tensor ScoreSource::evaluate(const Tensor& x, std::size_t n, const NoiseSchedule& sched) const {
    return score(x, sched.sigma_at(n));
}

Tensor ZeroScore::score(const Tensor& x, std::span<const double>) const {
    if (x.cols() != dim_) throw DimensionError("score: input dimension mismatch");
    return Tensor::zeros_like(x);
}

Tensor AnalyticScore::score(const Tensor& x, std::span<const double> sigma) const {
    if (x.cols() != dim()) throw DimensionError("score: input dimension mismatch");
    Tensor out = Tensor::zeros_like(x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto s = mixture_score(gm_, x.row(r), sigma[r]);
        std::copy(s.begin(), s.end(), out.row(r).begin());
    }
    return out;
}

KernelScore::KernelScore(Tensor dataset, double sigma_floor)
    : dataset_(std::move(dataset)), sigma_floor_(sigma_floor) {
    if (dataset_.rows() == 0) throw DataError("kernel score needs a non-empty dataset");
}

Tensor KernelScore::score(const Tensor& x, std::span<const double> sigma) const {
    if (x.cols() != dim()) throw DimensionError("score: input dimension mismatch");
    Tensor out = Tensor::zeros_like(x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto s = kernel_score(dataset_, x.row(r), std::max(sigma[r], sigma_floor_));
        std::copy(s.begin(), s.end(), out.row(r).begin());
    }
    return out;
}

ScoreNet::ScoreNet(diff::Mlp mlp, double sigma_data) : mlp_(std::move(mlp)), sigma_data_(sigma_data) {
    if (mlp_.arch().input_width() != mlp_.arch().output_width() + 1) {
        throw ConfigError("score network input must be the data width plus one conditioning column");
    }
    if (!(sigma_data_ > 0.0)) throw ConfigError("score.sigma_data must be positive");
}

ScoreNet ScoreNet::random(std::size_t dim, std::vector<std::size_t> hidden, diff::Activation act,
                          double sigma_data, Rng& rng) {
    diff::MlpArch arch;
    arch.widths.push_back(dim + 1);
    arch.widths.insert(arch.widths.end(), hidden.begin(), hidden.end());
    arch.widths.push_back(dim);
    arch.activation = act;
    return ScoreNet(diff::Mlp::random(arch, rng), sigma_data);
}

diff::Var ScoreNet::forward(const Tensor& x, std::span<const double> sigma) const {
    const std::size_t B = x.rows();
    const std::size_t d = dim();
    if (x.cols() != d || sigma.size() != B) throw DimensionError("score net: input shape mismatch");
    const double sd2 = sigma_data_ * sigma_data_;
    Tensor input({B, d + 1});
    Tensor base({B, d});
    Tensor coef({B, d});
    for (std::size_t r = 0; r < B; ++r) {
        const double s = sigma[r];
        if (!(s > 0.0)) throw RangeError("score net: sigma must be positive");
        const double v = s * s + sd2;
        const double c_in = 1.0 / std::sqrt(v);
        for (std::size_t c = 0; c < d; ++c) {
            input(r, c) = c_in * x(r, c);
            base(r, c) = -x(r, c) / v;
            coef(r, c) = sigma_data_ / (s * std::sqrt(v));
        }
        input(r, d) = 0.25 * std::log(s);
    }
    const diff::Var f = mlp_.forward(diff::constant(std::move(input)));
    return diff::add(diff::constant(std::move(base)), diff::mul(f, diff::constant(std::move(coef))));
}

Tensor ScoreNet::evaluate(const Tensor& x, std::span<const double> sigma) const {
    diff::NoGradGuard guard;
    return forward(x, sigma).value();
}

diff::Var dsm_loss(const ScoreNet& net, const Tensor& x, std::span<const double> sigma, const Tensor& noise) {
    const std::size_t B = x.rows();
    const std::size_t d = x.cols();
    const double sd2 = net.sigma_data() * net.sigma_data();
    Tensor noisy = x;
    Tensor weight({B, d});
    Tensor target({B, d});
    for (std::size_t r = 0; r < B; ++r) {
        const double s = sigma[r];
        const double w = s * std::sqrt((s * s + sd2) / sd2);
        for (std::size_t c = 0; c < d; ++c) {
            noisy(r, c) += s * noise(r, c);
            weight(r, c) = w;
            target(r, c) = w * noise(r, c) / s;
        }
    }
    const diff::Var s = net.forward(noisy, sigma);
    const diff::Var residual = diff::add(diff::mul(s, diff::constant(std::move(weight))),
                                         diff::constant(std::move(target)));
    return diff::mean(diff::squared_norm_rows(residual));
}

double dsm_value(const ScoreSource& src, const Tensor& x, double sigma, Rng& rng) {
    Tensor noisy = x;
    Tensor eps = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        eps[i] = rng.normal();
        noisy[i] += sigma * eps[i];
    }
    const Tensor s = src.score(noisy, sigma);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = s[i] + eps[i] / sigma;
        total += r * r;
    }
    return total / double(x.rows());
}

LearnedScore::LearnedScore(ScoreNet net, double lr, diff::AdamConfig adam)
    : net_(std::move(net)), adam_(diff::AdamState::for_parameters(net_.mlp().parameters(), adam)), lr_(lr) {}

Tensor LearnedScore::score(const Tensor& x, std::span<const double> sigma) const {
    if (updating_) throw ContractError("learned score evaluated during an update phase");
    return net_.evaluate(x, sigma);
}

double LearnedScore::update(const Tensor& batch, const NoiseSchedule& sched, Rng& rng) {
    const bool outer = updating_;
    updating_ = true;
    std::vector<double> sigma(batch.rows());
    for (double& s : sigma) s = sched.sigma_at(rng.integer(0, sched.steps()));
    const Tensor eps = gaussian({batch.rows(), batch.cols()}, rng);
    net_.mlp().zero_grad();
    const diff::Var loss = dsm_loss(net_, batch, sigma, eps);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
        updating_ = outer;
        throw DivergenceError("non-finite score-matching loss at update " + std::to_string(adam_.step),
                              adam_.step);
    }
    loss.backward();
    try {
        diff::adam_step(net_.mlp().parameters(), adam_, lr_);
    } catch (...) {
        updating_ = outer;
        throw;
    }
    updating_ = outer;
    return value;
}

std::shared_ptr<LearnedScore> train_learned_score(ScoreNet net, const BatchStream& stream,
                                                  const NoiseSchedule& sched, std::size_t steps,
                                                  double lr, Rng& rng) {
    auto learned = std::make_shared<LearnedScore>(std::move(net), lr);
    learned->begin_update();
    for (std::size_t i = 0; i < steps; ++i) learned->update(stream(rng), sched, rng);
    learned->end_update();
    return learned;
}

}  // namespace sign
