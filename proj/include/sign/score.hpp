#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sign/autodiff.hpp"
#include "sign/mlp.hpp"
#include "sign/rng.hpp"
#include "sign/schedule.hpp"

namespace sign {

using diff::Tensor;

// Isotropic Gaussian mixture sum_k w_k N(mu_k, s_k^2 I).
class GaussianMixture {
public:
    GaussianMixture() = default;
    GaussianMixture(std::vector<double> weights, Tensor means, std::vector<double> stds);

    std::size_t dim() const { return means_.cols(); }
    std::size_t components() const { return weights_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    const Tensor& means() const { return means_; }
    const std::vector<double>& stds() const { return stds_; }

    std::vector<double> mean() const;
    // Per-dimension variance of the mixture.
    std::vector<double> variance() const;
    // Mixture of the affine image x -> (x - shift) / scale.
    GaussianMixture normalized(std::span<const double> shift, double scale) const;

    Tensor sample(std::size_t count, Rng& rng) const;

    // "w:m0,m1,...:s;w:...". Weights are renormalized when within 1e-9 of 1.
    static GaussianMixture parse(const std::string& text);
    std::string to_text() const;

private:
    std::vector<double> weights_;
    Tensor means_;
    std::vector<double> stds_;
};

// grad_x log sum_k w_k N(x; mu_k, (s_k^2 + sigma^2) I), log-sum-exp stabilized.
std::vector<double> mixture_score(const GaussianMixture& gm, std::span<const double> x, double sigma);

// grad_x log sum_i N(x; x_i, sigma^2 I) over the rows x_i of `dataset`.
std::vector<double> kernel_score(const Tensor& dataset, std::span<const double> x, double sigma);

// Evaluator of grad_x log p^sigma(x).
class ScoreSource {
public:
    virtual ~ScoreSource() = default;
    virtual std::size_t dim() const = 0;
    // One noise level per row of x.
    virtual Tensor score(const Tensor& x, std::span<const double> sigma) const = 0;

    Tensor score(const Tensor& x, double sigma) const;
    // Score at the noise level of grid index n.
    Tensor evaluate(const Tensor& x, std::size_t n, const NoiseSchedule& sched) const;
};

class ZeroScore final : public ScoreSource {
public:
    explicit ZeroScore(std::size_t dim) : dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Tensor score(const Tensor& x, std::span<const double> sigma) const override;
    using ScoreSource::score;

private:
    std::size_t dim_;
};

class AnalyticScore final : public ScoreSource {
public:
    explicit AnalyticScore(GaussianMixture gm) : gm_(std::move(gm)) {}
    std::size_t dim() const override { return gm_.dim(); }
    Tensor score(const Tensor& x, std::span<const double> sigma) const override;
    using ScoreSource::score;
    const GaussianMixture& mixture() const { return gm_; }

private:
    GaussianMixture gm_;
};

// Empirical score of the dataset convolved with N(0, max(sigma, floor)^2 I).
class KernelScore final : public ScoreSource {
public:
    KernelScore(Tensor dataset, double sigma_floor = 0.0);
    std::size_t dim() const override { return dataset_.cols(); }
    Tensor score(const Tensor& x, std::span<const double> sigma) const override;
    using ScoreSource::score;

private:
    Tensor dataset_;
    double sigma_floor_;
};

// Noise-conditioned score network. The MLP F sees [x / sqrt(sigma^2 + sd^2), log(sigma) / 4]
// and the score is
//   s(x, sigma) = -x / (sigma^2 + sd^2) + F * sd / (sigma sqrt(sigma^2 + sd^2)),
// i.e. the denoiser D = c_skip x + c_out F with sd the data scale.
class ScoreNet {
public:
    ScoreNet() = default;
    ScoreNet(diff::Mlp mlp, double sigma_data);
    static ScoreNet random(std::size_t dim, std::vector<std::size_t> hidden, diff::Activation act,
                           double sigma_data, Rng& rng);

    std::size_t dim() const { return mlp_.arch().output_width(); }
    double sigma_data() const { return sigma_data_; }
    const diff::Mlp& mlp() const { return mlp_; }
    diff::Mlp& mlp() { return mlp_; }

    diff::Var forward(const Tensor& x, std::span<const double> sigma) const;
    Tensor evaluate(const Tensor& x, std::span<const double> sigma) const;

private:
    diff::Mlp mlp_;
    double sigma_data_ = 1.0;
};

// Denoising score matching, mean over rows of
//   lambda(sigma) || s(x + sigma e, sigma) + e / sigma ||^2,
// lambda(sigma) = sigma^2 (sigma^2 + sd^2) / sd^2, which gives every noise level
// unit weight on the network output F.
diff::Var dsm_loss(const ScoreNet& net, const Tensor& x, std::span<const double> sigma, const Tensor& noise);

// Unweighted Monte Carlo estimate of E || s(x + sigma e, sigma) + e / sigma ||^2 at one level.
double dsm_value(const ScoreSource& src, const Tensor& x, double sigma, Rng& rng);

// Score network plus its optimizer state; alternates exclusive update phases
// with read-only evaluation phases.
class LearnedScore final : public ScoreSource {
public:
    LearnedScore(ScoreNet net, double lr, diff::AdamConfig adam = {});

    std::size_t dim() const override { return net_.dim(); }
    // Throws ContractError while an update is in progress.
    Tensor score(const Tensor& x, std::span<const double> sigma) const override;
    using ScoreSource::score;

    // One DSM step on `batch` with noise levels drawn uniformly from the grid.
    // Returns the loss; throws DivergenceError (index = update count) on a non-finite loss.
    double update(const Tensor& batch, const NoiseSchedule& sched, Rng& rng);

    const ScoreNet& net() const { return net_; }
    ScoreNet& net() { return net_; }
    const diff::AdamState& optimizer() const { return adam_; }
    diff::AdamState& optimizer() { return adam_; }
    std::uint64_t updates() const { return adam_.step; }
    bool updating() const { return updating_; }
    // Explicit phase control for callers batching several updates.
    void begin_update() { updating_ = true; }
    void end_update() { updating_ = false; }

private:
    ScoreNet net_;
    diff::AdamState adam_;
    double lr_;
    bool updating_ = false;
};

// Trains `net` for `steps` DSM updates on batches drawn from `stream`.
using BatchStream = std::function<Tensor(Rng&)>;
std::shared_ptr<LearnedScore> train_learned_score(ScoreNet net, const BatchStream& stream,
                                                  const NoiseSchedule& sched, std::size_t steps,
                                                  double lr, Rng& rng);

}  // namespace sign
