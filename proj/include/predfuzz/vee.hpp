#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "predfuzz/encoding.hpp"
#include "predfuzz/nn.hpp"
#include "predfuzz/path_model.hpp"
#include "predfuzz/rng.hpp"

namespace predfuzz {

inline constexpr int kVeeInputDim = static_cast<int>(kEmbeddingDim) + 1;
inline constexpr int kVeeTargetDim = static_cast<int>(kEmbeddingDim) + 1;
inline const double kMinLogVar = std::log(1e-6);
inline const double kMaxLogVar = std::log(10.0);

/// Diagonal Gaussian over (next-path embedding, reward).
struct GaussianPrediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
};

/// sum_i (mean_i - y_i)^2 / var_i + log var_i
double gaussian_nll(const GaussianPrediction& pred, const Eigen::VectorXd& target);

/// Smoothly bounds raw log-variances into [kMinLogVar, kMaxLogVar]; the
/// second function is the derivative of the first.
Eigen::ArrayXXd bound_logvar(const Eigen::ArrayXXd& raw);
Eigen::ArrayXXd bound_logvar_slope(const Eigen::ArrayXXd& raw);

/// Probabilistic network: 21 inputs (embedding, action), Swish hidden layers,
/// 42 outputs (21 means, 21 raw log-variances).
class ProbNet {
public:
    ProbNet() = default;
    ProbNet(int hidden, int hidden_layers, Rng& rng);

    GaussianPrediction forward(const PathEmbedding& path, double action) const;

    /// Batched forward: x is 21 x B, returns 21 x B means and log-variances.
    void forward(const Eigen::MatrixXd& x, Eigen::MatrixXd& mean, Eigen::MatrixXd& logvar) const;

    /// Mean NLL over the batch (x 21 x B, y 21 x B). When `grad` is non-null
    /// its contents are overwritten with the analytic gradient. `active`
    /// (21 entries of 0 or 1) drops target components from the sum.
    double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Mlp::Grad* grad,
                const Eigen::VectorXd* active = nullptr) const;

    Mlp& mlp() { return net_; }
    const Mlp& mlp() const { return net_; }

private:
    Mlp net_;
};

Eigen::VectorXd vee_input(const PathEmbedding& path, double action);
Eigen::VectorXd vee_target(const PathEmbedding& next, double reward);

/// Transitions used to track convergence during Ensemble::train (fewer when
/// batches per epoch are capped).
inline constexpr Eigen::Index kMonitorSamples = 4096;

struct VeeConfig {
    int members = 6;
    int hidden = 64;
    int hidden_layers = 4;  ///< 5 linear layers in total
    double lr = 1e-3;
    std::size_t batch = 256;
    std::size_t max_epochs = 500;
    std::size_t window = 20;
    double min_improvement = 1e-4;
    /// Caps minibatches per member per epoch; 0 means one full bootstrap pass.
    std::size_t max_batches_per_epoch = 0;
};

struct TrainReport {
    std::vector<std::vector<double>> curves;  ///< per member, per epoch
    bool diverged = false;
};

class Ensemble {
public:
    Ensemble(const VeeConfig& config, std::uint64_t seed);

    /// Bootstrap training: every member draws its own resample each epoch.
    /// Stops at `epochs` (or config.max_epochs when 0) or once the best loss of
    /// the last config.window epochs improves on the best before it by less
    /// than config.min_improvement. The loss is measured after each epoch on a
    /// fixed sample of `data`. Target components that are constant across
    /// `data` are left out of the loss and predicted as that constant with the
    /// minimum variance. Inputs are standardized with statistics of `data`.
    TrainReport train(std::span<const Transition> data, std::size_t epochs, Rng& rng);

    std::vector<GaussianPrediction> member_predictions(const PathEmbedding& path, double action) const;

    /// Equal-weight mixture summarized by its first two moments.
    GaussianPrediction predict(const PathEmbedding& path, double action) const;

    /// Picks a member uniformly, then samples it.
    std::pair<PathEmbedding, double> sample(const PathEmbedding& path, double action, Rng& rng) const;

    std::size_t size() const { return members_.size(); }
    ProbNet& member(std::size_t i) { return members_.at(i); }
    const ProbNet& member(std::size_t i) const { return members_.at(i); }
    const VeeConfig& config() const { return config_; }
    bool trained() const { return trained_; }
    /// 1 for target components the members model, 0 for constant ones.
    const Eigen::VectorXd& active_components() const { return active_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    VeeConfig config_;
    std::vector<ProbNet> members_;
    std::vector<Adam> optimizers_;
    Eigen::VectorXd active_ = Eigen::VectorXd::Ones(kVeeTargetDim);
    Eigen::VectorXd constant_ = Eigen::VectorXd::Zero(kVeeTargetDim);
    Eigen::VectorXd in_shift_ = Eigen::VectorXd::Zero(kVeeInputDim);
    Eigen::VectorXd in_scale_ = Eigen::VectorXd::Ones(kVeeInputDim);
    bool trained_ = false;

    GaussianPrediction fix_constants(GaussianPrediction p) const;
    GaussianPrediction member_forward(const ProbNet& net, const PathEmbedding& path, double action) const;
};

GaussianPrediction moment_match(std::span<const GaussianPrediction> members);

/// Draws from the diagonal Gaussian, clamping the embedding part to [0,1]
/// and the reward to [-1,1].
std::pair<PathEmbedding, double> sample_transition(const GaussianPrediction& pred, Rng& rng);

/// 1 - |real - predicted| / |real|. For real = 0 returns 1 when predicted is
/// exactly 0 and otherwise uses |real| = 1e-6.
double prediction_accuracy(double real, double predicted);

/// Point q on the probability simplex minimizing || C q - target ||^2, where
/// the columns of C are candidate embeddings.
Eigen::VectorXd mixture_weights(const Eigen::MatrixXd& candidates, const Eigen::VectorXd& target);

/// One possible next path of an evaluated (path, action) pair.
struct EvalOutcome {
    PathEmbedding embedding{};
    double prob = 0.0;    ///< ground-truth probability
    double reward = 0.0;  ///< ground-truth reward
    bool self = false;
};

struct EvalCase {
    PathEmbedding path{};
    double action = 0.0;
    std::vector<EvalOutcome> outcomes;
};

struct AccuracyReport {
    double aapp = 0.0;
    double aapr = 0.0;
    std::size_t cases = 0;
};

/// Predicted path probabilities come from matching the ensemble's mean and
/// second moment of the next embedding with a mixture of the case's outcome
/// embeddings (mixture_weights). Path accuracies are clipped to [0,1] and
/// averaged over outcomes weighted by their true probability. Reward accuracy
/// compares the predicted mean reward with the true expected reward of the
/// case. Both are then averaged over cases.
AccuracyReport evaluate_accuracy(const Ensemble& ensemble, std::span<const EvalCase> cases);

}  // namespace predfuzz
