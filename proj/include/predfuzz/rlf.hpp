#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "predfuzz/encoding.hpp"
#include "predfuzz/nn.hpp"
#include "predfuzz/path_model.hpp"
#include "predfuzz/rng.hpp"
#include "predfuzz/vee.hpp"

namespace predfuzz {

inline constexpr double kMinPolicySigma = 1e-3;
inline constexpr double kMaxPolicySigma = 1.0;

/// Differential entropy of N(mu, sigma^2): 0.5 * log(2 pi e sigma^2).
inline double policy_entropy(double sigma)
{
    return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sigma * sigma);
}

/// Maps a pre-squash draw onto [0,1) by wrapping around the unit circle.
/// Byte encodings i/L live on a circle too (decode_action wraps), so the
/// policy has no boundary where probability mass piles up.
inline double squash_action(double z) { return z - std::floor(z); }

struct PolicyOutput {
    double mu = 0.0;
    double sigma = 1.0;
};

/// Gaussian policy over the pre-squash action: embedding -> (mu, log sigma).
class Actor {
public:
    Actor() = default;
    Actor(int hidden, Rng& rng);

    PolicyOutput policy(const PathEmbedding& s) const;

    /// Batched: s is 20 x B. Returns mu and log sigma rows; fills `tape` when given.
    void forward(const Eigen::MatrixXd& s, Eigen::VectorXd& mu, Eigen::VectorXd& log_sigma,
                 Mlp::Tape* tape = nullptr) const;

    /// d log_sigma / d raw output, for each column of a forward pass.
    Eigen::VectorXd log_sigma_slope(const Eigen::MatrixXd& raw_row) const;

    Mlp& mlp() { return net_; }
    const Mlp& mlp() const { return net_; }

private:
    Mlp net_;
};

/// Q(s, a). The action enters as (sin 2 pi a, cos 2 pi a) so Q is
/// continuous across the wrap point.
class QCritic {
public:
    QCritic() = default;
    QCritic(int hidden, Rng& rng);

    double value(const PathEmbedding& s, double a) const;
    Eigen::VectorXd values(const Eigen::MatrixXd& s, const Eigen::VectorXd& a) const;
    /// Q and dQ/da for a batch.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> values_and_slopes(const Eigen::MatrixXd& s,
                                                                  const Eigen::VectorXd& a) const;

    static Eigen::MatrixXd features(const Eigen::MatrixXd& s, const Eigen::VectorXd& a);

    Mlp& mlp() { return net_; }
    const Mlp& mlp() const { return net_; }

private:
    Mlp net_;
};

class VCritic {
public:
    VCritic() = default;
    VCritic(int hidden, Rng& rng);

    double value(const PathEmbedding& s) const;
    Eigen::VectorXd values(const Eigen::MatrixXd& s) const;

    Mlp& mlp() { return net_; }
    const Mlp& mlp() const { return net_; }

private:
    Mlp net_;
};

Eigen::MatrixXd stack_embeddings(std::span<const PathEmbedding> states);

/// Samples z ~ N(mu, sigma) and returns squash_action(z).
double select_action(const Actor& actor, const PathEmbedding& s, Rng& rng);

/// Probability mass of each byte under the squashed policy. Byte i owns the
/// arc of width 1/L centred on its encoding i/L; the masses tile the circle.
std::vector<double> policy_density_over_bytes(const Actor& actor, const PathEmbedding& s, std::size_t seed_length);
std::vector<double> wrapped_bin_masses(double mu, double sigma, std::size_t bins);

/// J_V = 1/2 (gamma r + V(s') - V(s))^2 as printed, or with
/// `standard_target` the usual 1/2 (r + gamma V(s') - V(s))^2. V(s') is a
/// fixed target and is 0 for terminal successors. Mean over the batch;
/// writes dJ/dtheta into `grad` when non-null.
double v_objective(const VCritic& v, std::span<const Transition> batch, double gamma, bool standard_target,
                   Mlp::Grad* grad);

/// J_Q = (r + gamma Q(s', a') - Q(s, a))^2 with fixed target, a' given per
/// transition, Q(s', a') = 0 for terminal successors. Mean over the batch.
double q_objective(const QCritic& q, std::span<const Transition> batch, std::span<const double> next_actions,
                   double gamma, Mlp::Grad* grad);

/// Q value and dQ/da at (s, a).
using QFunction = std::function<std::pair<double, double>(const PathEmbedding&, double)>;

/// Reparameterized objective mean_s [Q(s, squash(mu + sigma eps)) + alpha H(sigma)]
/// for fixed noise `eps`; writes dJ/dtheta (ascent direction) into `grad`.
double actor_objective(const Actor& actor, const QFunction& q, std::span<const PathEmbedding> states,
                       std::span<const double> eps, double alpha, Mlp::Grad* grad);
double actor_objective(const Actor& actor, const QCritic& q, std::span<const PathEmbedding> states,
                       std::span<const double> eps, double alpha, Mlp::Grad* grad);

struct CriticLosses {
    double j_v = 0.0;
    double j_q = 0.0;
};

/// Draws a' from the actor at each s' (snapped to the successor's byte grid
/// when its seed length is known), then takes one optimizer step on each
/// critic. Returns the pre-step objectives.
CriticLosses critic_update(QCritic& q, Adam& q_opt, VCritic& v, Adam& v_opt, const Actor& actor,
                           std::span<const Transition> batch, double gamma, bool standard_v_target, Rng& rng);

/// One ascent step on the actor objective with fresh noise; returns the
/// pre-step objective value.
double actor_update(Actor& actor, Adam& opt, const QFunction& q, std::span<const PathEmbedding> states, double alpha,
                    Rng& rng);
double actor_update(Actor& actor, Adam& opt, const QCritic& q, std::span<const PathEmbedding> states, double alpha,
                    Rng& rng);

/// Stable synthetic id for a predicted (never executed) path embedding.
PathId predicted_path_id(const PathEmbedding& e);

struct RolloutBatch {
    PathId start = 0;
    std::vector<Transition> steps;
};

/// Chains k predicted transitions from `start`: the actor picks an action,
/// the ensemble samples the next embedding and reward.
RolloutBatch k_step_rollout(const Ensemble& ensemble, const Actor& actor, const PathEmbedding& start,
                            PathId start_id, std::size_t k, Rng& rng, std::uint64_t& mutation_counter);

struct RlfConfig {
    int hidden = 64;
    double lr = 0.005;
    double gamma = 0.8;
    double alpha = 0.2;
    std::size_t k = 4;
    std::size_t batch = 128;
    /// Share of each training batch drawn from the historical buffer.
    double historical_fraction = 0.25;
    bool standard_v_target = false;
};

struct RlfLosses {
    double j_v = 0.0;
    double j_q = 0.0;
    double j_pi = 0.0;
    bool diverged = false;
};

/// Actor, Q-critic and V-critic with their optimizers.
class RlfAgent {
public:
    RlfAgent(const RlfConfig& config, std::uint64_t seed);

    /// Mixed batches from both buffers; falls back to historical data only
    /// while the predicted buffer is empty. Restores the previous weights if
    /// any network turns non-finite.
    RlfLosses train(const ReplayBuffer& historical, const ReplayBuffer& predicted, std::size_t steps, Rng& rng);

    /// Training on an explicit transition set (uniform draws).
    RlfLosses train_on(std::span<const Transition> data, std::size_t steps, Rng& rng);

    double v(const PathEmbedding& s) const { return v_.value(s); }
    double q(const PathEmbedding& s, double a) const { return q_.value(s, a); }

    Actor& actor() { return actor_; }
    const Actor& actor() const { return actor_; }
    QCritic& q_critic() { return q_; }
    const QCritic& q_critic() const { return q_; }
    VCritic& v_critic() { return v_; }
    const VCritic& v_critic() const { return v_; }
    const RlfConfig& config() const { return config_; }
    RlfConfig& config() { return config_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    RlfLosses step(std::span<const Transition> batch, Rng& rng);

    RlfConfig config_;
    Actor actor_;
    QCritic q_;
    VCritic v_;
    Adam actor_opt_;
    Adam q_opt_;
    Adam v_opt_;
};

}  // namespace predfuzz
