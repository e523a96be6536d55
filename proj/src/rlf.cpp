#include "predfuzz/rlf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace predfuzz {

namespace {

const double kLogSigmaLo = std::log(kMinPolicySigma);
const double kLogSigmaHi = std::log(kMaxPolicySigma);
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

Eigen::ArrayXd logistic(const Eigen::ArrayXd& x)
{
    return (1.0 + (-x).exp()).inverse();
}

Eigen::MatrixXd successor_matrix(std::span<const Transition> batch)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(kEmbeddingDim), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j) {
        for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = batch[j].s_next[i];
        }
    }
    return m;
}

Eigen::MatrixXd source_matrix(std::span<const Transition> batch)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(kEmbeddingDim), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j) {
        for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = batch[j].s[i];
        }
    }
    return m;
}

}  // namespace

Eigen::MatrixXd stack_embeddings(std::span<const PathEmbedding> states)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(kEmbeddingDim), static_cast<Eigen::Index>(states.size()));
    for (std::size_t j = 0; j < states.size(); ++j) {
        for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = states[j][i];
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Networks

Actor::Actor(int hidden, Rng& rng) : net_({static_cast<int>(kEmbeddingDim), hidden, hidden, 2}, rng) {}

void Actor::forward(const Eigen::MatrixXd& s, Eigen::VectorXd& mu, Eigen::VectorXd& log_sigma, Mlp::Tape* tape) const
{
    const Eigen::MatrixXd out = tape != nullptr ? net_.forward(s, *tape) : net_.forward(s);
    mu = out.row(0).transpose();
    const Eigen::ArrayXd raw = out.row(1).transpose().array();
    log_sigma = (kLogSigmaLo + (kLogSigmaHi - kLogSigmaLo) * logistic(raw)).matrix();
}

Eigen::VectorXd Actor::log_sigma_slope(const Eigen::MatrixXd& raw_row) const
{
    const Eigen::ArrayXd sg = logistic(raw_row.transpose().array().col(0));
    return ((kLogSigmaHi - kLogSigmaLo) * sg * (1.0 - sg)).matrix();
}

PolicyOutput Actor::policy(const PathEmbedding& s) const
{
    Eigen::VectorXd mu;
    Eigen::VectorXd ls;
    forward(stack_embeddings(std::span<const PathEmbedding>(&s, 1)), mu, ls);
    return {mu(0), std::exp(ls(0))};
}

QCritic::QCritic(int hidden, Rng& rng) : net_({static_cast<int>(kEmbeddingDim) + 2, hidden, hidden, 1}, rng) {}

Eigen::MatrixXd QCritic::features(const Eigen::MatrixXd& s, const Eigen::VectorXd& a)
{
    Eigen::MatrixXd f(s.rows() + 2, s.cols());
    f.topRows(s.rows()) = s;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        f(s.rows(), j) = std::sin(kTwoPi * a(j));
        f(s.rows() + 1, j) = std::cos(kTwoPi * a(j));
    }
    return f;
}

Eigen::VectorXd QCritic::values(const Eigen::MatrixXd& s, const Eigen::VectorXd& a) const
{
    return net_.forward(features(s, a)).row(0).transpose();
}

double QCritic::value(const PathEmbedding& s, double a) const
{
    Eigen::VectorXd av(1);
    av(0) = a;
    return values(stack_embeddings(std::span<const PathEmbedding>(&s, 1)), av)(0);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> QCritic::values_and_slopes(const Eigen::MatrixXd& s,
                                                                       const Eigen::VectorXd& a) const
{
    Mlp::Tape tape;
    const Eigen::MatrixXd out = net_.forward(features(s, a), tape);
    Mlp::Grad scratch = net_.zero_grad();
    const Eigen::MatrixXd gin = net_.backward(tape, Eigen::MatrixXd::Ones(1, s.cols()), scratch);
    Eigen::VectorXd slope(s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        slope(j) = gin(s.rows(), j) * kTwoPi * std::cos(kTwoPi * a(j)) -
                   gin(s.rows() + 1, j) * kTwoPi * std::sin(kTwoPi * a(j));
    }
    return {out.row(0).transpose(), slope};
}

VCritic::VCritic(int hidden, Rng& rng) : net_({static_cast<int>(kEmbeddingDim), hidden, hidden, 1}, rng) {}

Eigen::VectorXd VCritic::values(const Eigen::MatrixXd& s) const
{
    return net_.forward(s).row(0).transpose();
}

double VCritic::value(const PathEmbedding& s) const
{
    return values(stack_embeddings(std::span<const PathEmbedding>(&s, 1)))(0);
}

// ---------------------------------------------------------------------------
// Policy utilities

double select_action(const Actor& actor, const PathEmbedding& s, Rng& rng)
{
    const PolicyOutput p = actor.policy(s);
    return squash_action(rng.normal(p.mu, p.sigma));
}

std::vector<double> wrapped_bin_masses(double mu, double sigma, std::size_t bins)
{
    if (bins == 0) {
        throw std::invalid_argument("need at least one byte");
    }
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("policy sigma must be positive");
    }
    const double width = 1.0 / static_cast<double>(bins);
    const auto k_lo = static_cast<long>(std::floor(mu - 10.0 * sigma)) - 1;
    const auto k_hi = static_cast<long>(std::ceil(mu + 10.0 * sigma)) + 1;
    std::vector<double> mass(bins, 0.0);
    for (std::size_t i = 0; i < bins; ++i) {
        const double centre = static_cast<double>(i) * width;
        for (long k = k_lo; k <= k_hi; ++k) {
            const double lo = (centre - 0.5 * width + static_cast<double>(k) - mu) / sigma;
            const double hi = (centre + 0.5 * width + static_cast<double>(k) - mu) / sigma;
            if (hi < -12.0 || lo > 12.0) {
                continue;
            }
            mass[i] += normal_cdf(hi) - normal_cdf(lo);
        }
    }
    double total = 0.0;
    for (double m : mass) {
        total += m;
    }
    for (double& m : mass) {
        m /= total;
    }
    return mass;
}

std::vector<double> policy_density_over_bytes(const Actor& actor, const PathEmbedding& s, std::size_t seed_length)
{
    const PolicyOutput p = actor.policy(s);
    return wrapped_bin_masses(p.mu, p.sigma, seed_length);
}

// ---------------------------------------------------------------------------
// Objectives

double v_objective(const VCritic& v, std::span<const Transition> batch, double gamma, bool standard_target,
                   Mlp::Grad* grad)
{
    if (batch.empty()) {
        throw std::invalid_argument("empty critic batch");
    }
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::MatrixXd s = source_matrix(batch);
    const Eigen::VectorXd next = v.values(successor_matrix(batch));
    Mlp::Tape tape;
    const Eigen::VectorXd cur = v.mlp().forward(s, tape).row(0).transpose();
    Eigen::VectorXd resid(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Transition& t = batch[static_cast<std::size_t>(j)];
        const double vn = t.terminal_next ? 0.0 : next(j);
        const double target = standard_target ? t.reward + gamma * vn : gamma * t.reward + vn;
        resid(j) = target - cur(j);
    }
    const double value = 0.5 * resid.squaredNorm() / static_cast<double>(n);
    if (grad != nullptr) {
        *grad = v.mlp().zero_grad();
        v.mlp().backward(tape, (-resid / static_cast<double>(n)).transpose(), *grad);
    }
    return value;
}

double q_objective(const QCritic& q, std::span<const Transition> batch, std::span<const double> next_actions,
                   double gamma, Mlp::Grad* grad)
{
    if (batch.empty()) {
        throw std::invalid_argument("empty critic batch");
    }
    if (next_actions.size() != batch.size()) {
        throw std::invalid_argument("one successor action per transition required");
    }
    const auto n = static_cast<Eigen::Index>(batch.size());
    Eigen::VectorXd a(n);
    Eigen::VectorXd an(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        a(j) = batch[static_cast<std::size_t>(j)].a_t;
        an(j) = next_actions[static_cast<std::size_t>(j)];
    }
    const Eigen::VectorXd next = q.values(successor_matrix(batch), an);
    Mlp::Tape tape;
    const Eigen::VectorXd cur = q.mlp().forward(QCritic::features(source_matrix(batch), a), tape).row(0).transpose();
    Eigen::VectorXd resid(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Transition& t = batch[static_cast<std::size_t>(j)];
        const double qn = t.terminal_next ? 0.0 : next(j);
        resid(j) = t.reward + gamma * qn - cur(j);
    }
    const double value = resid.squaredNorm() / static_cast<double>(n);
    if (grad != nullptr) {
        *grad = q.mlp().zero_grad();
        q.mlp().backward(tape, (-2.0 * resid / static_cast<double>(n)).transpose(), *grad);
    }
    return value;
}

double actor_objective(const Actor& actor, const QFunction& q, std::span<const PathEmbedding> states,
                       std::span<const double> eps, double alpha, Mlp::Grad* grad)
{
    if (states.empty()) {
        throw std::invalid_argument("empty actor batch");
    }
    if (eps.size() != states.size()) {
        throw std::invalid_argument("one noise draw per state required");
    }
    const auto n = static_cast<Eigen::Index>(states.size());
    Mlp::Tape tape;
    const Eigen::MatrixXd out = actor.mlp().forward(stack_embeddings(states), tape);
    const Eigen::ArrayXd raw = out.row(1).transpose().array();
    const Eigen::ArrayXd sg = logistic(raw);
    const Eigen::ArrayXd log_sigma = kLogSigmaLo + (kLogSigmaHi - kLogSigmaLo) * sg;
    const double inv_n = 1.0 / static_cast<double>(n);

    double total = 0.0;
    Eigen::MatrixXd grad_out(2, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double sigma = std::exp(log_sigma(j));
        const double e = eps[static_cast<std::size_t>(j)];
        const double a = squash_action(out(0, j) + sigma * e);
        const auto [qv, qa] = q(states[static_cast<std::size_t>(j)], a);
        total += qv + alpha * policy_entropy(sigma);
        grad_out(0, j) = qa * inv_n;
        grad_out(1, j) = (qa * sigma * e + alpha) * (kLogSigmaHi - kLogSigmaLo) * sg(j) * (1.0 - sg(j)) * inv_n;
    }
    if (grad != nullptr) {
        *grad = actor.mlp().zero_grad();
        actor.mlp().backward(tape, grad_out, *grad);
    }
    return total * inv_n;
}

namespace {

QFunction q_function(const QCritic& q)
{
    return [&q](const PathEmbedding& s, double a) {
        const Eigen::MatrixXd sm = stack_embeddings(std::span<const PathEmbedding>(&s, 1));
        Eigen::VectorXd av(1);
        av(0) = a;
        const auto [v, slope] = q.values_and_slopes(sm, av);
        return std::pair<double, double>{v(0), slope(0)};
    };
}

void negate(Mlp::Grad& g)
{
    for (auto& w : g.w) {
        w = -w;
    }
    for (auto& b : g.b) {
        b = -b;
    }
}

}  // namespace

double actor_objective(const Actor& actor, const QCritic& q, std::span<const PathEmbedding> states,
                       std::span<const double> eps, double alpha, Mlp::Grad* grad)
{
    return actor_objective(actor, q_function(q), states, eps, alpha, grad);
}

CriticLosses critic_update(QCritic& q, Adam& q_opt, VCritic& v, Adam& v_opt, const Actor& actor,
                           std::span<const Transition> batch, double gamma, bool standard_v_target, Rng& rng)
{
    std::vector<double> next_actions;
    next_actions.reserve(batch.size());
    for (const Transition& t : batch) {
        double a = select_action(actor, t.s_next, rng);
        if (t.next_seed_len > 0) {
            a = encode_action(decode_action(a, t.next_seed_len), t.next_seed_len);
        }
        next_actions.push_back(a);
    }
    CriticLosses out;
    Mlp::Grad gv;
    Mlp::Grad gq;
    out.j_v = v_objective(v, batch, gamma, standard_v_target, &gv);
    out.j_q = q_objective(q, batch, next_actions, gamma, &gq);
    v_opt.step(v.mlp(), gv);
    q_opt.step(q.mlp(), gq);
    return out;
}

double actor_update(Actor& actor, Adam& opt, const QFunction& q, std::span<const PathEmbedding> states, double alpha,
                    Rng& rng)
{
    std::vector<double> eps(states.size());
    for (double& e : eps) {
        e = rng.normal();
    }
    Mlp::Grad g;
    const double before = actor_objective(actor, q, states, eps, alpha, &g);
    negate(g);
    opt.step(actor.mlp(), g);
    return before;
}

double actor_update(Actor& actor, Adam& opt, const QCritic& q, std::span<const PathEmbedding> states, double alpha,
                    Rng& rng)
{
    return actor_update(actor, opt, q_function(q), states, alpha, rng);
}

// ---------------------------------------------------------------------------
// Rollouts

PathId predicted_path_id(const PathEmbedding& e)
{
    std::uint64_t h = 0x9a7c1e0f5d3b2a19ULL;
    for (double x : e) {
        const auto q = static_cast<std::uint64_t>(std::llround(x * 4096.0));
        h = Rng::mix(h ^ q);
    }
    return h;
}

RolloutBatch k_step_rollout(const Ensemble& ensemble, const Actor& actor, const PathEmbedding& start,
                            PathId start_id, std::size_t k, Rng& rng, std::uint64_t& mutation_counter)
{
    if (k == 0) {
        throw std::invalid_argument("rollout length must be at least 1");
    }
    RolloutBatch batch;
    batch.start = start_id;
    PathEmbedding cur = start;
    PathId cur_id = start_id;
    for (std::size_t i = 0; i < k; ++i) {
        const double a = select_action(actor, cur, rng);
        const auto [next, reward] = ensemble.sample(cur, a, rng);
        const PathId next_id = predicted_path_id(next);
        Transition t;
        t.p_t = cur_id;
        t.a_t = a;
        t.p_next = next_id;
        t.reward = reward;
        t.testcase_id = disambiguate_testcase(++mutation_counter, next_id);
        t.s = cur;
        t.s_next = next;
        batch.steps.push_back(t);
        cur = next;
        cur_id = next_id;
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Agent

RlfAgent::RlfAgent(const RlfConfig& config, std::uint64_t seed) : config_(config)
{
    if (!(config.gamma > 0.0 && config.gamma <= 1.0)) {
        throw std::invalid_argument("gamma must lie in (0,1]");
    }
    if (config.k < 1) {
        throw std::invalid_argument("rollout length k must be at least 1");
    }
    Rng root(seed);
    Rng ra = root.fork(1);
    Rng rq = root.fork(2);
    Rng rv = root.fork(3);
    actor_ = Actor(config.hidden, ra);
    q_ = QCritic(config.hidden, rq);
    v_ = VCritic(config.hidden, rv);
    actor_opt_ = Adam(actor_.mlp(), config.lr);
    q_opt_ = Adam(q_.mlp(), config.lr);
    v_opt_ = Adam(v_.mlp(), config.lr);
}

RlfLosses RlfAgent::step(std::span<const Transition> batch, Rng& rng)
{
    const Eigen::VectorXd a0 = actor_.mlp().flatten();
    const Eigen::VectorXd q0 = q_.mlp().flatten();
    const Eigen::VectorXd v0 = v_.mlp().flatten();

    RlfLosses out;
    const CriticLosses c = critic_update(q_, q_opt_, v_, v_opt_, actor_, batch, config_.gamma,
                                         config_.standard_v_target, rng);
    std::vector<PathEmbedding> states;
    states.reserve(batch.size());
    for (const Transition& t : batch) {
        states.push_back(t.s);
    }
    out.j_v = c.j_v;
    out.j_q = c.j_q;
    out.j_pi = actor_update(actor_, actor_opt_, q_, states, config_.alpha, rng);
    if (!std::isfinite(out.j_v) || !std::isfinite(out.j_q) || !std::isfinite(out.j_pi) || !actor_.mlp().finite() ||
        !q_.mlp().finite() || !v_.mlp().finite()) {
        actor_.mlp().set_flat(a0);
        q_.mlp().set_flat(q0);
        v_.mlp().set_flat(v0);
        actor_opt_ = Adam(actor_.mlp(), config_.lr);
        q_opt_ = Adam(q_.mlp(), config_.lr);
        v_opt_ = Adam(v_.mlp(), config_.lr);
        out.diverged = true;
    }
    return out;
}

RlfLosses RlfAgent::train(const ReplayBuffer& historical, const ReplayBuffer& predicted, std::size_t steps, Rng& rng)
{
    RlfLosses last;
    if (historical.size() == 0) {
        return last;
    }
    bool diverged = false;
    for (std::size_t i = 0; i < steps; ++i) {
        std::size_t n_hist = config_.batch;
        if (predicted.size() > 0) {
            n_hist = static_cast<std::size_t>(std::llround(config_.historical_fraction * static_cast<double>(config_.batch)));
        }
        std::vector<Transition> batch = historical.sample(n_hist, rng);
        const std::vector<Transition> pred = predicted.sample(config_.batch - n_hist, rng);
        batch.insert(batch.end(), pred.begin(), pred.end());
        if (batch.empty()) {
            break;
        }
        last = step(batch, rng);
        diverged = diverged || last.diverged;
        if (last.diverged) {
            break;
        }
    }
    last.diverged = diverged;
    return last;
}

RlfLosses RlfAgent::train_on(std::span<const Transition> data, std::size_t steps, Rng& rng)
{
    RlfLosses last;
    if (data.empty()) {
        return last;
    }
    bool diverged = false;
    std::vector<Transition> batch(std::min(config_.batch, data.size()));
    for (std::size_t i = 0; i < steps; ++i) {
        for (auto& t : batch) {
            t = data[rng.below(data.size())];
        }
        last = step(batch, rng);
        diverged = diverged || last.diverged;
    }
    last.diverged = diverged;
    return last;
}

void RlfAgent::save(const std::string& path) const
{
    TensorMap t;
    export_mlp(actor_.mlp(), "actor", t);
    export_mlp(q_.mlp(), "q", t);
    export_mlp(v_.mlp(), "v", t);
    save_tensors(t, path);
}

void RlfAgent::load(const std::string& path)
{
    const TensorMap t = load_tensors(path);
    import_mlp(actor_.mlp(), "actor", t);
    import_mlp(q_.mlp(), "q", t);
    import_mlp(v_.mlp(), "v", t);
    actor_opt_ = Adam(actor_.mlp(), config_.lr);
    q_opt_ = Adam(q_.mlp(), config_.lr);
    v_opt_ = Adam(v_.mlp(), config_.lr);
}

}  // namespace predfuzz
