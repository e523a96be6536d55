#include "predfuzz/vee.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace predfuzz {

namespace {

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x)
{
    return x.max(0.0) + (-x.abs()).exp().log1p();
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x)
{
    return (1.0 + (-x).exp()).inverse();
}

/// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v)
{
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cumsum += u[i];
        const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) {
            theta = t;
        }
    }
    return (v.array() - theta).max(0.0).matrix();
}

}  // namespace

double gaussian_nll(const GaussianPrediction& pred, const Eigen::VectorXd& target)
{
    if (pred.mean.size() != target.size() || pred.var.size() != target.size()) {
        throw std::invalid_argument("prediction and target dimensions differ");
    }
    const Eigen::ArrayXd diff = pred.mean - target;
    return (diff.square() / pred.var.array() + pred.var.array().log()).sum();
}

Eigen::ArrayXXd bound_logvar(const Eigen::ArrayXXd& raw)
{
    const Eigen::ArrayXXd upper = kMaxLogVar - softplus(kMaxLogVar - raw);
    return (kMinLogVar + softplus(upper - kMinLogVar)).min(kMaxLogVar);
}

Eigen::ArrayXXd bound_logvar_slope(const Eigen::ArrayXXd& raw)
{
    const Eigen::ArrayXXd upper = kMaxLogVar - softplus(kMaxLogVar - raw);
    return sigmoid(kMaxLogVar - raw) * sigmoid(upper - kMinLogVar);
}

Eigen::VectorXd vee_input(const PathEmbedding& path, double action)
{
    Eigen::VectorXd x(kVeeInputDim);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        x(static_cast<Eigen::Index>(i)) = path[i];
    }
    x(kVeeInputDim - 1) = action;
    return x;
}

Eigen::VectorXd vee_target(const PathEmbedding& next, double reward)
{
    Eigen::VectorXd y(kVeeTargetDim);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        y(static_cast<Eigen::Index>(i)) = next[i];
    }
    y(kVeeTargetDim - 1) = reward;
    return y;
}

ProbNet::ProbNet(int hidden, int hidden_layers, Rng& rng)
{
    std::vector<int> sizes{kVeeInputDim};
    for (int i = 0; i < hidden_layers; ++i) {
        sizes.push_back(hidden);
    }
    sizes.push_back(2 * kVeeTargetDim);
    net_ = Mlp(sizes, rng);
}

void ProbNet::forward(const Eigen::MatrixXd& x, Eigen::MatrixXd& mean, Eigen::MatrixXd& logvar) const
{
    const Eigen::MatrixXd out = net_.forward(x);
    mean = out.topRows(kVeeTargetDim);
    logvar = bound_logvar(out.bottomRows(kVeeTargetDim).array()).matrix();
}

GaussianPrediction ProbNet::forward(const PathEmbedding& path, double action) const
{
    Eigen::MatrixXd mean;
    Eigen::MatrixXd logvar;
    forward(vee_input(path, action), mean, logvar);
    return {mean.col(0), logvar.col(0).array().exp().matrix()};
}

double ProbNet::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Mlp::Grad* grad,
                     const Eigen::VectorXd* active) const
{
    const double batch = static_cast<double>(x.cols());
    Mlp::Tape tape;
    const Eigen::MatrixXd out = net_.forward(x, tape);
    const Eigen::ArrayXXd raw = out.bottomRows(kVeeTargetDim).array();
    const Eigen::ArrayXXd logvar = bound_logvar(raw);
    const Eigen::ArrayXXd inv_var = (-logvar).exp();
    const Eigen::ArrayXXd diff = out.topRows(kVeeTargetDim).array() - y.array();
    Eigen::ArrayXXd w = Eigen::ArrayXXd::Ones(kVeeTargetDim, x.cols());
    if (active != nullptr) {
        w.colwise() = active->array();
    }
    const double value = (w * (diff.square() * inv_var + logvar)).sum() / batch;
    if (grad != nullptr) {
        Eigen::MatrixXd grad_out(2 * kVeeTargetDim, x.cols());
        grad_out.topRows(kVeeTargetDim) = (w * 2.0 * diff * inv_var / batch).matrix();
        grad_out.bottomRows(kVeeTargetDim) =
            (w * (1.0 - diff.square() * inv_var) / batch * bound_logvar_slope(raw)).matrix();
        *grad = net_.zero_grad();
        net_.backward(tape, grad_out, *grad);
    }
    return value;
}

Ensemble::Ensemble(const VeeConfig& config, std::uint64_t seed) : config_(config)
{
    if (config.members < 1) {
        throw std::invalid_argument("ensemble needs at least one member");
    }
    if (config.batch == 0) {
        throw std::invalid_argument("minibatch size must be positive");
    }
    Rng root(seed);
    for (int m = 0; m < config.members; ++m) {
        Rng init = root.fork(static_cast<std::uint64_t>(m));
        members_.emplace_back(config.hidden, config.hidden_layers, init);
        optimizers_.emplace_back(members_.back().mlp(), config.lr);
    }
}

TrainReport Ensemble::train(std::span<const Transition> data, std::size_t epochs, Rng& rng)
{
    if (data.empty()) {
        throw std::invalid_argument("cannot train on an empty buffer");
    }
    const std::size_t limit = epochs == 0 ? config_.max_epochs : std::min(epochs, config_.max_epochs);
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd xs(kVeeInputDim, n);
    Eigen::MatrixXd ys(kVeeTargetDim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Transition& t = data[static_cast<std::size_t>(i)];
        xs.col(i) = vee_input(t.s, t.a_t);
        ys.col(i) = vee_target(t.s_next, t.reward);
    }

    in_shift_ = xs.rowwise().mean();
    in_scale_ = ((xs.colwise() - in_shift_).array().square().rowwise().mean().sqrt()).matrix();
    for (Eigen::Index i = 0; i < kVeeInputDim; ++i) {
        if (!(in_scale_(i) > 1e-8)) {
            in_scale_(i) = 1.0;
        }
    }
    xs = ((xs.colwise() - in_shift_).array().colwise() / in_scale_.array()).matrix();

    for (Eigen::Index i = 0; i < kVeeTargetDim; ++i) {
        const double lo = ys.row(i).minCoeff();
        const double hi = ys.row(i).maxCoeff();
        active_(i) = hi > lo ? 1.0 : 0.0;
        constant_(i) = lo;
    }

    // Convergence is judged on a fixed subset so epoch losses are comparable.
    Eigen::Index monitor = std::min<Eigen::Index>(n, kMonitorSamples);
    if (config_.max_batches_per_epoch > 0) {
        monitor = std::min(monitor, static_cast<Eigen::Index>(config_.max_batches_per_epoch * config_.batch));
    }
    Eigen::MatrixXd mx(kVeeInputDim, monitor);
    Eigen::MatrixXd my(kVeeTargetDim, monitor);
    for (Eigen::Index c = 0; c < monitor; ++c) {
        const auto i = monitor == n ? c : static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        mx.col(c) = xs.col(i);
        my.col(c) = ys.col(i);
    }

    TrainReport report;
    report.curves.resize(members_.size());
    for (std::size_t m = 0; m < members_.size(); ++m) {
        Rng mrng(rng.next());
        ProbNet& net = members_[m];
        auto& curve = report.curves[m];
        Mlp::Grad grad;
        for (std::size_t epoch = 0; epoch < limit; ++epoch) {
            const Eigen::VectorXd last_good = net.mlp().flatten();
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
            for (auto& i : idx) {
                i = static_cast<Eigen::Index>(mrng.below(static_cast<std::uint64_t>(n)));
            }
            std::size_t batches = (idx.size() + config_.batch - 1) / config_.batch;
            if (config_.max_batches_per_epoch > 0) {
                batches = std::min(batches, config_.max_batches_per_epoch);
            }
            for (std::size_t b = 0; b < batches; ++b) {
                const std::size_t lo = b * config_.batch;
                const std::size_t hi = std::min(idx.size(), lo + config_.batch);
                const auto cols = static_cast<Eigen::Index>(hi - lo);
                Eigen::MatrixXd bx(kVeeInputDim, cols);
                Eigen::MatrixXd by(kVeeTargetDim, cols);
                for (Eigen::Index c = 0; c < cols; ++c) {
                    bx.col(c) = xs.col(idx[lo + static_cast<std::size_t>(c)]);
                    by.col(c) = ys.col(idx[lo + static_cast<std::size_t>(c)]);
                }
                net.loss(bx, by, &grad, &active_);
                optimizers_[m].step(net.mlp(), grad);
            }
            const double epoch_loss = net.loss(mx, my, nullptr, &active_);
            if (!std::isfinite(epoch_loss) || !net.mlp().finite()) {
                net.mlp().set_flat(last_good);
                optimizers_[m] = Adam(net.mlp(), config_.lr);
                report.diverged = true;
                break;
            }
            curve.push_back(epoch_loss);
            // Stop once the best loss of the last window barely beats the best before it.
            const std::size_t w = config_.window;
            if (curve.size() > w) {
                const auto mid = curve.end() - static_cast<std::ptrdiff_t>(w);
                const double before = *std::min_element(curve.begin(), mid);
                const double recent = *std::min_element(mid, curve.end());
                if (before - recent < config_.min_improvement) {
                    break;
                }
            }
        }
    }
    trained_ = true;
    return report;
}

std::vector<GaussianPrediction> Ensemble::member_predictions(const PathEmbedding& path, double action) const
{
    std::vector<GaussianPrediction> out;
    out.reserve(members_.size());
    for (const ProbNet& m : members_) {
        out.push_back(member_forward(m, path, action));
    }
    return out;
}

GaussianPrediction Ensemble::predict(const PathEmbedding& path, double action) const
{
    const auto preds = member_predictions(path, action);
    return moment_match(preds);
}

std::pair<PathEmbedding, double> Ensemble::sample(const PathEmbedding& path, double action, Rng& rng) const
{
    const std::size_t m = rng.below(members_.size());
    return sample_transition(member_forward(members_[m], path, action), rng);
}

GaussianPrediction Ensemble::member_forward(const ProbNet& net, const PathEmbedding& path, double action) const
{
    const Eigen::VectorXd x = (vee_input(path, action) - in_shift_).cwiseQuotient(in_scale_);
    Eigen::MatrixXd mean;
    Eigen::MatrixXd logvar;
    net.forward(x, mean, logvar);
    return fix_constants({mean.col(0), logvar.col(0).array().exp().matrix()});
}

GaussianPrediction Ensemble::fix_constants(GaussianPrediction p) const
{
    const double floor = std::exp(kMinLogVar);
    for (Eigen::Index i = 0; i < kVeeTargetDim; ++i) {
        if (active_(i) == 0.0) {
            p.mean(i) = constant_(i);
            p.var(i) = floor;
        }
    }
    return p;
}

void Ensemble::save(const std::string& path) const
{
    TensorMap t;
    for (std::size_t m = 0; m < members_.size(); ++m) {
        export_mlp(members_[m].mlp(), "member" + std::to_string(m), t);
    }
    t["active"] = active_;
    t["constant"] = constant_;
    t["input_shift"] = in_shift_;
    t["input_scale"] = in_scale_;
    save_tensors(t, path);
}

void Ensemble::load(const std::string& path)
{
    const TensorMap t = load_tensors(path);
    for (std::size_t m = 0; m < members_.size(); ++m) {
        import_mlp(members_[m].mlp(), "member" + std::to_string(m), t);
        optimizers_[m] = Adam(members_[m].mlp(), config_.lr);
    }
    const auto vec = [&](const char* name, Eigen::Index size) -> Eigen::VectorXd {
        const auto it = t.find(name);
        if (it == t.end() || it->second.size() != size) {
            throw std::runtime_error(path + ": missing or malformed tensor " + name);
        }
        return it->second.reshaped();
    };
    active_ = vec("active", kVeeTargetDim);
    constant_ = vec("constant", kVeeTargetDim);
    in_shift_ = vec("input_shift", kVeeInputDim);
    in_scale_ = vec("input_scale", kVeeInputDim);
    trained_ = true;
}

GaussianPrediction moment_match(std::span<const GaussianPrediction> members)
{
    if (members.empty()) {
        throw std::invalid_argument("cannot average an empty mixture");
    }
    const double k = static_cast<double>(members.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(members.front().mean.size());
    for (const auto& m : members) {
        mean += m.mean;
    }
    mean /= k;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (const auto& m : members) {
        var += m.var + (m.mean - mean).cwiseAbs2();
    }
    var /= k;
    return {mean, var};
}

std::pair<PathEmbedding, double> sample_transition(const GaussianPrediction& pred, Rng& rng)
{
    PathEmbedding next{};
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        next[i] = std::clamp(rng.normal(pred.mean(k), std::sqrt(pred.var(k))), 0.0, 1.0);
    }
    const Eigen::Index r = kVeeTargetDim - 1;
    const double reward = std::clamp(rng.normal(pred.mean(r), std::sqrt(pred.var(r))), -1.0, 1.0);
    return {next, reward};
}

double prediction_accuracy(double real, double predicted)
{
    if (real == 0.0) {
        if (predicted == 0.0) {
            return 1.0;
        }
        return 1.0 - std::abs(predicted) / 1e-6;
    }
    return 1.0 - std::abs(real - predicted) / std::abs(real);
}

Eigen::VectorXd mixture_weights(const Eigen::MatrixXd& candidates, const Eigen::VectorXd& target)
{
    const Eigen::Index m = candidates.cols();
    if (m == 0) {
        throw std::invalid_argument("no candidate embeddings");
    }
    if (candidates.rows() != target.size()) {
        throw std::invalid_argument("candidate and target dimensions differ");
    }
    if (m == 1) {
        return Eigen::VectorXd::Ones(1);
    }
    const Eigen::MatrixXd gram = candidates.transpose() * candidates;
    const Eigen::VectorXd ct = candidates.transpose() * target;
    const double lipschitz = 2.0 * std::max(gram.norm(), 1e-12);
    // Accelerated projected gradient on f(q) = ||Cq - t||^2.
    Eigen::VectorXd q = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    Eigen::VectorXd y = q;
    double t = 1.0;
    for (int it = 0; it < 5000; ++it) {
        const Eigen::VectorXd g = 2.0 * (gram * y - ct);
        const Eigen::VectorXd next = project_simplex(y - g / lipschitz);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - q);
        const double change = (next - q).lpNorm<Eigen::Infinity>();
        q = next;
        t = t_next;
        if (change < 1e-13) {
            break;
        }
    }
    return q;
}

AccuracyReport evaluate_accuracy(const Ensemble& ensemble, std::span<const EvalCase> cases)
{
    constexpr auto d = static_cast<Eigen::Index>(kEmbeddingDim);
    AccuracyReport rep;
    double prob_sum = 0.0;
    double reward_sum = 0.0;
    for (const EvalCase& c : cases) {
        if (c.outcomes.empty()) {
            continue;
        }
        const GaussianPrediction pred = ensemble.predict(c.path, c.action);
        const auto k = static_cast<Eigen::Index>(c.outcomes.size());
        // Match first and second moments: E[e] and E[e^2] per component.
        Eigen::MatrixXd cand(2 * d, k);
        for (Eigen::Index j = 0; j < k; ++j) {
            for (Eigen::Index i = 0; i < d; ++i) {
                const double e = c.outcomes[static_cast<std::size_t>(j)].embedding[static_cast<std::size_t>(i)];
                cand(i, j) = e;
                cand(d + i, j) = e * e;
            }
        }
        Eigen::VectorXd target(2 * d);
        target.head(d) = pred.mean.head(d);
        target.tail(d) = pred.var.head(d).array() + pred.mean.head(d).array().square();
        const Eigen::VectorXd q = mixture_weights(cand, target);

        double case_prob = 0.0;
        double case_mass = 0.0;
        double expected_reward = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const EvalOutcome& o = c.outcomes[static_cast<std::size_t>(j)];
            case_prob += o.prob * std::clamp(prediction_accuracy(o.prob, q(j)), 0.0, 1.0);
            case_mass += o.prob;
            expected_reward += o.prob * o.reward;
        }
        prob_sum += case_mass > 0.0 ? case_prob / case_mass : 0.0;
        reward_sum += std::clamp(prediction_accuracy(expected_reward, pred.mean(kVeeTargetDim - 1)), 0.0, 1.0);
        ++rep.cases;
    }
    if (rep.cases > 0) {
        rep.aapp = prob_sum / static_cast<double>(rep.cases);
        rep.aapr = reward_sum / static_cast<double>(rep.cases);
    }
    return rep;
}

}  // namespace predfuzz
