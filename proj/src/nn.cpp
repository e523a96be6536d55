#include "predfuzz/nn.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace predfuzz {

namespace {

constexpr const char* kTensorHeader = "predfuzz-tensors v1";

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z)
{
    return (1.0 + (-z.array()).exp()).inverse().matrix();
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes))
{
    if (sizes_.size() < 2) {
        throw std::invalid_argument("an MLP needs at least an input and an output layer");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        if (in <= 0 || out <= 0) {
            throw std::invalid_argument("layer widths must be positive");
        }
        const double limit = std::sqrt(6.0 / (in + out));
        Eigen::MatrixXd w(out, in);
        for (int c = 0; c < in; ++c) {
            for (int r = 0; r < out; ++r) {
                w(r, c) = rng.uniform(-limit, limit);
            }
        }
        w_.push_back(std::move(w));
        b_.push_back(Eigen::VectorXd::Zero(out));
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const
{
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Eigen::MatrixXd z = (w_[l] * h).colwise() + b_[l];
        if (l + 1 < w_.size()) {
            h = z.cwiseProduct(sigmoid(z));
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const
{
    tape.inputs.clear();
    tape.pre.clear();
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        tape.inputs.push_back(h);
        Eigen::MatrixXd z = (w_[l] * h).colwise() + b_[l];
        if (l + 1 < w_.size()) {
            h = z.cwiseProduct(sigmoid(z));
            tape.pre.push_back(std::move(z));
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Mlp::Grad Mlp::zero_grad() const
{
    Grad g;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        g.w.push_back(Eigen::MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
        g.b.push_back(Eigen::VectorXd::Zero(b_[l].size()));
    }
    return g;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_out, Grad& grad) const
{
    Eigen::MatrixXd delta = grad_out;
    for (std::size_t l = w_.size(); l-- > 0;) {
        if (l + 1 < w_.size()) {
            const Eigen::MatrixXd& z = tape.pre[l];
            const Eigen::MatrixXd s = sigmoid(z);
            const Eigen::ArrayXXd slope = s.array() * (1.0 + z.array() * (1.0 - s.array()));
            delta = (delta.array() * slope).matrix();
        }
        grad.w[l].noalias() += delta * tape.inputs[l].transpose();
        grad.b[l] += delta.rowwise().sum();
        delta = w_[l].transpose() * delta;
    }
    return delta;
}

std::size_t Mlp::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        n += static_cast<std::size_t>(w_[l].size() + b_[l].size());
    }
    return n;
}

Eigen::VectorXd Mlp::flatten() const
{
    Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        p.segment(k, w_[l].size()) = Eigen::Map<const Eigen::VectorXd>(w_[l].data(), w_[l].size());
        k += w_[l].size();
        p.segment(k, b_[l].size()) = b_[l];
        k += b_[l].size();
    }
    return p;
}

void Mlp::set_flat(const Eigen::VectorXd& p)
{
    if (static_cast<std::size_t>(p.size()) != parameter_count()) {
        throw std::invalid_argument("parameter vector has the wrong length");
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Eigen::Map<Eigen::VectorXd>(w_[l].data(), w_[l].size()) = p.segment(k, w_[l].size());
        k += w_[l].size();
        b_[l] = p.segment(k, b_[l].size());
        k += b_[l].size();
    }
}

Eigen::VectorXd Mlp::flatten(const Grad& g)
{
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        n += g.w[l].size() + g.b[l].size();
    }
    Eigen::VectorXd p(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        p.segment(k, g.w[l].size()) = Eigen::Map<const Eigen::VectorXd>(g.w[l].data(), g.w[l].size());
        k += g.w[l].size();
        p.segment(k, g.b[l].size()) = g.b[l];
        k += g.b[l].size();
    }
    return p;
}

double Mlp::lipschitz_bound() const
{
    double l = 1.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(w_[i]);
        l *= svd.singularValues()(0);
        if (i + 1 < w_.size()) {
            l *= kSwishSlopeBound;
        }
    }
    return l;
}

bool Mlp::finite() const
{
    for (std::size_t l = 0; l < w_.size(); ++l) {
        if (!w_[l].allFinite() || !b_[l].allFinite()) {
            return false;
        }
    }
    return true;
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_grad()), v_(net.zero_grad())
{
}

void Adam::step(Mlp& net, const Mlp::Grad& g)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * grad;
        v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
        param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t l = 0; l < net.weights().size(); ++l) {
        update(net.weights()[l], g.w[l], m_.w[l], v_.w[l]);
        update(net.biases()[l], g.b[l], m_.b[l], v_.b[l]);
    }
}

void save_tensors(const TensorMap& tensors, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write tensor file: " + path);
    }
    out << kTensorHeader << '\n';
    char buf[64];
    for (const auto& [name, m] : tensors) {
        out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
                if (c > 0) {
                    out << ' ';
                }
                out.write(buf, res.ptr - buf);
            }
            out << '\n';
        }
    }
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

TensorMap load_tensors(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open tensor file: " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line != kTensorHeader) {
        throw std::invalid_argument("not a predfuzz tensor file: " + path);
    }
    TensorMap out;
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    while (in >> name >> rows >> cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                std::string tok;
                in >> tok;
                double v = 0.0;
                const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (res.ec != std::errc{}) {
                    throw std::invalid_argument("bad tensor value '" + tok + "' in " + path);
                }
                m(r, c) = v;
            }
        }
        out.emplace(name, std::move(m));
    }
    return out;
}

void export_mlp(const Mlp& net, const std::string& prefix, TensorMap& out)
{
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        out[prefix + ".w" + std::to_string(l)] = net.weights()[l];
        out[prefix + ".b" + std::to_string(l)] = net.biases()[l];
    }
}

void import_mlp(Mlp& net, const std::string& prefix, const TensorMap& in)
{
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto w = in.find(prefix + ".w" + std::to_string(l));
        const auto b = in.find(prefix + ".b" + std::to_string(l));
        if (w == in.end() || b == in.end()) {
            throw std::invalid_argument("tensor file lacks layer " + std::to_string(l) + " of " + prefix);
        }
        if (w->second.rows() != net.weights()[l].rows() || w->second.cols() != net.weights()[l].cols() ||
            b->second.size() != net.biases()[l].size()) {
            throw std::invalid_argument("tensor shape mismatch for " + prefix);
        }
        net.weights()[l] = w->second;
        net.biases()[l] = Eigen::Map<const Eigen::VectorXd>(b->second.data(), b->second.size());
    }
}

}  // namespace predfuzz
