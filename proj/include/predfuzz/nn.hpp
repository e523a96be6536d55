#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "predfuzz/rng.hpp"

namespace predfuzz {

/// Fully-connected network with Swish on every hidden layer and a linear
/// output layer. Activations are stored column-wise: features x batch.
class Mlp {
public:
    Mlp() = default;
    /// `sizes` lists layer widths from input to output (at least two entries).
    /// Weights are Glorot-uniform, biases zero.
    Mlp(std::vector<int> sizes, Rng& rng);

    struct Tape {
        std::vector<Eigen::MatrixXd> inputs;  ///< input to each linear layer
        std::vector<Eigen::MatrixXd> pre;     ///< pre-activation of each hidden layer
    };

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;

    struct Grad {
        std::vector<Eigen::MatrixXd> w;
        std::vector<Eigen::VectorXd> b;
    };

    Grad zero_grad() const;

    /// Accumulates dL/dparams into `grad` given dL/doutput and returns dL/dinput.
    Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& grad_out, Grad& grad) const;

    std::size_t layer_count() const { return w_.size(); }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }

    std::size_t parameter_count() const;
    Eigen::VectorXd flatten() const;
    void set_flat(const Eigen::VectorXd& p);
    static Eigen::VectorXd flatten(const Grad& g);

    /// Upper bound on the network's Lipschitz constant: product of layer
    /// spectral norms times the Swish slope bound per hidden layer.
    double lipschitz_bound() const;

    bool finite() const;

    std::vector<Eigen::MatrixXd>& weights() { return w_; }
    std::vector<Eigen::VectorXd>& biases() { return b_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return w_; }
    const std::vector<Eigen::VectorXd>& biases() const { return b_; }

private:
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> w_;  ///< out x in
    std::vector<Eigen::VectorXd> b_;
};

/// Upper bound on d/dx [x * sigmoid(x)], whose maximum is about 1.0998.
inline constexpr double kSwishSlopeBound = 1.1;

class Adam {
public:
    Adam() = default;
    explicit Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Gradient-descent step on `net` with gradient `g`.
    void step(Mlp& net, const Mlp::Grad& g);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    Mlp::Grad m_;
    Mlp::Grad v_;
};

/// Named tensor file, text format with a version header:
///   predfuzz-tensors v1
///   <name> <rows> <cols>
///   <row-major values, one row per line>
using TensorMap = std::map<std::string, Eigen::MatrixXd>;

void save_tensors(const TensorMap& tensors, const std::string& path);
TensorMap load_tensors(const std::string& path);

/// Adds `net`'s parameters under `prefix` (prefix.w0, prefix.b0, ...).
void export_mlp(const Mlp& net, const std::string& prefix, TensorMap& out);
/// Loads parameters written by export_mlp into a network of matching shape.
void import_mlp(Mlp& net, const std::string& prefix, const TensorMap& in);

}  // namespace predfuzz
