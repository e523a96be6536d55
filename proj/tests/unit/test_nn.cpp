#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "predfuzz/nn.hpp"

using namespace predfuzz;

namespace {

// L = 0.5 * sum(forward(x) .* w) for a fixed weighting w.
double weighted_sum(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w)
{
    return 0.5 * (net.forward(x).array() * w.array()).sum();
}

}  // namespace

TEST_SUITE("nn")
{
    TEST_CASE("backward matches central differences")
    {
        Rng rng(3);
        Mlp net({5, 7, 6, 3}, rng);
        Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(5, 4, [&] { return rng.normal(); });
        const Eigen::MatrixXd w = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return rng.normal(); });
        for (auto& b : net.biases()) {
            b = Eigen::VectorXd::NullaryExpr(b.size(), [&] { return 0.3 * rng.normal(); });
        }

        Mlp::Tape tape;
        net.forward(x, tape);
        Mlp::Grad g = net.zero_grad();
        const Eigen::MatrixXd dx = net.backward(tape, 0.5 * w, g);
        const Eigen::VectorXd analytic = Mlp::flatten(g);

        const Eigen::VectorXd theta = net.flatten();
        const double h = 1e-6;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            Eigen::VectorXd tp = theta;
            tp[i] += h;
            net.set_flat(tp);
            const double fp = weighted_sum(net, x, w);
            tp[i] -= 2 * h;
            net.set_flat(tp);
            const double fm = weighted_sum(net, x, w);
            const double num = (fp - fm) / (2 * h);
            worst = std::max(worst, std::abs(num - analytic[i]) / std::max(1.0, std::abs(num)));
        }
        net.set_flat(theta);
        CHECK(worst < 1e-6);

        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                Eigen::MatrixXd xp = x;
                xp(r, c) += h;
                Eigen::MatrixXd xm = x;
                xm(r, c) -= h;
                const double num = (weighted_sum(net, xp, w) - weighted_sum(net, xm, w)) / (2 * h);
                CHECK(dx(r, c) == doctest::Approx(num).epsilon(1e-6));
            }
        }
    }

    TEST_CASE("flatten and set_flat round trip")
    {
        Rng rng(5);
        Mlp net({3, 4, 2}, rng);
        CHECK(net.parameter_count() == static_cast<std::size_t>(3 * 4 + 4 + 4 * 2 + 2));
        const Eigen::VectorXd p = net.flatten();
        Mlp other({3, 4, 2}, rng);
        other.set_flat(p);
        CHECK(other.flatten() == p);
        CHECK_THROWS(other.set_flat(Eigen::VectorXd::Zero(3)));
    }

    TEST_CASE("lipschitz bound holds on random pairs")
    {
        Rng rng(11);
        Mlp net({4, 16, 16, 2}, rng);
        const double bound = net.lipschitz_bound();
        for (int i = 0; i < 500; ++i) {
            const Eigen::VectorXd a = Eigen::VectorXd::NullaryExpr(4, [&] { return rng.normal(0, 3); });
            const Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(4, [&] { return rng.normal(0, 3); });
            const double num = (net.forward(a) - net.forward(b)).norm();
            CHECK(num <= bound * (a - b).norm() + 1e-12);
        }
    }

    TEST_CASE("adam fits a linear map")
    {
        Rng rng(2);
        Mlp net({2, 1}, rng);
        Adam opt(net, 0.05);
        const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(2, 64, [&] { return rng.uniform(-1, 1); });
        Eigen::MatrixXd y(1, 64);
        y.row(0) = 3 * x.row(0) - 2 * x.row(1);
        y.array() += 0.5;
        double loss = 0.0;
        for (int step = 0; step < 2000; ++step) {
            Mlp::Tape tape;
            const Eigen::MatrixXd out = net.forward(x, tape);
            const Eigen::MatrixXd diff = out - y;
            loss = diff.squaredNorm() / 64;
            Mlp::Grad g = net.zero_grad();
            net.backward(tape, 2 * diff / 64, g);
            opt.step(net, g);
        }
        CHECK(loss < 1e-6);
        CHECK(net.weights()[0](0, 0) == doctest::Approx(3.0).epsilon(1e-3));
        CHECK(net.weights()[0](0, 1) == doctest::Approx(-2.0).epsilon(1e-3));
        CHECK(net.biases()[0](0) == doctest::Approx(0.5).epsilon(1e-3));
    }

    TEST_CASE("tensor file round trip preserves doubles exactly")
    {
        Rng rng(9);
        Mlp net({3, 5, 2}, rng);
        TensorMap out;
        export_mlp(net, "actor", out);
        out["odd"] = Eigen::MatrixXd::Constant(1, 1, 0.1);
        const auto path = std::filesystem::temp_directory_path() / "predfuzz_tensors.txt";
        save_tensors(out, path.string());
        const TensorMap in = load_tensors(path.string());
        CHECK(in.at("odd")(0, 0) == 0.1);
        Mlp copy({3, 5, 2}, rng);
        import_mlp(copy, "actor", in);
        CHECK(copy.flatten() == net.flatten());
        Mlp wrong({3, 4, 2}, rng);
        CHECK_THROWS(import_mlp(wrong, "actor", in));
        std::filesystem::remove(path);
        CHECK_THROWS(load_tensors(path.string()));
    }

    TEST_CASE("glorot initialisation bounds")
    {
        Rng rng(4);
        Mlp net({10, 30}, rng);
        const double limit = std::sqrt(6.0 / 40.0);
        CHECK(net.weights()[0].cwiseAbs().maxCoeff() <= limit);
        CHECK(net.biases()[0].isZero());
        CHECK(net.finite());
        CHECK_THROWS(Mlp({4}, rng));
    }
}
