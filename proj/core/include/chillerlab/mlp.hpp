#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "chillerlab/rng.hpp"

namespace chillerlab {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One tower: a feature subset feeding shared layers, then separate head
// stacks for the targets this tower predicts.
struct TowerArch {
    std::vector<int> feature_cols;   // into the full feature vector
    std::vector<int> targets;        // global target indices
};

struct NetArch {
    int num_features = 0;
    int num_targets = 0;
    int shared_hidden_layers = 1;
    int per_head_hidden_layers = 2;
    int units = 128;
    std::vector<TowerArch> towers;
};

namespace detail {

template <typename Scalar>
struct Dense {
    MatX<Scalar> W;   // out x in
    VecX<Scalar> b;
    MatX<Scalar> gW;
    VecX<Scalar> gb;
    MatX<Scalar> mW, vW;
    VecX<Scalar> mb, vb;

    void init(int out, int in, Scalar weight_std, Rng& rng) {
        W.resize(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) W(r, c) = weight_std * static_cast<Scalar>(rng.normal());
        b = VecX<Scalar>::Zero(out);
        gW = MatX<Scalar>::Zero(out, in);
        gb = VecX<Scalar>::Zero(out);
        mW = MatX<Scalar>::Zero(out, in);
        vW = MatX<Scalar>::Zero(out, in);
        mb = VecX<Scalar>::Zero(out);
        vb = VecX<Scalar>::Zero(out);
    }

    std::size_t count() const { return static_cast<std::size_t>(W.size() + b.size()); }
};

} // namespace detail

// One ensemble member: multi-tower, multi-head MLP with ReLU hidden layers,
// linear heads, and a hand-rolled Adam optimizer. Scalar is float in
// production and double for finite-difference verification.
template <typename Scalar>
class MemberNet {
public:
    MemberNet() = default;

    MemberNet(const NetArch& arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
        Rng rng(seed);
        towers_.resize(arch.towers.size());
        for (std::size_t ti = 0; ti < arch.towers.size(); ++ti) {
            const auto& ta = arch.towers[ti];
            Tower& tw = towers_[ti];
            const int in0 = static_cast<int>(ta.feature_cols.size());
            if (in0 == 0) throw std::invalid_argument("tower with empty feature set");
            tw.shared.resize(static_cast<std::size_t>(arch.shared_hidden_layers));
            int in = in0;
            for (auto& layer : tw.shared) {
                layer.init(arch.units, in, he_std(in), rng);
                in = arch.units;
            }
            tw.heads.resize(ta.targets.size());
            for (auto& head : tw.heads) {
                head.hidden.resize(static_cast<std::size_t>(arch.per_head_hidden_layers));
                int hin = arch.units;
                for (auto& layer : head.hidden) {
                    layer.init(arch.units, hin, he_std(hin), rng);
                    hin = arch.units;
                }
                head.out.init(1, hin, he_std(hin), rng);
            }
        }
    }

    const NetArch& arch() const { return arch_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit_const([&](const detail::Dense<Scalar>& d) { n += d.count(); });
        return n;
    }

    // Predictions in z-space, one column per global target.
    MatX<Scalar> forward(const MatX<Scalar>& X) const {
        MatX<Scalar> Y = MatX<Scalar>::Zero(X.rows(), arch_.num_targets);
        for (std::size_t ti = 0; ti < towers_.size(); ++ti) {
            const auto& ta = arch_.towers[ti];
            const Tower& tw = towers_[ti];
            MatX<Scalar> H = gather(X, ta.feature_cols);
            for (const auto& layer : tw.shared) H = affine_relu(H, layer);
            for (std::size_t hi = 0; hi < tw.heads.size(); ++hi) {
                MatX<Scalar> G = H;
                for (const auto& layer : tw.heads[hi].hidden) G = affine_relu(G, layer);
                Y.col(ta.targets[hi]) =
                    (G * tw.heads[hi].out.W.transpose()).col(0).array() + tw.heads[hi].out.b(0);
            }
        }
        return Y;
    }

    // Sum over heads of the batch-mean squared error, in z-space.
    Scalar loss(const MatX<Scalar>& X, const MatX<Scalar>& Y_target) const {
        const MatX<Scalar> Y = forward(X);
        const MatX<Scalar> D = Y - Y_target;
        return D.array().square().colwise().sum().sum() / static_cast<Scalar>(X.rows());
    }

    // Forward + backward; leaves gradients in the layers and returns the loss.
    Scalar backward(const MatX<Scalar>& X, const MatX<Scalar>& Y_target) {
        const Scalar inv_b = Scalar(1) / static_cast<Scalar>(X.rows());
        Scalar total_loss = 0;
        for (std::size_t ti = 0; ti < towers_.size(); ++ti) {
            const auto& ta = arch_.towers[ti];
            Tower& tw = towers_[ti];
            const MatX<Scalar> X_m = gather(X, ta.feature_cols);

            std::vector<MatX<Scalar>> shared_in;   // input to each shared layer
            std::vector<MatX<Scalar>> shared_z;    // pre-activations
            MatX<Scalar> H = X_m;
            for (const auto& layer : tw.shared) {
                shared_in.push_back(H);
                MatX<Scalar> Z = affine(H, layer);
                shared_z.push_back(Z);
                H = Z.cwiseMax(Scalar(0));
            }

            MatX<Scalar> dH = MatX<Scalar>::Zero(H.rows(), H.cols());
            for (std::size_t hi = 0; hi < tw.heads.size(); ++hi) {
                Head& head = tw.heads[hi];
                std::vector<MatX<Scalar>> head_in, head_z;
                MatX<Scalar> G = H;
                for (const auto& layer : head.hidden) {
                    head_in.push_back(G);
                    MatX<Scalar> Z = affine(G, layer);
                    head_z.push_back(Z);
                    G = Z.cwiseMax(Scalar(0));
                }
                VecX<Scalar> y = (G * head.out.W.transpose()).col(0);
                y.array() += head.out.b(0);
                VecX<Scalar> d = y - Y_target.col(ta.targets[hi]);
                total_loss += d.squaredNorm() * inv_b;

                VecX<Scalar> dy = Scalar(2) * inv_b * d;
                head.out.gW.row(0) += dy.transpose() * G;
                head.out.gb(0) += dy.sum();
                MatX<Scalar> dG = dy * head.out.W;   // B x units

                for (int li = static_cast<int>(head.hidden.size()) - 1; li >= 0; --li) {
                    auto& layer = head.hidden[static_cast<std::size_t>(li)];
                    const MatX<Scalar> dZ =
                        dG.array() * (head_z[static_cast<std::size_t>(li)].array() > Scalar(0)).template cast<Scalar>();
                    layer.gW += dZ.transpose() * head_in[static_cast<std::size_t>(li)];
                    layer.gb += dZ.colwise().sum().transpose();
                    dG = dZ * layer.W;
                }
                dH += dG;
            }

            for (int li = static_cast<int>(tw.shared.size()) - 1; li >= 0; --li) {
                auto& layer = tw.shared[static_cast<std::size_t>(li)];
                const MatX<Scalar> dZ =
                    dH.array() * (shared_z[static_cast<std::size_t>(li)].array() > Scalar(0)).template cast<Scalar>();
                layer.gW += dZ.transpose() * shared_in[static_cast<std::size_t>(li)];
                layer.gb += dZ.colwise().sum().transpose();
                dH = dZ * layer.W;
            }
        }
        return total_loss;
    }

    void zero_gradients() {
        visit([&](detail::Dense<Scalar>& d) {
            d.gW.setZero();
            d.gb.setZero();
        });
    }

    void adam_step(Scalar lr, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                   Scalar eps = Scalar(1e-8)) {
        ++adam_t_;
        const Scalar bc1 = Scalar(1) - std::pow(beta1, static_cast<Scalar>(adam_t_));
        const Scalar bc2 = Scalar(1) - std::pow(beta2, static_cast<Scalar>(adam_t_));
        visit([&](detail::Dense<Scalar>& d) {
            d.mW = beta1 * d.mW + (Scalar(1) - beta1) * d.gW;
            d.vW = beta2 * d.vW + (Scalar(1) - beta2) * d.gW.array().square().matrix();
            d.W -= (lr * (d.mW / bc1).array() / ((d.vW / bc2).array().sqrt() + eps)).matrix();
            d.mb = beta1 * d.mb + (Scalar(1) - beta1) * d.gb;
            d.vb = beta2 * d.vb + (Scalar(1) - beta2) * d.gb.array().square().matrix();
            d.b -= (lr * (d.mb / bc1).array() / ((d.vb / bc2).array().sqrt() + eps)).matrix();
        });
    }

    std::vector<Scalar> flatten_parameters() const {
        std::vector<Scalar> out;
        out.reserve(parameter_count());
        visit_const([&](const detail::Dense<Scalar>& d) {
            out.insert(out.end(), d.W.data(), d.W.data() + d.W.size());
            out.insert(out.end(), d.b.data(), d.b.data() + d.b.size());
        });
        return out;
    }

    void set_parameters(std::span<const Scalar> params) {
        if (params.size() != parameter_count()) throw std::invalid_argument("parameter vector size mismatch");
        std::size_t off = 0;
        visit([&](detail::Dense<Scalar>& d) {
            std::copy(params.begin() + static_cast<std::ptrdiff_t>(off),
                      params.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(d.W.size())),
                      d.W.data());
            off += static_cast<std::size_t>(d.W.size());
            std::copy(params.begin() + static_cast<std::ptrdiff_t>(off),
                      params.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(d.b.size())),
                      d.b.data());
            off += static_cast<std::size_t>(d.b.size());
        });
    }

    std::vector<Scalar> analytic_gradient(const MatX<Scalar>& X, const MatX<Scalar>& Y) {
        zero_gradients();
        backward(X, Y);
        std::vector<Scalar> out;
        out.reserve(parameter_count());
        visit_const([&](const detail::Dense<Scalar>& d) {
            out.insert(out.end(), d.gW.data(), d.gW.data() + d.gW.size());
            out.insert(out.end(), d.gb.data(), d.gb.data() + d.gb.size());
        });
        return out;
    }

private:
    struct Head {
        std::vector<detail::Dense<Scalar>> hidden;
        detail::Dense<Scalar> out;
    };
    struct Tower {
        std::vector<detail::Dense<Scalar>> shared;
        std::vector<Head> heads;
    };

    static Scalar he_std(int fan_in) { return std::sqrt(Scalar(2) / static_cast<Scalar>(fan_in)); }

    static MatX<Scalar> gather(const MatX<Scalar>& X, const std::vector<int>& cols) {
        MatX<Scalar> out(X.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = X.col(cols[c]);
        return out;
    }

    static MatX<Scalar> affine(const MatX<Scalar>& X, const detail::Dense<Scalar>& d) {
        MatX<Scalar> Z = X * d.W.transpose();
        Z.rowwise() += d.b.transpose();
        return Z;
    }

    static MatX<Scalar> affine_relu(const MatX<Scalar>& X, const detail::Dense<Scalar>& d) {
        return affine(X, d).cwiseMax(Scalar(0));
    }

    template <typename F>
    void visit(F&& f) {
        for (auto& tw : towers_) {
            for (auto& layer : tw.shared) f(layer);
            for (auto& head : tw.heads) {
                for (auto& layer : head.hidden) f(layer);
                f(head.out);
            }
        }
    }

    template <typename F>
    void visit_const(F&& f) const {
        for (const auto& tw : towers_) {
            for (const auto& layer : tw.shared) f(layer);
            for (const auto& head : tw.heads) {
                for (const auto& layer : head.hidden) f(layer);
                f(head.out);
            }
        }
    }

    NetArch arch_;
    std::uint64_t seed_ = 0;
    std::vector<Tower> towers_;
    long adam_t_ = 0;
};

using MemberNetF = MemberNet<float>;
using MemberNetD = MemberNet<double>;

// Closed-form parameter count for an architecture: per tower, shared layers
// over the mask width plus two hidden layers and a linear output per head.
std::size_t expected_parameter_count(const NetArch& arch);

} // namespace chillerlab
