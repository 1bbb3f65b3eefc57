#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "simt/common.hpp"

namespace simt::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

/// Reverse-mode autodiff recorder for dense matrix expressions.
///
/// Nodes are appended in evaluation order, so a reverse sweep is a valid
/// topological order. A tape built with `recording = false` stores values only.
class Tape {
  public:
    using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const noexcept { return recording_; }

    Var constant(Matrix value) { return push(std::move(value), false, {}); }

    /// Binds a trainable parameter. Binding the same matrix twice yields the same node.
    Var parameter(const Matrix& param) {
        if (auto it = params_.find(&param); it != params_.end()) return Var{it->second};
        Var v = push(param, recording_, {});
        params_.emplace(&param, v.id);
        return v;
    }

    const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    /// Appends a node; `backward` runs only if some input requires a gradient.
    Var push(Matrix value, bool requires_grad, Backward backward) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = recording_ && requires_grad;
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    /// Adds `g` into the gradient of `v` (no-op for constants).
    void accumulate(Var v, const Matrix& g) {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    /// Back-propagates from a 1x1 node.
    void backward(Var loss) {
        if (!recording_) throw Error("backward() on a non-recording tape");
        Node& root = nodes_[static_cast<std::size_t>(loss.id)];
        if (root.value.size() != 1) throw Error("backward() requires a scalar node");
        if (!root.requires_grad) return;
        root.grad = Matrix::Ones(1, 1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.backward || n.grad.size() == 0) continue;
            const Matrix grad = n.grad;
            n.backward(*this, grad);
        }
    }

    /// Gradient of a bound parameter after backward(), or nullptr if it received none.
    const Matrix* gradient(const Matrix& param) const {
        auto it = params_.find(&param);
        if (it == params_.end()) return nullptr;
        const Node& n = nodes_[static_cast<std::size_t>(it->second)];
        return n.grad.size() == 0 ? nullptr : &n.grad;
    }

  private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };

    bool recording_;
    std::vector<Node> nodes_;
    std::unordered_map<const Matrix*, int> params_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline Var matmul(Tape& tp, Var a, Var b) {
    Matrix out = tp.value(a) * tp.value(b);
    const bool rg = tp.requires_grad(a) || tp.requires_grad(b);
    return tp.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
}

inline Var add(Tape& tp, Var a, Var b) {
    if (tp.value(a).rows() != tp.value(b).rows() || tp.value(a).cols() != tp.value(b).cols())
        throw Error("add: shape mismatch");
    Matrix out = tp.value(a) + tp.value(b);
    const bool rg = tp.requires_grad(a) || tp.requires_grad(b);
    return tp.push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

/// a (n x m) + row (1 x m) broadcast over rows.
inline Var add_row(Tape& tp, Var a, Var row) {
    Matrix out = tp.value(a);
    out.rowwise() += tp.value(row).row(0);
    const bool rg = tp.requires_grad(a) || tp.requires_grad(row);
    return tp.push(std::move(out), rg, [a, row](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
    });
}

inline Var scale(Tape& tp, Var a, double s) {
    Matrix out = tp.value(a) * s;
    return tp.push(std::move(out), tp.requires_grad(a),
                   [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

inline Var relu(Tape& tp, Var a) {
    Matrix out = tp.value(a).cwiseMax(0.0);
    return tp.push(std::move(out), tp.requires_grad(a), [a](Tape& t, const Matrix& g) {
        t.accumulate(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(g));
    });
}

inline Var tanh(Tape& tp, Var a) {
    Matrix out = tp.value(a).array().tanh().matrix();
    Matrix y = tp.requires_grad(a) ? out : Matrix();
    return tp.push(std::move(out), tp.requires_grad(a), [a, y = std::move(y)](Tape& t, const Matrix& g) {
        t.accumulate(a, (1.0 - y.array().square()).matrix().cwiseProduct(g));
    });
}

/// Gathers rows of `table` (V x d) for the given ids.
inline Var embedding(Tape& tp, Var table, std::span<const TokenId> ids) {
    const Matrix& tab = tp.value(table);
    Matrix out(static_cast<Eigen::Index>(ids.size()), tab.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tab.rows()) throw DataError("embedding: token id out of range");
        out.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
    }
    std::vector<TokenId> idv(ids.begin(), ids.end());
    return tp.push(std::move(out), tp.requires_grad(table),
                   [table, idv = std::move(idv)](Tape& t, const Matrix& g) {
                       Matrix dt = Matrix::Zero(t.value(table).rows(), t.value(table).cols());
                       for (std::size_t i = 0; i < idv.size(); ++i)
                           dt.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
                       t.accumulate(table, dt);
                   });
}

/// Row-wise layer normalization with learned gain and bias (both 1 x d).
inline Var layer_norm(Tape& tp, Var x, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& xv = tp.value(x);
    const Eigen::Index n = xv.rows(), d = xv.cols();
    Matrix xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Matrix out = xhat.array().rowwise() * tp.value(gain).row(0).array();
    out.rowwise() += tp.value(bias).row(0);
    const bool rg = tp.requires_grad(x) || tp.requires_grad(gain) || tp.requires_grad(bias);
    return tp.push(std::move(out), rg,
                   [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                       Tape& t, const Matrix& g) {
                       if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
                       if (t.requires_grad(gain))
                           t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                       if (!t.requires_grad(x)) return;
                       const double d = static_cast<double>(xhat.cols());
                       Matrix gx = g.array().rowwise() * t.value(gain).row(0).array();
                       Matrix dx(xhat.rows(), xhat.cols());
                       for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                           const double m1 = gx.row(r).sum();
                           const double m2 = gx.row(r).dot(xhat.row(r));
                           dx.row(r) = (gx.row(r).array() * d - m1 - xhat.row(r).array() * m2) *
                                       (inv_std(r) / d);
                       }
                       t.accumulate(x, dx);
                   });
}

/// Multi-head scaled dot-product attention on pre-projected q (n x d), k and v (m x d).
///
/// `mask(i, j)` false blocks query i from key j; an empty mask allows everything.
/// Every query row must keep at least one key.
inline Var attention(Tape& tp, Var q, Var k, Var v, const BoolMask& mask, int heads) {
    const Matrix& Q = tp.value(q);
    const Matrix& K = tp.value(k);
    const Matrix& V = tp.value(v);
    const Eigen::Index n = Q.rows(), m = K.rows(), d = Q.cols();
    if (d % heads != 0) throw ConfigError("attention: width not divisible by heads");
    const bool masked = mask.size() != 0;
    if (masked && (mask.rows() != n || mask.cols() != m)) throw Error("attention: mask shape");
    const Eigen::Index hd = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<Matrix> probs(static_cast<std::size_t>(heads));
    Matrix out(n, d);
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * hd;
        Matrix s = (Q.middleCols(c0, hd) * K.middleCols(c0, hd).transpose()) * inv;
        for (Eigen::Index i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < m; ++j)
                if (!masked || mask(i, j)) mx = std::max(mx, s(i, j));
            if (!std::isfinite(mx)) throw Error("attention: query row with no visible key");
            double z = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                const double e = (!masked || mask(i, j)) ? std::exp(s(i, j) - mx) : 0.0;
                s(i, j) = e;
                z += e;
            }
            s.row(i) /= z;
        }
        out.middleCols(c0, hd) = s * V.middleCols(c0, hd);
        probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    const bool rg = tp.requires_grad(q) || tp.requires_grad(k) || tp.requires_grad(v);
    return tp.push(std::move(out), rg,
                   [q, k, v, heads, hd, inv, probs = std::move(probs)](Tape& t, const Matrix& g) {
                       const Matrix& Qv = t.value(q);
                       const Matrix& Kv = t.value(k);
                       const Matrix& Vv = t.value(v);
                       Matrix dq = Matrix::Zero(Qv.rows(), Qv.cols());
                       Matrix dk = Matrix::Zero(Kv.rows(), Kv.cols());
                       Matrix dv = Matrix::Zero(Vv.rows(), Vv.cols());
                       for (int h = 0; h < heads; ++h) {
                           const Eigen::Index c0 = h * hd;
                           const Matrix& A = probs[static_cast<std::size_t>(h)];
                           const Matrix go = g.middleCols(c0, hd);
                           Matrix dA = go * Vv.middleCols(c0, hd).transpose();
                           dv.middleCols(c0, hd) += A.transpose() * go;
                           Matrix ds = A.cwiseProduct(dA);
                           const Eigen::VectorXd rs = ds.rowwise().sum();
                           ds -= (A.array().colwise() * rs.array()).matrix();
                           ds *= inv;
                           dq.middleCols(c0, hd) += ds * Kv.middleCols(c0, hd);
                           dk.middleCols(c0, hd) += ds.transpose() * Qv.middleCols(c0, hd);
                       }
                       t.accumulate(q, dq);
                       t.accumulate(k, dk);
                       t.accumulate(v, dv);
                   });
}

/// Row-wise log-softmax of a matrix of logits.
inline Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
        out.row(r) = logits.row(r).array() - lse;
    }
    return out;
}

/// Sum over rows of -log softmax(logits)[r, targets[r]].
inline Var cross_entropy_sum(Tape& tp, Var logits, std::span<const TokenId> targets) {
    const Matrix& L = tp.value(logits);
    if (static_cast<std::size_t>(L.rows()) != targets.size()) throw Error("cross_entropy: row count");
    Matrix logp = log_softmax_rows(L);
    double total = 0.0;
    for (std::size_t r = 0; r < targets.size(); ++r) total -= logp(static_cast<Eigen::Index>(r), targets[r]);
    std::vector<TokenId> tg(targets.begin(), targets.end());
    return tp.push(Matrix::Constant(1, 1, total), tp.requires_grad(logits),
                   [logits, logp = std::move(logp), tg = std::move(tg)](Tape& t, const Matrix& g) {
                       Matrix d = logp.array().exp().matrix();
                       for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
                       t.accumulate(logits, d * g(0, 0));
                   });
}

inline double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Sum of binary cross-entropy between sigmoid(z) and continuous labels in [0, 1]; z is n x 1.
inline Var bce_with_logits_sum(Tape& tp, Var z, std::span<const double> labels) {
    const Matrix& Z = tp.value(z);
    if (static_cast<std::size_t>(Z.rows()) != labels.size() || Z.cols() != 1) throw Error("bce: shape");
    double total = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const double x = Z(static_cast<Eigen::Index>(r), 0);
        // log(1 + e^x) - y x, stable for both signs
        total += std::max(x, 0.0) - x * labels[r] + std::log1p(std::exp(-std::abs(x)));
    }
    std::vector<double> y(labels.begin(), labels.end());
    return tp.push(Matrix::Constant(1, 1, total), tp.requires_grad(z),
                   [z, y = std::move(y)](Tape& t, const Matrix& g) {
                       const Matrix& Zv = t.value(z);
                       Matrix d(Zv.rows(), 1);
                       for (Eigen::Index r = 0; r < Zv.rows(); ++r)
                           d(r, 0) = (sigmoid(Zv(r, 0)) - y[static_cast<std::size_t>(r)]) * g(0, 0);
                       t.accumulate(z, d);
                   });
}

/// Sum of squared errors; z is n x 1.
inline Var squared_error_sum(Tape& tp, Var z, std::span<const double> targets) {
    const Matrix& Z = tp.value(z);
    if (static_cast<std::size_t>(Z.rows()) != targets.size() || Z.cols() != 1) throw Error("mse: shape");
    Matrix diff(Z.rows(), 1);
    for (Eigen::Index r = 0; r < Z.rows(); ++r) diff(r, 0) = Z(r, 0) - targets[static_cast<std::size_t>(r)];
    const double total = diff.squaredNorm();
    return tp.push(Matrix::Constant(1, 1, total), tp.requires_grad(z),
                   [z, diff = std::move(diff)](Tape& t, const Matrix& g) {
                       t.accumulate(z, diff * (2.0 * g(0, 0)));
                   });
}

}  // namespace simt::nn
