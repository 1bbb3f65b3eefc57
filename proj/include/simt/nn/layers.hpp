#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "simt/common.hpp"
#include "simt/nn/tape.hpp"

namespace simt::nn {

/// Name -> tensor view used by optimizers, checkpoints and fingerprints.
struct NamedParameter {
    std::string name;
    Matrix* tensor;
};

using ParameterList = std::vector<NamedParameter>;

inline Matrix xavier_uniform(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
    return m;
}

inline BoolMask causal_mask(Eigen::Index n) {
    BoolMask m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i;
    return m;
}

/// Standard sinusoidal position table (n x d).
inline Matrix sinusoidal_positions(Eigen::Index n, Eigen::Index d) {
    Matrix p(n, d);
    for (Eigen::Index pos = 0; pos < n; ++pos)
        for (Eigen::Index i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            p(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * rate)
                                     : std::cos(static_cast<double>(pos) * rate);
        }
    return p;
}

struct Linear {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out

    Linear() = default;
    Linear(int in, int out, Rng& rng) : weight(xavier_uniform(in, out, rng)), bias(Matrix::Zero(1, out)) {}

    static Linear zeros(int in, int out) {
        Linear l;
        l.weight = Matrix::Zero(in, out);
        l.bias = Matrix::Zero(1, out);
        return l;
    }

    Var operator()(Tape& tp, Var x) const {
        return add_row(tp, matmul(tp, x, tp.parameter(weight)), tp.parameter(bias));
    }

    void collect(const std::string& prefix, ParameterList& out) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }
};

struct LayerNorm {
    Matrix gain;
    Matrix bias;

    LayerNorm() = default;
    explicit LayerNorm(int d) : gain(Matrix::Ones(1, d)), bias(Matrix::Zero(1, d)) {}

    Var operator()(Tape& tp, Var x) const {
        return layer_norm(tp, x, tp.parameter(gain), tp.parameter(bias));
    }

    void collect(const std::string& prefix, ParameterList& out) {
        out.push_back({prefix + ".gain", &gain});
        out.push_back({prefix + ".bias", &bias});
    }
};

struct MultiHeadAttention {
    Linear query, key, value, output;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(int d, int num_heads, Rng& rng)
        : query(d, d, rng), key(d, d, rng), value(d, d, rng), output(d, d, rng), heads(num_heads) {}

    Var operator()(Tape& tp, Var x, Var memory, const BoolMask& mask) const {
        Var q = query(tp, x);
        Var k = key(tp, memory);
        Var v = value(tp, memory);
        return output(tp, attention(tp, q, k, v, mask, heads));
    }

    void collect(const std::string& prefix, ParameterList& out) {
        query.collect(prefix + ".query", out);
        key.collect(prefix + ".key", out);
        value.collect(prefix + ".value", out);
        output.collect(prefix + ".output", out);
    }
};

struct FeedForward {
    Linear inner, outer;

    FeedForward() = default;
    FeedForward(int d, int hidden, Rng& rng) : inner(d, hidden, rng), outer(hidden, d, rng) {}

    Var operator()(Tape& tp, Var x) const { return outer(tp, relu(tp, inner(tp, x))); }

    void collect(const std::string& prefix, ParameterList& out) {
        inner.collect(prefix + ".inner", out);
        outer.collect(prefix + ".outer", out);
    }
};

/// Pre-norm transformer encoder block.
struct EncoderLayer {
    LayerNorm norm1, norm2;
    MultiHeadAttention self_attention;
    FeedForward ffn;

    EncoderLayer() = default;
    EncoderLayer(int d, int hidden, int heads, Rng& rng)
        : norm1(d), norm2(d), self_attention(d, heads, rng), ffn(d, hidden, rng) {}

    Var operator()(Tape& tp, Var x, const BoolMask& self_mask) const {
        Var h = norm1(tp, x);
        x = add(tp, x, self_attention(tp, h, h, self_mask));
        return add(tp, x, ffn(tp, norm2(tp, x)));
    }

    void collect(const std::string& prefix, ParameterList& out) {
        norm1.collect(prefix + ".norm1", out);
        self_attention.collect(prefix + ".self_attention", out);
        norm2.collect(prefix + ".norm2", out);
        ffn.collect(prefix + ".ffn", out);
    }
};

/// Pre-norm transformer decoder block: causal self-attention, masked cross-attention, FFN.
struct DecoderLayer {
    LayerNorm norm1, norm2, norm3;
    MultiHeadAttention self_attention, cross_attention;
    FeedForward ffn;

    DecoderLayer() = default;
    DecoderLayer(int d, int hidden, int heads, Rng& rng)
        : norm1(d),
          norm2(d),
          norm3(d),
          self_attention(d, heads, rng),
          cross_attention(d, heads, rng),
          ffn(d, hidden, rng) {}

    Var operator()(Tape& tp, Var x, Var memory, const BoolMask& cross_mask) const {
        const BoolMask self_mask = causal_mask(tp.value(x).rows());
        Var h = norm1(tp, x);
        x = add(tp, x, self_attention(tp, h, h, self_mask));
        x = add(tp, x, cross_attention(tp, norm2(tp, x), memory, cross_mask));
        return add(tp, x, ffn(tp, norm3(tp, x)));
    }

    void collect(const std::string& prefix, ParameterList& out) {
        norm1.collect(prefix + ".norm1", out);
        self_attention.collect(prefix + ".self_attention", out);
        norm2.collect(prefix + ".norm2", out);
        cross_attention.collect(prefix + ".cross_attention", out);
        norm3.collect(prefix + ".norm3", out);
        ffn.collect(prefix + ".ffn", out);
    }
};

/// Adam with global-norm gradient clipping.
class Adam {
  public:
    explicit Adam(double learning_rate, double clip_norm = 1.0, double beta1 = 0.9, double beta2 = 0.98,
                  double eps = 1e-9)
        : lr_(learning_rate), clip_(clip_norm), b1_(beta1), b2_(beta2), eps_(eps) {}

    void set_learning_rate(double lr) noexcept { lr_ = lr; }

    /// Applies one update; `grads[i]` pairs with `params[i]` and may be empty (no gradient).
    void step(const ParameterList& params, std::vector<Matrix>& grads) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
                v_.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
            }
        }
        double sq = 0.0;
        for (const auto& g : grads)
            if (g.size() != 0) sq += g.squaredNorm();
        const double norm = std::sqrt(sq);
        const double factor = (clip_ > 0.0 && norm > clip_) ? clip_ / norm : 1.0;
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (grads[i].size() == 0) continue;
            Matrix g = grads[i] * factor;
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
            params[i].tensor->array() -=
                lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        }
    }

  private:
    double lr_, clip_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

/// Adds the tape gradient of every parameter into `sums` (same order as `params`).
inline void accumulate_gradients(const Tape& tp, const ParameterList& params, std::vector<Matrix>& sums) {
    if (sums.size() != params.size()) sums.assign(params.size(), Matrix());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix* g = tp.gradient(*params[i].tensor);
        if (!g) continue;
        if (sums[i].size() == 0)
            sums[i] = *g;
        else
            sums[i] += *g;
    }
}

inline std::uint64_t fingerprint(const ParameterList& params) {
    Fnv1a h;
    for (const auto& p : params) {
        h.update(p.name);
        h.update(p.tensor->data(), static_cast<std::size_t>(p.tensor->size()) * sizeof(double));
    }
    return h.digest();
}

}  // namespace simt::nn
