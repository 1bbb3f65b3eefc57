#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "simt/common.hpp"
#include "simt/corpus.hpp"

namespace simt {

/// Probability vector over the target vocabulary.
struct DistributionVector {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }

    static DistributionVector point_mass(std::size_t size, TokenId id) {
        DistributionVector d;
        d.probs.assign(size, 0.0);
        d.probs[static_cast<std::size_t>(id)] = 1.0;
        return d;
    }

    /// Throws unless entries are finite, non-negative and sum to 1 within `tol`.
    void validate(double tol = 1e-6) const {
        double sum = 0.0;
        for (double p : probs) {
            if (!std::isfinite(p) || p < 0.0) throw DataError("distribution has an invalid entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > tol) throw DataError("distribution does not sum to 1");
    }

    friend bool operator==(const DistributionVector&, const DistributionVector&) = default;
};

/// The first j source tokens, and whether they are the whole source (j = N).
struct SourcePrefix {
    std::span<const TokenId> tokens;
    bool complete = false;
};

/// Conditional next-token distribution provider p(y_t | x_{<=j}, y_{<t}).
///
/// Implementations only see the consumed prefix plus the end-of-stream flag,
/// never the unread source.
class TranslationModel {
  public:
    virtual ~TranslationModel() = default;

    virtual std::size_t vocab_size() const = 0;
    virtual std::uint64_t vocab_hash() const = 0;

    virtual DistributionVector distribution(SourcePrefix source,
                                            std::span<const TokenId> target_prefix) const = 0;

    /// Row t-1 holds p(y_t | source, target[0..t-1)) for t = 1..|target|.
    virtual std::vector<DistributionVector> teacher_forced(SourcePrefix source,
                                                           std::span<const TokenId> target) const {
        std::vector<DistributionVector> rows;
        rows.reserve(target.size());
        for (std::size_t t = 0; t < target.size(); ++t) rows.push_back(distribution(source, target.first(t)));
        return rows;
    }
};

inline SourcePrefix source_prefix(std::span<const TokenId> source, int j) {
    if (j < 1) throw DataError("source prefix must contain at least one token (j = 0)");
    if (static_cast<std::size_t>(j) > source.size())
        throw DataError("source prefix j = " + std::to_string(j) + " exceeds N = " + std::to_string(source.size()));
    return {source.first(static_cast<std::size_t>(j)), static_cast<std::size_t>(j) == source.size()};
}

/// p(y_t | x_{<=j}, y_{<t}); j = N gives the full-context distribution.
inline DistributionVector next_token_distribution(const TranslationModel& model, std::span<const TokenId> source,
                                                  int j, std::span<const TokenId> target_prefix) {
    const SourcePrefix prefix = source_prefix(source, j);
    for (TokenId t : target_prefix)
        if (t == Vocabulary::kEos) throw DataError("target prefix contains <EOS>");
    return model.distribution(prefix, target_prefix);
}

/// p(y_t | x, y_{<t}); the same call as next_token_distribution with j = N.
inline DistributionVector full_context_distribution(const TranslationModel& model, std::span<const TokenId> source,
                                                    std::span<const TokenId> target_prefix) {
    return next_token_distribution(model, source, static_cast<int>(source.size()), target_prefix);
}

/// Argmax with ties going to the smaller id.
inline TokenId argmax(const DistributionVector& d) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
        if (d.probs[i] > d.probs[best]) best = i;
    return static_cast<TokenId>(best);
}

inline TokenId greedy_next(const TranslationModel& model, std::span<const TokenId> source, int j,
                           std::span<const TokenId> target_prefix) {
    return argmax(next_token_distribution(model, source, j, target_prefix));
}

inline double token_nll(double prob) {
    return -std::log(std::max(prob, std::numeric_limits<double>::min()));
}

/// Mean per-token negative log-likelihood of the reference given the full source.
inline double sentence_nll(const TranslationModel& model, const SentencePair& pair) {
    const auto rows = model.teacher_forced({pair.source, true}, pair.target);
    double total = 0.0;
    for (std::size_t t = 0; t < rows.size(); ++t)
        total += token_nll(rows[t].probs[static_cast<std::size_t>(pair.target[t])]);
    return total / static_cast<double>(rows.size());
}

/// Exact posterior of the synthetic COPY/SWAP task.
///
/// Unread source words are i.i.d. uniform over content tokens, so a target
/// position whose source word is unread gets the uniform distribution over
/// content tokens and a position whose word has been read gets a point mass.
/// An incomplete stream is always believed to continue, so <EOS> is predicted
/// only after the source is complete and every content word has been emitted.
class SyntheticOracle final : public TranslationModel {
  public:
    explicit SyntheticOracle(const Vocabulary& vocab)
        : size_(vocab.size()), hash_(vocab.hash()), layout_(SyntheticLayout::of(vocab)) {}

    std::size_t vocab_size() const override { return size_; }
    std::uint64_t vocab_hash() const override { return hash_; }
    const SyntheticLayout& layout() const noexcept { return layout_; }

    /// Source position (1-based) needed for target position t, or 0 for <EOS>.
    int needed_position(SourcePrefix source, int t) const {
        const TaskMode mode = mode_of(source);
        if (source.complete) {
            const int n = static_cast<int>(source.tokens.size()) - 1;
            return t > n ? 0 : synthetic_source_position(mode, n, t);
        }
        return synthetic_source_position(mode, std::numeric_limits<int>::max() - 2, t);
    }

    DistributionVector distribution(SourcePrefix source, std::span<const TokenId> target_prefix) const override {
        if (source.tokens.empty()) throw DataError("oracle: empty source prefix");
        const int t = static_cast<int>(target_prefix.size()) + 1;
        const int s = needed_position(source, t);
        if (s == 0) return DistributionVector::point_mass(size_, Vocabulary::kEos);
        if (static_cast<std::size_t>(s) <= source.tokens.size())
            return DistributionVector::point_mass(size_, source.tokens[static_cast<std::size_t>(s - 1)]);
        DistributionVector d;
        d.probs.assign(size_, 0.0);
        const double u = 1.0 / static_cast<double>(layout_.content_count);
        for (int i = 0; i < layout_.content_count; ++i)
            d.probs[static_cast<std::size_t>(layout_.first_content + i)] = u;
        return d;
    }

  private:
    TaskMode mode_of(SourcePrefix source) const {
        const TokenId m = source.tokens.front();
        if (m == layout_.copy) return TaskMode::Copy;
        if (m == layout_.swap) return TaskMode::Swap;
        throw DataError("oracle: source does not start with a mode token");
    }

    std::size_t size_;
    std::uint64_t hash_;
    SyntheticLayout layout_;
};

}  // namespace simt
