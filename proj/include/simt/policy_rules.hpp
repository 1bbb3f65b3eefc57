#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "simt/common.hpp"

namespace simt {

enum class PolicyDecision { Read, Write };

/// Wait-k schedule: source tokens read before emitting target t.
inline int waitk_g(int t, int k, int N) {
    if (t < 1 || k < 1 || N < 1) throw ConfigError("waitk_g arguments must be >= 1");
    return std::min(t + k - 1, N);
}

/// Write when the confidence is at or below the threshold, when the
/// continuous-read budget is spent, or when the source is exhausted.
inline PolicyDecision decide(double confidence, double lambda, int continuous_reads, std::optional<int> r_max,
                             int j, int N) {
    if (j > N) throw DataError("decide: j exceeds N");
    if (confidence <= lambda) return PolicyDecision::Write;
    if (r_max && continuous_reads >= *r_max) return PolicyDecision::Write;
    if (j == N) return PolicyDecision::Write;
    return PolicyDecision::Read;
}

/// g(1..T'): number of source tokens consumed before each emitted target token.
struct ReadWritePath {
    std::vector<int> g;

    std::size_t size() const noexcept { return g.size(); }
    int operator()(int t) const { return g.at(static_cast<std::size_t>(t - 1)); }

    bool is_valid(int N) const {
        if (g.empty()) return false;
        if (g.front() < 1 || g.back() > N) return false;
        return std::is_sorted(g.begin(), g.end());
    }

    void validate(int N) const {
        if (!is_valid(N)) throw DataError("invalid read/write path for N = " + std::to_string(N));
    }

    static ReadWritePath waitk(int k, int N, int T) {
        ReadWritePath p;
        for (int t = 1; t <= T; ++t) p.g.push_back(waitk_g(t, k, N));
        return p;
    }

    std::string joined() const {
        std::string s;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(g[i]);
        }
        return s;
    }

    friend bool operator==(const ReadWritePath&, const ReadWritePath&) = default;
};

/// Runs the read/write loop over a fixed target of length T.
///
/// Starts at j = 1 with one read already counted; every write resets the
/// read counter, every read increments it. `score(t, j)` gives the confidence.
template <class Score>
ReadWritePath walk_decisions(int T, int N, double lambda, std::optional<int> r_max, Score&& score,
                             std::vector<double>* confidences = nullptr) {
    if (T < 1 || N < 1) throw DataError("walk_decisions: empty grid");
    if (r_max && *r_max < 1) throw ConfigError("r_max must be >= 1");
    ReadWritePath path;
    int j = 1;
    int reads = 1;
    for (int t = 1; t <= T; ++t) {
        for (;;) {
            const double c = score(t, j);
            if (confidences) confidences->push_back(c);
            if (decide(c, lambda, reads, r_max, j, N) == PolicyDecision::Write) {
                path.g.push_back(j);
                reads = 0;
                break;
            }
            ++j;
            ++reads;
        }
    }
    return path;
}

inline std::string format_r_max(std::optional<int> r_max) { return r_max ? std::to_string(*r_max) : "none"; }

}  // namespace simt
