#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simt/common.hpp"
#include "simt/corpus.hpp"
#include "simt/divergence.hpp"
#include "simt/parallel.hpp"
#include "simt/policy.hpp"
#include "simt/policy_rules.hpp"
#include "simt/translation.hpp"

namespace simt {

/// Fixed schedule: write once j >= g(t; k).
struct WaitKPolicy {
    int k = 1;
};

/// Ground-truth divergences; row = number of emitted tokens + 1, capped at T.
struct OracleMatrixPolicy {
    const DivergenceMatrix* matrix = nullptr;
};

struct LearnedPolicy {
    const PolicyModel* model = nullptr;
};

using Policy = std::variant<WaitKPolicy, OracleMatrixPolicy, LearnedPolicy>;

struct SimulationLimits {
    double lambda = 0.5;
    std::optional<int> r_max;
    int max_target_len = 0;  // 0 means 2N + 5

    int cap(int N) const { return max_target_len > 0 ? max_target_len : 2 * N + 5; }

    void validate() const {
        if (max_target_len < 0) throw ConfigError("max_target_len must be >= 1");
        if (r_max && *r_max < 1) throw ConfigError("r_max must be >= 1");
    }
};

struct SimulationResult {
    int pair_id = 0;
    std::vector<TokenId> hypothesis;
    ReadWritePath path;
    std::vector<double> confidences;
    bool truncated = false;

    friend bool operator==(const SimulationResult&, const SimulationResult&) = default;
};

/// Algorithm-1 style streaming decode of `source` under `policy`.
///
/// Wait-k ignores lambda and r_max: its confidence is the number of source
/// tokens still owed to the schedule, compared against a zero threshold.
inline SimulationResult simulate(const TranslationModel& model, const Policy& policy,
                                 std::span<const TokenId> source, const SimulationLimits& limits, int pair_id = 0) {
    limits.validate();
    if (source.empty()) throw DataError("simulate: empty source");
    const int N = static_cast<int>(source.size());
    double lambda = limits.lambda;
    std::optional<int> r_max = limits.r_max;
    if (std::holds_alternative<WaitKPolicy>(policy)) {
        if (std::get<WaitKPolicy>(policy).k < 1) throw ConfigError("wait-k requires k >= 1");
        lambda = 0.0;
        r_max.reset();
    } else if (const auto* o = std::get_if<OracleMatrixPolicy>(&policy)) {
        if (!o->matrix || o->matrix->N != N) throw DataError("oracle matrix does not match the source length");
    } else if (!std::get<LearnedPolicy>(policy).model) {
        throw ConfigError("learned policy is missing its model");
    }

    auto confidence = [&](int j, std::span<const TokenId> emitted) -> double {
        const int i = static_cast<int>(emitted.size()) + 1;
        return std::visit(
            [&](const auto& p) -> double {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, WaitKPolicy>)
                    return std::max(0, waitk_g(i, p.k, N) - j);
                else if constexpr (std::is_same_v<P, OracleMatrixPolicy>)
                    return p.matrix->at(std::min(i, p.matrix->T), j);
                else
                    return std::max(0.0, p.model->confidence(source, j, emitted));
            },
            policy);
    };

    SimulationResult r;
    r.pair_id = pair_id;
    const int cap = limits.cap(N);
    int j = 1;
    int reads = 1;
    for (;;) {
        if (static_cast<int>(r.hypothesis.size()) >= cap) {
            r.truncated = true;
            break;
        }
        const double c = confidence(j, r.hypothesis);
        r.confidences.push_back(c);
        if (decide(c, lambda, reads, r_max, j, N) == PolicyDecision::Write) {
            const TokenId y = greedy_next(model, source, j, r.hypothesis);
            if (y != Vocabulary::kEos || j >= N) {
                r.hypothesis.push_back(y);
                r.path.g.push_back(j);
                reads = 0;
                if (y == Vocabulary::kEos) break;
                continue;
            }
            // premature <EOS>: read instead
        }
        ++j;
        ++reads;
    }
    return r;
}

/// Simulates every pair; `policy_for(i)` supplies the policy for pairs[i].
template <class PolicyFor>
std::vector<SimulationResult> simulate_corpus(const TranslationModel& model, std::span<const SentencePair> pairs,
                                              PolicyFor&& policy_for, const SimulationLimits& limits,
                                              int workers = 1) {
    return parallel_map(pairs.size(), workers, [&](std::size_t i) {
        return simulate(model, policy_for(i), pairs[i].source, limits, pairs[i].id);
    });
}

/// Orders matrices like `pairs` (by pair_id).
inline std::vector<const DivergenceMatrix*> matrices_for(std::span<const SentencePair> pairs,
                                                         std::span<const DivergenceMatrix> matrices) {
    std::map<int, const DivergenceMatrix*> by_id;
    for (const auto& m : matrices) by_id[m.pair_id] = &m;
    std::vector<const DivergenceMatrix*> out;
    for (const auto& p : pairs) {
        auto it = by_id.find(p.id);
        if (it == by_id.end()) throw DataError("no divergence matrix for pair " + std::to_string(p.id));
        out.push_back(it->second);
    }
    return out;
}

/// Path the policy takes when the target prefix is the reference (no decoding,
/// no <EOS> guard); used for NLL-vs-latency replay.
inline ReadWritePath reference_path(const Policy& policy, const SentencePair& pair, double lambda,
                                    std::optional<int> r_max) {
    const int N = pair.N();
    const int T = pair.T();
    if (const auto* w = std::get_if<WaitKPolicy>(&policy)) return ReadWritePath::waitk(w->k, N, T);
    if (const auto* o = std::get_if<OracleMatrixPolicy>(&policy)) {
        if (!o->matrix || o->matrix->N != N || o->matrix->T != T)
            throw DataError("oracle matrix does not match pair " + std::to_string(pair.id));
        return walk_decisions(T, N, lambda, r_max, [&](int t, int j) { return o->matrix->at(t, j); });
    }
    const PolicyModel* model = std::get<LearnedPolicy>(policy).model;
    if (!model) throw ConfigError("learned policy is missing its model");
    std::vector<std::vector<double>> columns(static_cast<std::size_t>(N));
    return walk_decisions(T, N, lambda, r_max, [&](int t, int j) {
        auto& col = columns[static_cast<std::size_t>(j - 1)];
        if (col.empty()) col = model->column_confidences(pair.source, j, pair.target);
        return std::max(0.0, col[static_cast<std::size_t>(t - 1)]);
    });
}

/// Summed reference NLL along `path`: row t is scored with x_{<=g(t)}.
inline double replay_path_nll_sum(const TranslationModel& model, const SentencePair& pair,
                                  const ReadWritePath& path) {
    if (static_cast<int>(path.size()) != pair.T())
        throw DataError("path length " + std::to_string(path.size()) + " does not match T = " +
                        std::to_string(pair.T()));
    path.validate(pair.N());
    double total = 0.0;
    std::size_t t = 0;
    while (t < path.size()) {
        const int j = path.g[t];
        const auto rows = model.teacher_forced(source_prefix(pair.source, j), pair.target);
        for (; t < path.size() && path.g[t] == j; ++t)
            total += token_nll(rows[t].probs[static_cast<std::size_t>(pair.target[t])]);
    }
    return total;
}

/// Per-token mean of replay_path_nll_sum.
inline double replay_path_nll(const TranslationModel& model, const SentencePair& pair, const ReadWritePath& path) {
    return replay_path_nll_sum(model, pair, path) / static_cast<double>(pair.T());
}

/// One line of a simulation log.
struct SimulationRecord {
    int pair_id = 0;
    double operating_point = 0.0;
    std::optional<int> r_max;
    std::optional<double> al;
    ReadWritePath path;
    std::string hypothesis;
};

inline void write_simulation_log(std::span<const SimulationRecord> records, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write " + file);
    for (const auto& r : records)
        out << r.pair_id << '\t' << format_value(r.operating_point) << '\t' << format_r_max(r.r_max) << '\t'
            << (r.al ? format_value(*r.al) : std::string("NA")) << '\t' << r.path.joined() << '\t' << r.hypothesis
            << '\n';
}

inline std::vector<SimulationRecord> read_simulation_log(const std::string& file) {
    std::vector<SimulationRecord> out;
    const auto lines = read_lines(file);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto fail = [&](const std::string& why) {
            throw DataError(file + ":" + std::to_string(i + 1) + ": " + why);
        };
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (;;) {
            const auto tab = lines[i].find('\t', start);
            cols.push_back(lines[i].substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 6) fail("expected 6 tab-separated columns");
        SimulationRecord r;
        try {
            r.pair_id = std::stoi(cols[0]);
            r.operating_point = std::stod(cols[1]);
            if (cols[2] != "none") r.r_max = std::stoi(cols[2]);
            if (cols[3] != "NA") r.al = std::stod(cols[3]);
            std::size_t s = 0;
            while (s < cols[4].size()) {
                const auto comma = cols[4].find(',', s);
                r.path.g.push_back(std::stoi(cols[4].substr(s, comma - s)));
                if (comma == std::string::npos) break;
                s = comma + 1;
            }
        } catch (const std::exception&) {
            fail("malformed numeric field");
        }
        r.hypothesis = cols[5];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace simt
