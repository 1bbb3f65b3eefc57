#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "simt/common.hpp"
#include "simt/corpus.hpp"
#include "simt/parallel.hpp"
#include "simt/policy_rules.hpp"
#include "simt/translation.hpp"

namespace simt {

enum class DivergenceMeasure { Euclidean, Kl, Cosine };

inline std::string to_string(DivergenceMeasure m) {
    switch (m) {
        case DivergenceMeasure::Euclidean: return "euclidean";
        case DivergenceMeasure::Kl: return "kl";
        case DivergenceMeasure::Cosine: return "cosine";
    }
    return "?";
}

inline DivergenceMeasure parse_measure(std::string_view s) {
    if (s == "euclidean") return DivergenceMeasure::Euclidean;
    if (s == "kl") return DivergenceMeasure::Kl;
    if (s == "cosine") return DivergenceMeasure::Cosine;
    throw ConfigError("unknown divergence measure '" + std::string(s) + "' (expected euclidean|kl|cosine)");
}

inline constexpr double kKlClamp = 1e-10;

namespace detail {
inline void check_dims(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw DataError("distribution dimension mismatch: " + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()));
}
}  // namespace detail

inline double euclidean_divergence(std::span<const double> p, std::span<const double> q) {
    detail::check_dims(p, q);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
    return std::sqrt(s);
}

/// KL(p || q) with q clamped below at 1e-10 and 0 ln 0 = 0, clipped at 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    detail::check_dims(p, q);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / std::max(q[i], kKlClamp));
    return std::max(s, 0.0);
}

/// 1 - cos(p, q), clipped into [0, 1].
inline double cosine_distance(std::span<const double> p, std::span<const double> q) {
    detail::check_dims(p, q);
    double dot = 0.0, pp = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        dot += p[i] * q[i];
        pp += p[i] * p[i];
        qq += q[i] * q[i];
    }
    if (pp <= 0.0 || qq <= 0.0) throw DataError("cosine distance of a zero vector");
    return std::clamp(1.0 - dot / (std::sqrt(pp) * std::sqrt(qq)), 0.0, 1.0);
}

inline double divergence(DivergenceMeasure m, std::span<const double> p, std::span<const double> q) {
    switch (m) {
        case DivergenceMeasure::Euclidean: return euclidean_divergence(p, q);
        case DivergenceMeasure::Kl: return kl_divergence(p, q);
        case DivergenceMeasure::Cosine: return cosine_distance(p, q);
    }
    throw Error("unreachable");
}

/// T x N grid of D(p_part(t, j), p_full(t)), 1-based accessors.
struct DivergenceMatrix {
    int pair_id = 0;
    int T = 0;
    int N = 0;
    DivergenceMeasure measure = DivergenceMeasure::Cosine;
    std::vector<double> values;  // row-major

    double at(int t, int j) const { return values[index(t, j)]; }
    double& at(int t, int j) { return values[index(t, j)]; }

    friend bool operator==(const DivergenceMatrix&, const DivergenceMatrix&) = default;

  private:
    std::size_t index(int t, int j) const {
        if (t < 1 || t > T || j < 1 || j > N)
            throw DataError("matrix index (" + std::to_string(t) + "," + std::to_string(j) + ") out of range");
        return static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(N) + static_cast<std::size_t>(j - 1);
    }
};

/// Teacher-forced divergence grid; column N uses the same call as p_full.
inline DivergenceMatrix divergence_matrix(const TranslationModel& model, const SentencePair& pair,
                                          DivergenceMeasure measure) {
    validate_pair(pair, model.vocab_size());
    DivergenceMatrix m;
    m.pair_id = pair.id;
    m.T = pair.T();
    m.N = pair.N();
    m.measure = measure;
    m.values.assign(static_cast<std::size_t>(m.T) * static_cast<std::size_t>(m.N), 0.0);
    const std::span<const TokenId> src(pair.source);
    const auto full = model.teacher_forced(source_prefix(src, m.N), pair.target);
    for (int j = 1; j <= m.N; ++j) {
        const auto part_rows = j == m.N ? full : model.teacher_forced(source_prefix(src, j), pair.target);
        for (int t = 1; t <= m.T; ++t)
            m.at(t, j) = divergence(measure, part_rows[static_cast<std::size_t>(t - 1)].probs,
                                    full[static_cast<std::size_t>(t - 1)].probs);
    }
    return m;
}

/// Matrices for many pairs, ordered like the input regardless of `workers`.
inline std::vector<DivergenceMatrix> divergence_matrices(const TranslationModel& model,
                                                         std::span<const SentencePair> pairs,
                                                         DivergenceMeasure measure, int workers = 1) {
    return parallel_map(pairs.size(), workers,
                        [&](std::size_t i) { return divergence_matrix(model, pairs[i], measure); });
}

/// Ground-truth read/write path: write when D(t, j) <= lambda.
inline ReadWritePath threshold_path(const DivergenceMatrix& matrix, double lambda, std::optional<int> r_max) {
    if (!(lambda > 0.0)) throw ConfigError("threshold lambda must be > 0");
    return walk_decisions(matrix.T, matrix.N, lambda, r_max, [&](int t, int j) { return matrix.at(t, j); });
}

struct SupervisionRecord {
    int pair_id = 0;
    int t = 0;
    int j = 0;
    double target_value = 0.0;
};

inline std::vector<SupervisionRecord> supervision_records(const DivergenceMatrix& m) {
    std::vector<SupervisionRecord> out;
    out.reserve(m.values.size());
    for (int t = 1; t <= m.T; ++t)
        for (int j = 1; j <= m.N; ++j) out.push_back({m.pair_id, t, j, m.at(t, j)});
    return out;
}

inline std::string format_value(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

/// Header "pair_id T N measure", then T lines of N tab-separated values.
inline void write_matrices(std::span<const DivergenceMatrix> matrices, std::ostream& out) {
    for (const auto& m : matrices) {
        out << m.pair_id << ' ' << m.T << ' ' << m.N << ' ' << to_string(m.measure) << '\n';
        for (int t = 1; t <= m.T; ++t) {
            for (int j = 1; j <= m.N; ++j) out << (j > 1 ? "\t" : "") << format_value(m.at(t, j));
            out << '\n';
        }
    }
}

inline void write_matrices(std::span<const DivergenceMatrix> matrices, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    write_matrices(matrices, out);
}

inline std::vector<DivergenceMatrix> read_matrices(const std::string& path) {
    const auto lines = read_lines(path);
    std::vector<DivergenceMatrix> out;
    std::size_t i = 0;
    auto fail = [&](const std::string& why) {
        throw DataError(path + ":" + std::to_string(i + 1) + ": " + why);
    };
    while (i < lines.size()) {
        if (lines[i].empty()) {
            ++i;
            continue;
        }
        const auto head = split_tokens(lines[i]);
        if (head.size() != 4) fail("expected 'pair_id T N measure'");
        DivergenceMatrix m;
        try {
            m.pair_id = std::stoi(head[0]);
            m.T = std::stoi(head[1]);
            m.N = std::stoi(head[2]);
        } catch (const std::exception&) {
            fail("non-integer matrix header");
        }
        if (m.T < 1 || m.N < 1) fail("empty matrix");
        m.measure = parse_measure(head[3]);
        ++i;
        for (int t = 0; t < m.T; ++t, ++i) {
            if (i >= lines.size()) fail("truncated matrix");
            const auto cells = split_tokens(lines[i]);
            if (static_cast<int>(cells.size()) != m.N) fail("expected " + std::to_string(m.N) + " values");
            for (const auto& c : cells) {
                try {
                    m.values.push_back(std::stod(c));
                } catch (const std::exception&) {
                    fail("non-numeric value '" + c + "'");
                }
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

inline void write_supervision(std::span<const DivergenceMatrix> matrices, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& m : matrices)
        for (const auto& r : supervision_records(m))
            out << r.pair_id << '\t' << r.t << '\t' << r.j << '\t' << format_value(r.target_value) << '\n';
}

}  // namespace simt
