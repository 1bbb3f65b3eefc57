#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simt/common.hpp"
#include "simt/corpus.hpp"
#include "simt/divergence.hpp"
#include "simt/policy_rules.hpp"
#include "simt/simulator.hpp"
#include "simt/translation.hpp"

namespace simt {

/// AL = (1/tau) sum_{t<=tau} (g(t) - (t-1) N/T), tau = first t with g(t) = N
/// (or |path| when the source is never exhausted).
inline double average_lagging(const ReadWritePath& path, int N, int T) {
    if (path.size() == 0) throw DataError("average_lagging: empty path");
    if (N < 1 || T < 1) throw DataError("average_lagging: N and T must be >= 1");
    std::size_t tau = path.size();
    for (std::size_t i = 0; i < path.size(); ++i)
        if (path.g[i] >= N) {
            tau = i + 1;
            break;
        }
    double sum = 0.0;
    for (std::size_t i = 0; i < tau; ++i)
        sum += static_cast<double>(path.g[i]) - static_cast<double>(i) * static_cast<double>(N) / static_cast<double>(T);
    return sum / static_cast<double>(tau);
}

inline std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// Corpus BLEU-4 on a 0-100 scale, case-insensitive, no smoothing.
inline double corpus_bleu(std::span<const std::vector<std::string>> hypotheses,
                          std::span<const std::vector<std::string>> references) {
    if (hypotheses.size() != references.size())
        throw DataError("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                        std::to_string(references.size()) + " references");
    std::array<long, 4> matched{}, total{};
    long hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        std::vector<std::string> h, r;
        for (const auto& w : hypotheses[i]) h.push_back(lowercase(w));
        for (const auto& w : references[i]) r.push_back(lowercase(w));
        hyp_len += static_cast<long>(h.size());
        ref_len += static_cast<long>(r.size());
        for (std::size_t n = 1; n <= 4; ++n) {
            std::map<std::vector<std::string>, long> ref_counts;
            for (std::size_t s = 0; s + n <= r.size(); ++s) ++ref_counts[{r.begin() + s, r.begin() + s + n}];
            std::map<std::vector<std::string>, long> hyp_counts;
            for (std::size_t s = 0; s + n <= h.size(); ++s) ++hyp_counts[{h.begin() + s, h.begin() + s + n}];
            for (const auto& [gram, c] : hyp_counts) {
                auto it = ref_counts.find(gram);
                matched[n - 1] += std::min(c, it == ref_counts.end() ? 0L : it->second);
                total[n - 1] += c;
            }
        }
    }
    double log_p = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        if (matched[n] == 0 || total[n] == 0) return 0.0;
        log_p += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n])) / 4.0;
    }
    const double bp =
        hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return std::clamp(100.0 * bp * std::exp(log_p), 0.0, 100.0);
}

/// BLEU over token ids; <EOS>, <BOS> and <PAD> are dropped before scoring.
inline double corpus_bleu(const Vocabulary& vocab, std::span<const std::vector<TokenId>> hypotheses,
                          std::span<const std::vector<TokenId>> references) {
    auto words = [&](std::span<const std::vector<TokenId>> seqs) {
        std::vector<std::vector<std::string>> out;
        for (const auto& s : seqs) out.push_back(split_tokens(vocab.decode(s)));
        return out;
    };
    const auto h = words(hypotheses);
    const auto r = words(references);
    return corpus_bleu(h, r);
}

/// 1 iff target word t aligns to some source word s >= t + k.
inline int anticipation_indicator(int t, const Alignment& alignment, int k) {
    if (t < 1 || k < 1) throw ConfigError("anticipation_indicator: t and k must be >= 1");
    for (const auto& l : alignment.links)
        if (l.t == t && l.s >= t + k) return 1;
    return 0;
}

/// Number of target words (excluding <EOS>) counted by AR.
inline int anticipation_length(const SentencePair& pair) {
    return static_cast<int>(std::count_if(pair.target.begin(), pair.target.end(),
                                          [](TokenId id) { return id != Vocabulary::kEos; }));
}

inline double anticipation_rate(const SentencePair& pair, const Alignment& alignment, int k) {
    alignment.check_bounds(pair.N(), pair.T());
    const int len = anticipation_length(pair);
    if (len == 0) return 0.0;
    int hits = 0;
    for (int t = 1; t <= len; ++t) hits += anticipation_indicator(t, alignment, k);
    return static_cast<double>(hits) / static_cast<double>(len);
}

/// Token-weighted AR_k over a corpus.
inline double corpus_anticipation_rate(std::span<const SentencePair> pairs, std::span<const Alignment> alignments,
                                       int k) {
    if (pairs.size() != alignments.size()) throw DataError("pairs and alignments differ in count");
    double hits = 0.0;
    long len = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const int n = anticipation_length(pairs[i]);
        hits += anticipation_rate(pairs[i], alignments[i], k) * n;
        len += n;
    }
    return len == 0 ? 0.0 : hits / static_cast<double>(len);
}

/// Moves every source index by -offset, dropping links that fall before position 1
/// (e.g. offset 1 removes a leading control token).
inline Alignment shift_source(const Alignment& alignment, int offset) {
    Alignment out;
    for (const auto& l : alignment.links)
        if (l.s - offset >= 1) out.links.insert({l.s - offset, l.t});
    return out;
}

inline SentencePair drop_source_prefix(const SentencePair& pair, int count) {
    if (count < 0 || count >= pair.N()) throw DataError("cannot drop " + std::to_string(count) + " source tokens");
    SentencePair p = pair;
    p.source.erase(p.source.begin(), p.source.begin() + count);
    return p;
}

struct CurvePoint {
    double latency = 0.0;
    double quality = 0.0;
    double operating_point = 0.0;
    int count = 0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct SentenceEvaluation {
    int pair_id = 0;
    double al = 0.0;
    ReadWritePath path;
    std::vector<TokenId> hypothesis;
};

struct EvaluationRun {
    std::string policy;
    double operating_point = 0.0;
    std::vector<SentenceEvaluation> sentences;
    double bleu = 0.0;
    double mean_al = 0.0;
    std::optional<double> mean_nll;
};

/// Decoded runs: AL uses the emitted length, BLEU compares against the references.
inline EvaluationRun evaluate_simulation(std::string policy, double operating_point,
                                         std::span<const SentencePair> pairs,
                                         std::span<const SimulationResult> results, const Vocabulary& vocab) {
    if (pairs.size() != results.size() || pairs.empty())
        throw DataError("evaluate_simulation: need one result per pair");
    EvaluationRun run;
    run.policy = std::move(policy);
    run.operating_point = operating_point;
    std::vector<std::vector<TokenId>> hyps, refs;
    double al = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& r = results[i];
        SentenceEvaluation s{r.pair_id, average_lagging(r.path, pairs[i].N(), static_cast<int>(r.hypothesis.size())),
                             r.path, r.hypothesis};
        al += s.al;
        hyps.push_back(r.hypothesis);
        refs.push_back(pairs[i].target);
        run.sentences.push_back(std::move(s));
    }
    run.mean_al = al / static_cast<double>(pairs.size());
    run.bleu = corpus_bleu(vocab, hyps, refs);
    return run;
}

/// Teacher-forced runs: AL uses the reference length, NLL is the token-weighted mean along each path.
inline EvaluationRun evaluate_replay(std::string policy, double operating_point, const TranslationModel& model,
                                     std::span<const SentencePair> pairs, std::span<const ReadWritePath> paths,
                                     int workers = 1) {
    if (pairs.size() != paths.size() || pairs.empty()) throw DataError("evaluate_replay: need one path per pair");
    const auto sums =
        parallel_map(pairs.size(), workers, [&](std::size_t i) { return replay_path_nll_sum(model, pairs[i], paths[i]); });
    EvaluationRun run;
    run.policy = std::move(policy);
    run.operating_point = operating_point;
    double al = 0.0, nll = 0.0;
    long tokens = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        SentenceEvaluation s{pairs[i].id, average_lagging(paths[i], pairs[i].N(), pairs[i].T()), paths[i], {}};
        al += s.al;
        nll += sums[i];
        tokens += pairs[i].T();
        run.sentences.push_back(std::move(s));
    }
    run.mean_al = al / static_cast<double>(pairs.size());
    run.mean_nll = nll / static_cast<double>(tokens);
    return run;
}

enum class CurveQuality { Bleu, Nll };

/// One point per run, sorted by latency (ties by operating point).
inline std::vector<CurvePoint> build_curve(std::span<const EvaluationRun> runs, CurveQuality quality) {
    if (runs.empty()) throw DataError("build_curve: no runs");
    std::vector<CurvePoint> out;
    for (const auto& r : runs) {
        if (r.sentences.empty()) throw DataError("build_curve: empty run");
        if (quality == CurveQuality::Nll && !r.mean_nll) throw DataError("build_curve: run has no NLL");
        out.push_back({r.mean_al, quality == CurveQuality::Bleu ? r.bleu : *r.mean_nll, r.operating_point,
                       static_cast<int>(r.sentences.size())});
    }
    std::stable_sort(out.begin(), out.end(), [](const CurvePoint& a, const CurvePoint& b) {
        return a.latency != b.latency ? a.latency < b.latency : a.operating_point < b.operating_point;
    });
    return out;
}

/// Piecewise-linear quality at `latency`; nullopt outside the curve's latency range.
inline std::optional<double> interpolate(std::span<const CurvePoint> curve, double latency) {
    if (curve.empty()) return std::nullopt;
    if (latency < curve.front().latency || latency > curve.back().latency) return std::nullopt;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
        const auto& a = curve[i];
        const auto& b = curve[i + 1];
        if (latency >= a.latency && latency <= b.latency) {
            if (b.latency == a.latency) return std::min(a.quality, b.quality);
            const double w = (latency - a.latency) / (b.latency - a.latency);
            return a.quality + w * (b.quality - a.quality);
        }
    }
    return curve.back().quality;
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DataError("correlation needs two equal-length samples");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

/// Tab-separated (operating_point, AL, quality, count).
inline void write_curve(std::span<const CurvePoint> curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& p : curve)
        out << format_value(p.operating_point) << '\t' << format_value(p.latency) << '\t' << format_value(p.quality)
            << '\t' << p.count << '\n';
}

inline std::vector<CurvePoint> read_curve(const std::string& path) {
    std::vector<CurvePoint> out;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cols = split_tokens(lines[i]);
        if (cols.empty()) continue;
        if (cols.size() != 4) throw DataError(path + ":" + std::to_string(i + 1) + ": expected 4 columns");
        try {
            out.push_back({std::stod(cols[1]), std::stod(cols[2]), std::stod(cols[0]), std::stoi(cols[3])});
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(i + 1) + ": malformed number");
        }
    }
    return out;
}

}  // namespace simt
