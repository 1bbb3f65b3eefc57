#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "simt/common.hpp"

namespace simt {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocabulary {
  public:
    static constexpr TokenId kBos = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kUnk = 2;
    static constexpr TokenId kPad = 3;
    static constexpr TokenId kNumSpecials = 4;

    static constexpr std::string_view kSpecialNames[kNumSpecials] = {"<BOS>", "<EOS>", "<UNK>",
                                                                     "<PAD>"};

    Vocabulary() {
        for (auto name : kSpecialNames) id_to_token_.emplace_back(name);
        reindex();
    }

    /// Builds a vocabulary from non-special tokens in id order (first gets id 4).
    static Vocabulary from_tokens(std::span<const std::string> tokens) {
        Vocabulary v;
        for (const auto& tok : tokens) {
            if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos)
                throw DataError("vocabulary token '" + tok + "' is empty or contains whitespace");
            if (v.token_to_id_.contains(tok))
                throw DataError("vocabulary token '" + tok + "' appears twice");
            v.token_to_id_.emplace(tok, static_cast<TokenId>(v.id_to_token_.size()));
            v.id_to_token_.push_back(tok);
        }
        return v;
    }

    std::size_t size() const noexcept { return id_to_token_.size(); }

    bool contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

    /// Id of `token`, or <UNK> when absent.
    TokenId id(std::string_view token) const {
        auto it = token_to_id_.find(std::string(token));
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    const std::string& token(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
            throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(id_to_token_.size()));
        return id_to_token_[static_cast<std::size_t>(id)];
    }

    std::span<const std::string> tokens() const noexcept { return id_to_token_; }

    std::uint64_t hash() const {
        Fnv1a h;
        for (const auto& t : id_to_token_) {
            h.update(t);
            h.update("\n");
        }
        return h.digest();
    }

    std::vector<TokenId> encode(std::span<const std::string> words) const {
        std::vector<TokenId> ids;
        ids.reserve(words.size());
        for (const auto& w : words) ids.push_back(id(w));
        return ids;
    }

    /// Space-joined surface form; specials other than <UNK> are dropped.
    std::string decode(std::span<const TokenId> ids) const {
        std::string out;
        for (TokenId i : ids) {
            if (i == kBos || i == kEos || i == kPad) continue;
            if (!out.empty()) out += ' ';
            out += token(i);
        }
        return out;
    }

    /// One non-special token per line; line index i holds id i + 4.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write vocabulary file " + path);
        for (std::size_t i = kNumSpecials; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
        if (!out) throw DataError("error writing vocabulary file " + path);
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open vocabulary file " + path);
        std::vector<std::string> tokens;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            tokens.push_back(line);
        }
        try {
            return from_tokens(tokens);
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.id_to_token_ == b.id_to_token_;
    }

  private:
    void reindex() {
        token_to_id_.clear();
        for (std::size_t i = 0; i < id_to_token_.size(); ++i)
            token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
    }

    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// Keeps tokens seen at least `min_frequency` times, ordered by descending
/// count with ties broken lexicographically. Special names are never counted.
inline Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus_lines,
                                   int min_frequency) {
    if (min_frequency < 1) throw ConfigError("min_frequency must be >= 1");
    std::map<std::string, long> counts;
    for (const auto& line : corpus_lines)
        for (const auto& tok : line) ++counts[tok];
    if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    for (auto name : Vocabulary::kSpecialNames) counts.erase(std::string(name));

    std::vector<std::pair<std::string, long>> kept;
    for (auto& [tok, n] : counts)
        if (n >= min_frequency) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> order;
    order.reserve(kept.size());
    for (auto& [tok, n] : kept) order.push_back(tok);
    return Vocabulary::from_tokens(order);
}

// ---------------------------------------------------------------------------
// Sentence pairs and alignments
// ---------------------------------------------------------------------------

struct SentencePair {
    int id = 0;
    std::vector<TokenId> source;  // no <BOS>/<EOS>
    std::vector<TokenId> target;  // terminated by <EOS>

    int N() const noexcept { return static_cast<int>(source.size()); }
    int T() const noexcept { return static_cast<int>(target.size()); }

    friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

inline void validate_pair(const SentencePair& p, std::size_t vocab_size) {
    if (p.source.empty()) throw DataError("pair " + std::to_string(p.id) + ": empty source");
    if (p.target.empty() || p.target.back() != Vocabulary::kEos)
        throw DataError("pair " + std::to_string(p.id) + ": target must end with <EOS>");
    auto in_range = [&](TokenId t) { return t >= 0 && static_cast<std::size_t>(t) < vocab_size; };
    for (TokenId t : p.source)
        if (!in_range(t) || t == Vocabulary::kBos || t == Vocabulary::kEos)
            throw DataError("pair " + std::to_string(p.id) + ": invalid source token id " +
                            std::to_string(t));
    for (std::size_t i = 0; i < p.target.size(); ++i)
        if (!in_range(p.target[i]) || (i + 1 < p.target.size() && p.target[i] == Vocabulary::kEos))
            throw DataError("pair " + std::to_string(p.id) + ": invalid target token id " +
                            std::to_string(p.target[i]));
}

struct AlignmentLink {
    int s = 0;  // source position, 1-based
    int t = 0;  // target position, 1-based
    friend auto operator<=>(const AlignmentLink&, const AlignmentLink&) = default;
};

struct Alignment {
    std::set<AlignmentLink> links;

    void check_bounds(int N, int T) const {
        for (const auto& l : links)
            if (l.s < 1 || l.s > N || l.t < 1 || l.t > T)
                throw DataError("alignment link " + std::to_string(l.s - 1) + "-" +
                                std::to_string(l.t - 1) + " outside sentence bounds N=" +
                                std::to_string(N) + " T=" + std::to_string(T));
    }

    friend bool operator==(const Alignment&, const Alignment&) = default;
};

/// Splits on runs of whitespace.
inline std::vector<std::string> split_tokens(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

inline std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
    std::vector<std::vector<std::string>> out;
    for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
    return out;
}

inline std::vector<SentencePair> load_parallel_corpus(const std::string& source_path,
                                                      const std::string& target_path,
                                                      const Vocabulary& vocab) {
    auto src = read_lines(source_path);
    auto tgt = read_lines(target_path);
    if (src.size() != tgt.size())
        throw DataError("line count mismatch: " + source_path + " has " + std::to_string(src.size()) +
                        " lines, " + target_path + " has " + std::to_string(tgt.size()));
    std::vector<SentencePair> pairs;
    pairs.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto s = split_tokens(src[i]);
        auto t = split_tokens(tgt[i]);
        if (s.empty()) throw DataError(source_path + ":" + std::to_string(i + 1) + ": empty line");
        if (t.empty()) throw DataError(target_path + ":" + std::to_string(i + 1) + ": empty line");
        SentencePair p;
        p.id = static_cast<int>(i);
        p.source = vocab.encode(s);
        p.target = vocab.encode(t);
        p.target.push_back(Vocabulary::kEos);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

inline void write_parallel_corpus(std::span<const SentencePair> pairs, const Vocabulary& vocab,
                                  const std::string& source_path, const std::string& target_path) {
    std::ofstream src(source_path, std::ios::binary);
    std::ofstream tgt(target_path, std::ios::binary);
    if (!src) throw DataError("cannot write " + source_path);
    if (!tgt) throw DataError("cannot write " + target_path);
    for (const auto& p : pairs) {
        src << vocab.decode(p.source) << '\n';
        tgt << vocab.decode(p.target) << '\n';
    }
}

/// Parses one line of 0-based "s-t" items into 1-based links.
inline Alignment parse_alignment_line(std::string_view line, std::size_t line_no) {
    Alignment a;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
        if (pos >= line.size()) break;
        std::size_t end = pos;
        while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
        const std::string_view item = line.substr(pos, end - pos);
        auto fail = [&](const std::string& why) {
            throw DataError("alignment line " + std::to_string(line_no) + ", column " +
                            std::to_string(pos + 1) + ": " + why + " in '" + std::string(item) + "'");
        };
        const auto dash = item.find('-');
        if (dash == std::string_view::npos) fail("missing '-'");
        auto parse_index = [&](std::string_view digits) {
            if (digits.empty() || digits.size() > 9 ||
                !std::all_of(digits.begin(), digits.end(),
                             [](char c) { return c >= '0' && c <= '9'; }))
                fail("non-integer index");
            return std::stoi(std::string(digits));
        };
        const int s = parse_index(item.substr(0, dash));
        const int t = parse_index(item.substr(dash + 1));
        a.links.insert({s + 1, t + 1});
        pos = end;
    }
    return a;
}

inline std::vector<Alignment> parse_alignments(const std::string& path) {
    std::vector<Alignment> out;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) out.push_back(parse_alignment_line(line, ++n));
    return out;
}

inline std::string format_alignment(const Alignment& a) {
    std::string out;
    for (const auto& l : a.links) {
        if (!out.empty()) out += ' ';
        out += std::to_string(l.s - 1) + "-" + std::to_string(l.t - 1);
    }
    return out;
}

inline void write_alignments(std::span<const Alignment> alignments, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& a : alignments) out << format_alignment(a) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic COPY/SWAP task
// ---------------------------------------------------------------------------

enum class TaskMode { Copy, Swap };

struct SyntheticTaskConfig {
    int vocab_size = 24;  // including the 4 specials and the 2 mode tokens
    int min_len = 4;      // content length bounds (source length is content + 1)
    int max_len = 10;
    int num_pairs = 2000;
    std::uint64_t seed = 42;

    void validate() const {
        if (vocab_size < 8) throw ConfigError("synthetic vocab_size must be >= 8");
        if (min_len < 2 || min_len > max_len)
            throw ConfigError("synthetic lengths must satisfy 2 <= min_len <= max_len");
        if (num_pairs < 1) throw ConfigError("synthetic num_pairs must be >= 1");
    }
};

/// Token-id layout of a synthetic vocabulary: COPY, SWAP, then content tokens.
struct SyntheticLayout {
    TokenId copy = 4;
    TokenId swap = 5;
    TokenId first_content = 6;
    int content_count = 0;

    bool is_content(TokenId id) const noexcept {
        return id >= first_content && id < first_content + content_count;
    }

    static SyntheticLayout of(const Vocabulary& vocab) {
        SyntheticLayout l;
        if (vocab.size() < 8 || vocab.token(4) != "COPY" || vocab.token(5) != "SWAP")
            throw DataError("vocabulary is not a synthetic COPY/SWAP vocabulary");
        l.content_count = static_cast<int>(vocab.size()) - 6;
        return l;
    }
};

inline Vocabulary synthetic_vocabulary(int vocab_size) {
    std::vector<std::string> tokens = {"COPY", "SWAP"};
    for (int i = 0; i < vocab_size - 6; ++i) tokens.push_back("w" + std::to_string(i));
    return Vocabulary::from_tokens(tokens);
}

/// 1-based source position that target position t (1..n) copies from.
/// Position 1 is the mode token, so content word i lives at i + 1.
inline int synthetic_source_position(TaskMode mode, int n, int t) {
    int word = t;
    if (mode == TaskMode::Swap) {
        if (t % 2 == 1)
            word = (t + 1 <= n) ? t + 1 : t;
        else
            word = t - 1;
    }
    return word + 1;
}

struct SyntheticTask {
    Vocabulary vocab;
    std::vector<SentencePair> pairs;
    std::vector<Alignment> alignments;
};

inline SyntheticTask generate_synthetic_task(const SyntheticTaskConfig& config) {
    config.validate();
    SyntheticTask task;
    task.vocab = synthetic_vocabulary(config.vocab_size);
    const auto layout = SyntheticLayout::of(task.vocab);
    Rng rng(config.seed);
    for (int i = 0; i < config.num_pairs; ++i) {
        const auto mode = rng.below(2) == 0 ? TaskMode::Copy : TaskMode::Swap;
        const int n = static_cast<int>(rng.between(config.min_len, config.max_len));
        SentencePair p;
        p.id = i;
        p.source.push_back(mode == TaskMode::Copy ? layout.copy : layout.swap);
        for (int w = 0; w < n; ++w)
            p.source.push_back(layout.first_content +
                               static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(layout.content_count))));
        Alignment a;
        for (int t = 1; t <= n; ++t) {
            const int s = synthetic_source_position(mode, n, t);
            p.target.push_back(p.source[static_cast<std::size_t>(s - 1)]);
            a.links.insert({s, t});
        }
        p.target.push_back(Vocabulary::kEos);
        task.pairs.push_back(std::move(p));
        task.alignments.push_back(std::move(a));
    }
    return task;
}

/// Mode of a synthetic pair, read from its leading control token.
inline TaskMode synthetic_mode(const SentencePair& p, const SyntheticLayout& layout) {
    if (p.source.empty()) throw DataError("empty source");
    if (p.source.front() == layout.copy) return TaskMode::Copy;
    if (p.source.front() == layout.swap) return TaskMode::Swap;
    throw DataError("pair " + std::to_string(p.id) + " does not start with a mode token");
}

}  // namespace simt
