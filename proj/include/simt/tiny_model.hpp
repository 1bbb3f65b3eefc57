#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simt/common.hpp"
#include "simt/corpus.hpp"
#include "simt/nn/layers.hpp"
#include "simt/nn/tape.hpp"
#include "simt/policy_rules.hpp"
#include "simt/translation.hpp"

namespace simt {

enum class TrainingObjective { FullSentence, MultipathWaitK };

inline std::string to_string(TrainingObjective o) {
    return o == TrainingObjective::FullSentence ? "full" : "multipath";
}

inline TrainingObjective parse_objective(std::string_view s) {
    if (s == "full") return TrainingObjective::FullSentence;
    if (s == "multipath") return TrainingObjective::MultipathWaitK;
    throw ConfigError("unknown training objective '" + std::string(s) + "' (expected full|multipath)");
}

struct TinyModelConfig {
    int embed_dim = 32;
    int hidden_dim = 64;
    int num_layers = 2;
    int num_heads = 4;
    double learning_rate = 3e-3;
    int epochs = 40;
    int batch_size = 16;
    std::vector<int> k_candidates = {1, 3, 5, 7, 9};
    std::uint64_t seed = 1;

    void validate() const {
        if (embed_dim < 1 || hidden_dim < 1 || num_layers < 1 || num_heads < 1)
            throw ConfigError("model dimensions must be positive");
        if (embed_dim % num_heads != 0) throw ConfigError("embed_dim must be divisible by num_heads");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
        if (k_candidates.empty()) throw ConfigError("k_candidates must not be empty");
        for (int k : k_candidates)
            if (k < 1) throw ConfigError("every k in k_candidates must be >= 1");
    }

    friend bool operator==(const TinyModelConfig&, const TinyModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TinyModelConfig& c) {
    j = {{"embed_dim", c.embed_dim},   {"hidden_dim", c.hidden_dim},       {"num_layers", c.num_layers},
         {"num_heads", c.num_heads},   {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
         {"batch_size", c.batch_size}, {"k_candidates", c.k_candidates},   {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TinyModelConfig& c) {
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("hidden_dim").get_to(c.hidden_dim);
    j.at("num_layers").get_to(c.num_layers);
    j.at("num_heads").get_to(c.num_heads);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("k_candidates").get_to(c.k_candidates);
    j.at("seed").get_to(c.seed);
}

/// Per-epoch mean token NLL recorded during training.
struct TrainingLog {
    std::vector<double> epoch_loss;
};

/// Serialized tensors: [{"name", "shape": [rows, cols], "data": [...]}].
inline nlohmann::json tensors_to_json(const nn::ParameterList& params) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : params) {
        std::vector<double> data(p.tensor->data(), p.tensor->data() + p.tensor->size());
        arr.push_back({{"name", p.name}, {"shape", {p.tensor->rows(), p.tensor->cols()}}, {"data", data}});
    }
    return arr;
}

inline void tensors_from_json(const nlohmann::json& arr, const nn::ParameterList& params) {
    if (arr.size() != params.size())
        throw DataError("checkpoint has " + std::to_string(arr.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = arr[i];
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<long>>();
        nn::Matrix& m = *params[i].tensor;
        if (name != params[i].name || shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
            throw DataError("checkpoint tensor '" + name + "' does not match model tensor '" + params[i].name + "'");
        const auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != m.size()) throw DataError("checkpoint tensor '" + name + "' truncated");
        std::copy(data.begin(), data.end(), m.data());
    }
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump() << '\n';
    if (!out) throw DataError("error writing " + path);
}

/// Encoder and decoder hidden states for one (source prefix, target) pair.
struct ModelStates {
    nn::Matrix encoder;  // (j [+1 marker]) x d
    nn::Matrix decoder;  // |decoder input| x d, after the final norm
};

/// Small transformer encoder-decoder.
///
/// A complete source gets an <EOS> marker appended on the encoder side. With a
/// causal encoder the state of x_j depends only on x_{<=j}, so one encoder pass
/// serves every prefix; the offline variant attends bidirectionally.
class TinyTranslationModel final : public TranslationModel {
  public:
    TinyTranslationModel(const TinyModelConfig& config, const Vocabulary& vocab, TrainingObjective objective)
        : config_(config), objective_(objective), vocab_size_(vocab.size()), vocab_hash_(vocab.hash()) {
        config_.validate();
        Rng rng(config_.seed);
        const int d = config_.embed_dim;
        const int v = static_cast<int>(vocab_size_);
        embedding_ = nn::xavier_uniform(v, d, rng);
        for (int i = 0; i < config_.num_layers; ++i)
            encoder_.emplace_back(d, config_.hidden_dim, config_.num_heads, rng);
        encoder_norm_ = nn::LayerNorm(d);
        for (int i = 0; i < config_.num_layers; ++i)
            decoder_.emplace_back(d, config_.hidden_dim, config_.num_heads, rng);
        decoder_norm_ = nn::LayerNorm(d);
        output_ = nn::Linear(d, v, rng);
    }

    const TinyModelConfig& config() const noexcept { return config_; }
    TrainingObjective objective() const noexcept { return objective_; }
    bool causal_encoder() const noexcept { return objective_ == TrainingObjective::MultipathWaitK; }
    int width() const noexcept { return config_.embed_dim; }

    std::size_t vocab_size() const override { return vocab_size_; }
    std::uint64_t vocab_hash() const override { return vocab_hash_; }

    nn::ParameterList parameters() {
        nn::ParameterList out;
        out.push_back({"embedding", &embedding_});
        for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect("encoder." + std::to_string(i), out);
        encoder_norm_.collect("encoder.norm", out);
        for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect("decoder." + std::to_string(i), out);
        decoder_norm_.collect("decoder.norm", out);
        output_.collect("output", out);
        return out;
    }

    std::uint64_t parameter_fingerprint() const {
        return nn::fingerprint(const_cast<TinyTranslationModel*>(this)->parameters());
    }

    /// Encoder states for a source prefix (plus the end marker when complete).
    nn::Var encode(nn::Tape& tp, SourcePrefix source) const {
        std::vector<TokenId> ids(source.tokens.begin(), source.tokens.end());
        if (source.complete) ids.push_back(Vocabulary::kEos);
        return encode_ids(tp, ids);
    }

    /// Final-norm decoder states; `cross_mask` empty means every memory row is visible.
    nn::Var decode(nn::Tape& tp, nn::Var memory, std::span<const TokenId> decoder_input,
                   const nn::BoolMask& cross_mask) const {
        nn::Var x = embed(tp, decoder_input);
        for (const auto& layer : decoder_) x = layer(tp, x, memory, cross_mask);
        return decoder_norm_(tp, x);
    }

    nn::Var logits(nn::Tape& tp, nn::Var hidden) const { return output_(tp, hidden); }

    /// Hidden states for (x_{<=j}, [<BOS>] + target[0..T-1)); decoder row t-1 predicts y_t.
    ModelStates states(SourcePrefix source, std::span<const TokenId> target) const {
        nn::Tape tp(false);
        nn::Var mem = encode(tp, source);
        nn::Var dec = decode(tp, mem, decoder_input(target), {});
        return {tp.value(mem), tp.value(dec)};
    }

    DistributionVector distribution(SourcePrefix source, std::span<const TokenId> target_prefix) const override {
        std::vector<TokenId> extended(target_prefix.begin(), target_prefix.end());
        extended.push_back(Vocabulary::kPad);  // placeholder; only the decoder input matters
        auto rows = teacher_forced(source, extended);
        return std::move(rows.back());
    }

    std::vector<DistributionVector> teacher_forced(SourcePrefix source,
                                                   std::span<const TokenId> target) const override {
        if (source.tokens.empty()) throw DataError("empty source prefix");
        nn::Tape tp(false);
        nn::Var mem = encode(tp, source);
        nn::Var dec = decode(tp, mem, decoder_input(target), {});
        return softmax_rows(tp.value(logits(tp, dec)));
    }

    /// Teacher-forced distributions where row t only sees the first visible[t-1]
    /// source states (plus the marker when that count equals N and `complete`).
    /// The encoder runs once over the whole given source.
    std::vector<DistributionVector> masked_teacher_forced(std::span<const TokenId> source, bool complete,
                                                          std::span<const int> visible,
                                                          std::span<const TokenId> target) const {
        nn::Tape tp(false);
        nn::Var mem = encode(tp, {source, complete});
        nn::Var dec = decode(tp, mem, decoder_input(target), visibility_mask(visible, source.size(), complete));
        return softmax_rows(tp.value(logits(tp, dec)));
    }

    /// Summed token NLL of `pair` on a recording tape. With `path` set, row t
    /// sees x_{<=path[t-1]}; otherwise the full source.
    nn::Var loss(nn::Tape& tp, const SentencePair& pair, std::optional<std::span<const int>> path) const {
        nn::Var mem = encode(tp, {pair.source, true});
        nn::BoolMask mask;
        if (path) mask = visibility_mask(*path, pair.source.size(), true);
        nn::Var dec = decode(tp, mem, decoder_input(pair.target), mask);
        return nn::cross_entropy_sum(tp, logits(tp, dec), pair.target);
    }

    void save(const std::string& path) {
        nlohmann::json j;
        j["format"] = "simt-checkpoint";
        j["version"] = 1;
        j["kind"] = "translation";
        j["objective"] = to_string(objective_);
        j["config"] = config_;
        j["vocab_size"] = vocab_size_;
        j["vocab_hash"] = hex64(vocab_hash_);
        j["tensors"] = tensors_to_json(parameters());
        write_json_file(path, j);
    }

    static TinyTranslationModel load(const std::string& path, const Vocabulary& vocab) {
        const auto j = read_json_file(path);
        try {
            if (j.at("format") != "simt-checkpoint" || j.at("kind") != "translation")
                throw DataError(path + ": not a translation checkpoint");
            if (j.at("vocab_hash").get<std::string>() != hex64(vocab.hash()))
                throw DataError(path + ": checkpoint vocabulary hash " + j.at("vocab_hash").get<std::string>() +
                                " does not match vocabulary hash " + hex64(vocab.hash()));
            TinyTranslationModel model(j.at("config").get<TinyModelConfig>(), vocab,
                                       parse_objective(j.at("objective").get<std::string>()));
            tensors_from_json(j.at("tensors"), model.parameters());
            return model;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": malformed checkpoint: " + e.what());
        }
    }

    static std::vector<TokenId> decoder_input(std::span<const TokenId> target) {
        std::vector<TokenId> in;
        in.reserve(target.size());
        in.push_back(Vocabulary::kBos);
        for (std::size_t i = 0; i + 1 < target.size(); ++i) in.push_back(target[i]);
        return in;
    }

  private:
    nn::Var embed(nn::Tape& tp, std::span<const TokenId> ids) const {
        const auto n = static_cast<Eigen::Index>(ids.size());
        nn::Var e = nn::scale(tp, nn::embedding(tp, tp.parameter(embedding_), ids),
                              std::sqrt(static_cast<double>(config_.embed_dim)));
        return nn::add(tp, e, tp.constant(nn::sinusoidal_positions(n, config_.embed_dim)));
    }

    nn::Var encode_ids(nn::Tape& tp, std::span<const TokenId> ids) const {
        nn::Var x = embed(tp, ids);
        const nn::BoolMask mask = causal_encoder() ? nn::causal_mask(static_cast<Eigen::Index>(ids.size())) : nn::BoolMask();
        for (const auto& layer : encoder_) x = layer(tp, x, mask);
        return encoder_norm_(tp, x);
    }

    static nn::BoolMask visibility_mask(std::span<const int> visible, std::size_t n, bool complete) {
        const auto rows = static_cast<Eigen::Index>(visible.size());
        const auto cols = static_cast<Eigen::Index>(n + (complete ? 1 : 0));
        nn::BoolMask m = nn::BoolMask::Constant(rows, cols, false);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const int g = visible[static_cast<std::size_t>(r)];
            if (g < 1 || static_cast<std::size_t>(g) > n) throw DataError("visible source count out of range");
            for (int c = 0; c < g; ++c) m(r, c) = true;
            if (complete && static_cast<std::size_t>(g) == n) m(r, cols - 1) = true;
        }
        return m;
    }

    static std::vector<DistributionVector> softmax_rows(const nn::Matrix& logits) {
        const nn::Matrix logp = nn::log_softmax_rows(logits);
        std::vector<DistributionVector> out(static_cast<std::size_t>(logp.rows()));
        for (Eigen::Index r = 0; r < logp.rows(); ++r) {
            auto& probs = out[static_cast<std::size_t>(r)].probs;
            probs.resize(static_cast<std::size_t>(logp.cols()));
            for (Eigen::Index c = 0; c < logp.cols(); ++c) probs[static_cast<std::size_t>(c)] = std::exp(logp(r, c));
        }
        return out;
    }

    TinyModelConfig config_;
    TrainingObjective objective_;
    std::size_t vocab_size_;
    std::uint64_t vocab_hash_;

    nn::Matrix embedding_;
    std::vector<nn::EncoderLayer> encoder_;
    nn::LayerNorm encoder_norm_;
    std::vector<nn::DecoderLayer> decoder_;
    nn::LayerNorm decoder_norm_;
    nn::Linear output_;
};

namespace detail {

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
}

inline TinyTranslationModel train_translation(const TinyModelConfig& config, std::span<const SentencePair> corpus,
                                              const Vocabulary& vocab, TrainingObjective objective,
                                              TrainingLog* log) {
    config.validate();
    if (corpus.empty()) throw DataError("cannot train on an empty corpus");
    for (const auto& p : corpus) validate_pair(p, vocab.size());

    TinyTranslationModel model(config, vocab, objective);
    const nn::ParameterList params = model.parameters();
    nn::Adam adam(config.learning_rate);
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t batches_per_epoch = (corpus.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                          static_cast<std::size_t>(config.batch_size);
    const double total_steps = static_cast<double>(batches_per_epoch) * config.epochs;
    long step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle(order, rng);
        double epoch_nll = 0.0;
        long epoch_tokens = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            // one k per batch (multi-path wait-k)
            const int k = config.k_candidates[static_cast<std::size_t>(rng.below(config.k_candidates.size()))];
            std::vector<nn::Matrix> grads;
            long tokens = 0;
            for (std::size_t b = start; b < end; ++b) {
                const SentencePair& pair = corpus[order[b]];
                nn::Tape tp;
                nn::Var l;
                if (objective == TrainingObjective::MultipathWaitK) {
                    std::vector<int> path(pair.target.size());
                    for (std::size_t t = 0; t < path.size(); ++t)
                        path[t] = waitk_g(static_cast<int>(t) + 1, k, pair.N());
                    l = model.loss(tp, pair, std::span<const int>(path));
                } else {
                    l = model.loss(tp, pair, std::nullopt);
                }
                tp.backward(l);
                nn::accumulate_gradients(tp, params, grads);
                epoch_nll += tp.value(l)(0, 0);
                tokens += pair.T();
            }
            for (auto& g : grads)
                if (g.size() != 0) g /= static_cast<double>(tokens);
            // linear decay to 10% of the base rate
            adam.set_learning_rate(config.learning_rate * (1.0 - 0.9 * static_cast<double>(step) / total_steps));
            adam.step(params, grads);
            epoch_tokens += tokens;
            ++step;
        }
        const double mean = epoch_nll / static_cast<double>(epoch_tokens);
        if (!std::isfinite(mean)) throw DataError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
        if (log) log->epoch_loss.push_back(mean);
    }
    return model;
}

}  // namespace detail

/// Offline model trained on full-sentence cross-entropy, bidirectional encoder.
inline TinyTranslationModel train_full_sentence(const TinyModelConfig& config, std::span<const SentencePair> corpus,
                                                const Vocabulary& vocab, TrainingLog* log = nullptr) {
    return detail::train_translation(config, corpus, vocab, TrainingObjective::FullSentence, log);
}

/// Multi-path wait-k model: one k ~ Uniform(K) per batch, causal encoder.
inline TinyTranslationModel train_multipath_waitk(const TinyModelConfig& config, std::span<const SentencePair> corpus,
                                                  const Vocabulary& vocab, TrainingLog* log = nullptr) {
    return detail::train_translation(config, corpus, vocab, TrainingObjective::MultipathWaitK, log);
}

/// Mean per-token NLL of the reference along wait-k paths (teacher forcing).
inline double waitk_nll(const TinyTranslationModel& model, std::span<const SentencePair> pairs, int k) {
    double total = 0.0;
    long tokens = 0;
    for (const auto& p : pairs) {
        std::vector<int> g(p.target.size());
        for (std::size_t t = 0; t < g.size(); ++t) g[t] = waitk_g(static_cast<int>(t) + 1, k, p.N());
        const auto rows = model.masked_teacher_forced(p.source, true, g, p.target);
        for (std::size_t t = 0; t < rows.size(); ++t) total += token_nll(rows[t].probs[static_cast<std::size_t>(p.target[t])]);
        tokens += p.T();
    }
    return total / static_cast<double>(tokens);
}

/// Mean per-token NLL of the reference given the full source.
inline double corpus_full_nll(const TranslationModel& model, std::span<const SentencePair> pairs) {
    double total = 0.0;
    long tokens = 0;
    for (const auto& p : pairs) {
        total += sentence_nll(model, p) * p.T();
        tokens += p.T();
    }
    return total / static_cast<double>(tokens);
}

}  // namespace simt
