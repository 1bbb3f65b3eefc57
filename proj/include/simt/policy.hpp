#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simt/common.hpp"
#include "simt/corpus.hpp"
#include "simt/divergence.hpp"
#include "simt/nn/layers.hpp"
#include "simt/nn/tape.hpp"
#include "simt/policy_rules.hpp"
#include "simt/tiny_model.hpp"
#include "simt/translation.hpp"

namespace simt {

/// Confidence scorer c(x_{<=j}, y_{<t}); read as a predicted divergence.
class PolicyModel {
  public:
    virtual ~PolicyModel() = default;

    virtual double confidence(std::span<const TokenId> source, int j,
                              std::span<const TokenId> target_prefix) const = 0;

    /// Scores for (t, j), t = 1..|target|, with the reference as target prefix.
    virtual std::vector<double> column_confidences(std::span<const TokenId> source, int j,
                                                   std::span<const TokenId> target) const {
        std::vector<double> out;
        for (std::size_t t = 0; t < target.size(); ++t) out.push_back(confidence(source, j, target.first(t)));
        return out;
    }
};

enum class LossKind { Mse, Bce };

inline std::string to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "bce"; }

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "mse") return LossKind::Mse;
    if (s == "bce") return LossKind::Bce;
    throw ConfigError("unknown loss kind '" + std::string(s) + "' (expected mse|bce)");
}

struct DapPolicyConfig {
    int extra_decoder_layers = 1;
    int head_hidden_dim = 32;
    LossKind loss_kind = LossKind::Bce;
    double learning_rate = 2e-3;
    int epochs = 8;
    int batch_size = 16;
    std::uint64_t seed = 7;

    void validate() const {
        if (extra_decoder_layers < 0) throw ConfigError("extra_decoder_layers must be >= 0");
        if (head_hidden_dim < 1) throw ConfigError("head_hidden_dim must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("policy learning_rate must be positive");
        if (epochs < 1 || batch_size < 1) throw ConfigError("policy epochs and batch_size must be >= 1");
    }

    /// bce needs targets in [0, 1], which only the cosine distance guarantees.
    void check_measure(DivergenceMeasure m) const {
        if (loss_kind == LossKind::Bce && m != DivergenceMeasure::Cosine)
            throw ConfigError("loss_kind=bce requires cosine supervision (" + to_string(m) + " targets may exceed 1)");
    }

    friend bool operator==(const DapPolicyConfig&, const DapPolicyConfig&) = default;
};

inline void to_json(nlohmann::json& j, const DapPolicyConfig& c) {
    j = {{"extra_decoder_layers", c.extra_decoder_layers},
         {"head_hidden_dim", c.head_hidden_dim},
         {"loss_kind", to_string(c.loss_kind)},
         {"learning_rate", c.learning_rate},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DapPolicyConfig& c) {
    j.at("extra_decoder_layers").get_to(c.extra_decoder_layers);
    j.at("head_hidden_dim").get_to(c.head_hidden_dim);
    c.loss_kind = parse_loss_kind(j.at("loss_kind").get<std::string>());
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("seed").get_to(c.seed);
}

/// Learned divergence predictor on top of a frozen translation model:
/// extra decoder layer(s) over the base states, then Linear-tanh-Linear.
///
/// Holds a pointer to the base model, which must outlive the policy.
class DapPolicy final : public PolicyModel {
  public:
    DapPolicy(const DapPolicyConfig& config, const TinyTranslationModel& base)
        : config_(config), base_(&base), base_fingerprint_(base.parameter_fingerprint()) {
        config_.validate();
        Rng rng(config_.seed);
        const auto& bc = base.config();
        for (int i = 0; i < config_.extra_decoder_layers; ++i)
            layers_.emplace_back(bc.embed_dim, bc.hidden_dim, bc.num_heads, rng);
        norm_ = nn::LayerNorm(bc.embed_dim);
        hidden_ = nn::Linear(bc.embed_dim, config_.head_hidden_dim, rng);
        out_ = nn::Linear::zeros(config_.head_hidden_dim, 1);
    }

    const DapPolicyConfig& config() const noexcept { return config_; }
    const TinyTranslationModel& base() const noexcept { return *base_; }
    std::uint64_t base_fingerprint() const noexcept { return base_fingerprint_; }

    nn::ParameterList parameters() {
        nn::ParameterList out;
        for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("extra." + std::to_string(i), out);
        norm_.collect("head.norm", out);
        hidden_.collect("head.hidden", out);
        out_.collect("head.output", out);
        return out;
    }

    std::uint64_t parameter_fingerprint() const { return nn::fingerprint(const_cast<DapPolicy*>(this)->parameters()); }

    /// Raw head output (one row per decoder position) on `tp`.
    nn::Var forward(nn::Tape& tp, const ModelStates& states) const {
        nn::Var x = tp.constant(states.decoder);
        nn::Var mem = tp.constant(states.encoder);
        for (const auto& layer : layers_) x = layer(tp, x, mem, {});
        return out_(tp, nn::tanh(tp, hidden_(tp, norm_(tp, x))));
    }

    double activate(double z) const {
        return config_.loss_kind == LossKind::Bce ? nn::sigmoid(z) : std::max(z, 0.0);
    }

    /// Predictions for every decoder row of `states`.
    std::vector<double> predict_rows(const ModelStates& states) const {
        nn::Tape tp(false);
        const nn::Matrix& z = tp.value(forward(tp, states));
        std::vector<double> out(static_cast<std::size_t>(z.rows()));
        for (Eigen::Index r = 0; r < z.rows(); ++r) out[static_cast<std::size_t>(r)] = activate(z(r, 0));
        return out;
    }

    double confidence(std::span<const TokenId> source, int j, std::span<const TokenId> target_prefix) const override {
        std::vector<TokenId> extended(target_prefix.begin(), target_prefix.end());
        extended.push_back(Vocabulary::kPad);
        return predict_rows(base_->states(source_prefix(source, j), extended)).back();
    }

    std::vector<double> column_confidences(std::span<const TokenId> source, int j,
                                           std::span<const TokenId> target) const override {
        return predict_rows(base_->states(source_prefix(source, j), target));
    }

    void save(const std::string& path) {
        nlohmann::json j;
        j["format"] = "simt-checkpoint";
        j["version"] = 1;
        j["kind"] = "policy";
        j["config"] = config_;
        j["base_hash"] = hex64(base_fingerprint_);
        j["vocab_size"] = base_->vocab_size();
        j["vocab_hash"] = hex64(base_->vocab_hash());
        j["tensors"] = tensors_to_json(parameters());
        write_json_file(path, j);
    }

    static DapPolicy load(const std::string& path, const TinyTranslationModel& base) {
        const auto j = read_json_file(path);
        try {
            if (j.at("format") != "simt-checkpoint" || j.at("kind") != "policy")
                throw DataError(path + ": not a policy checkpoint");
            if (j.at("vocab_hash").get<std::string>() != hex64(base.vocab_hash()))
                throw DataError(path + ": policy vocabulary hash does not match the base model");
            if (j.at("base_hash").get<std::string>() != hex64(base.parameter_fingerprint()))
                throw DataError(path + ": policy was trained against base model " +
                                j.at("base_hash").get<std::string>() + ", got " +
                                hex64(base.parameter_fingerprint()));
            DapPolicy policy(j.at("config").get<DapPolicyConfig>(), base);
            tensors_from_json(j.at("tensors"), policy.parameters());
            return policy;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": malformed checkpoint: " + e.what());
        }
    }

  private:
    DapPolicyConfig config_;
    const TinyTranslationModel* base_;
    std::uint64_t base_fingerprint_;
    std::vector<nn::DecoderLayer> layers_;
    nn::LayerNorm norm_;
    nn::Linear hidden_;
    nn::Linear out_;
};

/// Hidden states the policy reads at (t, j); decoder row t-1 belongs to y_t.
inline ModelStates predict_states(const TinyTranslationModel& base, const SentencePair& pair, int j) {
    return base.states(source_prefix(pair.source, j), pair.target);
}

/// Score for the last decoder row of `states`.
inline double predict_confidence(const DapPolicy& policy, const ModelStates& states) {
    if (states.decoder.cols() != policy.base().config().embed_dim)
        throw DataError("policy/base width mismatch");
    return policy.predict_rows(states).back();
}

/// Pairs each matrix with its sentence by pair_id, checking shapes and loss compatibility.
inline std::vector<std::pair<const SentencePair*, const DivergenceMatrix*>> match_supervision(
    std::span<const SentencePair> pairs, std::span<const DivergenceMatrix> matrices, const DapPolicyConfig& config) {
    std::map<int, const SentencePair*> by_id;
    for (const auto& p : pairs) by_id[p.id] = &p;
    std::vector<std::pair<const SentencePair*, const DivergenceMatrix*>> out;
    for (const auto& m : matrices) {
        config.check_measure(m.measure);
        auto it = by_id.find(m.pair_id);
        if (it == by_id.end()) throw DataError("supervision for unknown pair " + std::to_string(m.pair_id));
        if (it->second->T() != m.T || it->second->N() != m.N)
            throw DataError("supervision shape mismatch for pair " + std::to_string(m.pair_id));
        for (double v : m.values) {
            if (!std::isfinite(v) || v < 0.0) throw DataError("supervision contains an invalid target");
            if (config.loss_kind == LossKind::Bce && v > 1.0)
                throw ConfigError("loss_kind=bce requires targets in [0, 1], got " + format_value(v));
        }
        out.emplace_back(it->second, &m);
    }
    if (out.empty()) throw DataError("no supervision records");
    return out;
}

/// Trains only the policy parameters; the base model is read, never written.
inline DapPolicy train_policy(const DapPolicyConfig& config, const TinyTranslationModel& base,
                              std::span<const SentencePair> pairs, std::span<const DivergenceMatrix> matrices,
                              TrainingLog* log = nullptr) {
    config.validate();
    const auto items = match_supervision(pairs, matrices, config);
    for (const auto& [p, m] : items) validate_pair(*p, base.vocab_size());

    DapPolicy policy(config, base);
    const nn::ParameterList params = policy.parameters();

    // frozen base: its states are computed once
    std::vector<std::vector<ModelStates>> cache(items.size());
    for (std::size_t i = 0; i < items.size(); ++i)
        for (int j = 1; j <= items[i].second->N; ++j) cache[i].push_back(predict_states(base, *items[i].first, j));

    nn::Adam adam(config.learning_rate);
    Rng rng(config.seed ^ 0x5bd1e995ULL);
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    const double total_steps = static_cast<double>((items.size() + bs - 1) / bs) * config.epochs;
    long step = 0;
    std::vector<double> targets;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        detail::shuffle(order, rng);
        double epoch_loss = 0.0;
        long epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::vector<nn::Matrix> grads;
            long count = 0;
            for (std::size_t b = start; b < end; ++b) {
                const auto& m = *items[order[b]].second;
                for (int j = 1; j <= m.N; ++j) {
                    targets.clear();
                    for (int t = 1; t <= m.T; ++t) targets.push_back(m.at(t, j));
                    nn::Tape tp;
                    nn::Var z = policy.forward(tp, cache[order[b]][static_cast<std::size_t>(j - 1)]);
                    nn::Var l = config.loss_kind == LossKind::Bce ? nn::bce_with_logits_sum(tp, z, targets)
                                                                  : nn::squared_error_sum(tp, z, targets);
                    tp.backward(l);
                    nn::accumulate_gradients(tp, params, grads);
                    epoch_loss += tp.value(l)(0, 0);
                    count += m.T;
                }
            }
            for (auto& g : grads)
                if (g.size() != 0) g /= static_cast<double>(count);
            adam.set_learning_rate(config.learning_rate * (1.0 - 0.9 * static_cast<double>(step) / total_steps));
            adam.step(params, grads);
            epoch_count += count;
            ++step;
        }
        const double mean = epoch_loss / static_cast<double>(epoch_count);
        if (!std::isfinite(mean))
            throw DataError("policy training diverged (non-finite loss) at epoch " + std::to_string(epoch));
        if (log) log->epoch_loss.push_back(mean);
    }
    if (base.parameter_fingerprint() != policy.base_fingerprint())
        throw Error("base model parameters changed during policy training");
    return policy;
}

}  // namespace simt
