#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "simt/simt.hpp"

namespace simt::testing {

/// Emits script[|prefix|] regardless of the source; <EOS> once the script is used up.
class ScriptedModel final : public TranslationModel {
  public:
    ScriptedModel(std::size_t vocab_size, std::vector<TokenId> script) : size_(vocab_size), script_(std::move(script)) {}

    std::size_t vocab_size() const override { return size_; }
    std::uint64_t vocab_hash() const override { return 0; }

    DistributionVector distribution(SourcePrefix, std::span<const TokenId> prefix) const override {
        const TokenId next = prefix.size() < script_.size() ? script_[prefix.size()] : Vocabulary::kEos;
        return DistributionVector::point_mass(size_, next);
    }

  private:
    std::size_t size_;
    std::vector<TokenId> script_;
};

/// Deterministic pseudo-random distributions keyed on the whole query.
class HashedRandomModel final : public TranslationModel {
  public:
    HashedRandomModel(std::size_t vocab_size, std::uint64_t salt, double eos_bias = 0.0)
        : size_(vocab_size), salt_(salt), eos_bias_(eos_bias) {}

    std::size_t vocab_size() const override { return size_; }
    std::uint64_t vocab_hash() const override { return 0; }

    DistributionVector distribution(SourcePrefix source, std::span<const TokenId> prefix) const override {
        Fnv1a h;
        h.update(&salt_, sizeof salt_);
        for (TokenId t : source.tokens) h.update(&t, sizeof t);
        const char complete = source.complete ? 1 : 0;
        h.update(&complete, 1);
        h.update("|");
        for (TokenId t : prefix) h.update(&t, sizeof t);
        Rng rng(h.digest());
        DistributionVector d;
        d.probs.resize(size_);
        double sum = 0.0;
        for (auto& p : d.probs) sum += (p = 0.05 + rng.unit());
        d.probs[Vocabulary::kEos] += eos_bias_ * sum;
        sum = 0.0;
        for (double p : d.probs) sum += p;
        for (auto& p : d.probs) p /= sum;
        return d;
    }

  private:
    std::size_t size_;
    std::uint64_t salt_;
    double eos_bias_;
};

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("simt_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace simt::testing
