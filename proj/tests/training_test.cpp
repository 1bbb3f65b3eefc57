#include <gtest/gtest.h>

#include "support.hpp"

using namespace simt;

namespace {

struct DefaultTask {
    SyntheticTask task = generate_synthetic_task(SyntheticTaskConfig{});
    std::span<const SentencePair> train() const { return std::span(task.pairs).first(1800); }
    std::span<const SentencePair> held_out() const { return std::span(task.pairs).subspan(1800); }
};

const DefaultTask& default_task() {
    static const DefaultTask t;
    return t;
}

bool final_epochs_settled(const TrainingLog& log) {
    const auto& l = log.epoch_loss;
    for (std::size_t i = l.size() - 4; i < l.size(); ++i)
        if (l[i] > l[i - 1] * 1.05) return false;
    return true;
}

}  // namespace

TEST(Training, FullSentenceModelFitsTheTask) {
    const auto& d = default_task();
    TrainingLog log;
    const auto model = train_full_sentence(TinyModelConfig{}, d.train(), d.task.vocab, &log);
    ASSERT_EQ(log.epoch_loss.size(), 40u);
    EXPECT_TRUE(final_epochs_settled(log));
    const double nll = corpus_full_nll(model, d.held_out());
    RecordProperty("held_out_nll", std::to_string(nll));
    EXPECT_LT(nll, 0.1);
}

TEST(Training, MultipathModelGainsFromContext) {
    const auto& d = default_task();
    const auto model = train_multipath_waitk(TinyModelConfig{}, d.train(), d.task.vocab);
    const double w1 = waitk_nll(model, d.held_out(), 1);
    const double w9 = waitk_nll(model, d.held_out(), 9);
    RecordProperty("wait1", std::to_string(w1));
    RecordProperty("wait9", std::to_string(w9));
    EXPECT_LT(w9, w1);

    // policy on oracle supervision: the full-source column is learned as ~0
    const SyntheticOracle oracle(d.task.vocab);
    const auto mats = divergence_matrices(oracle, d.train(), DivergenceMeasure::Cosine);
    const auto policy = train_policy(DapPolicyConfig{}, model, d.train(), mats);
    int near_zero = 0, total = 0;
    for (const auto& p : d.held_out()) {
        for (double c : policy.column_confidences(p.source, p.N(), p.target)) {
            near_zero += c <= 0.1;
            ++total;
        }
    }
    RecordProperty("column_n_near_zero", std::to_string(static_cast<double>(near_zero) / total));
    EXPECT_GE(near_zero, 0.95 * total);
}
