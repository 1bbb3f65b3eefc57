#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simt/common.hpp"
#include "simt/config.hpp"
#include "simt/corpus.hpp"
#include "simt/divergence.hpp"
#include "simt/metrics.hpp"
#include "simt/policy.hpp"
#include "simt/simulator.hpp"
#include "simt/tiny_model.hpp"
#include "simt/translation.hpp"

namespace simt {

namespace fs = std::filesystem;

/// Fixed output layout under the configured output directory.
struct OutputLayout {
    fs::path root;

    fs::path data(const std::string& f) const { return root / "data" / f; }
    fs::path models(const std::string& f) const { return root / "models" / f; }
    fs::path divergence(const std::string& f) const { return root / "divergence" / f; }
    fs::path sim(const std::string& f) const { return root / "sim" / f; }
    fs::path curves(const std::string& f) const { return root / "curves" / f; }
    fs::path manifests(const std::string& f) const { return root / "manifests" / f; }

    void create() const {
        for (const char* d : {"data", "models", "divergence", "sim", "curves", "manifests"})
            fs::create_directories(root / d);
    }
};

/// Options shared by every subcommand; unset values keep the config file's.
struct CliOverrides {
    std::string config_path;
    std::string out;
    std::vector<double> lambdas;
    std::vector<int> ks;
    std::string r_max;
    std::string measure;
    std::string objective;
    std::string model;
    std::string policy;
    std::vector<std::string> logs;
    std::string name;
};

namespace cli_detail {

struct Split {
    std::vector<SentencePair> pairs;
    std::vector<Alignment> alignments;  // empty when none are available
};

struct Context {
    ExperimentConfig cfg;
    OutputLayout out;
    RunManifest manifest;
    std::ostream* log = nullptr;

    void input(const fs::path& p) { manifest.add_input(p.string()); }
    void output(const fs::path& p) { manifest.add_output(p.string()); }

    void require(const fs::path& p, const std::string& what) const {
        if (!fs::exists(p)) throw DataError("missing " + what + ": " + p.string());
    }

    Vocabulary vocabulary() {
        if (!cfg.vocab_path.empty()) {
            require(cfg.vocab_path, "vocabulary");
            input(cfg.vocab_path);
            return Vocabulary::load(cfg.vocab_path);
        }
        if (!cfg.source_path.empty()) {
            require(cfg.source_path, "source corpus");
            require(cfg.target_path, "target corpus");
            auto lines = read_token_lines(cfg.source_path);
            auto tgt = read_token_lines(cfg.target_path);
            lines.insert(lines.end(), tgt.begin(), tgt.end());
            return build_vocabulary(lines, 1);
        }
        const auto p = out.data("vocab.txt");
        require(p, "vocabulary (run gen-data first)");
        input(p);
        return Vocabulary::load(p.string());
    }

    /// "train" or "test"; an external corpus is split with its last held_out lines as test.
    Split split(const std::string& name, const Vocabulary& vocab) {
        Split s;
        if (!cfg.source_path.empty()) {
            require(cfg.source_path, "source corpus");
            require(cfg.target_path, "target corpus");
            input(cfg.source_path);
            input(cfg.target_path);
            auto all = load_parallel_corpus(cfg.source_path, cfg.target_path, vocab);
            std::vector<Alignment> align;
            if (!cfg.alignment_path.empty()) {
                require(cfg.alignment_path, "alignments");
                input(cfg.alignment_path);
                align = parse_alignments(cfg.alignment_path);
                if (align.size() != all.size())
                    throw DataError("alignment file has " + std::to_string(align.size()) + " lines, corpus has " +
                                    std::to_string(all.size()));
            }
            const auto held = static_cast<std::size_t>(cfg.held_out);
            if (held >= all.size()) throw ConfigError("held_out leaves no training data");
            const std::size_t cut = all.size() - held;
            const std::size_t lo = name == "train" ? 0 : cut;
            const std::size_t hi = name == "train" ? cut : all.size();
            for (std::size_t i = lo; i < hi; ++i) {
                SentencePair p = all[i];
                p.id = static_cast<int>(i - lo);
                s.pairs.push_back(std::move(p));
                if (!align.empty()) s.alignments.push_back(align[i]);
            }
            return s;
        }
        const auto src = out.data(name + ".src");
        const auto tgt = out.data(name + ".tgt");
        const auto aln = out.data(name + ".align");
        require(src, name + " source (run gen-data first)");
        require(tgt, name + " target");
        input(src);
        input(tgt);
        s.pairs = load_parallel_corpus(src.string(), tgt.string(), vocab);
        if (fs::exists(aln)) {
            input(aln);
            s.alignments = parse_alignments(aln.string());
        }
        for (const auto& p : s.pairs) validate_pair(p, vocab.size());
        return s;
    }

    TinyTranslationModel translation_model(const std::string& objective, const Vocabulary& vocab) {
        const auto p = out.models("mt_" + objective + ".json");
        require(p, objective + " translation checkpoint (run train-mt first)");
        input(p);
        return TinyTranslationModel::load(p.string(), vocab);
    }

    std::vector<DivergenceMatrix> matrices(const std::string& split) {
        const auto p = out.divergence(split + ".matrix");
        require(p, "divergence matrices (run gen-divergence first)");
        input(p);
        return read_matrices(p.string());
    }

    void finish(const std::string& command) {
        manifest.finished = utc_timestamp();
        const auto p = out.manifests(command + ".json");
        std::ofstream f(p, std::ios::binary);
        if (!f) throw DataError("cannot write " + p.string());
        f << manifest.to_json().dump(2) << '\n';
    }
};

inline void write_loss_log(const TrainingLog& log, const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    for (std::size_t i = 0; i < log.epoch_loss.size(); ++i) f << i + 1 << '\t' << format_value(log.epoch_loss[i]) << '\n';
}

inline void cmd_gen_data(Context& c) {
    auto task = generate_synthetic_task(c.cfg.task);
    const auto cut = task.pairs.size() - static_cast<std::size_t>(c.cfg.held_out);
    auto part = [&](std::size_t lo, std::size_t hi, const std::string& name) {
        std::vector<SentencePair> pairs(task.pairs.begin() + static_cast<long>(lo), task.pairs.begin() + static_cast<long>(hi));
        std::vector<Alignment> align(task.alignments.begin() + static_cast<long>(lo),
                                     task.alignments.begin() + static_cast<long>(hi));
        const auto src = c.out.data(name + ".src"), tgt = c.out.data(name + ".tgt"), aln = c.out.data(name + ".align");
        write_parallel_corpus(pairs, task.vocab, src.string(), tgt.string());
        write_alignments(align, aln.string());
        for (const auto& p : {src, tgt, aln}) c.output(p);
    };
    part(0, cut, "train");
    part(cut, task.pairs.size(), "test");
    const auto v = c.out.data("vocab.txt");
    task.vocab.save(v.string());
    c.output(v);
    *c.log << "generated " << cut << " train and " << task.pairs.size() - cut << " test pairs (vocab "
           << task.vocab.size() << ")\n";
}

inline void cmd_train_mt(Context& c) {
    const Vocabulary vocab = c.vocabulary();
    const Split train = c.split("train", vocab);
    Split test;
    if (c.cfg.source_path.empty() && fs::exists(c.out.data("test.src"))) test = c.split("test", vocab);
    TrainingLog log;
    const std::string name = to_string(c.cfg.objective);
    auto model = detail::train_translation(c.cfg.model, train.pairs, vocab, c.cfg.objective, &log);
    const auto ckpt = c.out.models("mt_" + name + ".json");
    const auto loss = c.out.models("mt_" + name + ".loss.tsv");
    model.save(ckpt.string());
    write_loss_log(log, loss);
    c.output(ckpt);
    c.output(loss);
    *c.log << "trained " << name << " model: final train NLL " << format_value(log.epoch_loss.back()) << "\n";
    if (!test.pairs.empty()) {
        *c.log << "held-out full-source NLL " << format_value(corpus_full_nll(model, test.pairs)) << "\n";
        for (int k : c.cfg.model.k_candidates)
            *c.log << "held-out wait-" << k << " NLL " << format_value(waitk_nll(model, test.pairs, k)) << "\n";
    }
}

inline std::unique_ptr<TranslationModel> make_model(Context& c, const std::string& which, const Vocabulary& vocab) {
    if (which == "oracle") return std::make_unique<SyntheticOracle>(vocab);
    if (which == "full" || which == "multipath")
        return std::make_unique<TinyTranslationModel>(c.translation_model(which, vocab));
    throw ConfigError("unknown model '" + which + "' (expected oracle|full|multipath)");
}

inline void cmd_gen_divergence(Context& c, const std::string& which) {
    const Vocabulary vocab = c.vocabulary();
    const auto model = make_model(c, which, vocab);
    for (const std::string split : {"train", "test"}) {
        if (split == "test" && c.cfg.source_path.empty() && !fs::exists(c.out.data("test.src"))) continue;
        const Split s = c.split(split, vocab);
        if (s.pairs.empty()) continue;
        const auto mats = divergence_matrices(*model, s.pairs, c.cfg.measure, c.cfg.workers);
        double worst = 0.0;
        for (const auto& m : mats)
            for (int t = 1; t <= m.T; ++t) worst = std::max(worst, std::abs(m.at(t, m.N)));
        if (worst > 1e-6) throw DataError("self-divergence check failed: column N reaches " + format_value(worst));
        const auto mp = c.out.divergence(split + ".matrix");
        const auto sp = c.out.divergence(split + ".supervision.tsv");
        write_matrices(mats, mp.string());
        write_supervision(mats, sp.string());
        c.output(mp);
        c.output(sp);
        *c.log << split << ": " << mats.size() << " " << to_string(c.cfg.measure) << " matrices from " << which
               << " model (max |D(t,N)| = " << format_value(worst) << ")\n";
    }
}

/// Spearman correlation between policy predictions and matrix entries.
inline double policy_spearman(const PolicyModel& policy, std::span<const SentencePair> pairs,
                              std::span<const DivergenceMatrix> matrices) {
    const auto ms = matrices_for(pairs, matrices);
    std::vector<double> pred, gold;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        for (int j = 1; j <= pairs[i].N(); ++j) {
            const auto col = policy.column_confidences(pairs[i].source, j, pairs[i].target);
            for (int t = 1; t <= pairs[i].T(); ++t) {
                pred.push_back(col[static_cast<std::size_t>(t - 1)]);
                gold.push_back(ms[i]->at(t, j));
            }
        }
    return spearman(pred, gold);
}

inline void cmd_train_policy(Context& c) {
    c.cfg.policy.check_measure(c.cfg.measure);
    const Vocabulary vocab = c.vocabulary();
    const Split train = c.split("train", vocab);
    const auto base = c.translation_model("multipath", vocab);
    const auto mats = c.matrices("train");
    TrainingLog log;
    auto policy = train_policy(c.cfg.policy, base, train.pairs, mats, &log);
    const auto ckpt = c.out.models("policy.json");
    const auto loss = c.out.models("policy.loss.tsv");
    policy.save(ckpt.string());
    write_loss_log(log, loss);
    c.output(ckpt);
    c.output(loss);
    *c.log << "trained policy: final loss " << format_value(log.epoch_loss.back()) << "\n";
    if (fs::exists(c.out.divergence("test.matrix"))) {
        const Split test = c.split("test", vocab);
        const auto tm = c.matrices("test");
        *c.log << "held-out spearman " << format_value(policy_spearman(policy, test.pairs, tm)) << "\n";
    }
}

/// Operating points of a sweep: k values for wait-k, lambdas otherwise.
inline std::vector<double> operating_points(const ExperimentConfig& cfg, const std::string& policy) {
    std::vector<double> out;
    if (policy == "waitk")
        for (int k : cfg.ks) out.push_back(k);
    else
        out = cfg.lambdas;
    if (out.empty()) throw ConfigError("empty sweep list");
    return out;
}

struct SweepOutputs {
    std::vector<EvaluationRun> decoded;
    std::vector<EvaluationRun> replayed;
};

inline std::string op_label(const std::string& policy, double op) {
    return policy + "_" + (policy == "waitk" ? "k" : "lambda") + format_value(op);
}

inline SweepOutputs run_sweep(Context& c, const std::string& policy_name, const std::string& which,
                              std::span<const double> points) {
    const Vocabulary vocab = c.vocabulary();
    const Split test = c.split("test", vocab);
    if (test.pairs.empty()) throw DataError("test split is empty");
    const auto model = make_model(c, which, vocab);
    std::optional<TinyTranslationModel> base;
    std::optional<DapPolicy> learned;
    std::vector<DivergenceMatrix> mats;
    std::vector<const DivergenceMatrix*> per_pair;
    if (policy_name == "learned") {
        base = c.translation_model("multipath", vocab);
        const auto p = c.out.models("policy.json");
        c.require(p, "policy checkpoint (run train-policy first)");
        c.input(p);
        learned = DapPolicy::load(p.string(), *base);
    } else if (policy_name == "oracle") {
        mats = c.matrices("test");
        per_pair = matrices_for(test.pairs, mats);
    } else if (policy_name != "waitk") {
        throw ConfigError("unknown policy '" + policy_name + "' (expected waitk|oracle|learned)");
    }

    SweepOutputs outs;
    for (double op : points) {
        SimulationLimits limits;
        limits.lambda = op;
        limits.r_max = c.cfg.r_max;
        if (policy_name != "waitk" && !(op > 0.0)) throw ConfigError("lambda must be > 0");
        auto policy_for = [&](std::size_t i) -> Policy {
            if (policy_name == "waitk") return WaitKPolicy{static_cast<int>(op)};
            if (policy_name == "oracle") return OracleMatrixPolicy{per_pair[i]};
            return LearnedPolicy{&*learned};
        };
        const auto results = simulate_corpus(*model, test.pairs, policy_for, limits, c.cfg.workers);
        auto run = evaluate_simulation(policy_name, op, test.pairs, results, vocab);

        std::vector<SimulationRecord> records;
        for (std::size_t i = 0; i < results.size(); ++i)
            records.push_back({results[i].pair_id, op, policy_name == "waitk" ? std::nullopt : c.cfg.r_max,
                               run.sentences[i].al, results[i].path, vocab.decode(results[i].hypothesis)});
        const auto lp = c.out.sim(op_label(policy_name, op) + ".log");
        write_simulation_log(records, lp.string());
        c.output(lp);

        const auto paths = parallel_map(test.pairs.size(), c.cfg.workers, [&](std::size_t i) {
            return reference_path(policy_for(i), test.pairs[i], op, c.cfg.r_max);
        });
        outs.replayed.push_back(evaluate_replay(policy_name, op, *model, test.pairs, paths, c.cfg.workers));
        *c.log << op_label(policy_name, op) << ": BLEU " << format_value(run.bleu) << " AL "
               << format_value(run.mean_al) << " | replay AL " << format_value(outs.replayed.back().mean_al)
               << " NLL " << format_value(*outs.replayed.back().mean_nll) << "\n";
        const auto cut = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.truncated; });
        if (cut > 0)
            *c.log << "warning: " << cut << " hypotheses hit the length cap without <EOS>; their AL runs over the "
                   << "whole path\n";
        outs.decoded.push_back(std::move(run));
    }
    return outs;
}

inline void cmd_simulate(Context& c, const std::string& policy, const std::string& which) {
    const auto pts = operating_points(c.cfg, policy);
    const double op = pts.front();
    run_sweep(c, policy, which, std::span<const double>(&op, 1));
}

inline void cmd_sweep(Context& c, const std::string& policy, const std::string& which) {
    const auto pts = operating_points(c.cfg, policy);
    const auto outs = run_sweep(c, policy, which, pts);
    const auto bleu = build_curve(outs.decoded, CurveQuality::Bleu);
    const auto nll = build_curve(outs.replayed, CurveQuality::Nll);
    const auto bp = c.out.curves(policy + ".bleu.tsv");
    const auto np = c.out.curves(policy + ".nll.tsv");
    write_curve(bleu, bp.string());
    write_curve(nll, np.string());
    const auto tp = c.out.curves(policy + ".latency_table.tsv");
    {
        std::ofstream f(tp, std::ios::binary);
        if (!f) throw DataError("cannot write " + tp.string());
        f << (policy == "waitk" ? "k" : "lambda") << "\tAL\n";
        for (const auto& r : outs.decoded) f << format_value(r.operating_point) << '\t' << format_value(r.mean_al) << '\n';
    }
    for (const auto& p : {bp, np, tp}) c.output(p);
}

/// Re-scores a simulation log against the test references.
inline EvaluationRun evaluate_log(Context& c, const std::string& log_path, const Vocabulary& vocab,
                                  const Split& test) {
    c.require(log_path, "simulation log");
    c.input(log_path);
    auto records = read_simulation_log(log_path);
    if (records.empty()) throw DataError(log_path + ": empty simulation log");
    std::map<int, const SentencePair*> by_id;
    for (const auto& p : test.pairs) by_id[p.id] = &p;
    EvaluationRun run;
    run.policy = log_path;
    run.operating_point = records.front().operating_point;
    std::vector<std::vector<std::string>> hyps, refs;
    double al = 0.0;
    for (auto& r : records) {
        auto it = by_id.find(r.pair_id);
        if (it == by_id.end()) throw DataError(log_path + ": unknown pair " + std::to_string(r.pair_id));
        r.path.validate(it->second->N());
        r.al = average_lagging(r.path, it->second->N(), static_cast<int>(r.path.size()));
        al += *r.al;
        hyps.push_back(split_tokens(r.hypothesis));
        refs.push_back(split_tokens(vocab.decode(it->second->target)));
        run.sentences.push_back({r.pair_id, *r.al, r.path, {}});
    }
    run.mean_al = al / static_cast<double>(records.size());
    run.bleu = corpus_bleu(hyps, refs);
    write_simulation_log(records, log_path);
    return run;
}

inline void cmd_evaluate(Context& c, const std::vector<std::string>& logs) {
    const Vocabulary vocab = c.vocabulary();
    const Split test = c.split("test", vocab);
    nlohmann::json report;
    for (const auto& l : logs) {
        const auto run = evaluate_log(c, l, vocab, test);
        report["runs"].push_back({{"log", l},
                                  {"operating_point", run.operating_point},
                                  {"bleu", run.bleu},
                                  {"mean_al", run.mean_al},
                                  {"sentences", run.sentences.size()}});
    }
    if (!test.alignments.empty()) {
        for (int k = 1; k <= 3; ++k) report["anticipation_rate"][std::to_string(k)] =
            corpus_anticipation_rate(test.pairs, test.alignments, k);
    }
    *c.log << report.dump(2) << "\n";
}

inline void cmd_curve(Context& c, const std::vector<std::string>& logs, const std::string& name) {
    if (logs.empty()) throw ConfigError("curve needs at least one --log");
    const Vocabulary vocab = c.vocabulary();
    const Split test = c.split("test", vocab);
    std::vector<EvaluationRun> runs;
    for (const auto& l : logs) runs.push_back(evaluate_log(c, l, vocab, test));
    const auto curve = build_curve(runs, CurveQuality::Bleu);
    const auto p = c.out.curves(name + ".tsv");
    write_curve(curve, p.string());
    c.output(p);
    for (const auto& pt : curve)
        *c.log << format_value(pt.operating_point) << '\t' << format_value(pt.latency) << '\t'
               << format_value(pt.quality) << '\t' << pt.count << '\n';
}

}  // namespace cli_detail

/// Entry point: returns 0 on success, 1 on usage/config errors, 2 on data/runtime errors.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Divergence-based simultaneous translation policy toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    CliOverrides o;
    std::uint64_t seed = 0;
    int workers = 0;
    app.add_option("--config", o.config_path, "INI configuration file");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--workers", workers, "worker threads for per-sentence work")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "seed for the command's own stage");
    app.add_option("--lambda", o.lambdas, "threshold(s)")->delimiter(',');
    app.add_option("--k", o.ks, "wait-k value(s)")->delimiter(',');
    app.add_option("--r-max", o.r_max, "max continuous reads (integer or none)");
    app.add_option("--measure", o.measure, "euclidean|kl|cosine");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic COPY/SWAP corpus");
    auto* train = app.add_subcommand("train-mt", "train a translation model");
    train->add_option("--objective", o.objective, "full|multipath");
    auto* div = app.add_subcommand("gen-divergence", "export divergence matrices and supervision");
    div->add_option("--model", o.model, "oracle|full|multipath");
    auto* tpol = app.add_subcommand("train-policy", "train the divergence predictor");
    auto* sim = app.add_subcommand("simulate", "simulate one operating point on the test split");
    auto* sweep = app.add_subcommand("sweep", "simulate every operating point and emit curves");
    for (auto* s : {sim, sweep}) {
        s->add_option("--policy", o.policy, "waitk|oracle|learned");
        s->add_option("--model", o.model, "translation model: oracle|full|multipath");
    }
    auto* eval = app.add_subcommand("evaluate", "score simulation logs");
    eval->add_option("--log", o.logs, "simulation log(s)")->required();
    auto* curve = app.add_subcommand("curve", "build a BLEU-vs-AL curve from simulation logs");
    curve->add_option("--log", o.logs, "simulation logs")->required();
    curve->add_option("--name", o.name, "curve name")->default_val("curve");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        cli_detail::Context c;
        c.cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
        if (!o.out.empty()) c.cfg.output_dir = o.out;
        if (workers > 0) c.cfg.workers = workers;
        if (!o.lambdas.empty()) c.cfg.lambdas = o.lambdas;
        if (!o.ks.empty()) c.cfg.ks = o.ks;
        if (!o.r_max.empty()) c.cfg.r_max = parse_r_max(o.r_max);
        if (!o.measure.empty()) c.cfg.measure = parse_measure(o.measure);
        if (!o.objective.empty()) c.cfg.objective = parse_objective(o.objective);
        const bool seeded = app.count("--seed") > 0;
        if (seeded) {
            if (gen->parsed()) c.cfg.task.seed = seed;
            if (train->parsed()) c.cfg.model.seed = seed;
            if (tpol->parsed()) c.cfg.policy.seed = seed;
        }
        c.cfg.validate();

        c.out.root = c.cfg.output_dir;
        c.out.create();
        c.log = &out;
        std::string command = app.get_subcommands().front()->get_name();
        c.manifest.command = command;
        for (int i = 0; i < argc; ++i) c.manifest.argv.emplace_back(argv[i]);
        ExperimentConfig hashed = c.cfg;
        hashed.output_dir.clear();
        c.manifest.config_hash = hex64(fnv1a(render_config(hashed)));
        c.manifest.started = utc_timestamp();
        if (!o.config_path.empty()) c.input(o.config_path);

        const std::string policy = o.policy.empty() ? c.cfg.sweep_policy : o.policy;
        if (gen->parsed()) {
            cli_detail::cmd_gen_data(c);
        } else if (train->parsed()) {
            cli_detail::cmd_train_mt(c);
        } else if (div->parsed()) {
            cli_detail::cmd_gen_divergence(c, o.model.empty() ? c.cfg.supervision_model : o.model);
        } else if (tpol->parsed()) {
            cli_detail::cmd_train_policy(c);
        } else if (sim->parsed() || sweep->parsed()) {
            const std::string which = o.model.empty() ? to_string(c.cfg.objective) : o.model;
            if (sim->parsed())
                cli_detail::cmd_simulate(c, policy, which);
            else
                cli_detail::cmd_sweep(c, policy, which);
            command += "_" + policy;
        } else if (eval->parsed()) {
            cli_detail::cmd_evaluate(c, o.logs);
        } else {
            cli_detail::cmd_curve(c, o.logs, o.name);
        }
        c.finish(command);
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace simt
