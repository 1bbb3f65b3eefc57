#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "simt/common.hpp"
#include "simt/corpus.hpp"
#include "simt/divergence.hpp"
#include "simt/policy.hpp"
#include "simt/tiny_model.hpp"

namespace simt {

inline constexpr const char* kVersion = "v0.1.0";

/// Everything a pipeline command needs; read from an INI file with flat sections.
struct ExperimentConfig {
    std::string output_dir = "out";
    std::string source_path;  // optional external corpus (train split)
    std::string target_path;
    std::string alignment_path;
    std::string vocab_path;

    SyntheticTaskConfig task;
    int held_out = 200;

    TinyModelConfig model;
    TrainingObjective objective = TrainingObjective::MultipathWaitK;

    DapPolicyConfig policy;

    DivergenceMeasure measure = DivergenceMeasure::Cosine;
    std::string supervision_model = "multipath";  // oracle | full | multipath

    std::string sweep_policy = "waitk";  // waitk | oracle | learned
    std::vector<double> lambdas = {0.05, 0.1, 0.2, 0.3, 0.5};
    std::vector<int> ks = {1, 3, 5, 7, 9};
    std::optional<int> r_max;

    int workers = 1;

    void validate() const {
        task.validate();
        if (held_out < 0 || held_out >= task.num_pairs) throw ConfigError("held_out must be in [0, num_pairs)");
        model.validate();
        policy.validate();
        if (supervision_model != "oracle" && supervision_model != "full" && supervision_model != "multipath")
            throw ConfigError("supervision_model must be oracle|full|multipath");
        if (sweep_policy != "waitk" && sweep_policy != "oracle" && sweep_policy != "learned")
            throw ConfigError("sweep policy must be waitk|oracle|learned");
        for (double l : lambdas)
            if (!(l > 0.0)) throw ConfigError("every lambda must be > 0");
        for (int k : ks)
            if (k < 1) throw ConfigError("every k must be >= 1");
        if (r_max && *r_max < 1) throw ConfigError("r_max must be >= 1");
        if (workers < 1) throw ConfigError("workers must be >= 1");
    }

    std::filesystem::path dir(const std::string& sub) const { return std::filesystem::path(output_dir) / sub; }
};

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
    std::vector<T> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto words = split_tokens(item);
        if (words.empty()) continue;
        if (words.size() != 1) throw ConfigError(key + ": malformed list item '" + item + "'");
        try {
            std::size_t used = 0;
            if constexpr (std::is_same_v<T, int>)
                out.push_back(std::stoi(words[0], &used));
            else
                out.push_back(std::stod(words[0], &used));
            if (used != words[0].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(key + ": '" + words[0] + "' is not a number");
        }
    }
    return out;
}

template <class T>
std::string join_list(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        if constexpr (std::is_same_v<T, double>)
            s += format_value(v[i]);
        else
            s += std::to_string(v[i]);
    }
    return s;
}

inline std::optional<int> parse_r_max(const std::string& s) {
    if (s.empty() || s == "none") return std::nullopt;
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size() || v < 1) throw std::invalid_argument("r_max");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("r_max must be a positive integer or 'none', got '" + s + "'");
    }
}

namespace detail {

template <class T>
void read_key(const boost::property_tree::ptree& pt, const std::string& key, T& dst) {
    const auto v = pt.get_optional<std::string>(key);
    if (!v) return;
    const auto words = split_tokens(*v);
    try {
        if (words.size() != 1) throw std::invalid_argument("value");
        std::size_t used = 0;
        if constexpr (std::is_same_v<T, int>)
            dst = std::stoi(words[0], &used);
        else if constexpr (std::is_same_v<T, std::uint64_t>)
            dst = std::stoull(words[0], &used);
        else
            dst = std::stod(words[0], &used);
        if (used != words[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid value '" + *v + "'");
    }
}

inline void read_string(const boost::property_tree::ptree& pt, const std::string& key, std::string& dst) {
    if (auto v = pt.get_optional<std::string>(key)) {
        const auto words = split_tokens(*v);
        dst = words.empty() ? std::string() : words[0];
    }
}

}  // namespace detail

inline ExperimentConfig config_from_ptree(const boost::property_tree::ptree& pt) {
    static const std::vector<std::string> known = {
        "paths.output_dir",       "paths.source",        "paths.target",          "paths.alignments",
        "paths.vocab",            "task.vocab_size",     "task.min_len",          "task.max_len",
        "task.num_pairs",         "task.held_out",       "task.seed",             "model.embed_dim",
        "model.hidden_dim",       "model.num_layers",    "model.num_heads",       "model.learning_rate",
        "model.epochs",           "model.batch_size",    "model.k_candidates",    "model.seed",
        "model.objective",        "policy.extra_decoder_layers",                  "policy.head_hidden_dim",
        "policy.loss_kind",       "policy.learning_rate", "policy.epochs",        "policy.batch_size",
        "policy.seed",            "divergence.measure",  "divergence.model",      "sweep.policy",
        "sweep.lambdas",          "sweep.ks",            "sweep.r_max",           "run.workers"};
    for (const auto& [section, body] : pt) {
        if (body.empty()) throw ConfigError("config key '" + section + "' is outside any section");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            if (std::find(known.begin(), known.end(), full) == known.end())
                throw ConfigError("unknown config key '" + full + "'");
        }
    }

    ExperimentConfig c;
    using detail::read_key;
    using detail::read_string;
    read_string(pt, "paths.output_dir", c.output_dir);
    read_string(pt, "paths.source", c.source_path);
    read_string(pt, "paths.target", c.target_path);
    read_string(pt, "paths.alignments", c.alignment_path);
    read_string(pt, "paths.vocab", c.vocab_path);

    read_key(pt, "task.vocab_size", c.task.vocab_size);
    read_key(pt, "task.min_len", c.task.min_len);
    read_key(pt, "task.max_len", c.task.max_len);
    read_key(pt, "task.num_pairs", c.task.num_pairs);
    read_key(pt, "task.held_out", c.held_out);
    read_key(pt, "task.seed", c.task.seed);

    read_key(pt, "model.embed_dim", c.model.embed_dim);
    read_key(pt, "model.hidden_dim", c.model.hidden_dim);
    read_key(pt, "model.num_layers", c.model.num_layers);
    read_key(pt, "model.num_heads", c.model.num_heads);
    read_key(pt, "model.learning_rate", c.model.learning_rate);
    read_key(pt, "model.epochs", c.model.epochs);
    read_key(pt, "model.batch_size", c.model.batch_size);
    if (auto v = pt.get_optional<std::string>("model.k_candidates"))
        c.model.k_candidates = parse_list<int>(*v, "model.k_candidates");
    read_key(pt, "model.seed", c.model.seed);
    if (auto v = pt.get_optional<std::string>("model.objective")) c.objective = parse_objective(*v);

    read_key(pt, "policy.extra_decoder_layers", c.policy.extra_decoder_layers);
    read_key(pt, "policy.head_hidden_dim", c.policy.head_hidden_dim);
    if (auto v = pt.get_optional<std::string>("policy.loss_kind")) c.policy.loss_kind = parse_loss_kind(*v);
    read_key(pt, "policy.learning_rate", c.policy.learning_rate);
    read_key(pt, "policy.epochs", c.policy.epochs);
    read_key(pt, "policy.batch_size", c.policy.batch_size);
    read_key(pt, "policy.seed", c.policy.seed);

    if (auto v = pt.get_optional<std::string>("divergence.measure")) c.measure = parse_measure(*v);
    read_string(pt, "divergence.model", c.supervision_model);

    read_string(pt, "sweep.policy", c.sweep_policy);
    if (auto v = pt.get_optional<std::string>("sweep.lambdas")) c.lambdas = parse_list<double>(*v, "sweep.lambdas");
    if (auto v = pt.get_optional<std::string>("sweep.ks")) c.ks = parse_list<int>(*v, "sweep.ks");
    if (auto v = pt.get_optional<std::string>("sweep.r_max")) c.r_max = parse_r_max(*v);
    read_key(pt, "run.workers", c.workers);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
    boost::property_tree::ptree pt;
    try {
        boost::property_tree::read_ini(path, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return config_from_ptree(pt);
}

/// Canonical INI rendering; its hash identifies a configuration.
inline std::string render_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "[paths]\noutput_dir = " << c.output_dir << "\nsource = " << c.source_path << "\ntarget = " << c.target_path
       << "\nalignments = " << c.alignment_path << "\nvocab = " << c.vocab_path << "\n\n";
    os << "[task]\nvocab_size = " << c.task.vocab_size << "\nmin_len = " << c.task.min_len
       << "\nmax_len = " << c.task.max_len << "\nnum_pairs = " << c.task.num_pairs << "\nheld_out = " << c.held_out
       << "\nseed = " << c.task.seed << "\n\n";
    os << "[model]\nembed_dim = " << c.model.embed_dim << "\nhidden_dim = " << c.model.hidden_dim
       << "\nnum_layers = " << c.model.num_layers << "\nnum_heads = " << c.model.num_heads
       << "\nlearning_rate = " << format_value(c.model.learning_rate) << "\nepochs = " << c.model.epochs
       << "\nbatch_size = " << c.model.batch_size << "\nk_candidates = " << join_list(c.model.k_candidates)
       << "\nseed = " << c.model.seed << "\nobjective = " << to_string(c.objective) << "\n\n";
    os << "[policy]\nextra_decoder_layers = " << c.policy.extra_decoder_layers
       << "\nhead_hidden_dim = " << c.policy.head_hidden_dim << "\nloss_kind = " << to_string(c.policy.loss_kind)
       << "\nlearning_rate = " << format_value(c.policy.learning_rate) << "\nepochs = " << c.policy.epochs
       << "\nbatch_size = " << c.policy.batch_size << "\nseed = " << c.policy.seed << "\n\n";
    os << "[divergence]\nmeasure = " << to_string(c.measure) << "\nmodel = " << c.supervision_model << "\n\n";
    os << "[sweep]\npolicy = " << c.sweep_policy << "\nlambdas = " << join_list(c.lambdas)
       << "\nks = " << join_list(c.ks) << "\nr_max = " << format_r_max(c.r_max) << "\n\n";
    os << "[run]\nworkers = " << c.workers << "\n";
    return os.str();
}

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    Fnv1a h;
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return hex64(h.digest());
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Provenance record written by every command.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config_hash;
    std::string version = kVersion;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
    std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
    std::string started;
    std::string finished;

    void add_input(const std::string& path) { inputs.emplace_back(path, file_hash(path)); }
    void add_output(const std::string& path) { outputs.emplace_back(path, file_hash(path)); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["argv"] = argv;
        j["config_hash"] = config_hash;
        j["version"] = version;
        j["started"] = started;
        j["finished"] = finished;
        auto files = [](const auto& v) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& [p, h] : v) a.push_back({{"path", p}, {"hash", h}});
            return a;
        };
        j["inputs"] = files(inputs);
        j["outputs"] = files(outputs);
        return j;
    }
};

}  // namespace simt
