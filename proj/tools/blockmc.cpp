// blockmc: fit community-structured Markov chains and temporal-network
// models to discrete sequences and edge streams by exact description-length
// minimization; predict held-out continuations; generate synthetic data.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "blockmc/io.hpp"
#include "blockmc/predict.hpp"

using json = nlohmann::ordered_json;
using namespace blockmc;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("BLOCKMC_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw config_error("BLOCKMC_SEED is not an integer");
        }
    }
    return 1;
}

struct CommonOpts {
    std::uint64_t seed = 1;
    int restarts = 4;
    int sweeps = 10;
    double epsilon = 1.0;
    double sigma = 2.0;
    int merge_cands = 8;
    std::string k_prior = "hyperprior";
    std::string units = "nats";
    std::string output;
    bool verify = false;
    bool profile = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "RNG seed (BLOCKMC_SEED overrides the default)");
        cmd->add_option("--restarts", restarts, "independent search restarts")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--sweeps", sweeps, "sweeps per ladder level")->check(CLI::PositiveNumber);
        cmd->add_option("--epsilon", epsilon, "uniform mixing in move proposals")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--sigma", sigma, "geometric spacing of the merge ladder");
        cmd->add_option("--merge-cands", merge_cands, "merge candidates per group")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--k-prior", k_prior, "token frequency prior")
            ->check(CLI::IsMember({"uniform", "hyperprior"}));
        cmd->add_option("--units", units, "report units")->check(CLI::IsMember({"nats", "bits"}));
        cmd->add_option("--output,-o", output, "write the JSON report here");
        cmd->add_flag("--verify", verify, "re-verify the report after writing");
        cmd->add_flag("--profile", profile, "include per-phase timings in the report");
    }

    void fill(FitConfig& config) const {
        config.seed = seed;
        config.restarts = restarts;
        config.sweeps_per_level = sweeps;
        config.epsilon = epsilon;
        config.sigma_levels = sigma;
        config.merge_candidates = merge_cands;
        config.k_prior =
            k_prior == "uniform" ? KPriorMode::uniform : KPriorMode::degree_hyperprior;
    }
};

json breakdown_json(const DlBreakdown& b, double scale) {
    json j;
    j["seq_term"] = b.seq_term * scale;
    j["k_prior"] = b.k_prior * scale;
    j["ers_prior"] = b.ers_prior * scale;
    j["es_prior"] = b.es_prior * scale;
    j["token_partition_prior"] = b.token_partition_prior * scale;
    j["memory_partition_prior"] = b.memory_partition_prior * scale;
    if (b.static_net_term) j["static_net_term"] = *b.static_net_term * scale;
    if (b.wait_term) j["wait_term"] = *b.wait_term * scale;
    j["total"] = b.total * scale;
    return j;
}

void emit_report(const json& report, const std::string& path) {
    std::string text = report.dump(2);
    if (path.empty()) {
        std::cout << text << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw input_error("cannot write report: " + path);
    out << text << "\n";
}

json reload_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot reload report: " + path);
    json j;
    in >> j;
    return j;
}

// --- fit ---------------------------------------------------------------------

struct FitOpts {
    std::string input;
    int order = 1;
    std::string order_scan;
    std::string separator = "none";
    std::string separator_token = "<sep>";
    std::string boundary = "prefix";
    bool unified = false;
    std::int32_t groups = 0;
    std::string waits_file;
    std::string wait_mode = "per-group";
    double wait_alpha = 1.0;
    double wait_beta = 0.0;
    double wait_floor = 1e-6;
    bool bursty = false;
    double burst_min = 0.0;
    std::string simultaneous = "keep";
    std::string epochs_file;
    std::string partition_out;
    std::string model_out;
    CommonOpts common;
};

Boundary parse_boundary(const std::string& b) {
    if (b == "prefix") return Boundary::condition_on_prefix;
    if (b == "cyclic") return Boundary::cyclic;
    return Boundary::reset_at_separators;
}

json model_json(const Sequence& seq, const ChainCounts& chain, const FitResult& fit,
                bool unified) {
    json m;
    m["order"] = chain.order;
    m["alphabet"] = seq.alphabet.id_to_token;
    json mems = json::array();
    for (const auto& key : chain.memories) mems.push_back(key.window);
    m["memories"] = std::move(mems);
    json counts = json::array();
    for (std::int32_t mm = 0; mm < chain.memory_count(); ++mm)
        for (const auto& [x, a] : chain.mem_adj[mm]) counts.push_back({mm, x, a});
    m["counts"] = std::move(counts);
    m["initial_memory"] = chain.initial_memory;
    m["token_groups"] = fit.token_groups;
    m["memory_groups"] = fit.memory_groups;
    m["unified"] = unified;
    return m;
}

int run_fit(const FitOpts& opt) {
    auto t0 = std::chrono::steady_clock::now();
    FitConfig config;
    opt.common.fill(config);
    config.unified = opt.unified;
    config.boundary = parse_boundary(opt.boundary);
    if (opt.groups > 0) config.force_groups = opt.groups;

    auto policy = opt.separator == "insert" ? SeparatorPolicy::insert_separator
                                            : SeparatorPolicy::none;
    auto records = read_records(opt.input);
    auto seq = tokenize_records(records, policy, opt.separator_token);

    if (!opt.epochs_file.empty()) {
        auto epochs = read_epochs_file(opt.epochs_file);
        if (policy == SeparatorPolicy::insert_separator)
            throw config_error("--epochs does not combine with --separator insert");
        seq = annotate_epochs(seq, epochs);
    }

    if (!opt.waits_file.empty()) {
        auto waits = read_waits_raw(opt.waits_file, seq.length() - 1);
        if (opt.simultaneous == "alpha") sort_simultaneous_runs(seq, waits);
        apply_wait_floor(waits, opt.wait_floor);
        if (opt.bursty) {
            double dmin = opt.burst_min;
            if (dmin <= 0) dmin = *std::min_element(waits.begin(), waits.end());
            waits = bursty_transform(waits, dmin);
        }
        seq.waits = std::move(waits);
        config.wait_mode = opt.wait_mode == "per-memory" ? WaitMode::per_memory
                                                         : WaitMode::per_group;
        config.wait_alpha = opt.wait_alpha;
        if (opt.wait_beta > 0) config.wait_beta = opt.wait_beta;
    }

    LogComb comb;
    FitResult fit;
    int n_hi = opt.order;
    if (!opt.order_scan.empty()) {
        auto dots = opt.order_scan.find("..");
        if (dots == std::string::npos)
            throw config_error("--order-scan expects a range like 1..3");
        int n_lo = std::stoi(opt.order_scan.substr(0, dots));
        n_hi = std::stoi(opt.order_scan.substr(dots + 2));
        fit = order_scan(seq, n_lo, n_hi, config, comb);
    } else {
        config.order = opt.order;
        auto chain = build_chain(seq, opt.order, config.boundary);
        fit = agglomerative_search(chain, config, comb);
        fit.best_order = opt.order;
    }

    auto chain = build_chain(seq, fit.best_order, config.boundary,
                             opt.order_scan.empty() ? -1 : n_hi);

    const double scale = opt.common.units == "bits" ? 1.0 / std::log(2.0) : 1.0;
    json report;
    report["command"] = "fit";
    report["seed"] = fit.seed;
    json cfg;
    cfg["order"] = fit.best_order;
    cfg["order_scan"] = opt.order_scan;
    cfg["unified"] = opt.unified;
    cfg["k_prior"] = opt.common.k_prior;
    cfg["boundary"] = opt.boundary;
    cfg["separator"] = opt.separator;
    cfg["restarts"] = opt.common.restarts;
    cfg["sweeps"] = opt.common.sweeps;
    cfg["epsilon"] = opt.common.epsilon;
    cfg["sigma"] = opt.common.sigma;
    cfg["units"] = opt.common.units;
    if (!opt.waits_file.empty()) {
        cfg["wait_mode"] = opt.wait_mode;
        cfg["wait_alpha"] = opt.wait_alpha;
        if (opt.wait_beta > 0) cfg["wait_beta"] = opt.wait_beta;
        cfg["bursty"] = opt.bursty;
    }
    if (opt.groups > 0) cfg["groups"] = opt.groups;
    report["config"] = std::move(cfg);
    json dataset;
    dataset["records"] = records.size();
    dataset["tokens"] = seq.length();
    dataset["alphabet"] = seq.alphabet.size();
    dataset["transitions"] = chain.total_transitions;
    dataset["memories"] = chain.memory_count();
    report["dataset"] = std::move(dataset);
    json result;
    result["order"] = fit.best_order;
    result["num_token_groups"] = fit.num_token_groups;
    result["num_memory_groups"] = fit.num_memory_groups;
    result["accept_rate"] = fit.accept_rate;
    result["dl"] = breakdown_json(fit.breakdown, 1.0);
    result["dl_bits"] = breakdown_json(fit.breakdown, 1.0 / std::log(2.0));
    result["total"] = fit.breakdown.total * scale;
    result["baseline_plain"] = baseline_plain_dl(chain, comb) * scale;
    result["mle_loglik"] = mle_loglik(chain) * scale;
    result["conditional_entropy"] = conditional_entropy(chain) * scale;
    report["result"] = std::move(result);
    if (!fit.order_table.empty()) {
        json table = json::array();
        for (const auto& row : fit.order_table) {
            json r;
            r["order"] = row.order;
            r["num_token_groups"] = row.num_token_groups;
            r["num_memory_groups"] = row.num_memory_groups;
            r["total"] = row.total * scale;
            r["baseline"] = row.baseline * scale;
            r["mle_loglik"] = row.mle * scale;
            table.push_back(std::move(r));
        }
        report["order_table"] = std::move(table);
    }
    report["partitions"] = {{"tokens", fit.token_groups}, {"memories", fit.memory_groups}};
    report["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.common.profile)
        report["profile"] = {{"sweep_seconds", fit.time_sweeps},
                             {"merge_seconds", fit.time_merges}};

    emit_report(report, opt.common.output);

    if (!opt.partition_out.empty()) {
        std::vector<std::string> names = seq.alphabet.id_to_token;
        for (std::int32_t m = 0; m < chain.memory_count(); ++m) {
            std::string w;
            for (auto id : chain.memories[m].window) {
                if (!w.empty()) w += "|";
                w += seq.alphabet.id_to_token[id];
            }
            names.push_back(w);
        }
        std::vector<std::int32_t> groups = fit.token_groups;
        groups.insert(groups.end(), fit.memory_groups.begin(), fit.memory_groups.end());
        write_partition_tsv(opt.partition_out, names, groups);
    }
    if (!opt.model_out.empty()) {
        std::ofstream out(opt.model_out);
        if (!out) throw input_error("cannot write model: " + opt.model_out);
        out << model_json(seq, chain, fit, opt.unified).dump(2) << "\n";
    }

    if (opt.common.verify && !opt.common.output.empty()) {
        json reread = reload_report(opt.common.output);
        if (reread.dump(2) != report.dump(2))
            throw invariant_error("report did not round-trip losslessly");
        std::vector<std::int32_t> tok = reread["partitions"]["tokens"];
        std::vector<std::int32_t> mem = reread["partitions"]["memories"];
        Partition part = config.unified ? Partition::make_unified(chain, tok)
                                        : Partition::make(chain, tok, mem);
        PriorConfig pcfg{config.k_prior, Units::nats};
        double recomputed = total_dl(chain, part, pcfg, comb).total;
        if (fit.breakdown.wait_term) {
            auto ws = WaitStats::from_chain(chain, config.wait_alpha, 1.0);
            ws.beta = config.wait_beta ? *config.wait_beta : estimate_beta(ws);
            recomputed += config.wait_mode == WaitMode::per_memory
                              ? wait_evidence_per_memory(ws)
                              : wait_evidence_per_group(ws, mem, part.num_memory_groups);
        }
        double reported = reread["result"]["dl"]["total"];
        if (std::abs(recomputed - reported) > 1e-6)
            throw invariant_error("report total failed re-verification");
        std::cerr << "verified: total re-derives to " << recomputed << " nats\n";
    }
    return 0;
}

// --- temporal ------------------------------------------------------------------

struct TemporalOpts {
    std::string input;
    int order = 1;
    bool directed = false;
    bool unified_labels = false;
    std::string partition_out;
    CommonOpts common;
};

int run_temporal(const TemporalOpts& opt) {
    auto t0 = std::chrono::steady_clock::now();
    TemporalFitConfig config;
    opt.common.fill(config.base);
    config.order = opt.order;
    config.unified_labels = opt.unified_labels;

    auto es = read_edge_tsv(opt.input, opt.directed);
    LogComb comb;
    auto fit = joint_fit(es, config, comb);

    const double scale = opt.common.units == "bits" ? 1.0 / std::log(2.0) : 1.0;
    json report;
    report["command"] = "temporal";
    report["seed"] = fit.seed;
    report["config"] = {{"order", opt.order},
                        {"directed", opt.directed},
                        {"unified_labels", opt.unified_labels},
                        {"k_prior", opt.common.k_prior},
                        {"restarts", opt.common.restarts},
                        {"sweeps", opt.common.sweeps},
                        {"units", opt.common.units}};
    report["dataset"] = {{"nodes", es.node_count()},
                         {"events", es.edge_count()},
                         {"directed", es.directed}};
    json result;
    result["order"] = opt.order;
    result["num_node_groups"] = fit.num_node_groups;
    result["num_label_token_groups"] = fit.num_label_token_groups;
    result["num_label_memory_groups"] = fit.num_label_memory_groups;
    result["accept_rate"] = fit.accept_rate;
    result["dl"] = breakdown_json(fit.breakdown, 1.0);
    result["dl_bits"] = breakdown_json(fit.breakdown, 1.0 / std::log(2.0));
    result["total"] = fit.breakdown.total * scale;
    report["result"] = std::move(result);
    json parts;
    parts["nodes"] = fit.node_groups;
    json labels = json::array();
    for (std::size_t l = 0; l < fit.label_pairs.size(); ++l)
        labels.push_back({fit.label_pairs[l].first, fit.label_pairs[l].second,
                          l < fit.label_token_groups.size() ? fit.label_token_groups[l] : 0});
    parts["labels"] = std::move(labels);
    report["partitions"] = std::move(parts);
    report["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    emit_report(report, opt.common.output);

    if (!opt.partition_out.empty())
        write_partition_tsv(opt.partition_out, es.node_names, fit.node_groups);

    if (opt.common.verify && !opt.common.output.empty()) {
        json reread = reload_report(opt.common.output);
        if (reread.dump(2) != report.dump(2))
            throw invariant_error("report did not round-trip losslessly");
        std::vector<std::int32_t> c = reread["partitions"]["nodes"];
        PriorConfig pcfg{config.base.k_prior, Units::nats};
        double recomputed =
            temporal_dl(es, c, fit.label_token_groups, fit.label_memory_groups, opt.order, pcfg,
                        comb, opt.unified_labels)
                .total;
        double reported = reread["result"]["dl"]["total"];
        if (std::abs(recomputed - reported) > 1e-6)
            throw invariant_error("report total failed re-verification");
        std::cerr << "verified: total re-derives to " << recomputed << " nats\n";
    }
    return 0;
}

// --- predict -------------------------------------------------------------------

struct PredictOpts {
    std::string input;
    double split = 0.5;
    int order = 1;
    bool temporal = false;
    bool directed = false;
    std::string separator = "none";
    std::string separator_token = "<sep>";
    CommonOpts common;
};

int run_predict(const PredictOpts& opt) {
    auto t0 = std::chrono::steady_clock::now();
    LogComb comb;
    SplitSpec split;
    split.fraction = opt.split;
    HoldoutResult res;
    if (opt.temporal) {
        TemporalFitConfig config;
        opt.common.fill(config.base);
        auto es = read_edge_tsv(opt.input, opt.directed);
        res = holdout_bound_temporal(es, split, opt.order, config, comb);
    } else {
        FitConfig config;
        opt.common.fill(config);
        auto policy = opt.separator == "insert" ? SeparatorPolicy::insert_separator
                                                : SeparatorPolicy::none;
        auto seq = read_sequence_file(opt.input, policy, opt.separator_token);
        res = holdout_bound(seq, split, opt.order, config, comb);
    }
    const double scale = opt.common.units == "bits" ? 1.0 / std::log(2.0) : 1.0;
    json report;
    report["command"] = "predict";
    report["seed"] = opt.common.seed;
    report["config"] = {{"split", opt.split},
                        {"order", opt.order},
                        {"temporal", opt.temporal},
                        {"units", opt.common.units},
                        {"restarts", opt.common.restarts}};
    json result;
    result["delta_sigma"] = res.delta_sigma * scale;
    result["log_bound"] = res.log_bound * scale;
    result["per_event"] = res.per_event * scale;
    result["validation_events"] = res.validation_events;
    result["train_total"] = res.train_total * scale;
    result["full_total"] = res.full_total * scale;
    report["result"] = std::move(result);
    report["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit_report(report, opt.common.output);
    return 0;
}

// --- generate ------------------------------------------------------------------

struct GenerateOpts {
    std::string model;
    std::string out;
    std::uint64_t seed = 1;
};

int run_generate(const GenerateOpts& opt) {
    std::ifstream in(opt.model);
    if (!in) throw input_error("cannot open model file: " + opt.model);
    json m;
    try {
        in >> m;
    } catch (const std::exception& e) {
        throw input_error(std::string("malformed model file: ") + e.what());
    }

    ChainCounts chain;
    chain.order = m["order"];
    std::vector<std::string> alphabet = m["alphabet"];
    chain.alphabet_size = static_cast<std::int32_t>(alphabet.size());
    chain.token_emissions.assign(chain.alphabet_size, 0);
    for (const auto& win : m["memories"]) {
        MemoryKey key;
        for (const auto& id : win) key.window.push_back(id.get<std::int32_t>());
        chain.memory_index.emplace(key, chain.memory_count());
        chain.memories.push_back(std::move(key));
        chain.memory_out.push_back(0);
    }
    chain.mem_adj.resize(chain.memory_count());
    chain.tok_adj.resize(chain.alphabet_size);
    for (const auto& triple : m["counts"]) {
        std::int32_t mm = triple[0], x = triple[1];
        std::int64_t a = triple[2];
        chain.mem_adj[mm].emplace_back(x, a);
        chain.tok_adj[x].emplace_back(mm, a);
        chain.token_emissions[x] += a;
        chain.memory_out[mm] += a;
        chain.total_transitions += a;
    }
    for (auto& row : chain.mem_adj) std::sort(row.begin(), row.end());
    for (auto& row : chain.tok_adj) std::sort(row.begin(), row.end());
    chain.initial_memory = m["initial_memory"];

    std::vector<std::int32_t> tok = m["token_groups"];
    std::vector<std::int32_t> mem = m["memory_groups"];
    bool unified = m.value("unified", false);
    auto part = unified ? Partition::make_unified(chain, tok)
                        : Partition::make(chain, tok, mem);

    rng_t rng(opt.seed);
    auto gen = generate_sequence(chain, part, rng);
    Sequence named;
    named.alphabet.id_to_token = alphabet;
    for (std::int32_t i = 0; i < chain.alphabet_size; ++i)
        named.alphabet.token_to_id[alphabet[i]] = i;
    named.tokens = gen.tokens;
    write_sequence_file(opt.out, named);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"community-structured Markov chain and temporal network models"};
    app.require_subcommand(1);

    FitOpts fit;
    auto* cmd_fit = app.add_subcommand("fit", "fit a sequence model");
    cmd_fit->add_option("--input,-i", fit.input, "sequence file")->required();
    cmd_fit->add_option("--order,-n", fit.order, "Markov order")->check(CLI::PositiveNumber);
    cmd_fit->add_option("--order-scan", fit.order_scan, "range a..b of orders to scan");
    cmd_fit->add_option("--separator", fit.separator, "record separator policy")
        ->check(CLI::IsMember({"none", "insert"}));
    cmd_fit->add_option("--separator-token", fit.separator_token, "reserved separator string");
    cmd_fit->add_option("--boundary", fit.boundary, "chain boundary handling")
        ->check(CLI::IsMember({"prefix", "cyclic", "reset"}));
    cmd_fit->add_flag("--unified", fit.unified,
                      "single partition for tokens and memories (order 1)");
    cmd_fit->add_option("--groups", fit.groups, "force this many groups on both sides");
    cmd_fit->add_option("--waits", fit.waits_file, "waiting-time file (one value per transition)");
    cmd_fit->add_option("--wait-mode", fit.wait_mode, "waiting-time evidence conditioning")
        ->check(CLI::IsMember({"per-memory", "per-group"}));
    cmd_fit->add_option("--wait-alpha", fit.wait_alpha, "gamma prior shape");
    cmd_fit->add_option("--wait-beta", fit.wait_beta,
                        "gamma prior time scale (default: empirical estimate)");
    cmd_fit->add_option("--wait-floor", fit.wait_floor, "floor for zero gaps in seconds");
    cmd_fit->add_flag("--bursty", fit.bursty, "log-transform waits onto the exponential model");
    cmd_fit->add_option("--burst-min", fit.burst_min,
                        "scale floor of the bursty transform (default: smallest wait)");
    cmd_fit->add_option("--simultaneous", fit.simultaneous,
                        "ordering of zero-gap runs before flooring")
        ->check(CLI::IsMember({"keep", "alpha"}));
    cmd_fit->add_option("--epochs", fit.epochs_file, "per-token epoch annotations");
    cmd_fit->add_option("--partition-out", fit.partition_out, "write item/group TSV here");
    cmd_fit->add_option("--model-out", fit.model_out, "write the fitted constraints here");
    fit.common.attach(cmd_fit);

    TemporalOpts temporal;
    auto* cmd_temporal = app.add_subcommand("temporal", "fit a temporal network model");
    cmd_temporal->add_option("--input,-i", temporal.input, "edge TSV file")->required();
    cmd_temporal->add_option("--order,-n", temporal.order, "label chain order (0 = static)")
        ->check(CLI::NonNegativeNumber);
    cmd_temporal->add_flag("--directed", temporal.directed, "treat edges as directed");
    cmd_temporal->add_flag("--unified-labels", temporal.unified_labels,
                           "single partition for label tokens and memories");
    cmd_temporal->add_option("--partition-out", temporal.partition_out,
                             "write node/group TSV here");
    temporal.common.attach(cmd_temporal);

    PredictOpts predict;
    auto* cmd_predict = app.add_subcommand("predict", "held-out prediction bound");
    cmd_predict->add_option("--input,-i", predict.input, "sequence or edge file")->required();
    cmd_predict->add_option("--split", predict.split, "training prefix fraction");
    cmd_predict->add_option("--order,-n", predict.order, "Markov order (0 = static, temporal)")
        ->check(CLI::NonNegativeNumber);
    cmd_predict->add_flag("--temporal", predict.temporal, "input is an edge stream");
    cmd_predict->add_flag("--directed", predict.directed, "treat edges as directed");
    cmd_predict->add_option("--separator", predict.separator, "record separator policy")
        ->check(CLI::IsMember({"none", "insert"}));
    cmd_predict->add_option("--separator-token", predict.separator_token,
                            "reserved separator string");
    predict.common.attach(cmd_predict);

    GenerateOpts generate;
    auto* cmd_generate = app.add_subcommand("generate", "sample a sequence from a fitted model");
    cmd_generate->add_option("--model,-m", generate.model, "model file from fit --model-out")
        ->required();
    cmd_generate->add_option("--out,-o", generate.out, "output sequence file")->required();
    cmd_generate->add_option("--seed", generate.seed, "RNG seed");

    try {
        std::uint64_t env_seed = default_seed();
        fit.common.seed = env_seed;
        temporal.common.seed = env_seed;
        predict.common.seed = env_seed;
        generate.seed = env_seed;
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitNumeric;
    }

    try {
        if (cmd_fit->parsed()) {
            if (fit.unified && (fit.order != 1 || !fit.order_scan.empty()))
                throw CLI::ValidationError("--unified requires --order 1");
            if (!fit.order_scan.empty() && cmd_fit->count("--order"))
                throw CLI::ValidationError("--order and --order-scan are mutually exclusive");
            return run_fit(fit);
        }
        if (cmd_temporal->parsed()) return run_temporal(temporal);
        if (cmd_predict->parsed()) {
            if (!predict.temporal && predict.order < 1)
                throw CLI::ValidationError("--order 0 requires --temporal");
            return run_predict(predict);
        }
        if (cmd_generate->parsed()) return run_generate(generate);
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const invariant_error& e) {
        std::cerr << "invariant error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
