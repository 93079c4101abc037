#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "blockmc/alphabet.hpp"
#include "blockmc/edge_stream.hpp"

namespace blockmc {

// Sequence files: UTF-8, one whitespace-separated token per field, records
// separated by newlines.
inline std::vector<std::vector<std::string>> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open sequence file: " + path);
    std::vector<std::vector<std::string>> records;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<std::string> rec;
        std::string tok;
        while (ls >> tok) rec.push_back(tok);
        if (!rec.empty()) records.push_back(std::move(rec));
    }
    if (records.empty()) throw input_error("sequence file has no tokens: " + path);
    return records;
}

inline Sequence read_sequence_file(const std::string& path, SeparatorPolicy policy,
                                   const std::string& separator_token = "<sep>") {
    return tokenize_records(read_records(path), policy, separator_token);
}

// Waiting-time files: one decimal seconds value per transition line.  Zero
// gaps are floored at `floor_eps`.
inline std::vector<double> read_waits_file(const std::string& path, std::int64_t expected,
                                           double floor_eps = 1e-6) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open waits file: " + path);
    std::vector<double> waits;
    double v;
    while (in >> v) {
        if (v < 0) throw input_error("negative waiting time in " + path);
        waits.push_back(v);
    }
    if (static_cast<std::int64_t>(waits.size()) != expected)
        throw input_error("waits file has " + std::to_string(waits.size()) + " values, expected " +
                          std::to_string(expected));
    for (auto& w : waits)
        if (w < floor_eps) w = floor_eps;
    return waits;
}

// raw waits (no floor), used to detect simultaneous-event runs first
inline std::vector<double> read_waits_raw(const std::string& path, std::int64_t expected) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open waits file: " + path);
    std::vector<double> waits;
    double v;
    while (in >> v) {
        if (v < 0) throw input_error("negative waiting time in " + path);
        waits.push_back(v);
    }
    if (static_cast<std::int64_t>(waits.size()) != expected)
        throw input_error("waits file has " + std::to_string(waits.size()) + " values, expected " +
                          std::to_string(expected));
    return waits;
}

// Reorder tokens inside zero-gap runs alphabetically (stable), before the
// zero floor is applied; exposed because the ordering of simultaneous events
// is a modelling choice.
inline void sort_simultaneous_runs(Sequence& seq, std::vector<double>& waits) {
    std::size_t t = 1;
    while (t < seq.tokens.size()) {
        if (waits[t - 1] > 0) {
            ++t;
            continue;
        }
        std::size_t begin = t - 1, end = t;
        while (end < seq.tokens.size() && waits[end - 1] == 0) ++end;
        std::stable_sort(seq.tokens.begin() + begin, seq.tokens.begin() + end,
                         [&](std::int32_t a, std::int32_t b) {
                             return seq.alphabet.id_to_token[a] < seq.alphabet.id_to_token[b];
                         });
        t = end + 1;
    }
}

inline void apply_wait_floor(std::vector<double>& waits, double floor_eps) {
    for (auto& w : waits)
        if (w < floor_eps) w = floor_eps;
}

// Epoch files mirror the sequence layout: one epoch id per token field.
inline std::vector<std::int32_t> read_epochs_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open epochs file: " + path);
    std::vector<std::int32_t> epochs;
    std::string tok;
    while (in >> tok) {
        try {
            epochs.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw input_error("epochs file contains a non-integer label: " + tok);
        }
    }
    return epochs;
}

// Edge streams: TSV `source<TAB>target[<TAB>time]` (any whitespace accepted)
inline EdgeStream read_edge_tsv(const std::string& path, bool directed) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open edge file: " + path);
    std::vector<EdgeRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        EdgeRow row;
        if (!(ls >> row.source >> row.target))
            throw input_error("malformed edge row: " + line);
        double t;
        if (ls >> t) row.time = t;
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw input_error("edge file has no rows: " + path);
    return ingest_edge_stream(rows, directed);
}

inline void write_sequence_file(const std::string& path, const Sequence& seq) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write sequence file: " + path);
    for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
        if (t) out << ' ';
        out << seq.alphabet.id_to_token[seq.tokens[t]];
    }
    out << '\n';
}

inline void write_partition_tsv(const std::string& path,
                                const std::vector<std::string>& item_names,
                                const std::vector<std::int32_t>& groups) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write partition file: " + path);
    for (std::size_t i = 0; i < item_names.size(); ++i)
        out << item_names[i] << '\t' << groups[i] << '\n';
}

}  // namespace blockmc
