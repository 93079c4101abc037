#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "blockmc/common.hpp"

namespace blockmc {

struct EdgeRow {
    std::string source;
    std::string target;
    std::optional<double> time;
};

// Time-ordered edge events over a node registry plus the aggregated
// multigraph A_ij and degrees d_i.  Undirected edges are stored canonically
// as (min, max); self-loops are accepted and contribute 2 to the degree.
struct EdgeStream {
    bool directed = false;
    std::vector<std::string> node_names;
    std::unordered_map<std::string, std::int32_t> node_index;
    std::vector<std::pair<std::int32_t, std::int32_t>> events;
    std::vector<double> times;
    bool has_times = false;
    std::unordered_map<std::uint64_t, std::int64_t> adjacency;  // packed pair -> A_ij
    std::vector<std::int64_t> degree;     // undirected d_i, or out-degree
    std::vector<std::int64_t> in_degree;  // directed only

    std::int32_t node_count() const { return static_cast<std::int32_t>(node_names.size()); }
    std::int64_t edge_count() const { return static_cast<std::int64_t>(events.size()); }

    static std::uint64_t pack(std::int32_t i, std::int32_t j) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
               static_cast<std::uint32_t>(j);
    }

    std::int64_t multiplicity(std::int32_t i, std::int32_t j) const {
        if (!directed && i > j) std::swap(i, j);
        auto it = adjacency.find(pack(i, j));
        return it == adjacency.end() ? 0 : it->second;
    }
};

inline EdgeStream ingest_edge_stream(const std::vector<EdgeRow>& rows, bool directed) {
    EdgeStream es;
    es.directed = directed;
    double last_time = -std::numeric_limits<double>::infinity();
    bool any_time = false, any_missing = false;
    for (const auto& row : rows) {
        std::int32_t i, j;
        auto intern = [&](const std::string& name) {
            auto it = es.node_index.find(name);
            if (it != es.node_index.end()) return it->second;
            std::int32_t id = es.node_count();
            es.node_index.emplace(name, id);
            es.node_names.push_back(name);
            es.degree.push_back(0);
            if (directed) es.in_degree.push_back(0);
            return id;
        };
        i = intern(row.source);
        j = intern(row.target);
        if (row.time) {
            any_time = true;
            if (*row.time < last_time)
                throw input_error("ingest_edge_stream: timestamps out of order");
            last_time = *row.time;
            es.times.push_back(*row.time);
        } else {
            any_missing = true;
        }
        if (!directed && i > j) std::swap(i, j);
        es.events.emplace_back(i, j);
        es.adjacency[EdgeStream::pack(i, j)] += 1;
        if (directed) {
            es.degree[i] += 1;
            es.in_degree[j] += 1;
        } else if (i == j) {
            es.degree[i] += 2;
        } else {
            es.degree[i] += 1;
            es.degree[j] += 1;
        }
    }
    if (any_time && any_missing)
        throw input_error("ingest_edge_stream: mixed timestamped and bare rows");
    es.has_times = any_time;
    return es;
}

}  // namespace blockmc
