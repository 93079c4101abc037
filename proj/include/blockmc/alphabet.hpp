#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "blockmc/common.hpp"

namespace blockmc {

// Ordered registry of raw token strings; ids are dense, 0-based and stable
// once assigned.
struct Alphabet {
    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, std::int32_t> token_to_id;
    std::optional<std::int32_t> separator_id;

    // set when this alphabet is a product (token, epoch) registry
    std::vector<std::int32_t> base_of;
    std::vector<std::int32_t> epoch_of;

    std::int32_t size() const { return static_cast<std::int32_t>(id_to_token.size()); }
    bool annotated() const { return !base_of.empty(); }

    std::int32_t intern(const std::string& tok) {
        auto it = token_to_id.find(tok);
        if (it != token_to_id.end()) return it->second;
        std::int32_t id = size();
        token_to_id.emplace(tok, id);
        id_to_token.push_back(tok);
        return id;
    }

    std::int32_t lookup(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        if (it == token_to_id.end()) throw input_error("unknown token: " + tok);
        return it->second;
    }
};

struct Sequence {
    Alphabet alphabet;
    std::vector<std::int32_t> tokens;
    // waits[t-1] is the gap in seconds before tokens[t]; empty when absent
    std::vector<double> waits;
    // per-token epoch ids; empty when absent
    std::vector<std::int32_t> epochs;

    std::int64_t length() const { return static_cast<std::int64_t>(tokens.size()); }
    bool has_waits() const { return !waits.empty(); }
};

enum class SeparatorPolicy { insert_separator, none };

inline Sequence tokenize_records(const std::vector<std::vector<std::string>>& records,
                                 SeparatorPolicy policy,
                                 const std::string& separator_token = "<sep>") {
    if (records.empty()) throw input_error("tokenize_records: empty record list");
    Sequence seq;
    if (policy == SeparatorPolicy::insert_separator) {
        for (const auto& rec : records)
            for (const auto& tok : rec)
                if (tok == separator_token)
                    throw input_error("tokenize_records: raw token collides with separator \"" +
                                      separator_token + "\"");
    }
    for (const auto& rec : records) {
        for (const auto& tok : rec) {
            if (tok.empty()) throw input_error("tokenize_records: empty token string");
            seq.tokens.push_back(seq.alphabet.intern(tok));
        }
        if (policy == SeparatorPolicy::insert_separator) {
            std::int32_t sid = seq.alphabet.intern(separator_token);
            seq.alphabet.separator_id = sid;
            seq.tokens.push_back(sid);
        }
    }
    return seq;
}

// Replace each token x_t by the pair (x, tau)_t over a product alphabet.
// The registry keeps the pairing so reports can project tau back out;
// downstream fitting is unchanged.
inline Sequence annotate_epochs(const Sequence& seq, const std::vector<std::int32_t>& epoch_labels) {
    if (epoch_labels.size() != seq.tokens.size())
        throw input_error("annotate_epochs: epoch label count does not match token count");
    Sequence out;
    out.waits = seq.waits;
    out.epochs = epoch_labels;
    std::unordered_map<std::int64_t, std::int32_t> pair_id;
    for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
        std::int32_t x = seq.tokens[t], tau = epoch_labels[t];
        std::int64_t key = (static_cast<std::int64_t>(x) << 32) | static_cast<std::uint32_t>(tau);
        auto it = pair_id.find(key);
        std::int32_t id;
        if (it == pair_id.end()) {
            id = out.alphabet.intern(seq.alphabet.id_to_token[x] + "\x1f" + std::to_string(tau));
            out.alphabet.base_of.push_back(x);
            out.alphabet.epoch_of.push_back(tau);
            pair_id.emplace(key, id);
        } else {
            id = it->second;
        }
        out.tokens.push_back(id);
    }
    if (seq.alphabet.separator_id) {
        // the separator may now appear under several epochs; keep no single id
        out.alphabet.separator_id.reset();
    }
    return out;
}

}  // namespace blockmc
