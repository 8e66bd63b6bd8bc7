#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "speckg/rng.hpp"

namespace speckg {

struct Triple {
    std::int32_t head = 0;
    std::int32_t relation = 0;
    std::int32_t tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& t) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::int64_t v : {std::int64_t(t.head), std::int64_t(t.relation), std::int64_t(t.tail)}) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

// Entity/relation name <-> dense id maps, ids assigned in first-appearance order.
struct Vocab {
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;
    std::unordered_map<std::string, std::int32_t> entity_ids;
    std::unordered_map<std::string, std::int32_t> relation_ids;

    std::int32_t intern_entity(const std::string& name);
    std::int32_t intern_relation(const std::string& name);
    std::optional<std::int32_t> entity_id(const std::string& name) const;
    std::optional<std::int32_t> relation_id(const std::string& name) const;
    std::size_t entity_count() const { return entity_names.size(); }
    std::size_t relation_count() const { return relation_names.size(); }

    friend bool operator==(const Vocab& a, const Vocab& b) {
        return a.entity_names == b.entity_names && a.relation_names == b.relation_names;
    }
};

// The labeled triple set, kept both as an ordered list and a membership index.
struct KnowledgeGraph {
    Vocab vocab;
    std::vector<Triple> triples;
    TripleSet index;

    bool contains(const Triple& t) const { return index.count(t) > 0; }
    // Appends if absent; returns false on duplicate.
    bool add(const Triple& t);
    std::size_t size() const { return triples.size(); }
};

bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b);

struct LoadResult {
    KnowledgeGraph graph;
    std::size_t duplicates_dropped = 0;
};

// Reads "head<TAB>relation<TAB>tail" lines, building the vocabulary in
// first-appearance order. Lines starting with '#' are ignored.
LoadResult load_triples(const std::string& path);

struct EncodedTriples {
    std::vector<Triple> triples;
    std::size_t skipped_unknown = 0; // lines naming entities/relations absent from the vocab
    std::size_t duplicates_dropped = 0;
};

// Reads a triple file against an existing vocabulary without extending it.
EncodedTriples load_triples_with_vocab(const std::string& path, const Vocab& vocab);

enum class Edit { kRemovedPositive, kAddedNegative };

struct FlipEntry {
    Triple triple;
    Edit edit;
    // Position the triple held in the original list; only set for removals
    // and used to restore the original ordering exactly.
    std::size_t original_index = 0;
};

struct FlipLog {
    std::vector<FlipEntry> entries;
    std::uint64_t seed = 0;
    double ptb_rate = 0.0;

    std::size_t removed_count() const;
    std::size_t added_count() const;
};

struct PerturbResult {
    KnowledgeGraph graph;
    FlipLog log;
};

// Flips round(ptb_rate * |S|) links: round(removal_fraction * n_mod) existing
// triples removed uniformly at random, the remainder added as uniformly
// random absent triples (relation drawn from relations present in the graph).
PerturbResult perturb(const KnowledgeGraph& graph, double ptb_rate, double removal_fraction,
                      std::uint64_t seed);

// Applies a FlipLog in reverse; reconstructs the pre-perturbation graph exactly.
KnowledgeGraph restore(const KnowledgeGraph& perturbed, const FlipLog& log);

struct SplitResult {
    std::vector<Triple> train;
    std::vector<Triple> valid;
};

SplitResult split(const KnowledgeGraph& graph, double train_fraction, std::uint64_t seed);

// K distinct corruptions of one labeled triple, none present in the
// membership index, alternating tail/head replacement by slot parity.
std::vector<Triple> corrupt(const Triple& labeled, const Vocab& vocab, std::size_t k,
                            const TripleSet& membership, std::uint64_t seed);

// Same sampling scheme but returns as many corruptions as exist up to
// `wanted` instead of erroring; used for candidate pool construction.
std::vector<Triple> corrupt_up_to(const Triple& labeled, const Vocab& vocab, std::size_t wanted,
                                  const TripleSet& membership, std::uint64_t seed);

// Rounds half away from zero; used for all modification counts so results
// do not depend on platform rounding mode.
std::size_t round_half_up(double x);

// TSV I/O. `header_lines` are written as leading '#' comments.
void write_triples(const std::string& path, const std::vector<Triple>& triples, const Vocab& vocab,
                   const std::vector<std::string>& header_lines);
void write_fliplog(const std::string& path, const FlipLog& log, const Vocab& vocab,
                   const std::vector<std::string>& extra_header_lines);
FlipLog read_fliplog(const std::string& path, const Vocab& vocab);

} // namespace speckg
