#include "speckg/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace speckg {

std::int32_t Vocab::intern_entity(const std::string& name) {
    auto it = entity_ids.find(name);
    if (it != entity_ids.end()) return it->second;
    const auto id = static_cast<std::int32_t>(entity_names.size());
    entity_names.push_back(name);
    entity_ids.emplace(name, id);
    return id;
}

std::int32_t Vocab::intern_relation(const std::string& name) {
    auto it = relation_ids.find(name);
    if (it != relation_ids.end()) return it->second;
    const auto id = static_cast<std::int32_t>(relation_names.size());
    relation_names.push_back(name);
    relation_ids.emplace(name, id);
    return id;
}

std::optional<std::int32_t> Vocab::entity_id(const std::string& name) const {
    auto it = entity_ids.find(name);
    if (it == entity_ids.end()) return std::nullopt;
    return it->second;
}

std::optional<std::int32_t> Vocab::relation_id(const std::string& name) const {
    auto it = relation_ids.find(name);
    if (it == relation_ids.end()) return std::nullopt;
    return it->second;
}

bool KnowledgeGraph::add(const Triple& t) {
    if (!index.insert(t).second) return false;
    triples.push_back(t);
    return true;
}

bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.vocab == b.vocab && a.triples == b.triples;
}

std::size_t FlipLog::removed_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.edit == Edit::kRemovedPositive;
    return n;
}

std::size_t FlipLog::added_count() const { return entries.size() - removed_count(); }

std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

namespace {

bool parse_triple_line(const std::string& line, std::string& h, std::string& r, std::string& t) {
    const auto tab1 = line.find('\t');
    if (tab1 == std::string::npos) return false;
    const auto tab2 = line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) return false;
    if (line.find('\t', tab2 + 1) != std::string::npos) return false;
    h = line.substr(0, tab1);
    r = line.substr(tab1 + 1, tab2 - tab1 - 1);
    t = line.substr(tab2 + 1);
    if (!t.empty() && t.back() == '\r') t.pop_back();
    return !h.empty() && !r.empty() && !t.empty();
}

} // namespace

LoadResult load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_triples: cannot open '" + path + "'");
    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    std::string h, r, t;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!parse_triple_line(line, h, r, t)) {
            throw std::runtime_error("load_triples: malformed line " + std::to_string(line_no) +
                                     " in '" + path + "'");
        }
        Triple triple{result.graph.vocab.intern_entity(h), result.graph.vocab.intern_relation(r),
                      result.graph.vocab.intern_entity(t)};
        if (!result.graph.add(triple)) ++result.duplicates_dropped;
    }
    if (result.graph.triples.empty()) {
        throw std::runtime_error("load_triples: no triples in '" + path + "'");
    }
    return result;
}

EncodedTriples load_triples_with_vocab(const std::string& path, const Vocab& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_triples_with_vocab: cannot open '" + path + "'");
    EncodedTriples result;
    TripleSet seen;
    std::string line;
    std::size_t line_no = 0;
    std::string h, r, t;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!parse_triple_line(line, h, r, t)) {
            throw std::runtime_error("load_triples_with_vocab: malformed line " +
                                     std::to_string(line_no) + " in '" + path + "'");
        }
        const auto hid = vocab.entity_id(h);
        const auto rid = vocab.relation_id(r);
        const auto tid = vocab.entity_id(t);
        if (!hid || !rid || !tid) {
            ++result.skipped_unknown;
            continue;
        }
        Triple triple{*hid, *rid, *tid};
        if (!seen.insert(triple).second) {
            ++result.duplicates_dropped;
            continue;
        }
        result.triples.push_back(triple);
    }
    return result;
}

PerturbResult perturb(const KnowledgeGraph& graph, double ptb_rate, double removal_fraction,
                      std::uint64_t seed) {
    if (ptb_rate < 0.0 || ptb_rate >= 1.0) {
        throw std::invalid_argument("perturb: ptb_rate " + std::to_string(ptb_rate) +
                                    " outside [0, 1)");
    }
    if (removal_fraction < 0.0 || removal_fraction > 1.0) {
        throw std::invalid_argument("perturb: removal_fraction " +
                                    std::to_string(removal_fraction) + " outside [0, 1]");
    }
    if (graph.triples.empty()) throw std::invalid_argument("perturb: empty graph");

    const std::size_t n = graph.triples.size();
    const std::size_t n_mod = round_half_up(ptb_rate * static_cast<double>(n));
    const std::size_t n_remove = round_half_up(removal_fraction * static_cast<double>(n_mod));
    const std::size_t n_add = n_mod - n_remove;

    Rng rng(seed);
    Rng remove_rng = rng.substream("perturb-remove");
    Rng add_rng = rng.substream("perturb-add");

    // Pick removal positions uniformly without replacement.
    std::vector<std::size_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = i;
    remove_rng.shuffle(positions);
    std::vector<std::size_t> removed(positions.begin(),
                                     positions.begin() + static_cast<long>(n_remove));
    std::sort(removed.begin(), removed.end());

    PerturbResult result;
    result.graph.vocab = graph.vocab;
    result.log.seed = seed;
    result.log.ptb_rate = ptb_rate;

    std::size_t next_removed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (next_removed < removed.size() && removed[next_removed] == i) {
            result.log.entries.push_back({graph.triples[i], Edit::kRemovedPositive, i});
            ++next_removed;
        } else {
            result.graph.add(graph.triples[i]);
        }
    }

    if (n_add > 0) {
        std::vector<std::int32_t> relations;
        {
            std::unordered_set<std::int32_t> seen;
            for (const Triple& t : graph.triples) seen.insert(t.relation);
            relations.assign(seen.begin(), seen.end());
            std::sort(relations.begin(), relations.end());
        }
        const auto n_entities = static_cast<std::uint64_t>(graph.vocab.entity_count());
        const double lattice = static_cast<double>(n_entities) * static_cast<double>(n_entities) *
                               static_cast<double>(relations.size());
        const double capacity = lattice - static_cast<double>(n);
        if (static_cast<double>(n_add) > capacity) {
            throw std::runtime_error("perturb: requested " + std::to_string(n_add) +
                                     " additions but only " + std::to_string(capacity) +
                                     " absent triples exist");
        }

        TripleSet added;
        if (lattice <= 200000.0) {
            // Small lattice: enumerate the absent triples and sample exactly.
            std::vector<Triple> absent;
            for (std::int32_t r : relations)
                for (std::int32_t h = 0; h < static_cast<std::int32_t>(n_entities); ++h)
                    for (std::int32_t t = 0; t < static_cast<std::int32_t>(n_entities); ++t) {
                        Triple cand{h, r, t};
                        if (!graph.contains(cand)) absent.push_back(cand);
                    }
            add_rng.shuffle(absent);
            for (std::size_t i = 0; i < n_add; ++i) {
                added.insert(absent[i]);
                result.log.entries.push_back({absent[i], Edit::kAddedNegative, 0});
                result.graph.add(absent[i]);
            }
        } else {
            std::size_t attempts = 0;
            const std::size_t max_attempts = 1000 * (n_add + 1);
            while (added.size() < n_add) {
                if (++attempts > max_attempts) {
                    throw std::runtime_error("perturb: addition sampling stalled after " +
                                             std::to_string(attempts) + " attempts");
                }
                Triple cand{
                    static_cast<std::int32_t>(add_rng.uniform_index(n_entities)),
                    relations[add_rng.uniform_index(relations.size())],
                    static_cast<std::int32_t>(add_rng.uniform_index(n_entities))};
                if (graph.contains(cand) || added.count(cand)) continue;
                added.insert(cand);
                result.log.entries.push_back({cand, Edit::kAddedNegative, 0});
                result.graph.add(cand);
            }
        }
    }
    return result;
}

KnowledgeGraph restore(const KnowledgeGraph& perturbed, const FlipLog& log) {
    TripleSet added;
    std::vector<FlipEntry> removed;
    for (const auto& e : log.entries) {
        if (e.edit == Edit::kAddedNegative) added.insert(e.triple);
        else removed.push_back(e);
    }
    std::vector<Triple> kept;
    kept.reserve(perturbed.triples.size());
    for (const Triple& t : perturbed.triples) {
        if (!added.count(t)) kept.push_back(t);
    }
    // Re-insert removals at their original positions, ascending.
    std::sort(removed.begin(), removed.end(),
              [](const FlipEntry& a, const FlipEntry& b) { return a.original_index < b.original_index; });
    KnowledgeGraph original;
    original.vocab = perturbed.vocab;
    std::size_t kept_pos = 0;
    const std::size_t total = kept.size() + removed.size();
    std::size_t next = 0;
    for (std::size_t i = 0; i < total; ++i) {
        if (next < removed.size() && removed[next].original_index == i) {
            if (!original.add(removed[next].triple)) {
                throw std::runtime_error("restore: removed triple already present");
            }
            ++next;
        } else {
            original.add(kept[kept_pos++]);
        }
    }
    return original;
}

SplitResult split(const KnowledgeGraph& graph, double train_fraction, std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw std::invalid_argument("split: train_fraction " + std::to_string(train_fraction) +
                                    " outside (0, 1)");
    }
    std::vector<std::size_t> order(graph.triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(seed).substream("split");
    rng.shuffle(order);
    const std::size_t n_train =
        round_half_up(train_fraction * static_cast<double>(graph.triples.size()));
    SplitResult result;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? result.train : result.valid).push_back(graph.triples[order[i]]);
    }
    return result;
}

namespace {

// Corruption slots alternate position: even slots replace the tail,
// odd slots replace the head.
Triple corrupted_at(const Triple& labeled, bool replace_tail, std::int32_t entity) {
    Triple c = labeled;
    if (replace_tail) c.tail = entity;
    else c.head = entity;
    return c;
}

std::vector<Triple> enumerate_absent_corruptions(const Triple& labeled, const Vocab& vocab,
                                                 const TripleSet& membership) {
    std::vector<Triple> absent;
    const auto n = static_cast<std::int32_t>(vocab.entity_count());
    for (std::int32_t e = 0; e < n; ++e) {
        Triple t = corrupted_at(labeled, true, e);
        if (!membership.count(t)) absent.push_back(t);
        Triple h = corrupted_at(labeled, false, e);
        if (h != t && !membership.count(h)) absent.push_back(h);
    }
    std::sort(absent.begin(), absent.end());
    absent.erase(std::unique(absent.begin(), absent.end()), absent.end());
    return absent;
}

std::vector<Triple> corrupt_impl(const Triple& labeled, const Vocab& vocab, std::size_t wanted,
                                 const TripleSet& membership, std::uint64_t seed,
                                 bool error_if_short) {
    if (wanted == 0) throw std::invalid_argument("corrupt: K must be positive");
    Rng rng = Rng(seed).substream("corrupt");
    const auto n_entities = static_cast<std::uint64_t>(vocab.entity_count());
    std::vector<Triple> picked;
    TripleSet picked_set;
    const std::size_t max_attempts = 64 + 16 * wanted;
    std::size_t attempts = 0;
    while (picked.size() < wanted && attempts < max_attempts) {
        ++attempts;
        const bool replace_tail = picked.size() % 2 == 0;
        Triple cand = corrupted_at(labeled, replace_tail,
                                   static_cast<std::int32_t>(rng.uniform_index(n_entities)));
        if (membership.count(cand) || picked_set.count(cand)) continue;
        picked.push_back(cand);
        picked_set.insert(cand);
    }
    if (picked.size() < wanted) {
        // Saturated sampling; fall back to the exact enumeration.
        std::vector<Triple> remaining;
        for (const Triple& t : enumerate_absent_corruptions(labeled, vocab, membership)) {
            if (!picked_set.count(t)) remaining.push_back(t);
        }
        if (error_if_short && picked.size() + remaining.size() < wanted) {
            throw std::runtime_error(
                "corrupt: only " + std::to_string(picked.size() + remaining.size()) +
                " absent corruptions exist for triple (" + std::to_string(labeled.head) + ", " +
                std::to_string(labeled.relation) + ", " + std::to_string(labeled.tail) +
                "), needed " + std::to_string(wanted));
        }
        rng.shuffle(remaining);
        for (const Triple& t : remaining) {
            if (picked.size() == wanted) break;
            picked.push_back(t);
        }
    }
    return picked;
}

} // namespace

std::vector<Triple> corrupt(const Triple& labeled, const Vocab& vocab, std::size_t k,
                            const TripleSet& membership, std::uint64_t seed) {
    return corrupt_impl(labeled, vocab, k, membership, seed, true);
}

std::vector<Triple> corrupt_up_to(const Triple& labeled, const Vocab& vocab, std::size_t wanted,
                                  const TripleSet& membership, std::uint64_t seed) {
    return corrupt_impl(labeled, vocab, wanted, membership, seed, false);
}

void write_triples(const std::string& path, const std::vector<Triple>& triples, const Vocab& vocab,
                   const std::vector<std::string>& header_lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_triples: cannot open '" + path + "'");
    for (const auto& h : header_lines) out << "# " << h << '\n';
    for (const Triple& t : triples) {
        out << vocab.entity_names[static_cast<std::size_t>(t.head)] << '\t'
            << vocab.relation_names[static_cast<std::size_t>(t.relation)] << '\t'
            << vocab.entity_names[static_cast<std::size_t>(t.tail)] << '\n';
    }
    if (!out) throw std::runtime_error("write_triples: write failed for '" + path + "'");
}

void write_fliplog(const std::string& path, const FlipLog& log, const Vocab& vocab,
                   const std::vector<std::string>& extra_header_lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_fliplog: cannot open '" + path + "'");
    out << "# seed=" << log.seed << " ptb_rate=" << log.ptb_rate << '\n';
    for (const auto& h : extra_header_lines) out << "# " << h << '\n';
    for (const auto& e : log.entries) {
        out << vocab.entity_names[static_cast<std::size_t>(e.triple.head)] << '\t'
            << vocab.relation_names[static_cast<std::size_t>(e.triple.relation)] << '\t'
            << vocab.entity_names[static_cast<std::size_t>(e.triple.tail)] << '\t'
            << (e.edit == Edit::kRemovedPositive ? "removed" : "added") << '\n';
    }
    if (!out) throw std::runtime_error("write_fliplog: write failed for '" + path + "'");
}

FlipLog read_fliplog(const std::string& path, const Vocab& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_fliplog: cannot open '" + path + "'");
    FlipLog log;
    std::string line;
    std::size_t line_no = 0;
    bool header_parsed = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (!header_parsed) {
                std::istringstream hs(line.substr(1));
                std::string tok;
                while (hs >> tok) {
                    if (tok.rfind("seed=", 0) == 0) log.seed = std::stoull(tok.substr(5));
                    if (tok.rfind("ptb_rate=", 0) == 0) log.ptb_rate = std::stod(tok.substr(9));
                }
                header_parsed = true;
            }
            continue;
        }
        std::istringstream ls(line);
        std::string h, r, t, edit;
        if (!std::getline(ls, h, '\t') || !std::getline(ls, r, '\t') ||
            !std::getline(ls, t, '\t') || !std::getline(ls, edit)) {
            throw std::runtime_error("read_fliplog: malformed line " + std::to_string(line_no) +
                                     " in '" + path + "'");
        }
        if (!edit.empty() && edit.back() == '\r') edit.pop_back();
        const auto hid = vocab.entity_id(h);
        const auto rid = vocab.relation_id(r);
        const auto tid = vocab.entity_id(t);
        if (!hid || !rid || !tid) {
            throw std::runtime_error("read_fliplog: unknown entity/relation at line " +
                                     std::to_string(line_no) + " in '" + path + "'");
        }
        Edit e;
        if (edit == "removed") e = Edit::kRemovedPositive;
        else if (edit == "added") e = Edit::kAddedNegative;
        else {
            throw std::runtime_error("read_fliplog: bad edit kind '" + edit + "' at line " +
                                     std::to_string(line_no));
        }
        log.entries.push_back({Triple{*hid, *rid, *tid}, e, 0});
    }
    return log;
}

} // namespace speckg
