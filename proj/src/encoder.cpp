#include "speckg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace speckg {

namespace {

Tensor uniform_rows(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

MlpParams init_mlp(std::size_t dim, Rng& rng) {
    MlpParams mlp;
    mlp.w1 = uniform_rows(3 * dim, dim, rng);
    mlp.b1 = Tensor({1, dim});
    mlp.w2 = uniform_rows(dim, 1, rng);
    mlp.b2 = Tensor({1, 1});
    return mlp;
}

} // namespace

ModelParams ModelParams::init(std::size_t n_entities, std::size_t n_relations, std::size_t dim,
                              std::size_t layers, Rng& rng) {
    if (dim == 0 || layers == 0 || n_entities == 0 || n_relations == 0) {
        throw std::invalid_argument("ModelParams::init: all sizes must be positive");
    }
    ModelParams p;
    p.dim = dim;
    p.n_entities = n_entities;
    p.n_relations = n_relations;
    p.layers = layers;
    p.entity_emb = uniform_rows(n_entities, dim, rng);
    p.relation_emb = uniform_rows(2 * n_relations, dim, rng);
    p.attention = uniform_rows(1, 3 * dim, rng);
    p.transform = uniform_rows(dim, dim, rng);
    p.head_pos = init_mlp(dim, rng);
    p.head_neg = init_mlp(dim, rng);
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return {
        {"entity_emb", &entity_emb},   {"relation_emb", &relation_emb},
        {"attention", &attention},     {"transform", &transform},
        {"head_pos.w1", &head_pos.w1}, {"head_pos.b1", &head_pos.b1},
        {"head_pos.w2", &head_pos.w2}, {"head_pos.b2", &head_pos.b2},
        {"head_neg.w1", &head_neg.w1}, {"head_neg.b1", &head_neg.b1},
        {"head_neg.w2", &head_neg.w2}, {"head_neg.b2", &head_neg.b2},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->named()) out.emplace_back(name, t);
    return out;
}

NeighborSets build_neighbor_sets(const std::vector<Triple>& labeled, std::size_t n_entities,
                                 std::size_t n_relations, std::span<const double> posterior_labeled,
                                 std::size_t top_m) {
    if (posterior_labeled.size() != labeled.size()) {
        throw std::invalid_argument("build_neighbor_sets: " + std::to_string(labeled.size()) +
                                    " triples but " + std::to_string(posterior_labeled.size()) +
                                    " posteriors");
    }
    struct Scored {
        double posterior;
        NeighborEntry entry;
    };
    std::vector<std::vector<Scored>> incident(n_entities);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const Triple& t = labeled[i];
        const double p = posterior_labeled[i];
        incident[static_cast<std::size_t>(t.head)].push_back({p, {t.tail, t.relation, i}});
        incident[static_cast<std::size_t>(t.tail)].push_back(
            {p, {t.head, t.relation + static_cast<std::int32_t>(n_relations), i}});
    }
    NeighborSets result;
    result.top_m = top_m;
    result.sets.resize(n_entities);
    for (std::size_t e = 0; e < n_entities; ++e) {
        auto& cand = incident[e];
        std::sort(cand.begin(), cand.end(), [](const Scored& a, const Scored& b) {
            if (a.posterior != b.posterior) return a.posterior > b.posterior;
            if (a.entry.triple_id != b.entry.triple_id) return a.entry.triple_id < b.entry.triple_id;
            return a.entry.relation < b.entry.relation;
        });
        const std::size_t keep = std::min(top_m, cand.size());
        result.sets[e].reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) result.sets[e].push_back(cand[i].entry);
    }
    return result;
}

TapedEncoder::TapedEncoder(Tape& tape, const ModelParams& params, const NeighborSets& neighbors,
                           Mode mode, double dropout_rate, Rng dropout_rng, bool requires_grad)
    : tape_(tape), params_(params), neighbors_(neighbors), mode_(mode),
      dropout_rate_(dropout_rate), dropout_rng_(dropout_rng) {
    if (neighbors_.sets.size() != params_.n_entities) {
        throw std::invalid_argument("TapedEncoder: neighbor sets cover " +
                                    std::to_string(neighbors_.sets.size()) + " entities, model has " +
                                    std::to_string(params_.n_entities));
    }
    binding_.entity_emb = tape_.leaf(params.entity_emb, requires_grad);
    binding_.relation_emb = tape_.leaf(params.relation_emb, requires_grad);
    binding_.attention = tape_.leaf(params.attention, requires_grad);
    binding_.transform = tape_.leaf(params.transform, requires_grad);
    auto bind_mlp = [&](const MlpParams& mlp) {
        ParamBinding::MlpBinding b;
        b.w1 = tape_.leaf(mlp.w1, requires_grad);
        b.b1 = tape_.leaf(mlp.b1, requires_grad);
        b.w2 = tape_.leaf(mlp.w2, requires_grad);
        b.b2 = tape_.leaf(mlp.b2, requires_grad);
        return b;
    };
    binding_.head_pos = bind_mlp(params.head_pos);
    binding_.head_neg = bind_mlp(params.head_neg);
    attention_col_ = tape_.reshape(binding_.attention, {3 * params_.dim, 1});
}

NodeId TapedEncoder::relation_node(std::int32_t relation) {
    auto it = relation_cache_.find(relation);
    if (it != relation_cache_.end()) return it->second;
    const NodeId id = tape_.gather_row(binding_.relation_emb, static_cast<std::size_t>(relation));
    relation_cache_.emplace(relation, id);
    return id;
}

NodeId TapedEncoder::repr_at(std::int32_t entity, std::size_t layer) {
    const std::int64_t key = static_cast<std::int64_t>(layer) * params_.n_entities + entity;
    auto it = repr_cache_.find(key);
    if (it != repr_cache_.end()) return it->second;

    NodeId result;
    if (layer == 0) {
        result = tape_.gather_row(binding_.entity_emb, static_cast<std::size_t>(entity));
    } else {
        const NodeId prev = repr_at(entity, layer - 1);
        const auto& nbrs = neighbors_.sets[static_cast<std::size_t>(entity)];
        if (nbrs.empty()) {
            // Residual with a zero aggregate: tanh(0) = 0, so the layer is
            // an exact pass-through.
            result = prev;
        } else {
            std::vector<NodeId> logits;
            std::vector<NodeId> messages;
            logits.reserve(nbrs.size());
            messages.reserve(nbrs.size());
            for (const NeighborEntry& nb : nbrs) {
                const NodeId nb_prev = repr_at(nb.entity, layer - 1);
                const NodeId rel = relation_node(nb.relation);
                const std::vector<NodeId> cat_parts = {prev, nb_prev, rel};
                const NodeId cat = tape_.concat_cols(cat_parts);
                logits.push_back(tape_.matmul(cat, attention_col_));
                messages.push_back(tape_.matmul(nb_prev, binding_.transform));
            }
            const NodeId gamma = tape_.softmax(tape_.concat_cols(logits));
            const NodeId stacked = tape_.stack_rows(messages);
            const NodeId aggregate = tape_.matmul(gamma, stacked);
            const NodeId activated = tape_.tanh(aggregate);
            const NodeId dropped = tape_.dropout(activated, dropout_rate_, mode_, dropout_rng_);
            result = tape_.add(prev, dropped);
        }
    }
    repr_cache_.emplace(key, result);
    return result;
}

NodeId TapedEncoder::entity_repr(std::int32_t entity) {
    if (entity < 0 || static_cast<std::size_t>(entity) >= params_.n_entities) {
        throw std::invalid_argument("TapedEncoder: entity " + std::to_string(entity) +
                                    " out of range");
    }
    return repr_at(entity, params_.layers);
}

NodeId TapedEncoder::mlp(NodeId input, const ParamBinding::MlpBinding& head) {
    const NodeId hidden = tape_.tanh(tape_.add(tape_.matmul(input, head.w1), head.b1));
    return tape_.add(tape_.matmul(hidden, head.w2), head.b2);
}

std::pair<NodeId, NodeId> TapedEncoder::score(const Triple& triple) {
    const NodeId h = entity_repr(triple.head);
    const NodeId r = relation_node(triple.relation);
    const NodeId t = entity_repr(triple.tail);
    const std::vector<NodeId> parts = {h, r, t};
    const NodeId input = tape_.concat_cols(parts);
    return {mlp(input, binding_.head_pos), mlp(input, binding_.head_neg)};
}

std::span<const double> EncodedModel::repr(std::int32_t entity) const {
    const std::size_t d = params->dim;
    return {entity_repr.data() + static_cast<std::size_t>(entity) * d, d};
}

double mlp_score(std::span<const double> head_repr, std::span<const double> relation_row,
                 std::span<const double> tail_repr, const MlpParams& head) {
    const std::size_t d = head_repr.size();
    std::vector<double> input;
    input.reserve(3 * d);
    input.insert(input.end(), head_repr.begin(), head_repr.end());
    input.insert(input.end(), relation_row.begin(), relation_row.end());
    input.insert(input.end(), tail_repr.begin(), tail_repr.end());

    std::vector<double> hidden(d, 0.0);
    for (std::size_t p = 0; p < 3 * d; ++p) {
        const double x = input[p];
        for (std::size_t j = 0; j < d; ++j) hidden[j] += x * head.w1.data[p * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) hidden[j] = std::tanh(hidden[j] + head.b1.data[j]);
    double out = 0.0;
    for (std::size_t j = 0; j < d; ++j) out += hidden[j] * head.w2.data[j];
    return out + head.b2.data[0];
}

namespace {

std::span<const double> relation_row(const ModelParams& p, std::int32_t relation) {
    return {p.relation_emb.data.data() + static_cast<std::size_t>(relation) * p.dim, p.dim};
}

} // namespace

double EncodedModel::psi1(const Triple& t) const {
    return mlp_score(repr(t.head), relation_row(*params, t.relation), repr(t.tail),
                     params->head_pos);
}

double EncodedModel::psi0(const Triple& t) const {
    return mlp_score(repr(t.head), relation_row(*params, t.relation), repr(t.tail),
                     params->head_neg);
}

EncodedModel encode_all(const ModelParams& params, const NeighborSets& neighbors) {
    if (neighbors.sets.size() != params.n_entities) {
        throw std::invalid_argument("encode_all: neighbor sets cover " +
                                    std::to_string(neighbors.sets.size()) + " entities, model has " +
                                    std::to_string(params.n_entities));
    }
    const std::size_t d = params.dim;
    const std::size_t ne = params.n_entities;
    std::vector<double> prev = params.entity_emb.data;
    std::vector<double> next(ne * d);
    const double* attn = params.attention.data.data();

    for (std::size_t layer = 1; layer <= params.layers; ++layer) {
        for (std::size_t e = 0; e < ne; ++e) {
            const double* self = prev.data() + e * d;
            double* out = next.data() + e * d;
            const auto& nbrs = neighbors.sets[e];
            if (nbrs.empty()) {
                std::copy(self, self + d, out);
                continue;
            }
            // Attention logits: a . (h_e || h_ek || h_rk), summed in
            // concatenation order to mirror the taped matmul.
            std::vector<double> logits(nbrs.size());
            for (std::size_t k = 0; k < nbrs.size(); ++k) {
                const double* nb = prev.data() + static_cast<std::size_t>(nbrs[k].entity) * d;
                const double* rel =
                    params.relation_emb.data.data() + static_cast<std::size_t>(nbrs[k].relation) * d;
                double q = 0.0;
                for (std::size_t j = 0; j < d; ++j) q += attn[j] * self[j];
                for (std::size_t j = 0; j < d; ++j) q += attn[d + j] * nb[j];
                for (std::size_t j = 0; j < d; ++j) q += attn[2 * d + j] * rel[j];
                logits[k] = q;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& q : logits) {
                q = std::exp(q - mx);
                z += q;
            }
            std::vector<double> agg(d, 0.0);
            std::vector<double> msg(d);
            for (std::size_t k = 0; k < nbrs.size(); ++k) {
                const double gamma = logits[k] / z;
                const double* nb = prev.data() + static_cast<std::size_t>(nbrs[k].entity) * d;
                // message = h_ek . M, formed fully before weighting so the
                // summation order matches the taped matmul bit for bit
                std::fill(msg.begin(), msg.end(), 0.0);
                for (std::size_t p = 0; p < d; ++p) {
                    const double x = nb[p];
                    const double* mrow = params.transform.data.data() + p * d;
                    for (std::size_t j = 0; j < d; ++j) msg[j] += x * mrow[j];
                }
                for (std::size_t j = 0; j < d; ++j) agg[j] += gamma * msg[j];
            }
            for (std::size_t j = 0; j < d; ++j) out[j] = self[j] + std::tanh(agg[j]);
        }
        std::swap(prev, next);
    }

    EncodedModel model;
    model.params = &params;
    model.entity_repr = std::move(prev);
    return model;
}

} // namespace speckg
