#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "speckg/kg.hpp"
#include "speckg/rng.hpp"
#include "speckg/tensor.hpp"

namespace speckg {

// One hidden layer of width d with tanh, then linear to a scalar.
struct MlpParams {
    Tensor w1; // 3d x d
    Tensor b1; // 1 x d
    Tensor w2; // d x 1
    Tensor b2; // 1 x 1
};

// All trainable model tensors. Relation rows [R, 2R) hold the synthetic
// inverse relations used to give tail entities incoming neighbors.
struct ModelParams {
    std::size_t dim = 0;
    std::size_t n_entities = 0;
    std::size_t n_relations = 0;
    std::size_t layers = 1;

    Tensor entity_emb;   // |E| x d
    Tensor relation_emb; // 2|R| x d
    Tensor attention;    // 1 x 3d
    Tensor transform;    // d x d
    MlpParams head_pos;  // psi_1
    MlpParams head_neg;  // psi_0

    // Uniform init in [-1/sqrt(row_len), 1/sqrt(row_len)] per row; biases zero.
    static ModelParams init(std::size_t n_entities, std::size_t n_relations, std::size_t dim,
                            std::size_t layers, Rng& rng);

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

struct NeighborEntry {
    std::int32_t entity;
    std::int32_t relation; // in [0, 2|R|): >= |R| marks the inverse direction
    std::size_t triple_id; // index into the labeled list, for tie-breaking
};

struct NeighborSets {
    std::size_t top_m = 0;
    std::vector<std::vector<NeighborEntry>> sets; // indexed by entity id
};

// For each entity: incident facts sorted descending by labeled posterior,
// ties by triple id ascending, truncated to top_m.
NeighborSets build_neighbor_sets(const std::vector<Triple>& labeled, std::size_t n_entities,
                                 std::size_t n_relations, std::span<const double> posterior_labeled,
                                 std::size_t top_m);

// Tape node handles for every bound parameter of one forward pass.
struct ParamBinding {
    NodeId entity_emb = kNoNode;
    NodeId relation_emb = kNoNode;
    NodeId attention = kNoNode;
    NodeId transform = kNoNode;
    struct MlpBinding {
        NodeId w1 = kNoNode, b1 = kNoNode, w2 = kNoNode, b2 = kNoNode;
    } head_pos, head_neg;
};

// Differentiable forward pass. Representations are memoized per (layer,
// entity) on the tape, so one encoder instance serves a whole batch.
class TapedEncoder {
public:
    TapedEncoder(Tape& tape, const ModelParams& params, const NeighborSets& neighbors, Mode mode,
                 double dropout_rate, Rng dropout_rng, bool requires_grad = true);

    NodeId entity_repr(std::int32_t entity); // final-layer representation, 1 x d
    // (psi_1, psi_0) score nodes for one triple, each 1 x 1.
    std::pair<NodeId, NodeId> score(const Triple& triple);

    const ParamBinding& binding() const { return binding_; }
    Tape& tape() { return tape_; }

private:
    NodeId repr_at(std::int32_t entity, std::size_t layer);
    NodeId relation_node(std::int32_t relation);
    NodeId mlp(NodeId input, const ParamBinding::MlpBinding& head);

    Tape& tape_;
    const ModelParams& params_;
    const NeighborSets& neighbors_;
    Mode mode_;
    double dropout_rate_;
    Rng dropout_rng_;
    ParamBinding binding_;
    NodeId attention_col_ = kNoNode; // attention reshaped to 3d x 1
    std::unordered_map<std::int64_t, NodeId> repr_cache_;
    std::unordered_map<std::int32_t, NodeId> relation_cache_;
};

// Plain-double eval-mode forward: all entity representations computed once,
// then triples scored without a tape. Mirrors TapedEncoder exactly
// (same summation order, no dropout).
struct EncodedModel {
    const ModelParams* params = nullptr;
    std::vector<double> entity_repr; // |E| x d row-major, final layer

    std::span<const double> repr(std::int32_t entity) const;
    double psi1(const Triple& t) const;
    double psi0(const Triple& t) const;
};

EncodedModel encode_all(const ModelParams& params, const NeighborSets& neighbors);

// Scores a triple against externally supplied entity representations
// (used when representations come from a checkpoint).
double mlp_score(std::span<const double> head_repr, std::span<const double> relation_row,
                 std::span<const double> tail_repr, const MlpParams& head);

} // namespace speckg
