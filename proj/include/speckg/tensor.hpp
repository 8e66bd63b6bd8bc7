#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "speckg/rng.hpp"

namespace speckg {

// Probabilities fed into logs and divisions are clamped to
// [kProbEps, 1 - kProbEps] so sigmoid outputs cannot underflow them.
inline constexpr double kProbEps = 1e-12;

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are what the model needs; 64-bit reals throughout.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor row(std::vector<double> d);
    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    // 2-D accessors; rank-1 tensors count as a single row.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::string shape_str(const Tensor& t);

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Mode { kTrain, kEval };

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by definition; backward replays the tape once in
// reverse, so each node is visited exactly once and gradient accumulation
// happens in a fixed order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    NodeId leaf(Tensor value, bool requires_grad = false);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b); // elementwise
    NodeId scale(NodeId a, double c);
    NodeId add_const(NodeId a, double c);
    NodeId one_minus(NodeId a); // 1 - x
    NodeId matmul(NodeId a, NodeId b);
    NodeId concat_cols(std::span<const NodeId> parts); // along last axis
    NodeId stack_rows(std::span<const NodeId> parts);  // along first axis
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);
    NodeId softmax(NodeId a); // over a vector (rank 1 or a single row)
    NodeId log(NodeId a);     // argument clamped to >= kProbEps
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId l1_norm(NodeId a); // -> scalar
    NodeId sum(NodeId a);     // -> scalar
    NodeId mean(NodeId a);    // -> scalar
    // Inverted dropout: survivors divided by the keep probability, so eval
    // mode is the identity. Rate 0 and eval mode return the input node.
    NodeId dropout(NodeId a, double rate, Mode mode, Rng& rng);
    NodeId gather_row(NodeId matrix, std::size_t row); // -> 1 x d
    NodeId reshape(NodeId a, std::vector<std::size_t> new_shape);

    const Tensor& value(NodeId id) const { return node(id).value; }
    const std::vector<double>& grad(NodeId id) const { return node(id).grad; }
    bool requires_grad(NodeId id) const { return node(id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(output)/d(output) = 1 and replays the tape in reverse.
    // `output` must hold exactly one element.
    void backward(NodeId output);

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::vector<NodeId> parents;
        std::function<void(Tape&, const Node&)> backprop;
        const char* op = "leaf";
        bool requires_grad = false;
    };

    Node& node(NodeId id);
    const Node& node(NodeId id) const;
    NodeId push(Tensor value, std::vector<NodeId> parents, const char* op,
                std::function<void(Tape&, const Node&)> backprop);
    void check_id(NodeId id, const char* op) const;

    std::vector<Node> nodes_;

    friend struct TapeTestAccess;
};

} // namespace speckg
