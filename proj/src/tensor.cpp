#include "speckg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace speckg {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + shape_str(a) +
                                " vs " + shape_str(b) + ")");
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& expected) {
    throw std::invalid_argument(std::string(op) + ": bad shape " + shape_str(a) + ", expected " +
                                expected);
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_str(*this) + " does not match " +
                                    std::to_string(data.size()) + " elements");
    }
}

Tensor Tensor::row(std::vector<double> d) {
    const std::size_t n = d.size();
    return Tensor({1, n}, std::move(d));
}

std::size_t Tensor::rows() const {
    if (shape.size() >= 2) return shape[shape.size() - 2];
    return 1;
}

std::size_t Tensor::cols() const {
    if (shape.empty()) return 1;
    return shape.back();
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) os << 'x';
        os << t.shape[i];
    }
    os << ']';
    return os.str();
}

Tape::Node& Tape::node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }

const Tape::Node& Tape::node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

void Tape::check_id(NodeId id, const char* op) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw std::invalid_argument(std::string(op) + ": node " + std::to_string(id) +
                                    " is not on this tape");
    }
}

NodeId Tape::push(Tensor value, std::vector<NodeId> parents, const char* op,
                  std::function<void(Tape&, const Node&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.grad.assign(n.value.numel(), 0.0);
    n.parents = std::move(parents);
    n.op = op;
    for (NodeId p : n.parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.grad.assign(n.value.numel(), 0.0);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_error("add", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    return push(std::move(out), {a, b}, "add", [a, b](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        auto& gb = t.node(b).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] += n.grad[i];
        }
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_id(a, "sub");
    check_id(b, "sub");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_error("sub", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    return push(std::move(out), {a, b}, "sub", [a, b](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        auto& gb = t.node(b).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] -= n.grad[i];
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_id(a, "mul");
    check_id(b, "mul");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) shape_error("mul", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), {a, b}, "mul", [a, b](Tape& t, const Node& n) {
        const auto& va = t.value(a).data;
        const auto& vb = t.value(b).data;
        auto& ga = t.node(a).grad;
        auto& gb = t.node(b).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i] * vb[i];
            gb[i] += n.grad[i] * va[i];
        }
    });
}

NodeId Tape::scale(NodeId a, double c) {
    check_id(a, "scale");
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    return push(std::move(out), {a}, "scale", [a, c](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * c;
    });
}

NodeId Tape::add_const(NodeId a, double c) {
    check_id(a, "add_const");
    Tensor out = value(a);
    for (double& v : out.data) v += c;
    return push(std::move(out), {a}, "add_const", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    });
}

NodeId Tape::one_minus(NodeId a) {
    check_id(a, "one_minus");
    Tensor out = value(a);
    for (double& v : out.data) v = 1.0 - v;
    return push(std::move(out), {a}, "one_minus", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] -= n.grad[i];
    });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() > 2 || tb.rank() > 2 || ta.rank() == 0 || tb.rank() == 0 ||
        ta.cols() != tb.rows()) {
        shape_error("matmul", ta, tb);
    }
    const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aval = ta.data[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += aval * tb.data[p * n + j];
        }
    return push(std::move(out), {a, b}, "matmul", [a, b, m, k, n](Tape& t, const Node& nd) {
        const auto& va = t.value(a).data;
        const auto& vb = t.value(b).data;
        auto& ga = t.node(a).grad;
        auto& gb = t.node(b).grad;
        // dA = dC * B^T, dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += nd.grad[i * n + j] * vb[p * n + j];
                ga[i * k + p] += acc;
            }
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += va[i * k + p] * nd.grad[i * n + j];
                gb[p * n + j] += acc;
            }
    });
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    for (NodeId p : parts) check_id(p, "concat_cols");
    const std::size_t m = value(parts[0]).rows();
    std::size_t total = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.rank() > 2 || t.rows() != m) shape_error("concat_cols", t, std::to_string(m) + " rows");
        total += t.cols();
    }
    Tensor out({m, total});
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        const std::size_t c = t.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * total + j + off] = t.data[i * c + j];
        off += c;
    }
    std::vector<NodeId> ps(parts.begin(), parts.end());
    return push(std::move(out), ps, "concat_cols", [ps, m, total](Tape& t, const Node& n) {
        std::size_t off = 0;
        for (NodeId p : ps) {
            const std::size_t c = t.value(p).cols();
            auto& gp = t.node(p).grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += n.grad[i * total + j + off];
            off += c;
        }
    });
}

NodeId Tape::stack_rows(std::span<const NodeId> parts) {
    if (parts.empty()) throw std::invalid_argument("stack_rows: no inputs");
    for (NodeId p : parts) check_id(p, "stack_rows");
    const std::size_t c = value(parts[0]).cols();
    std::size_t total_rows = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.rank() > 2 || t.cols() != c) shape_error("stack_rows", t, std::to_string(c) + " cols");
        total_rows += t.rows();
    }
    Tensor out({total_rows, c});
    std::size_t roff = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<long>(roff * c));
        roff += t.rows();
    }
    std::vector<NodeId> ps(parts.begin(), parts.end());
    return push(std::move(out), ps, "stack_rows", [ps, c](Tape& t, const Node& n) {
        std::size_t roff = 0;
        for (NodeId p : ps) {
            auto& gp = t.node(p).grad;
            const std::size_t cnt = gp.size();
            for (std::size_t i = 0; i < cnt; ++i) gp[i] += n.grad[roff * c + i];
            roff += t.value(p).rows();
        }
    });
}

NodeId Tape::sigmoid(NodeId a) {
    check_id(a, "sigmoid");
    Tensor out = value(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(out), {a}, "sigmoid", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double s = n.value.data[i];
            ga[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

NodeId Tape::tanh(NodeId a) {
    check_id(a, "tanh");
    Tensor out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    return push(std::move(out), {a}, "tanh", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double y = n.value.data[i];
            ga[i] += n.grad[i] * (1.0 - y * y);
        }
    });
}

NodeId Tape::softmax(NodeId a) {
    check_id(a, "softmax");
    const Tensor& ta = value(a);
    if (ta.rank() > 2 || ta.rows() != 1 || ta.numel() == 0) {
        shape_error("softmax", ta, "a non-empty vector");
    }
    Tensor out = ta;
    const double mx = *std::max_element(out.data.begin(), out.data.end());
    double z = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : out.data) v /= z;
    return push(std::move(out), {a}, "softmax", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        double dot = 0.0;
        for (std::size_t i = 0; i < n.grad.size(); ++i) dot += n.grad[i] * n.value.data[i];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.value.data[i] * (n.grad[i] - dot);
        }
    });
}

NodeId Tape::log(NodeId a) {
    check_id(a, "log");
    Tensor out = value(a);
    for (double& v : out.data) v = std::log(std::max(v, kProbEps));
    return push(std::move(out), {a}, "log", [a](Tape& t, const Node& n) {
        const auto& va = t.value(a).data;
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (va[i] > kProbEps) ga[i] += n.grad[i] / va[i];
        }
    });
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
    check_id(a, "clamp");
    Tensor out = value(a);
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return push(std::move(out), {a}, "clamp", [a, lo, hi](Tape& t, const Node& n) {
        const auto& va = t.value(a).data;
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (va[i] > lo && va[i] < hi) ga[i] += n.grad[i];
        }
    });
}

NodeId Tape::l1_norm(NodeId a) {
    check_id(a, "l1_norm");
    double acc = 0.0;
    for (double v : value(a).data) acc += std::abs(v);
    return push(Tensor::scalar(acc), {a}, "l1_norm", [a](Tape& t, const Node& n) {
        const auto& va = t.value(a).data;
        auto& ga = t.node(a).grad;
        const double g = n.grad[0];
        for (std::size_t i = 0; i < va.size(); ++i) {
            if (va[i] > 0.0) ga[i] += g;
            else if (va[i] < 0.0) ga[i] -= g;
        }
    });
}

NodeId Tape::sum(NodeId a) {
    check_id(a, "sum");
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    return push(Tensor::scalar(acc), {a}, "sum", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        const double g = n.grad[0];
        for (double& v : ga) v += g;
    });
}

NodeId Tape::mean(NodeId a) {
    check_id(a, "mean");
    const std::size_t cnt = value(a).numel();
    if (cnt == 0) throw std::invalid_argument("mean: empty input");
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    acc /= static_cast<double>(cnt);
    return push(Tensor::scalar(acc), {a}, "mean", [a, cnt](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        const double g = n.grad[0] / static_cast<double>(cnt);
        for (double& v : ga) v += g;
    });
}

NodeId Tape::dropout(NodeId a, double rate, Mode mode, Rng& rng) {
    check_id(a, "dropout");
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
    }
    if (mode == Mode::kEval || rate == 0.0) return a;
    const double keep = 1.0 - rate;
    const Tensor& ta = value(a);
    std::vector<double> mask(ta.numel());
    for (double& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
    return push(std::move(out), {a}, "dropout", [a, mask](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * mask[i];
    });
}

NodeId Tape::gather_row(NodeId matrix, std::size_t row) {
    check_id(matrix, "gather_row");
    const Tensor& tm = value(matrix);
    if (tm.rank() != 2 || row >= tm.rows()) {
        shape_error("gather_row", tm, "a matrix with more than " + std::to_string(row) + " rows");
    }
    const std::size_t c = tm.cols();
    Tensor out({1, c});
    std::copy(tm.data.begin() + static_cast<long>(row * c),
              tm.data.begin() + static_cast<long>((row + 1) * c), out.data.begin());
    return push(std::move(out), {matrix}, "gather_row", [matrix, row, c](Tape& t, const Node& n) {
        auto& gm = t.node(matrix).grad;
        for (std::size_t j = 0; j < c; ++j) gm[row * c + j] += n.grad[j];
    });
}

NodeId Tape::reshape(NodeId a, std::vector<std::size_t> new_shape) {
    check_id(a, "reshape");
    const Tensor& ta = value(a);
    Tensor out(std::move(new_shape), ta.data);
    return push(std::move(out), {a}, "reshape", [a](Tape& t, const Node& n) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    });
}

void Tape::backward(NodeId output) {
    check_id(output, "backward");
    if (value(output).numel() != 1) {
        throw std::invalid_argument("backward: output " + shape_str(value(output)) +
                                    " is not a scalar");
    }
    for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    node(output).grad[0] = 1.0;
    for (NodeId id = output; id >= 0; --id) {
        const Node& n = node(id);
        if (n.backprop) n.backprop(*this, n);
    }
}

} // namespace speckg
