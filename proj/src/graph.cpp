#include "recordkit/graph.hpp"

#include <cmath>

#include "recordkit/errors.hpp"

namespace recordkit {

namespace {

size_t row_of(const std::vector<size_t>& shape) { return shape.size() == 1 ? 1 : shape[0]; }
size_t col_of(const std::vector<size_t>& shape) { return shape.size() == 1 ? shape[0] : shape[1]; }

size_t gather_index(double raw, size_t table_rows, const std::string& label) {
    double rounded = std::nearbyint(raw);
    if (std::fabs(raw - rounded) > 1e-9 || rounded < 0.0 ||
        rounded >= static_cast<double>(table_rows)) {
        throw ShapeError("token id " + std::to_string(raw) + " out of range [0, " +
                         std::to_string(table_rows) + ") in " + label);
    }
    return static_cast<size_t>(rounded);
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::kInput: return "input";
        case Op::kConstant: return "constant";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "mul";
        case Op::kScale: return "scale";
        case Op::kMatMul: return "matmul";
        case Op::kAddRowVec: return "add_rowvec";
        case Op::kTanh: return "tanh";
        case Op::kSumAll: return "sum_all";
        case Op::kMeanAll: return "mean_all";
        case Op::kSquaredL2: return "squared_l2";
        case Op::kSliceRows: return "slice_rows";
        case Op::kConcatCols: return "concat_cols";
        case Op::kGatherRows: return "gather_rows";
        case Op::kTileRows: return "tile_rows";
        case Op::kBlockMeanRows: return "block_mean_rows";
    }
    return "?";
}

std::string Graph::node_label(NodeId id) const {
    const Node& n = nodes_[id];
    std::string label = std::string(op_name(n.op)) + "#" + std::to_string(id);
    if (!n.name.empty()) label += " '" + n.name + "'";
    return label;
}

void Graph::fail_shape(const Node& n, const std::string& detail) const {
    std::string label = std::string(op_name(n.op)) + "#" + std::to_string(nodes_.size());
    if (!n.name.empty()) label += " '" + n.name + "'";
    throw ShapeError(label + ": " + detail);
}

NodeId Graph::push(Node node) {
    node.value = Tensor(node.shape);
    nodes_.push_back(std::move(node));
    forward_done_ = false;
    return nodes_.size() - 1;
}

const Graph::Node& Graph::node(NodeId id) const { return nodes_[id]; }

void Graph::check_exists(NodeId id, const char* who) const {
    if (id >= nodes_.size()) {
        throw ShapeError(std::string(who) + ": unknown node id " + std::to_string(id));
    }
}

NodeId Graph::input(std::string name, std::vector<size_t> shape) {
    if (inputs_by_name_.count(name)) throw ShapeError("duplicate input name '" + name + "'");
    Node n{Op::kInput, {}, std::move(shape), name};
    if (n.shape.empty() || n.shape.size() > 2) fail_shape(n, "inputs must be rank 1 or 2");
    NodeId id = push(std::move(n));
    inputs_by_name_.emplace(std::move(name), id);
    return id;
}

NodeId Graph::constant(Tensor value, std::string name) {
    Node n{Op::kConstant, {}, value.shape(), std::move(name)};
    NodeId id = push(std::move(n));
    nodes_[id].value = std::move(value);
    nodes_[id].bound = true;
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_exists(a, "add");
    check_exists(b, "add");
    Node n{Op::kAdd, {a, b}, node(a).shape};
    if (node(a).shape != node(b).shape) {
        fail_shape(n, "operand shapes differ: " + shape_to_string(node(a).shape) + " vs " +
                          shape_to_string(node(b).shape));
    }
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_exists(a, "sub");
    check_exists(b, "sub");
    Node n{Op::kSub, {a, b}, node(a).shape};
    if (node(a).shape != node(b).shape) {
        fail_shape(n, "operand shapes differ: " + shape_to_string(node(a).shape) + " vs " +
                          shape_to_string(node(b).shape));
    }
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_exists(a, "mul");
    check_exists(b, "mul");
    Node n{Op::kMul, {a, b}, node(a).shape};
    if (node(a).shape != node(b).shape) {
        fail_shape(n, "operand shapes differ: " + shape_to_string(node(a).shape) + " vs " +
                          shape_to_string(node(b).shape));
    }
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double factor) {
    check_exists(a, "scale");
    if (!std::isfinite(factor)) throw NumericalError("scale: non-finite factor");
    Node n{Op::kScale, {a}, node(a).shape};
    n.factor = factor;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_exists(a, "matmul");
    check_exists(b, "matmul");
    Node n{Op::kMatMul, {a, b}, {}};
    const auto& sa = node(a).shape;
    const auto& sb = node(b).shape;
    if (sa.size() != 2 || sb.size() != 2) fail_shape(n, "operands must be rank 2");
    if (sa[1] != sb[0]) {
        fail_shape(n, "inner dimensions differ: " + shape_to_string(sa) + " x " +
                          shape_to_string(sb));
    }
    n.shape = {sa[0], sb[1]};
    return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId m, NodeId v) {
    check_exists(m, "add_rowvec");
    check_exists(v, "add_rowvec");
    Node n{Op::kAddRowVec, {m, v}, node(m).shape};
    if (node(m).shape.size() != 2) fail_shape(n, "matrix operand must be rank 2");
    if (row_of(node(v).shape) != 1 || col_of(node(v).shape) != node(m).shape[1]) {
        fail_shape(n, "row vector shape " + shape_to_string(node(v).shape) +
                          " does not broadcast over " + shape_to_string(node(m).shape));
    }
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
    check_exists(a, "tanh");
    return push(Node{Op::kTanh, {a}, node(a).shape});
}

NodeId Graph::sum_all(NodeId a) {
    check_exists(a, "sum_all");
    return push(Node{Op::kSumAll, {a}, {1}});
}

NodeId Graph::mean_all(NodeId a) {
    check_exists(a, "mean_all");
    return push(Node{Op::kMeanAll, {a}, {1}});
}

NodeId Graph::squared_l2(NodeId a) {
    check_exists(a, "squared_l2");
    return push(Node{Op::kSquaredL2, {a}, {1}});
}

NodeId Graph::slice_rows(NodeId a, size_t begin, size_t end) {
    check_exists(a, "slice_rows");
    Node n{Op::kSliceRows, {a}, {}};
    size_t rows = row_of(node(a).shape);
    if (node(a).shape.size() != 2) fail_shape(n, "operand must be rank 2");
    if (begin >= end || end > rows) {
        fail_shape(n, "row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                          ") invalid for " + shape_to_string(node(a).shape));
    }
    n.shape = {end - begin, node(a).shape[1]};
    n.a0 = begin;
    n.a1 = end;
    return push(std::move(n));
}

NodeId Graph::concat_cols(NodeId a, NodeId b) {
    check_exists(a, "concat_cols");
    check_exists(b, "concat_cols");
    Node n{Op::kConcatCols, {a, b}, {}};
    const auto& sa = node(a).shape;
    const auto& sb = node(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[0] != sb[0]) {
        fail_shape(n, "row counts differ: " + shape_to_string(sa) + " vs " + shape_to_string(sb));
    }
    n.shape = {sa[0], sa[1] + sb[1]};
    return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId table, NodeId ids) {
    check_exists(table, "gather_rows");
    check_exists(ids, "gather_rows");
    Node n{Op::kGatherRows, {table, ids}, {}};
    if (node(table).shape.size() != 2) fail_shape(n, "table must be rank 2");
    if (node(ids).shape.size() != 1) fail_shape(n, "ids must be rank 1");
    n.shape = {node(ids).shape[0], node(table).shape[1]};
    return push(std::move(n));
}

NodeId Graph::tile_rows(NodeId a, size_t times) {
    check_exists(a, "tile_rows");
    Node n{Op::kTileRows, {a}, {}};
    if (node(a).shape.size() != 2) fail_shape(n, "operand must be rank 2");
    if (times == 0) fail_shape(n, "tile count must be positive");
    n.shape = {node(a).shape[0] * times, node(a).shape[1]};
    n.a0 = times;
    return push(std::move(n));
}

NodeId Graph::block_mean_rows(NodeId a, size_t block) {
    check_exists(a, "block_mean_rows");
    Node n{Op::kBlockMeanRows, {a}, {}};
    if (node(a).shape.size() != 2) fail_shape(n, "operand must be rank 2");
    if (block == 0 || node(a).shape[0] % block != 0) {
        fail_shape(n, "block size " + std::to_string(block) + " does not divide " +
                          shape_to_string(node(a).shape));
    }
    n.shape = {node(a).shape[0] / block, node(a).shape[1]};
    n.a0 = block;
    return push(std::move(n));
}

void Graph::bind(NodeId id, Tensor value) {
    check_exists(id, "bind");
    Node& n = nodes_[id];
    if (n.op != Op::kInput) throw ShapeError("bind: " + node_label(id) + " is not an input");
    if (value.shape() != n.shape) {
        throw ShapeError("bind: " + node_label(id) + " expects " + shape_to_string(n.shape) +
                         ", got " + value.shape_str());
    }
    n.value = std::move(value);
    n.bound = true;
    forward_done_ = false;
}

void Graph::bind(const std::string& input_name, Tensor value) {
    bind(input_id(input_name), std::move(value));
}

NodeId Graph::input_id(const std::string& input_name) const {
    auto it = inputs_by_name_.find(input_name);
    if (it == inputs_by_name_.end()) throw ShapeError("unknown input '" + input_name + "'");
    return it->second;
}

void Graph::forward() {
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        Node& n = nodes_[id];
        if (n.op == Op::kInput) {
            if (!n.bound) throw ShapeError("forward: input " + node_label(id) + " is unbound");
            continue;
        }
        if (n.op == Op::kConstant) continue;
        compute(n);
        if (!n.value.all_finite()) {
            throw NumericalError("forward: non-finite intermediate at " + node_label(id));
        }
    }
    forward_done_ = true;
}

void Graph::compute(Node& n) {
    auto& out = n.value.vec();
    switch (n.op) {
        case Op::kAdd: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            const auto& b = nodes_[n.inputs[1]].value.vec();
            for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
            break;
        }
        case Op::kSub: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            const auto& b = nodes_[n.inputs[1]].value.vec();
            for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
            break;
        }
        case Op::kMul: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            const auto& b = nodes_[n.inputs[1]].value.vec();
            for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
            break;
        }
        case Op::kScale: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * n.factor;
            break;
        }
        case Op::kMatMul: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            const Tensor& b = nodes_[n.inputs[1]].value;
            size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
            for (size_t i = 0; i < m; ++i) {
                for (size_t j = 0; j < p; ++j) {
                    double acc = 0.0;
                    for (size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * p + j];
                    out[i * p + j] = acc;
                }
            }
            break;
        }
        case Op::kAddRowVec: {
            const Tensor& m = nodes_[n.inputs[0]].value;
            const Tensor& v = nodes_[n.inputs[1]].value;
            size_t rows = m.shape()[0], cols = m.shape()[1];
            for (size_t r = 0; r < rows; ++r) {
                for (size_t c = 0; c < cols; ++c) out[r * cols + c] = m[r * cols + c] + v[c];
            }
            break;
        }
        case Op::kTanh: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
            break;
        }
        case Op::kSumAll: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            double acc = 0.0;
            for (double x : a) acc += x;
            out[0] = acc;
            break;
        }
        case Op::kMeanAll: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            double acc = 0.0;
            for (double x : a) acc += x;
            out[0] = acc / static_cast<double>(a.size());
            break;
        }
        case Op::kSquaredL2: {
            const auto& a = nodes_[n.inputs[0]].value.vec();
            double acc = 0.0;
            for (double x : a) acc += x * x;
            out[0] = acc;
            break;
        }
        case Op::kSliceRows: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            size_t cols = a.shape()[1];
            for (size_t r = n.a0; r < n.a1; ++r) {
                for (size_t c = 0; c < cols; ++c) out[(r - n.a0) * cols + c] = a[r * cols + c];
            }
            break;
        }
        case Op::kConcatCols: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            const Tensor& b = nodes_[n.inputs[1]].value;
            size_t rows = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
            for (size_t r = 0; r < rows; ++r) {
                for (size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = a[r * ca + c];
                for (size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = b[r * cb + c];
            }
            break;
        }
        case Op::kGatherRows: {
            const Tensor& table = nodes_[n.inputs[0]].value;
            const Tensor& ids = nodes_[n.inputs[1]].value;
            size_t cols = table.shape()[1];
            for (size_t s = 0; s < ids.numel(); ++s) {
                size_t row = gather_index(ids[s], table.shape()[0], "gather_rows");
                for (size_t c = 0; c < cols; ++c) out[s * cols + c] = table[row * cols + c];
            }
            break;
        }
        case Op::kTileRows: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            size_t rows = a.shape()[0], cols = a.shape()[1];
            for (size_t b = 0; b < n.a0; ++b) {
                for (size_t i = 0; i < rows * cols; ++i) out[b * rows * cols + i] = a[i];
            }
            break;
        }
        case Op::kBlockMeanRows: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            size_t block = n.a0, cols = a.shape()[1], out_rows = n.shape[0];
            double inv = 1.0 / static_cast<double>(block);
            for (size_t b = 0; b < out_rows; ++b) {
                for (size_t c = 0; c < cols; ++c) {
                    double acc = 0.0;
                    for (size_t s = 0; s < block; ++s) acc += a[(b * block + s) * cols + c];
                    out[b * cols + c] = acc * inv;
                }
            }
            break;
        }
        case Op::kInput:
        case Op::kConstant:
            break;
    }
}

const Tensor& Graph::value(NodeId id) const {
    check_exists(id, "value");
    if (!forward_done_ && node(id).op != Op::kConstant && node(id).op != Op::kInput) {
        throw ShapeError("value: forward has not run");
    }
    return node(id).value;
}

std::unordered_map<NodeId, Tensor> Graph::backward(NodeId output,
                                                   const std::vector<NodeId>& wrt) const {
    check_exists(output, "backward");
    if (!forward_done_) throw ShapeError("backward: forward has not run");
    if (node(output).value.numel() != 1) {
        throw ShapeError("backward: output " + node_label(output) + " is not scalar");
    }

    std::vector<Tensor> grads(nodes_.size());
    auto ensure = [&](NodeId id) -> Tensor& {
        if (grads[id].numel() == 0) grads[id] = Tensor(nodes_[id].shape);
        return grads[id];
    };
    ensure(output)[0] = 1.0;

    for (NodeId id = output + 1; id-- > 0;) {
        if (grads[id].numel() == 0) continue;
        const Node& n = nodes_[id];
        const Tensor& g = grads[id];
        switch (n.op) {
            case Op::kInput:
            case Op::kConstant:
                break;
            case Op::kAdd: {
                Tensor& ga = ensure(n.inputs[0]);
                Tensor& gb = ensure(n.inputs[1]);
                for (size_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                }
                break;
            }
            case Op::kSub: {
                Tensor& ga = ensure(n.inputs[0]);
                Tensor& gb = ensure(n.inputs[1]);
                for (size_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i];
                    gb[i] -= g[i];
                }
                break;
            }
            case Op::kMul: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                Tensor& ga = ensure(n.inputs[0]);
                Tensor& gb = ensure(n.inputs[1]);
                for (size_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i] * b[i];
                    gb[i] += g[i] * a[i];
                }
                break;
            }
            case Op::kScale: {
                Tensor& ga = ensure(n.inputs[0]);
                for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.factor;
                break;
            }
            case Op::kMatMul: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                Tensor& ga = ensure(n.inputs[0]);
                Tensor& gb = ensure(n.inputs[1]);
                size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
                for (size_t i = 0; i < m; ++i) {
                    for (size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (size_t j = 0; j < p; ++j) acc += g[i * p + j] * b[l * p + j];
                        ga[i * k + l] += acc;
                    }
                }
                for (size_t l = 0; l < k; ++l) {
                    for (size_t j = 0; j < p; ++j) {
                        double acc = 0.0;
                        for (size_t i = 0; i < m; ++i) acc += a[i * k + l] * g[i * p + j];
                        gb[l * p + j] += acc;
                    }
                }
                break;
            }
            case Op::kAddRowVec: {
                Tensor& gm = ensure(n.inputs[0]);
                Tensor& gv = ensure(n.inputs[1]);
                size_t rows = n.shape[0], cols = n.shape[1];
                for (size_t i = 0; i < g.numel(); ++i) gm[i] += g[i];
                for (size_t c = 0; c < cols; ++c) {
                    double acc = 0.0;
                    for (size_t r = 0; r < rows; ++r) acc += g[r * cols + c];
                    gv[c] += acc;
                }
                break;
            }
            case Op::kTanh: {
                Tensor& ga = ensure(n.inputs[0]);
                const Tensor& y = n.value;
                for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::kSumAll: {
                Tensor& ga = ensure(n.inputs[0]);
                for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
                break;
            }
            case Op::kMeanAll: {
                Tensor& ga = ensure(n.inputs[0]);
                double s = g[0] / static_cast<double>(ga.numel());
                for (size_t i = 0; i < ga.numel(); ++i) ga[i] += s;
                break;
            }
            case Op::kSquaredL2: {
                Tensor& ga = ensure(n.inputs[0]);
                const Tensor& x = nodes_[n.inputs[0]].value;
                for (size_t i = 0; i < ga.numel(); ++i) ga[i] += 2.0 * x[i] * g[0];
                break;
            }
            case Op::kSliceRows: {
                Tensor& ga = ensure(n.inputs[0]);
                size_t cols = n.shape[1];
                for (size_t r = n.a0; r < n.a1; ++r) {
                    for (size_t c = 0; c < cols; ++c) {
                        ga[r * cols + c] += g[(r - n.a0) * cols + c];
                    }
                }
                break;
            }
            case Op::kConcatCols: {
                Tensor& ga = ensure(n.inputs[0]);
                Tensor& gb = ensure(n.inputs[1]);
                size_t rows = n.shape[0];
                size_t ca = nodes_[n.inputs[0]].shape[1];
                size_t cb = nodes_[n.inputs[1]].shape[1];
                for (size_t r = 0; r < rows; ++r) {
                    for (size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
                    for (size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
                }
                break;
            }
            case Op::kGatherRows: {
                Tensor& gt = ensure(n.inputs[0]);
                const Tensor& ids = nodes_[n.inputs[1]].value;
                size_t cols = n.shape[1];
                size_t table_rows = nodes_[n.inputs[0]].shape[0];
                for (size_t s = 0; s < ids.numel(); ++s) {
                    size_t row = gather_index(ids[s], table_rows, "gather_rows backward");
                    for (size_t c = 0; c < cols; ++c) gt[row * cols + c] += g[s * cols + c];
                }
                break;
            }
            case Op::kTileRows: {
                Tensor& ga = ensure(n.inputs[0]);
                size_t rows = nodes_[n.inputs[0]].shape[0];
                size_t cols = n.shape[1];
                for (size_t b = 0; b < n.a0; ++b) {
                    for (size_t i = 0; i < rows * cols; ++i) ga[i] += g[b * rows * cols + i];
                }
                break;
            }
            case Op::kBlockMeanRows: {
                Tensor& ga = ensure(n.inputs[0]);
                size_t block = n.a0, cols = n.shape[1], out_rows = n.shape[0];
                double inv = 1.0 / static_cast<double>(block);
                for (size_t b = 0; b < out_rows; ++b) {
                    for (size_t s = 0; s < block; ++s) {
                        for (size_t c = 0; c < cols; ++c) {
                            ga[(b * block + s) * cols + c] += g[b * cols + c] * inv;
                        }
                    }
                }
                break;
            }
        }
    }

    std::unordered_map<NodeId, Tensor> result;
    for (NodeId id : wrt) {
        check_exists(id, "backward wrt");
        result.emplace(id, grads[id].numel() ? grads[id] : Tensor(nodes_[id].shape));
    }
    return result;
}

}  // namespace recordkit
