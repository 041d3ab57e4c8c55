#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "recordkit/tensor.hpp"

namespace recordkit {

using NodeId = size_t;

enum class Op {
    kInput,
    kConstant,
    kAdd,
    kSub,
    kMul,
    kScale,
    kMatMul,
    kAddRowVec,
    kTanh,
    kSumAll,
    kMeanAll,
    kSquaredL2,
    kSliceRows,
    kConcatCols,
    kGatherRows,
    kTileRows,
    kBlockMeanRows,
};

const char* op_name(Op op);

// Reverse-mode tape over rank-1/2 tensors. Nodes are appended in
// topological order; forward evaluates 0..n-1, backward walks the exact
// reverse. All reductions accumulate left to right over row-major data,
// so repeated runs are bitwise identical.
class Graph {
public:
    NodeId input(std::string name, std::vector<size_t> shape);
    NodeId constant(Tensor value, std::string name = "");

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId matmul(NodeId a, NodeId b);
    // [B,n] + [1,n] (or [n]) with the row vector broadcast over rows.
    NodeId add_rowvec(NodeId m, NodeId v);
    NodeId tanh(NodeId a);
    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);
    NodeId squared_l2(NodeId a);
    NodeId slice_rows(NodeId a, size_t begin, size_t end);
    NodeId concat_cols(NodeId a, NodeId b);
    // out[s,:] = table[ids[s],:]; ids must hold integral values in [0, rows).
    // Backward scatters into table rows; ids receive no gradient.
    NodeId gather_rows(NodeId table, NodeId ids);
    // Stacks `times` copies of the full matrix: out[b*S+s,:] = a[s,:].
    NodeId tile_rows(NodeId a, size_t times);
    // Mean over consecutive row blocks: [B*block,n] -> [B,n].
    NodeId block_mean_rows(NodeId a, size_t block);

    void bind(NodeId id, Tensor value);
    void bind(const std::string& input_name, Tensor value);
    NodeId input_id(const std::string& input_name) const;

    void forward();
    const Tensor& value(NodeId id) const;

    // d(output)/d(node) for each requested node; output must be scalar and
    // forward must have run on the current bindings.
    std::unordered_map<NodeId, Tensor> backward(NodeId output, const std::vector<NodeId>& wrt) const;

    size_t size() const { return nodes_.size(); }
    std::string node_label(NodeId id) const;

private:
    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        std::vector<size_t> shape;
        std::string name;
        size_t a0 = 0;
        size_t a1 = 0;
        double factor = 1.0;
        Tensor value;
        bool bound = false;  // inputs only
    };

    NodeId push(Node node);
    const Node& node(NodeId id) const;
    void check_exists(NodeId id, const char* who) const;
    void compute(Node& n);
    [[noreturn]] void fail_shape(const Node& n, const std::string& detail) const;

    std::vector<Node> nodes_;
    std::unordered_map<std::string, NodeId> inputs_by_name_;
    bool forward_done_ = false;
};

}  // namespace recordkit
