#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records nodes in creation order; backward() walks them in reverse.
// Parameter leaves reference the parameter's storage directly (no copy) and
// flush their gradient into Parameter::grad when the parameter is trainable.
// Nodes whose inputs carry no gradient are recorded without a backward step,
// so frozen sub-graphs cost only their forward pass.

#include "idprior/core/tensor.hpp"

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace idprior::ag {

struct Node {
    Mat data;
    const Mat* ref = nullptr;
    Mat grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backward;

    const Mat& value() const { return ref ? *ref : data; }
    Mat& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Node* node) : node_(node) {}

    const Mat& value() const { return node_->value(); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool needs_grad() const { return node_->needs_grad; }
    double scalar() const { return value()(0, 0); }
    Node* node() const { return node_; }
    explicit operator bool() const { return node_ != nullptr; }

private:
    Node* node_ = nullptr;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat value);
    // Leaf bound to a parameter; repeated calls return the same node.
    Var param(Parameter& p);
    Var param(const Parameter& p);
    Node* make(Mat value, bool needs_grad);

    // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
    void backward(Var out);

    std::size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, Node*> param_nodes_;
};

// --- operations -----------------------------------------------------------

Var matmul(Tape& t, Var a, Var b);      // a * b
Var matmul_nt(Tape& t, Var a, Var b);   // a * b^T
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var x, Var row);   // broadcast a 1 x n row over x
Var scale(Tape& t, Var x, double s);
Var gelu(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
// qkv packs [Q | K | V] column blocks, each `width` wide.
Var attention(Tape& t, Var qkv, int heads, bool causal);
Var gather_rows(Tape& t, Var table, std::span<const int> rows);
Var concat_rows(Tape& t, std::span<const Var> parts);
// Sum of -log softmax(logits[r])[targets[r]] over all rows; 1x1 result.
Var cross_entropy_sum(Tape& t, Var logits, std::span<const int> targets);
Var sum_scalars(Tape& t, std::span<const Var> parts, std::span<const double> weights);

double gelu_value(double x);

}  // namespace idprior::ag
