#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "foam/tensor.hpp"

namespace foam {

enum class OpKind {
    leaf,
    matmul,
    add,
    mul,
    tanh,
    sigmoid,
    relu,
    softmax, // over last axis
    log,
    gather, // embedding row gather
    concat, // along last axis
    sum,
    mean,
    cross_entropy,    // per-row -log p[target], integer targets
    straight_through, // one-hot forward, identity backward into the probs
};

const char* op_name(OpKind k);

using GradMap = std::map<std::string, Tensor>;

struct TapeNode {
    OpKind op = OpKind::leaf;
    int a = -1;
    int b = -1;
    Tensor value;
    std::vector<int> idx; // gather ids / cross-entropy targets / sampled tokens
    int split = 0;        // concat: column count contributed by input a
};

// A scalar loss together with the tape that produced it.
struct TapeLoss;

// Reverse-mode tape over dense fp32 tensors. Nodes are appended in forward
// order, so the node list is always topologically sorted and backward() walks
// it in exact reverse. Single-threaded; independent tapes may run in parallel.
class Tape {
public:
    // Named leaves are trainable parameters: backward() reports a gradient for
    // every named leaf, zero if the loss does not reach it. Unnamed leaves are
    // constants.
    int leaf(Tensor value, std::string name = {});
    int constant(Tensor value) { return leaf(std::move(value)); }

    int matmul(int a, int b);
    int add(int a, int b); // same shape, or b a vector broadcast over rows of a
    int mul(int a, int b); // elementwise, same shape
    int tanh(int a);
    int sigmoid(int a);
    int relu(int a);
    int softmax(int a); // max-subtracted, over last axis
    int log(int a);
    int gather(int table, std::span<const int> ids);
    int concat(int a, int b);
    int sum(int a);  // scalar
    int mean(int a); // scalar
    int cross_entropy(int probs, std::span<const int> targets);
    int straight_through(int probs, std::span<const int> sampled);

    // Conveniences composed from the ops above via constant leaves.
    int sub(int a, int b);
    int scale(int a, float s);
    int one_minus(int a);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    // Exact reverse-mode gradients of a scalar loss for every named leaf.
    GradMap backward(int loss) const;

private:
    int push(TapeNode node, std::string name = {});
    void check_id(int id, const char* op) const;

    std::vector<TapeNode> nodes_;
    std::vector<std::string> names_;
};

struct TapeLoss {
    Tape tape;
    int loss = -1;

    float value() const { return tape.value(loss).data[0]; }
    GradMap backward() const { return tape.backward(loss); }
};

} // namespace foam
