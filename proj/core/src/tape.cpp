#include "foam/tape.hpp"

#include <cmath>

namespace foam {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::mul: return "elementwise-mul";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::relu: return "relu";
        case OpKind::softmax: return "softmax";
        case OpKind::log: return "log";
        case OpKind::gather: return "embedding-gather";
        case OpKind::concat: return "concat";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::cross_entropy: return "cross-entropy";
        case OpKind::straight_through: return "straight-through";
    }
    return "?";
}

namespace {

void check_finite(const Tensor& t, OpKind op) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw Error::numeric(std::string(op_name(op)) + ": non-finite value in output " +
                                 t.shape_str());
        }
    }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw Error::data(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                      b.shape_str());
}

} // namespace

void Tape::check_id(int id, const char* op) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
        throw Error::internal(std::string(op) + ": bad node id " + std::to_string(id));
    }
}

int Tape::push(TapeNode node, std::string name) {
    check_finite(node.value, node.op);
    nodes_.push_back(std::move(node));
    names_.push_back(std::move(name));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value, std::string name) {
    TapeNode n;
    n.op = OpKind::leaf;
    n.value = std::move(value);
    return push(std::move(n), std::move(name));
}

int Tape::matmul(int a, int b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0]) {
        shape_error("matmul", A, B);
    }
    const int m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            const float* arow = &A.data[static_cast<size_t>(i) * k];
            for (int t = 0; t < k; ++t) acc += static_cast<double>(arow[t]) * B.at(t, j);
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    TapeNode node;
    node.op = OpKind::matmul;
    node.a = a;
    node.b = b;
    node.value = std::move(out);
    return push(std::move(node));
}

int Tape::add(int a, int b) {
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    Tensor out;
    if (A.same_shape(B)) {
        out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    } else if (B.shape.size() == 1 && B.shape[0] == A.cols()) {
        // row-vector broadcast (bias add)
        out = A;
        const int c = A.cols();
        for (int r = 0; r < A.rows(); ++r) {
            for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(r) * c + j] += B.data[j];
        }
    } else {
        shape_error("add", A, B);
    }
    TapeNode node;
    node.op = OpKind::add;
    node.a = a;
    node.b = b;
    node.value = std::move(out);
    return push(std::move(node));
}

int Tape::mul(int a, int b) {
    check_id(a, "elementwise-mul");
    check_id(b, "elementwise-mul");
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (!A.same_shape(B)) shape_error("elementwise-mul", A, B);
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    TapeNode node;
    node.op = OpKind::mul;
    node.a = a;
    node.b = b;
    node.value = std::move(out);
    return push(std::move(node));
}

namespace {
template <typename F>
TapeNode unary_node(OpKind op, int a, const Tensor& in, F fn) {
    TapeNode node;
    node.op = op;
    node.a = a;
    node.value = in;
    for (float& v : node.value.data) v = fn(v);
    return node;
}
} // namespace

int Tape::tanh(int a) {
    check_id(a, "tanh");
    return push(unary_node(OpKind::tanh, a, nodes_[a].value, [](float v) { return std::tanh(v); }));
}

int Tape::sigmoid(int a) {
    check_id(a, "sigmoid");
    return push(unary_node(OpKind::sigmoid, a, nodes_[a].value,
                           [](float v) { return 1.0f / (1.0f + std::exp(-v)); }));
}

int Tape::relu(int a) {
    check_id(a, "relu");
    return push(
        unary_node(OpKind::relu, a, nodes_[a].value, [](float v) { return v > 0.0f ? v : 0.0f; }));
}

int Tape::log(int a) {
    check_id(a, "log");
    const Tensor& A = nodes_[a].value;
    for (float v : A.data) {
        if (v <= 0.0f) throw Error::numeric("log: non-positive input " + std::to_string(v));
    }
    return push(unary_node(OpKind::log, a, A, [](float v) { return std::log(v); }));
}

int Tape::softmax(int a) {
    check_id(a, "softmax");
    const Tensor& A = nodes_[a].value;
    Tensor out = A;
    const int c = A.cols();
    if (c == 0) throw Error::data("softmax: empty last axis " + A.shape_str());
    for (int r = 0; r < A.rows(); ++r) {
        float* row = &out.data[static_cast<size_t>(r) * c];
        float mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        for (int j = 0; j < c; ++j) row[j] = static_cast<float>(row[j] / denom);
    }
    TapeNode node;
    node.op = OpKind::softmax;
    node.a = a;
    node.value = std::move(out);
    return push(std::move(node));
}

int Tape::gather(int table, std::span<const int> ids) {
    check_id(table, "embedding-gather");
    const Tensor& T = nodes_[table].value;
    if (T.shape.size() != 2) {
        throw Error::data("embedding-gather: table must be 2-d, got " + T.shape_str());
    }
    const int v = T.shape[0], d = T.shape[1];
    Tensor out = Tensor::zeros({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw Error::data("embedding-gather: index " + std::to_string(ids[i]) +
                              " out of range [0," + std::to_string(v) + ")");
        }
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = T.at(ids[i], j);
    }
    TapeNode node;
    node.op = OpKind::gather;
    node.a = table;
    node.value = std::move(out);
    node.idx.assign(ids.begin(), ids.end());
    return push(std::move(node));
}

int Tape::concat(int a, int b) {
    check_id(a, "concat");
    check_id(b, "concat");
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    TapeNode node;
    node.op = OpKind::concat;
    node.a = a;
    node.b = b;
    if (A.shape.size() == 1 && B.shape.size() == 1) {
        Tensor out = Tensor::zeros({A.shape[0] + B.shape[0]});
        std::copy(A.data.begin(), A.data.end(), out.data.begin());
        std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.shape[0]);
        node.split = A.shape[0];
        node.value = std::move(out);
    } else if (A.shape.size() == 2 && B.shape.size() == 2 && A.shape[0] == B.shape[0]) {
        const int r = A.shape[0], ca = A.shape[1], cb = B.shape[1];
        Tensor out = Tensor::zeros({r, ca + cb});
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < ca; ++j) out.at(i, j) = A.at(i, j);
            for (int j = 0; j < cb; ++j) out.at(i, ca + j) = B.at(i, j);
        }
        node.split = ca;
        node.value = std::move(out);
    } else {
        shape_error("concat", A, B);
    }
    return push(std::move(node));
}

int Tape::sum(int a) {
    check_id(a, "sum");
    const Tensor& A = nodes_[a].value;
    double acc = 0.0;
    for (float v : A.data) acc += v;
    TapeNode node;
    node.op = OpKind::sum;
    node.a = a;
    node.value = Tensor::scalar(static_cast<float>(acc));
    return push(std::move(node));
}

int Tape::mean(int a) {
    check_id(a, "mean");
    const Tensor& A = nodes_[a].value;
    if (A.data.empty()) throw Error::data("mean: empty tensor");
    double acc = 0.0;
    for (float v : A.data) acc += v;
    TapeNode node;
    node.op = OpKind::mean;
    node.a = a;
    node.value = Tensor::scalar(static_cast<float>(acc / static_cast<double>(A.data.size())));
    return push(std::move(node));
}

int Tape::cross_entropy(int probs, std::span<const int> targets) {
    check_id(probs, "cross-entropy");
    const Tensor& P = nodes_[probs].value;
    const int r = P.rows(), c = P.cols();
    if (static_cast<int>(targets.size()) != r) {
        throw Error::data("cross-entropy: " + std::to_string(targets.size()) + " targets for " +
                          std::to_string(r) + " rows");
    }
    Tensor out = Tensor::zeros({r});
    for (int i = 0; i < r; ++i) {
        if (targets[i] < 0 || targets[i] >= c) {
            throw Error::data("cross-entropy: target " + std::to_string(targets[i]) +
                              " out of range [0," + std::to_string(c) + ")");
        }
        const float p = P.at(i, targets[i]);
        if (p <= 0.0f) {
            throw Error::numeric("cross-entropy: zero probability at target " +
                                 std::to_string(targets[i]));
        }
        out.data[i] = -std::log(p);
    }
    TapeNode node;
    node.op = OpKind::cross_entropy;
    node.a = probs;
    node.value = std::move(out);
    node.idx.assign(targets.begin(), targets.end());
    return push(std::move(node));
}

int Tape::straight_through(int probs, std::span<const int> sampled) {
    check_id(probs, "straight-through");
    const Tensor& P = nodes_[probs].value;
    const int r = P.rows(), c = P.cols();
    if (static_cast<int>(sampled.size()) != r) {
        throw Error::data("straight-through: " + std::to_string(sampled.size()) +
                          " samples for " + std::to_string(r) + " rows");
    }
    Tensor out = Tensor::zeros(P.shape);
    for (int i = 0; i < r; ++i) {
        if (sampled[i] < 0 || sampled[i] >= c) {
            throw Error::data("straight-through: sample " + std::to_string(sampled[i]) +
                              " out of range [0," + std::to_string(c) + ")");
        }
        out.data[static_cast<size_t>(i) * c + sampled[i]] = 1.0f;
    }
    TapeNode node;
    node.op = OpKind::straight_through;
    node.a = probs;
    node.value = std::move(out);
    node.idx.assign(sampled.begin(), sampled.end());
    return push(std::move(node));
}

int Tape::sub(int a, int b) {
    check_id(b, "sub");
    int neg = mul(b, constant(Tensor::full(nodes_[b].value.shape, -1.0f)));
    return add(a, neg);
}

int Tape::scale(int a, float s) {
    check_id(a, "scale");
    return mul(a, constant(Tensor::full(nodes_[a].value.shape, s)));
}

int Tape::one_minus(int a) {
    check_id(a, "one-minus");
    int ones = constant(Tensor::full(nodes_[a].value.shape, 1.0f));
    return sub(ones, a);
}

GradMap Tape::backward(int loss) const {
    check_id(loss, "backward");
    if (nodes_.empty()) throw Error::data("backward: empty tape");
    if (nodes_[loss].value.numel() != 1) {
        throw Error::data("backward: loss must be scalar, got " + nodes_[loss].value.shape_str());
    }

    std::vector<Tensor> grads(nodes_.size());
    auto grad_of = [&](int id) -> Tensor& {
        Tensor& g = grads[static_cast<size_t>(id)];
        if (g.data.empty()) g = Tensor::zeros(nodes_[id].value.shape);
        return g;
    };
    grad_of(loss).data[0] = 1.0f;

    for (int i = loss; i >= 0; --i) {
        const Tensor& g = grads[static_cast<size_t>(i)];
        if (g.data.empty()) continue;
        const TapeNode& node = nodes_[static_cast<size_t>(i)];
        switch (node.op) {
            case OpKind::leaf:
                break;
            case OpKind::matmul: {
                const Tensor& A = nodes_[node.a].value;
                const Tensor& B = nodes_[node.b].value;
                Tensor& ga = grad_of(node.a);
                Tensor& gb = grad_of(node.b);
                const int m = A.shape[0], k = A.shape[1], n = B.shape[1];
                for (int r = 0; r < m; ++r) {
                    for (int t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) {
                            acc += static_cast<double>(g.at(r, j)) * B.at(t, j);
                        }
                        ga.at(r, t) += static_cast<float>(acc);
                    }
                }
                for (int t = 0; t < k; ++t) {
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int r = 0; r < m; ++r) {
                            acc += static_cast<double>(A.at(r, t)) * g.at(r, j);
                        }
                        gb.at(t, j) += static_cast<float>(acc);
                    }
                }
                break;
            }
            case OpKind::add: {
                const Tensor& A = nodes_[node.a].value;
                const Tensor& B = nodes_[node.b].value;
                Tensor& ga = grad_of(node.a);
                for (size_t t = 0; t < g.data.size(); ++t) ga.data[t] += g.data[t];
                Tensor& gb = grad_of(node.b);
                if (A.same_shape(B)) {
                    for (size_t t = 0; t < g.data.size(); ++t) gb.data[t] += g.data[t];
                } else {
                    const int c = A.cols();
                    for (int j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (int r = 0; r < A.rows(); ++r) acc += g.data[static_cast<size_t>(r) * c + j];
                        gb.data[j] += static_cast<float>(acc);
                    }
                }
                break;
            }
            case OpKind::mul: {
                const Tensor& A = nodes_[node.a].value;
                const Tensor& B = nodes_[node.b].value;
                Tensor& ga = grad_of(node.a);
                Tensor& gb = grad_of(node.b);
                for (size_t t = 0; t < g.data.size(); ++t) {
                    ga.data[t] += g.data[t] * B.data[t];
                    gb.data[t] += g.data[t] * A.data[t];
                }
                break;
            }
            case OpKind::tanh: {
                Tensor& ga = grad_of(node.a);
                for (size_t t = 0; t < g.data.size(); ++t) {
                    const float y = node.value.data[t];
                    ga.data[t] += g.data[t] * (1.0f - y * y);
                }
                break;
            }
            case OpKind::sigmoid: {
                Tensor& ga = grad_of(node.a);
                for (size_t t = 0; t < g.data.size(); ++t) {
                    const float y = node.value.data[t];
                    ga.data[t] += g.data[t] * y * (1.0f - y);
                }
                break;
            }
            case OpKind::relu: {
                const Tensor& A = nodes_[node.a].value;
                Tensor& ga = grad_of(node.a);
                for (size_t t = 0; t < g.data.size(); ++t) {
                    if (A.data[t] > 0.0f) ga.data[t] += g.data[t];
                }
                break;
            }
            case OpKind::softmax: {
                Tensor& ga = grad_of(node.a);
                const int c = node.value.cols();
                for (int r = 0; r < node.value.rows(); ++r) {
                    const float* y = &node.value.data[static_cast<size_t>(r) * c];
                    const float* gr = &g.data[static_cast<size_t>(r) * c];
                    double dot = 0.0;
                    for (int j = 0; j < c; ++j) dot += static_cast<double>(gr[j]) * y[j];
                    float* out = &ga.data[static_cast<size_t>(r) * c];
                    for (int j = 0; j < c; ++j) {
                        out[j] += static_cast<float>(y[j] * (gr[j] - dot));
                    }
                }
                break;
            }
            case OpKind::log: {
                const Tensor& A = nodes_[node.a].value;
                Tensor& ga = grad_of(node.a);
                for (size_t t = 0; t < g.data.size(); ++t) ga.data[t] += g.data[t] / A.data[t];
                break;
            }
            case OpKind::gather: {
                Tensor& ga = grad_of(node.a);
                const int d = node.value.cols();
                for (size_t r = 0; r < node.idx.size(); ++r) {
                    const int id = node.idx[r];
                    for (int j = 0; j < d; ++j) {
                        ga.data[static_cast<size_t>(id) * d + j] += g.data[r * d + j];
                    }
                }
                break;
            }
            case OpKind::concat: {
                const Tensor& A = nodes_[node.a].value;
                const Tensor& B = nodes_[node.b].value;
                Tensor& ga = grad_of(node.a);
                Tensor& gb = grad_of(node.b);
                if (A.shape.size() == 1) {
                    for (int j = 0; j < A.shape[0]; ++j) ga.data[j] += g.data[j];
                    for (int j = 0; j < B.shape[0]; ++j) gb.data[j] += g.data[node.split + j];
                } else {
                    const int ca = A.shape[1], cb = B.shape[1], ctot = ca + cb;
                    for (int r = 0; r < A.shape[0]; ++r) {
                        for (int j = 0; j < ca; ++j) {
                            ga.at(r, j) += g.data[static_cast<size_t>(r) * ctot + j];
                        }
                        for (int j = 0; j < cb; ++j) {
                            gb.at(r, j) += g.data[static_cast<size_t>(r) * ctot + ca + j];
                        }
                    }
                }
                break;
            }
            case OpKind::sum: {
                Tensor& ga = grad_of(node.a);
                const float gv = g.data[0];
                for (float& v : ga.data) v += gv;
                break;
            }
            case OpKind::mean: {
                Tensor& ga = grad_of(node.a);
                const float gv = g.data[0] / static_cast<float>(ga.data.size());
                for (float& v : ga.data) v += gv;
                break;
            }
            case OpKind::cross_entropy: {
                const Tensor& P = nodes_[node.a].value;
                Tensor& ga = grad_of(node.a);
                const int c = P.cols();
                for (size_t r = 0; r < node.idx.size(); ++r) {
                    const int t = node.idx[r];
                    ga.data[r * c + t] -= g.data[r] / P.data[r * c + t];
                }
                break;
            }
            case OpKind::straight_through: {
                // Sampled one-hots stand in for the softmax output: pass the
                // incoming gradient through unchanged.
                Tensor& ga = grad_of(node.a);
                for (size_t t = 0; t < g.data.size(); ++t) ga.data[t] += g.data[t];
                break;
            }
        }
    }

    GradMap out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (names_[i].empty()) continue;
        if (grads[i].data.empty()) {
            out[names_[i]] = Tensor::zeros(nodes_[i].value.shape);
        } else {
            out[names_[i]] = std::move(grads[i]);
        }
    }
    return out;
}

} // namespace foam
