// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "fontcraft/kernels.hpp"
#include "fontcraft/tensor.hpp"

namespace fontcraft::nn {

// Named parameter bundle with trainable flags. Gradient buffers are sized
// lazily and accumulated into by Graph::backward, so one store serves a whole
// batch of per-sample graphs between optimizer steps.
template <class S>
struct ParamStore {
    struct Entry {
        std::string name;
        TensorT<S> value;
        TensorT<S> grad;  // sized on first backward touch
        bool trainable = true;
    };

    std::vector<Entry> entries;
    std::unordered_map<std::string, int> by_name;

    int add(const std::string& name, TensorT<S> value, bool trainable = true) {
        if (by_name.count(name)) throw ShapeError("duplicate parameter name: " + name);
        const int id = int(entries.size());
        entries.push_back({name, std::move(value), {}, trainable});
        by_name.emplace(name, id);
        return id;
    }

    Entry& operator[](int id) { return entries[id]; }
    const Entry& operator[](int id) const { return entries[id]; }

    int find(const std::string& name) const {
        auto it = by_name.find(name);
        return it == by_name.end() ? -1 : it->second;
    }
    Entry& named(const std::string& name) {
        const int id = find(name);
        if (id < 0) throw ShapeError("no such parameter: " + name);
        return entries[id];
    }

    void zero_grads() {
        for (auto& e : entries)
            if (!e.grad.empty()) e.grad.fill(S(0));
    }

    int64_t count_params(bool trainable_only) const {
        int64_t n = 0;
        for (const auto& e : entries)
            if (!trainable_only || e.trainable) n += e.value.numel();
        return n;
    }
};

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

// Optional attention probe: accumulates post-softmax attention mass over a
// (query set, key set) pair, summed across heads and rows. Masks index the
// joint token sequence.
struct AttnProbe {
    const std::vector<uint8_t>* query_mask = nullptr;
    const std::vector<uint8_t>* key_mask = nullptr;
    double mass = 0.0;
};

// Dynamic reverse-mode tape over TensorT values. One Graph instance serves one
// forward (plus optional backward) pass; reset() recycles it.
template <class S>
class Graph {
public:
    bool recording = true;  // false: inference only, no backward closures kept

    void reset() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    const TensorT<S>& val(NodeId id) const {
        const Node& n = nodes_[id];
        return n.ext_val ? *n.ext_val : n.val;
    }

    bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }

    // Gradient buffer for accumulation; allocates zeros on first touch.
    TensorT<S>& grad_buf(NodeId id) {
        Node& n = nodes_[id];
        if (n.ext_grad) {
            if (n.ext_grad->empty()) *n.ext_grad = TensorT<S>::zeros(n.ext_val->shape);
            return *n.ext_grad;
        }
        if (n.grad.empty()) n.grad = TensorT<S>::zeros(val(id).shape);
        return n.grad;
    }

    bool grad_touched(NodeId id) const {
        const Node& n = nodes_[id];
        return n.ext_grad ? !n.ext_grad->empty() : !n.grad.empty();
    }

    NodeId constant(TensorT<S> v) {
        Node n;
        n.val = std::move(v);
        return push(std::move(n));
    }

    NodeId param(ParamStore<S>& store, int entry_id) {
        auto& e = store[entry_id];
        Node n;
        n.ext_val = &e.value;
        n.ext_grad = &e.grad;
        n.needs_grad = recording && e.trainable;
        return push(std::move(n));
    }

    // Two-phase op creation: allocate the output node, then (when it needs a
    // gradient) attach a backward closure that may capture the returned id.
    NodeId make_op(TensorT<S> value, bool needs_grad) {
        Node n;
        n.val = std::move(value);
        n.needs_grad = recording && needs_grad;
        return push(std::move(n));
    }
    void set_back(NodeId id, std::function<void(Graph&)> back) {
        if (nodes_[id].needs_grad) nodes_[id].back = std::move(back);
    }

    // Reverse sweep from a scalar loss node. Dead branches (gradient never
    // touched) are skipped.
    void backward(NodeId loss) {
        if (!recording) throw VerifyError("backward on a non-recording graph");
        if (val(loss).numel() != 1) throw ShapeError("backward requires a scalar loss");
        grad_buf(loss).fill(S(1));
        for (NodeId i = loss; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.back && grad_touched(i)) n.back(*this);
        }
    }

private:
    struct Node {
        TensorT<S> val;
        const TensorT<S>* ext_val = nullptr;
        TensorT<S>* ext_grad = nullptr;
        TensorT<S> grad;
        bool needs_grad = false;
        std::function<void(Graph&)> back;
    };
    NodeId push(Node&& n) {
        nodes_.push_back(std::move(n));
        return NodeId(nodes_.size() - 1);
    }
    std::vector<Node> nodes_;
};

// ---- ops --------------------------------------------------------------

template <class S>
NodeId matmul(Graph<S>& g, NodeId a, NodeId b, bool ta = false, bool tb = false) {
    const auto& A = g.val(a);
    const auto& B = g.val(b);
    const int m = ta ? A.cols() : A.rows();
    const int ka = ta ? A.rows() : A.cols();
    const int kb = tb ? B.cols() : B.rows();
    const int n = tb ? B.rows() : B.cols();
    if (ka != kb)
        throw ShapeError("matmul: inner dims " + shape_str(A.shape) + " x " + shape_str(B.shape));
    TensorT<S> C({m, n});
    gemm(ta, tb, m, n, ka, S(1), A.data(), A.cols(), B.data(), B.cols(), S(0), C.data(), n);

    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(b));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& Av = gr.val(a);
        const auto& Bv = gr.val(b);
        const auto& dC = gr.grad_buf(out);
        const int lda = Av.cols(), ldb = Bv.cols();
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            if (!ta && !tb)  // dA += dC B^T
                gemm(false, true, m, ka, n, S(1), dC.data(), n, Bv.data(), ldb, S(1), dA.data(), lda);
            else if (!ta && tb)  // dA += dC B
                gemm(false, false, m, ka, n, S(1), dC.data(), n, Bv.data(), ldb, S(1), dA.data(), lda);
            else if (ta && !tb)  // dA += B dC^T
                gemm(false, true, ka, m, n, S(1), Bv.data(), ldb, dC.data(), n, S(1), dA.data(), lda);
            else  // dA += B^T dC^T
                gemm(true, true, ka, m, n, S(1), Bv.data(), ldb, dC.data(), n, S(1), dA.data(), lda);
        }
        if (gr.needs_grad(b)) {
            auto& dB = gr.grad_buf(b);
            if (!ta && !tb)  // dB += A^T dC
                gemm(true, false, ka, n, m, S(1), Av.data(), lda, dC.data(), n, S(1), dB.data(), ldb);
            else if (!ta && tb)  // dB += dC^T A
                gemm(true, false, n, ka, m, S(1), dC.data(), n, Av.data(), lda, S(1), dB.data(), ldb);
            else if (ta && !tb)  // dB += A dC
                gemm(false, false, ka, n, m, S(1), Av.data(), lda, dC.data(), n, S(1), dB.data(), ldb);
            else  // dB += dC^T A^T
                gemm(true, true, n, ka, m, S(1), dC.data(), n, Av.data(), lda, S(1), dB.data(), ldb);
        }
    });
    return out;
}

template <class S>
NodeId add(Graph<S>& g, NodeId a, NodeId b) {
    const auto& A = g.val(a);
    const auto& B = g.val(b);
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    TensorT<S> C = A;
    for (int64_t i = 0; i < C.numel(); ++i) C.v[i] += B.v[i];
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(b));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            for (int64_t i = 0; i < dC.numel(); ++i) dA.v[i] += dC.v[i];
        }
        if (gr.needs_grad(b)) {
            auto& dB = gr.grad_buf(b);
            for (int64_t i = 0; i < dC.numel(); ++i) dB.v[i] += dC.v[i];
        }
    });
    return out;
}

// a + s * b
template <class S>
NodeId add_scaled(Graph<S>& g, NodeId a, NodeId b, S s) {
    const auto& A = g.val(a);
    const auto& B = g.val(b);
    if (!A.same_shape(B)) throw ShapeError("add_scaled: shape mismatch");
    TensorT<S> C = A;
    for (int64_t i = 0; i < C.numel(); ++i) C.v[i] += s * B.v[i];
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(b));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            for (int64_t i = 0; i < dC.numel(); ++i) dA.v[i] += dC.v[i];
        }
        if (gr.needs_grad(b)) {
            auto& dB = gr.grad_buf(b);
            for (int64_t i = 0; i < dC.numel(); ++i) dB.v[i] += s * dC.v[i];
        }
    });
    return out;
}

namespace detail {
template <class S>
inline void check_rowvec(const TensorT<S>& A, const TensorT<S>& V, const char* who) {
    if (int64_t(V.numel()) != A.cols()) throw ShapeError(std::string(who) + ": row vector mismatch");
}
}  // namespace detail

// y[r][c] = a[r][c] + v[c]
template <class S>
NodeId add_rowvec(Graph<S>& g, NodeId a, NodeId v) {
    const auto& A = g.val(a);
    const auto& V = g.val(v);
    detail::check_rowvec(A, V, "add_rowvec");
    TensorT<S> C = A;
    const int rows = A.rows(), cols = A.cols();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) C.v[size_t(r) * cols + c] += V.v[c];
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(v));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            for (int64_t i = 0; i < dC.numel(); ++i) dA.v[i] += dC.v[i];
        }
        if (gr.needs_grad(v)) {
            auto& dV = gr.grad_buf(v);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) dV.v[c] += dC.v[size_t(r) * cols + c];
        }
    });
    return out;
}

// y[r][c] = a[r][c] * (v[c] + offset); offset 1 gives the modulation form.
template <class S>
NodeId mul_rowvec(Graph<S>& g, NodeId a, NodeId v, S offset = S(0)) {
    const auto& A = g.val(a);
    const auto& V = g.val(v);
    detail::check_rowvec(A, V, "mul_rowvec");
    const int rows = A.rows(), cols = A.cols();
    TensorT<S> C = A;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) C.v[size_t(r) * cols + c] *= V.v[c] + offset;
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(v));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        const auto& Av = gr.val(a);
        const auto& Vv = gr.val(v);
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    dA.v[size_t(r) * cols + c] += dC.v[size_t(r) * cols + c] * (Vv.v[c] + offset);
        }
        if (gr.needs_grad(v)) {
            auto& dV = gr.grad_buf(v);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    dV.v[c] += dC.v[size_t(r) * cols + c] * Av.v[size_t(r) * cols + c];
        }
    });
    return out;
}

template <class S>
NodeId scale(Graph<S>& g, NodeId a, S s) {
    TensorT<S> C = g.val(a);
    for (auto& x : C.v) x *= s;
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        auto& dA = gr.grad_buf(a);
        for (int64_t i = 0; i < dC.numel(); ++i) dA.v[i] += s * dC.v[i];
    });
    return out;
}

// Tanh-approximation GELU.
template <class S>
NodeId gelu(Graph<S>& g, NodeId a) {
    constexpr S k0 = S(0.7978845608028654);  // sqrt(2/pi)
    constexpr S k1 = S(0.044715);
    const auto& A = g.val(a);
    auto T = std::make_shared<TensorT<S>>(A.shape);
    for (int64_t i = 0; i < A.numel(); ++i) {
        const S x = A.v[i];
        T->v[i] = k0 * (x + k1 * x * x * x);
    }
    vtanh_inplace(T->data(), size_t(T->numel()));
    TensorT<S> C(A.shape);
    for (int64_t i = 0; i < A.numel(); ++i) C.v[i] = S(0.5) * A.v[i] * (S(1) + T->v[i]);
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        const auto& Av = gr.val(a);
        auto& dA = gr.grad_buf(a);
        for (int64_t i = 0; i < dC.numel(); ++i) {
            const S x = Av.v[i];
            const S t = T->v[i];
            const S dt = (S(1) - t * t) * k0 * (S(1) + S(3) * k1 * x * x);
            dA.v[i] += dC.v[i] * (S(0.5) * (S(1) + t) + S(0.5) * x * dt);
        }
    });
    return out;
}

// Row-wise RMS normalization over the channel axis; optional learned gain.
template <class S>
NodeId rms_norm(Graph<S>& g, NodeId a, NodeId gain = kNoNode, S eps = S(1e-6)) {
    const auto& A = g.val(a);
    const int rows = A.rows(), cols = A.cols();
    if (gain != kNoNode) detail::check_rowvec(A, g.val(gain), "rms_norm");
    auto inv_r = std::make_shared<std::vector<S>>(rows);
    TensorT<S> C(A.shape);
    for (int r = 0; r < rows; ++r) {
        S ss = 0;
        const S* x = &A.v[size_t(r) * cols];
        for (int c = 0; c < cols; ++c) ss += x[c] * x[c];
        const S ir = S(1) / std::sqrt(ss / S(cols) + eps);
        (*inv_r)[r] = ir;
        S* y = &C.v[size_t(r) * cols];
        if (gain != kNoNode) {
            const auto& G = g.val(gain);
            for (int c = 0; c < cols; ++c) y[c] = x[c] * ir * G.v[c];
        } else {
            for (int c = 0; c < cols; ++c) y[c] = x[c] * ir;
        }
    }
    const bool ng = g.needs_grad(a) || (gain != kNoNode && g.needs_grad(gain));
    const NodeId out = g.make_op(std::move(C), ng);
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        const auto& Av = gr.val(a);
        for (int r = 0; r < rows; ++r) {
            const S ir = (*inv_r)[r];
            const S* x = &Av.v[size_t(r) * cols];
            const S* dy = &dC.v[size_t(r) * cols];
            if (gr.needs_grad(a)) {
                // G_c = dy_c * gain_c; dx = ir * (G - xhat * mean(G . xhat) * ...)
                S dot = 0;
                for (int c = 0; c < cols; ++c) {
                    const S gc = gain != kNoNode ? gr.val(gain).v[c] : S(1);
                    dot += dy[c] * gc * (x[c] * ir);
                }
                dot /= S(cols);
                auto& dA = gr.grad_buf(a);
                S* dx = &dA.v[size_t(r) * cols];
                for (int c = 0; c < cols; ++c) {
                    const S gc = gain != kNoNode ? gr.val(gain).v[c] : S(1);
                    dx[c] += ir * (dy[c] * gc - (x[c] * ir) * dot);
                }
            }
            if (gain != kNoNode && gr.needs_grad(gain)) {
                auto& dG = gr.grad_buf(gain);
                for (int c = 0; c < cols; ++c) dG.v[c] += dy[c] * x[c] * ir;
            }
        }
    });
    return out;
}

// Multi-head scaled dot-product attention over a joint sequence.
// q, k, v: [L, d]; d divisible by heads. Optional additive logit bias [L, L]
// shared across heads (treated as a constant, no gradient). Optional probe
// accumulates post-softmax mass over (query set, key set).
template <class S>
NodeId attention(Graph<S>& g, NodeId q, NodeId k, NodeId v, int heads,
                 const TensorT<S>* logit_bias = nullptr, AttnProbe* probe = nullptr) {
    const auto& Q = g.val(q);
    const auto& K = g.val(k);
    const auto& V = g.val(v);
    const int L = Q.rows(), d = Q.cols();
    if (L < 1) throw ShapeError("attention: empty sequence");
    if (!Q.same_shape(K) || !Q.same_shape(V)) throw ShapeError("attention: q/k/v shape mismatch");
    if (heads < 1 || d % heads != 0) throw ShapeError("attention: d_k not divisible by heads");
    if (logit_bias && (logit_bias->rows() != L || logit_bias->cols() != L))
        throw ShapeError("attention: bias must be LxL");
    const int dh = d / heads;
    const S inv_sqrt = S(1) / std::sqrt(S(dh));

    const bool ng = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
    const bool keep_A = g.recording && ng;
    auto saved_A = std::make_shared<std::vector<TensorT<S>>>();
    if (keep_A) saved_A->reserve(heads);

    TensorT<S> out_val({L, d});
    TensorT<S> A({L, L});
    for (int h = 0; h < heads; ++h) {
        const S* qh = Q.data() + h * dh;
        const S* kh = K.data() + h * dh;
        const S* vh = V.data() + h * dh;
        gemm(false, true, L, L, dh, inv_sqrt, qh, d, kh, d, S(0), A.data(), L);
        if (logit_bias)
            for (int64_t i = 0; i < A.numel(); ++i) A.v[i] += logit_bias->v[i];
        // row softmax with max subtraction
        for (int r = 0; r < L; ++r) {
            S* row = &A.v[size_t(r) * L];
            S mx = row[0];
            for (int c = 1; c < L; ++c) mx = std::max(mx, row[c]);
            for (int c = 0; c < L; ++c) row[c] -= mx;
            vexp_inplace(row, size_t(L));
            S sum = 0;
            for (int c = 0; c < L; ++c) sum += row[c];
            const S inv = S(1) / sum;
            for (int c = 0; c < L; ++c) row[c] *= inv;
        }
        if (probe && probe->query_mask && probe->key_mask) {
            double m = 0.0;
            for (int r = 0; r < L; ++r) {
                if (!(*probe->query_mask)[r]) continue;
                const S* row = &A.v[size_t(r) * L];
                for (int c = 0; c < L; ++c)
                    if ((*probe->key_mask)[c]) m += double(row[c]);
            }
            probe->mass += m;
        }
        gemm(false, false, L, dh, L, S(1), A.data(), L, vh, d, S(0), out_val.data() + h * dh, d);
        if (keep_A) saved_A->push_back(A);
    }

    const NodeId out = g.make_op(std::move(out_val), ng);
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dOut = gr.grad_buf(out);
        const auto& Qv = gr.val(q);
        const auto& Kv = gr.val(k);
        const auto& Vv = gr.val(v);
        TensorT<S> dA({L, L});
        for (int h = 0; h < heads; ++h) {
            const TensorT<S>& Ah = (*saved_A)[h];
            const S* go = dOut.data() + h * dh;
            if (gr.needs_grad(v)) {
                auto& dV = gr.grad_buf(v);
                gemm(true, false, L, dh, L, S(1), Ah.data(), L, go, d, S(1), dV.data() + h * dh, d);
            }
            // dA = gOut_h V_h^T ; dlogits = A . (dA - rowsum(dA . A))
            gemm(false, true, L, L, dh, S(1), go, d, Vv.data() + h * dh, d, S(0), dA.data(), L);
            for (int r = 0; r < L; ++r) {
                S* da = &dA.v[size_t(r) * L];
                const S* arow = &Ah.v[size_t(r) * L];
                S dot = 0;
                for (int c = 0; c < L; ++c) dot += da[c] * arow[c];
                for (int c = 0; c < L; ++c) da[c] = arow[c] * (da[c] - dot);
            }
            if (gr.needs_grad(q)) {
                auto& dQ = gr.grad_buf(q);
                gemm(false, false, L, dh, L, inv_sqrt, dA.data(), L, Kv.data() + h * dh, d, S(1),
                     dQ.data() + h * dh, d);
            }
            if (gr.needs_grad(k)) {
                auto& dK = gr.grad_buf(k);
                gemm(true, false, L, dh, L, inv_sqrt, dA.data(), L, Qv.data() + h * dh, d, S(1),
                     dK.data() + h * dh, d);
            }
        }
    });
    return out;
}

template <class S>
NodeId concat_rows(Graph<S>& g, NodeId a, NodeId b) {
    const auto& A = g.val(a);
    const auto& B = g.val(b);
    if (A.cols() != B.cols()) throw ShapeError("concat_rows: column mismatch");
    const int ra = A.rows(), rb = B.rows(), cols = A.cols();
    TensorT<S> C({ra + rb, cols});
    std::copy(A.v.begin(), A.v.end(), C.v.begin());
    std::copy(B.v.begin(), B.v.end(), C.v.begin() + A.numel());
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(b));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            for (int64_t i = 0; i < int64_t(ra) * cols; ++i) dA.v[i] += dC.v[i];
        }
        if (gr.needs_grad(b)) {
            auto& dB = gr.grad_buf(b);
            const int64_t off = int64_t(ra) * cols;
            for (int64_t i = 0; i < int64_t(rb) * cols; ++i) dB.v[i] += dC.v[off + i];
        }
    });
    return out;
}

template <class S>
NodeId slice_rows(Graph<S>& g, NodeId a, int r0, int r1) {
    const auto& A = g.val(a);
    const int cols = A.cols();
    if (r0 < 0 || r1 > A.rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
    TensorT<S> C({r1 - r0, cols});
    std::copy(A.v.begin() + int64_t(r0) * cols, A.v.begin() + int64_t(r1) * cols, C.v.begin());
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        auto& dA = gr.grad_buf(a);
        const int64_t off = int64_t(r0) * cols;
        for (int64_t i = 0; i < dC.numel(); ++i) dA.v[off + i] += dC.v[i];
    });
    return out;
}

template <class S>
NodeId concat_cols(Graph<S>& g, NodeId a, NodeId b) {
    const auto& A = g.val(a);
    const auto& B = g.val(b);
    if (A.rows() != B.rows()) throw ShapeError("concat_cols: row mismatch");
    const int rows = A.rows(), ca = A.cols(), cb = B.cols();
    TensorT<S> C({rows, ca + cb});
    for (int r = 0; r < rows; ++r) {
        std::copy_n(&A.v[size_t(r) * ca], ca, &C.v[size_t(r) * (ca + cb)]);
        std::copy_n(&B.v[size_t(r) * cb], cb, &C.v[size_t(r) * (ca + cb) + ca]);
    }
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a) || g.needs_grad(b));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        if (gr.needs_grad(a)) {
            auto& dA = gr.grad_buf(a);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < ca; ++c)
                    dA.v[size_t(r) * ca + c] += dC.v[size_t(r) * (ca + cb) + c];
        }
        if (gr.needs_grad(b)) {
            auto& dB = gr.grad_buf(b);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cb; ++c)
                    dB.v[size_t(r) * cb + c] += dC.v[size_t(r) * (ca + cb) + ca + c];
        }
    });
    return out;
}

template <class S>
NodeId slice_cols(Graph<S>& g, NodeId a, int c0, int c1) {
    const auto& A = g.val(a);
    if (c0 < 0 || c1 > A.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
    const int rows = A.rows(), cols = A.cols(), cw = c1 - c0;
    TensorT<S> C({rows, cw});
    for (int r = 0; r < rows; ++r) std::copy_n(&A.v[size_t(r) * cols + c0], cw, &C.v[size_t(r) * cw]);
    const NodeId out = g.make_op(std::move(C), g.needs_grad(a));
    g.set_back(out, [=](Graph<S>& gr) {
        const auto& dC = gr.grad_buf(out);
        auto& dA = gr.grad_buf(a);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cw; ++c) dA.v[size_t(r) * cols + c0 + c] += dC.v[size_t(r) * cw + c];
    });
    return out;
}

// Mean squared error against a constant target; returns a scalar node.
template <class S>
NodeId mse_to_const(Graph<S>& g, NodeId pred, const TensorT<S>& target) {
    const auto& P = g.val(pred);
    if (!P.same_shape(target)) throw ShapeError("mse_to_const: shape mismatch");
    const int64_t n = P.numel();
    S acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const S d = P.v[i] - target.v[i];
        acc += d * d;
    }
    auto tgt = std::make_shared<TensorT<S>>(target);
    const NodeId out = g.make_op(TensorT<S>::scalar(acc / S(n)), g.needs_grad(pred));
    g.set_back(out, [=](Graph<S>& gr) {
        const S go = gr.grad_buf(out).v[0];
        const auto& Pv = gr.val(pred);
        auto& dP = gr.grad_buf(pred);
        const S c = go * S(2) / S(n);
        for (int64_t i = 0; i < n; ++i) dP.v[i] += c * (Pv.v[i] - tgt->v[i]);
    });
    return out;
}

// Fixed-weight projection to a scalar; used to scalarize vector-valued ops
// for gradient checking.
template <class S>
NodeId weighted_sum_const(Graph<S>& g, NodeId a, const TensorT<S>& weights) {
    const auto& A = g.val(a);
    if (A.numel() != weights.numel()) throw ShapeError("weighted_sum_const: size mismatch");
    S acc = 0;
    for (int64_t i = 0; i < A.numel(); ++i) acc += A.v[i] * weights.v[i];
    auto w = std::make_shared<TensorT<S>>(weights);
    const NodeId out = g.make_op(TensorT<S>::scalar(acc), g.needs_grad(a));
    g.set_back(out, [=](Graph<S>& gr) {
        const S go = gr.grad_buf(out).v[0];
        auto& dA = gr.grad_buf(a);
        for (int64_t i = 0; i < dA.numel(); ++i) dA.v[i] += go * w->v[i];
    });
    return out;
}

}  // namespace fontcraft::nn
