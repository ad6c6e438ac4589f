#pragma once

#include <cblas.h>

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "randsac/mask.hpp"
#include "randsac/tensor.hpp"

namespace randsac {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

using NodeId = int;

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction; backward walks the tape once in reverse.
// Graphs are single-owner and must not be shared across threads.
template <class T>
class Graph {
public:
    NodeId input(Tensor<T> v) { return push(std::move(v), {}, nullptr, nullptr); }

    // Leaf bound to an external parameter; backward() accumulates into p.grad.
    NodeId param(Parameter<T>& p) { return push(p.value, {}, nullptr, &p); }

    const Tensor<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor<T>& grad(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

    NodeId add(NodeId a, NodeId b) {
        const auto& va = value(a);
        const auto& vb = value(b);
        require_same_shape(va, vb, "add");
        Tensor<T> out = va;
        for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] += vb.data[i];
        return push(std::move(out), {a, b}, [](Graph& g, NodeId self) {
            auto& n = g.node(self);
            g.accumulate(n.inputs[0], n.grad.data);
            g.accumulate(n.inputs[1], n.grad.data);
        });
    }

    NodeId scale(NodeId a, T c) {
        Tensor<T> out = value(a);
        for (auto& x : out.data) x *= c;
        return push(std::move(out), {a}, [c](Graph& g, NodeId self) {
            auto& n = g.node(self);
            auto& gin = g.grad(n.inputs[0]);
            for (std::int64_t i = 0; i < gin.numel(); ++i) gin.data[i] += c * n.grad.data[i];
        });
    }

    // Affine map along the last axis: y[r,o] = sum_i x[r,i] w[i,o] + b[o].
    NodeId linear(NodeId x, NodeId w, NodeId b) {
        const auto& vx = value(x);
        const auto& vw = value(w);
        const auto& vb = value(b);
        if (vw.rank() != 2 || vb.rank() != 1 || vx.rank() < 1)
            throw ShapeError("linear: weight must be rank 2, bias rank 1");
        const std::int64_t din = vw.shape[0], dout = vw.shape[1];
        if (vx.dim(-1) != din || vb.shape[0] != dout)
            throw ShapeError("linear: shape mismatch x" + shape_str(vx.shape) + " w" + shape_str(vw.shape) +
                             " b" + shape_str(vb.shape));
        const std::int64_t rows = vx.numel() / din;
        Shape out_shape = vx.shape;
        out_shape.back() = dout;
        Tensor<T> out(out_shape);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t o = 0; o < dout; ++o) out.data[r * dout + o] = vb.data[o];
        gemm(false, false, static_cast<int>(rows), static_cast<int>(dout), static_cast<int>(din), T(1),
             vx.ptr(), static_cast<int>(din), vw.ptr(), static_cast<int>(dout), T(1), out.ptr(),
             static_cast<int>(dout));
        return push(std::move(out), {x, w, b}, [rows, din, dout](Graph& g, NodeId self) {
            auto& n = g.node(self);
            const auto& vx2 = g.value(n.inputs[0]);
            const auto& vw2 = g.value(n.inputs[1]);
            auto& gx = g.grad(n.inputs[0]);
            auto& gw = g.grad(n.inputs[1]);
            auto& gb = g.grad(n.inputs[2]);
            // dx = dy w^T ; dw = x^T dy ; db = colsum dy
            gemm(false, true, static_cast<int>(rows), static_cast<int>(din), static_cast<int>(dout), T(1),
                 n.grad.ptr(), static_cast<int>(dout), vw2.ptr(), static_cast<int>(dout), T(1), gx.ptr(),
                 static_cast<int>(din));
            gemm(true, false, static_cast<int>(din), static_cast<int>(dout), static_cast<int>(rows), T(1),
                 vx2.ptr(), static_cast<int>(din), n.grad.ptr(), static_cast<int>(dout), T(1), gw.ptr(),
                 static_cast<int>(dout));
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t o = 0; o < dout; ++o) gb.data[o] += n.grad.data[r * dout + o];
        });
    }

    // Batched matmul. a: [B?,n,k]; b: [B?,k,m] (or [B?,m,k] with trans_b).
    NodeId matmul(NodeId a, NodeId b, bool trans_b = false) {
        const auto& va = value(a);
        const auto& vb = value(b);
        if (va.rank() != vb.rank() || (va.rank() != 2 && va.rank() != 3))
            throw ShapeError("matmul: rank mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
        const std::int64_t batch = va.rank() == 3 ? va.shape[0] : 1;
        if (va.rank() == 3 && vb.shape[0] != batch) throw ShapeError("matmul: batch mismatch");
        const std::int64_t n = va.dim(-2), k = va.dim(-1);
        const std::int64_t m = trans_b ? vb.dim(-2) : vb.dim(-1);
        const std::int64_t kb = trans_b ? vb.dim(-1) : vb.dim(-2);
        if (kb != k)
            throw ShapeError("matmul: inner extent mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
        Shape out_shape = va.shape;
        out_shape[out_shape.size() - 1] = m;
        Tensor<T> out(out_shape);
        for (std::int64_t s = 0; s < batch; ++s) {
            gemm(false, trans_b, static_cast<int>(n), static_cast<int>(m), static_cast<int>(k), T(1),
                 va.ptr() + s * n * k, static_cast<int>(k), vb.ptr() + s * k * m,
                 static_cast<int>(trans_b ? k : m), T(0), out.ptr() + s * n * m, static_cast<int>(m));
        }
        return push(std::move(out), {a, b}, [batch, n, k, m, trans_b](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            const auto& va2 = g.value(nd.inputs[0]);
            const auto& vb2 = g.value(nd.inputs[1]);
            auto& ga = g.grad(nd.inputs[0]);
            auto& gb = g.grad(nd.inputs[1]);
            for (std::int64_t s = 0; s < batch; ++s) {
                const T* dy = nd.grad.ptr() + s * n * m;
                const T* pa = va2.ptr() + s * n * k;
                const T* pb = vb2.ptr() + s * k * m;
                T* pga = ga.ptr() + s * n * k;
                T* pgb = gb.ptr() + s * k * m;
                if (!trans_b) {
                    // da = dy b^T ; db = a^T dy
                    gemm(false, true, static_cast<int>(n), static_cast<int>(k), static_cast<int>(m), T(1),
                         dy, static_cast<int>(m), pb, static_cast<int>(m), T(1), pga, static_cast<int>(k));
                    gemm(true, false, static_cast<int>(k), static_cast<int>(m), static_cast<int>(n), T(1),
                         pa, static_cast<int>(k), dy, static_cast<int>(m), T(1), pgb, static_cast<int>(m));
                } else {
                    // y = a b^T : da = dy b ; db = dy^T a
                    gemm(false, false, static_cast<int>(n), static_cast<int>(k), static_cast<int>(m), T(1),
                         dy, static_cast<int>(m), pb, static_cast<int>(k), T(1), pga, static_cast<int>(k));
                    gemm(true, false, static_cast<int>(m), static_cast<int>(k), static_cast<int>(n), T(1),
                         dy, static_cast<int>(m), pa, static_cast<int>(k), T(1), pgb, static_cast<int>(k));
                }
            }
        });
    }

    NodeId gelu(NodeId a) {
        Tensor<T> out = value(a);
        for (auto& x : out.data) x = T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
        return push(std::move(out), {a}, [](Graph& g, NodeId self) {
            auto& n = g.node(self);
            const auto& vx = g.value(n.inputs[0]);
            auto& gx = g.grad(n.inputs[0]);
            constexpr T inv_sqrt2pi = T(0.3989422804014327);
            for (std::int64_t i = 0; i < vx.numel(); ++i) {
                const T x = vx.data[i];
                const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
                gx.data[i] += n.grad.data[i] * (cdf + x * pdf);
            }
        });
    }

    // Per-last-axis standardization followed by affine.
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, T eps) {
        const auto& vx = value(x);
        const auto& vg = value(gamma);
        const auto& vbeta = value(beta);
        const std::int64_t d = vx.dim(-1);
        if (vg.numel() != d || vbeta.numel() != d) throw ShapeError("layer_norm: gamma/beta extent mismatch");
        const std::int64_t rows = vx.numel() / d;
        Tensor<T> out(vx.shape);
        auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(vx.numel()));
        auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* px = vx.ptr() + r * d;
            T mean = 0;
            for (std::int64_t j = 0; j < d; ++j) mean += px[j];
            mean /= static_cast<T>(d);
            T var = 0;
            for (std::int64_t j = 0; j < d; ++j) var += (px[j] - mean) * (px[j] - mean);
            var /= static_cast<T>(d);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[static_cast<std::size_t>(r)] = is;
            for (std::int64_t j = 0; j < d; ++j) {
                const T xh = (px[j] - mean) * is;
                (*xhat)[static_cast<std::size_t>(r * d + j)] = xh;
                out.data[r * d + j] = xh * vg.data[j] + vbeta.data[j];
            }
        }
        return push(std::move(out), {x, gamma, beta}, [rows, d, xhat, inv_std](Graph& g, NodeId self) {
            auto& n = g.node(self);
            const auto& vg2 = g.value(n.inputs[1]);
            auto& gx = g.grad(n.inputs[0]);
            auto& gg = g.grad(n.inputs[1]);
            auto& gb = g.grad(n.inputs[2]);
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* dy = n.grad.ptr() + r * d;
                const T* xh = xhat->data() + r * d;
                const T is = (*inv_std)[static_cast<std::size_t>(r)];
                T sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (std::int64_t j = 0; j < d; ++j) {
                    const T dxhat = dy[j] * vg2.data[j];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xh[j];
                    gg.data[j] += dy[j] * xh[j];
                    gb.data[j] += dy[j];
                }
                const T inv_d = T(1) / static_cast<T>(d);
                for (std::int64_t j = 0; j < d; ++j) {
                    const T dxhat = dy[j] * vg2.data[j];
                    gx.data[r * d + j] += is * (dxhat - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
                }
            }
        });
    }

    // Softmax over the last axis with an additive boolean mask shared across
    // leading axes: forbidden cells receive -1e9 before the softmax. Rows of
    // the mask with no permitted cell are a contract violation.
    NodeId masked_softmax(NodeId scores, const AttentionMask& mask) {
        const auto& vs = value(scores);
        const std::int64_t n = vs.dim(-1);
        if (vs.dim(-2) != n || mask.n != n)
            throw ShapeError("masked_softmax: scores " + shape_str(vs.shape) + " vs mask n=" + std::to_string(mask.n));
        for (std::int64_t i = 0; i < n; ++i) {
            bool any = false;
            for (std::int64_t j = 0; j < n && !any; ++j) any = mask.at(i, j);
            if (!any)
                throw ContractError("masked_softmax: all-false mask row " + std::to_string(i));
        }
        const std::int64_t rows = vs.numel() / (n * n);
        Tensor<T> out(vs.shape);
        constexpr T kForbidden = T(-1e9);
        for (std::int64_t b = 0; b < rows; ++b) {
            for (std::int64_t i = 0; i < n; ++i) {
                const T* ps = vs.ptr() + (b * n + i) * n;
                T* po = out.ptr() + (b * n + i) * n;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::int64_t j = 0; j < n; ++j) {
                    po[j] = ps[j] + (mask.at(i, j) ? T(0) : kForbidden);
                    mx = std::max(mx, po[j]);
                }
                T sum = 0;
                for (std::int64_t j = 0; j < n; ++j) {
                    po[j] = std::exp(po[j] - mx);
                    sum += po[j];
                }
                const T inv = T(1) / sum;
                for (std::int64_t j = 0; j < n; ++j) po[j] *= inv;
            }
        }
        return push(std::move(out), {scores}, [rows, n](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            auto& gx = g.grad(nd.inputs[0]);
            for (std::int64_t r = 0; r < rows * n; ++r) {
                const T* y = nd.value.ptr() + r * n;
                const T* dy = nd.grad.ptr() + r * n;
                T dot = 0;
                for (std::int64_t j = 0; j < n; ++j) dot += dy[j] * y[j];
                for (std::int64_t j = 0; j < n; ++j) gx.data[r * n + j] += y[j] * (dy[j] - dot);
            }
        });
    }

    // [N, H*d] -> [H, N, d]
    NodeId split_heads(NodeId x, std::int64_t heads) {
        const auto& vx = value(x);
        if (vx.rank() != 2 || vx.shape[1] % heads != 0) throw ShapeError("split_heads: bad input " + shape_str(vx.shape));
        const std::int64_t n = vx.shape[0], d = vx.shape[1] / heads;
        Tensor<T> out({heads, n, d});
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < d; ++j) out.data[(h * n + i) * d + j] = vx.data[i * heads * d + h * d + j];
        return push(std::move(out), {x}, [heads, n, d](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            auto& gx = g.grad(nd.inputs[0]);
            for (std::int64_t h = 0; h < heads; ++h)
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < d; ++j)
                        gx.data[i * heads * d + h * d + j] += nd.grad.data[(h * n + i) * d + j];
        });
    }

    // [H, N, d] -> [N, H*d]
    NodeId merge_heads(NodeId x) {
        const auto& vx = value(x);
        if (vx.rank() != 3) throw ShapeError("merge_heads: rank 3 expected");
        const std::int64_t heads = vx.shape[0], n = vx.shape[1], d = vx.shape[2];
        Tensor<T> out({n, heads * d});
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < d; ++j) out.data[i * heads * d + h * d + j] = vx.data[(h * n + i) * d + j];
        return push(std::move(out), {x}, [heads, n, d](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            auto& gx = g.grad(nd.inputs[0]);
            for (std::int64_t h = 0; h < heads; ++h)
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < d; ++j)
                        gx.data[(h * n + i) * d + j] += nd.grad.data[i * heads * d + h * d + j];
        });
    }

    // [N, D] -> [D] mean over rows.
    NodeId mean_rows(NodeId x) {
        const auto& vx = value(x);
        if (vx.rank() != 2) throw ShapeError("mean_rows: rank 2 expected");
        const std::int64_t n = vx.shape[0], d = vx.shape[1];
        Tensor<T> out({d});
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) out.data[j] += vx.data[i * d + j];
        for (auto& v : out.data) v /= static_cast<T>(n);
        return push(std::move(out), {x}, [n, d](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            auto& gx = g.grad(nd.inputs[0]);
            const T inv = T(1) / static_cast<T>(n);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < d; ++j) gx.data[i * d + j] += inv * nd.grad.data[j];
        });
    }

    // Same data, new extents (no broadcasting; element count must match).
    NodeId reshape(NodeId a, Shape shape) {
        const auto& va = value(a);
        if (shape_numel(shape) != va.numel())
            throw ShapeError("reshape: " + shape_str(va.shape) + " -> " + shape_str(shape) + " changes element count");
        Tensor<T> out(std::move(shape), va.data);
        return push(std::move(out), {a}, [](Graph& g, NodeId self) {
            auto& n = g.node(self);
            g.accumulate(n.inputs[0], n.grad.data);
        });
    }

    // [D] -> [1, D]
    NodeId reshape_rowvec(NodeId a) {
        const auto& va = value(a);
        return reshape(a, Shape{1, va.numel()});
    }

    // out = sum_k w[row, k] * xs[k], scalar-weighted sum of equal-shape
    // tensors; gradients flow to the weights and to every input.
    NodeId linear_mix(const std::vector<NodeId>& xs, NodeId w, std::int64_t row) {
        if (xs.empty()) throw ShapeError("linear_mix: no inputs");
        const auto& vw = value(w);
        const std::int64_t k = static_cast<std::int64_t>(xs.size());
        if (vw.rank() != 2 || vw.shape[1] != k || row < 0 || row >= vw.shape[0])
            throw ShapeError("linear_mix: weight " + shape_str(vw.shape) + " incompatible with " +
                             std::to_string(k) + " inputs, row " + std::to_string(row));
        Tensor<T> out = Tensor<T>::zeros(value(xs[0]).shape);
        for (std::int64_t i = 0; i < k; ++i) {
            const auto& vx = value(xs[static_cast<std::size_t>(i)]);
            require_same_shape(vx, out, "linear_mix");
            const T c = vw.data[static_cast<std::size_t>(row * k + i)];
            for (std::int64_t j = 0; j < out.numel(); ++j) out.data[j] += c * vx.data[j];
        }
        std::vector<NodeId> inputs = xs;
        inputs.push_back(w);
        return push(std::move(out), std::move(inputs), [k, row](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            const NodeId wid = nd.inputs.back();
            const auto& vw2 = g.value(wid);
            auto& gw = g.grad(wid);
            for (std::int64_t i = 0; i < k; ++i) {
                const NodeId xid = nd.inputs[static_cast<std::size_t>(i)];
                const auto& vx = g.value(xid);
                auto& gx = g.grad(xid);
                const T c = vw2.data[static_cast<std::size_t>(row * k + i)];
                T dot = 0;
                for (std::int64_t j = 0; j < vx.numel(); ++j) {
                    gx.data[j] += c * nd.grad.data[j];
                    dot += nd.grad.data[j] * vx.data[j];
                }
                gw.data[static_cast<std::size_t>(row * k + i)] += dot;
            }
        });
    }

    // Mean squared error against a constant target, with optional per-row
    // inclusion weights (rows = leading axis of a rank-2 tensor).
    NodeId mse(NodeId pred, const Tensor<T>& target, const std::vector<T>* row_weights = nullptr) {
        const auto& vp = value(pred);
        require_same_shape(vp, target, "mse");
        const std::int64_t d = vp.rank() >= 1 ? vp.dim(-1) : 1;
        const std::int64_t rows = vp.numel() / d;
        if (row_weights && static_cast<std::int64_t>(row_weights->size()) != rows)
            throw ShapeError("mse: row weight count mismatch");
        T wsum = 0;
        for (std::int64_t r = 0; r < rows; ++r) wsum += row_weights ? (*row_weights)[static_cast<std::size_t>(r)] : T(1);
        if (wsum <= T(0)) throw ContractError("mse: no rows included in loss");
        const T denom = wsum * static_cast<T>(d);
        T loss = 0;
        for (std::int64_t r = 0; r < rows; ++r) {
            const T w = row_weights ? (*row_weights)[static_cast<std::size_t>(r)] : T(1);
            if (w == T(0)) continue;
            for (std::int64_t j = 0; j < d; ++j) {
                const T diff = vp.data[r * d + j] - target.data[r * d + j];
                loss += w * diff * diff;
            }
        }
        Tensor<T> out({1});
        out.data[0] = loss / denom;
        auto tcopy = std::make_shared<Tensor<T>>(target);
        auto wcopy = row_weights ? std::make_shared<std::vector<T>>(*row_weights) : nullptr;
        return push(std::move(out), {pred}, [rows, d, denom, tcopy, wcopy](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            const auto& vp2 = g.value(nd.inputs[0]);
            auto& gx = g.grad(nd.inputs[0]);
            const T dl = nd.grad.data[0];
            for (std::int64_t r = 0; r < rows; ++r) {
                const T w = wcopy ? (*wcopy)[static_cast<std::size_t>(r)] : T(1);
                if (w == T(0)) continue;
                for (std::int64_t j = 0; j < d; ++j)
                    gx.data[r * d + j] += dl * T(2) * w * (vp2.data[r * d + j] - tcopy->data[r * d + j]) / denom;
            }
        });
    }

    // Scalar cross-entropy of softmax(logits) against an integer label.
    NodeId softmax_cross_entropy(NodeId logits, std::int64_t label) {
        const auto& vl = value(logits);
        const std::int64_t c = vl.numel();
        if (label < 0 || label >= c) throw ShapeError("softmax_cross_entropy: label out of range");
        T mx = vl.data[0];
        for (auto v : vl.data) mx = std::max(mx, v);
        T lse = 0;
        for (auto v : vl.data) lse += std::exp(v - mx);
        lse = std::log(lse) + mx;
        Tensor<T> out({1});
        out.data[0] = lse - vl.data[static_cast<std::size_t>(label)];
        return push(std::move(out), {logits}, [c, label, lse](Graph& g, NodeId self) {
            auto& nd = g.node(self);
            const auto& vl2 = g.value(nd.inputs[0]);
            auto& gx = g.grad(nd.inputs[0]);
            const T dl = nd.grad.data[0];
            for (std::int64_t j = 0; j < c; ++j) {
                const T p = std::exp(vl2.data[j] - lse);
                gx.data[j] += dl * (p - (j == label ? T(1) : T(0)));
            }
        });
    }

    // Reverse pass from a scalar objective. Visits every node exactly once.
    void backward(NodeId loss) {
        auto& ln = node(loss);
        if (ln.value.numel() != 1) throw ShapeError("backward: objective must be scalar");
        for (auto& n : nodes_)
            if (n.grad.numel() == 0) n.grad = Tensor<T>::zeros(n.value.shape);
        ln.grad.data[0] = T(1);
        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            auto& n = node(id);
            if (n.backward) n.backward(*this, id);
        }
        for (auto& n : nodes_) {
            if (n.bound) {
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) n.bound->grad.data[i] += n.grad.data[i];
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void(Graph&, NodeId)> backward;
        std::vector<NodeId> inputs;
        Parameter<T>* bound = nullptr;
    };

    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }

    NodeId push(Tensor<T> v, std::vector<NodeId> inputs, std::function<void(Graph&, NodeId)> bw,
                Parameter<T>* bound = nullptr) {
        Node n;
        n.value = std::move(v);
        n.inputs = std::move(inputs);
        n.backward = std::move(bw);
        n.bound = bound;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    void accumulate(NodeId id, const std::vector<T>& g) {
        auto& t = grad(id);
        for (std::size_t i = 0; i < g.size(); ++i) t.data[i] += g[i];
    }

    std::vector<Node> nodes_;
};

// softmax((q k^T)/sqrt(d) + additive) v over rank-3 [H, N, d] inputs.
template <class T>
NodeId masked_attention(Graph<T>& g, NodeId q, NodeId k, NodeId v, const AttentionMask& mask) {
    const auto& vq = g.value(q);
    const auto& vk = g.value(k);
    const auto& vv = g.value(v);
    require_same_shape(vq, vk, "masked_attention(q,k)");
    require_same_shape(vq, vv, "masked_attention(q,v)");
    const std::int64_t d = vq.dim(-1);
    NodeId scores = g.matmul(g.scale(q, T(1) / std::sqrt(static_cast<T>(d))), k, /*trans_b=*/true);
    NodeId attn = g.masked_softmax(scores, mask);
    return g.matmul(attn, v);
}

}  // namespace randsac
