#pragma once

// Minimal dense / attention primitives with hand-written backward passes.
// Everything is double precision; matrices are row-major. Heavy products go
// through Eigen maps over the Tensor storage.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sliceforge/error.hpp"
#include "sliceforge/rng.hpp"

namespace sliceforge::nn {

// Every buffer starts on a 64-byte boundary so Eigen's vectorized kernels
// split work the same way on every run; otherwise results could differ in the
// last bit depending on where malloc placed the data.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Tensor {
    std::vector<std::size_t> shape;
    Buffer data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)),
          data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{}), fill) {}

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
    static Tensor vector(std::size_t len, double fill = 0.0) { return Tensor({len}, fill); }
    static Tensor from(std::vector<std::size_t> dims, std::vector<double> values) {
        Tensor t(std::move(dims));
        if (values.size() != t.data.size()) throw ShapeError("Tensor::from: data length does not match shape");
        t.data.assign(values.begin(), values.end());
        return t;
    }

    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t size() const noexcept { return data.size(); }
    // 1-D tensors behave as a single row.
    std::size_t rows() const noexcept { return shape.size() == 1 ? 1 : shape[0]; }
    std::size_t cols() const noexcept { return shape.empty() ? 0 : shape.back(); }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    std::vector<double> values() const { return {data.begin(), data.end()}; }

    void fill(double v) { std::ranges::fill(data, v); }
    bool all_finite() const {
        return std::ranges::all_of(data, [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline MatMap as_matrix(Tensor& t) {
    return MatMap(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline ConstMatMap as_matrix(const Tensor& t) {
    return ConstMatMap(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

// A learnable tensor together with its gradient accumulator.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

// ---- dense -----------------------------------------------------------------

struct DenseLayer {
    Tensor W;  // out x in
    Tensor b;  // out
    Tensor dW;
    Tensor db;

    std::size_t in() const noexcept { return W.cols(); }
    std::size_t out() const noexcept { return W.rows(); }

    void zero_grad() {
        dW.fill(0.0);
        db.fill(0.0);
    }
};

// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), zero bias.
inline DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
    DenseLayer layer{Tensor::matrix(out, in), Tensor::vector(out), Tensor::matrix(out, in), Tensor::vector(out)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : layer.W.data) w = rng.uniform_real(-bound, bound);
    return layer;
}

// Y = X W^T + b for every row of X (B x in, or a single in-vector).
inline Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
    if (x.cols() != layer.in())
        throw ShapeError("dense_forward: input width " + std::to_string(x.cols()) + " != " + std::to_string(layer.in()));
    Tensor y = x.rank() == 1 ? Tensor::vector(layer.out()) : Tensor::matrix(x.rows(), layer.out());
    auto Y = as_matrix(y);
    Y.noalias() = as_matrix(x) * as_matrix(layer.W).transpose();
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(layer.b.data.data(), static_cast<Eigen::Index>(layer.out()));
    return y;
}

// Accumulates dW += dY^T X and db += colsum(dY); returns dX.
inline Tensor dense_backward(DenseLayer& layer, const Tensor& x, const Tensor& dy) {
    if (dy.rows() != x.rows() || dy.cols() != layer.out() || x.cols() != layer.in())
        throw ShapeError("dense_backward: shape mismatch");
    const auto X = as_matrix(x);
    const auto dY = as_matrix(dy);
    as_matrix(layer.dW).noalias() += dY.transpose() * X;
    Eigen::Map<Eigen::RowVectorXd>(layer.db.data.data(), static_cast<Eigen::Index>(layer.out())) += dY.colwise().sum();
    Tensor dx(x.shape);
    as_matrix(dx).noalias() = dY * as_matrix(layer.W);
    return dx;
}

// ---- relu ------------------------------------------------------------------

inline Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    if (x.size() != dy.size()) throw ShapeError("relu_backward: shape mismatch");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
    return dx;
}

// ---- MLP stack -------------------------------------------------------------

// Input and pre-activation of every layer.
struct MlpTape {
    std::vector<Tensor> inputs;
    std::vector<Tensor> pre;
};

// ReLU after every layer except the last, which stays linear.
inline Tensor mlp_forward(const std::vector<DenseLayer>& layers, const Tensor& x, MlpTape* tape = nullptr) {
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor z = dense_forward(layers[i], h);
        if (tape) tape->inputs.push_back(std::move(h));
        h = i + 1 == layers.size() ? z : relu_forward(z);
        if (tape) tape->pre.push_back(std::move(z));
    }
    return h;
}

inline Tensor mlp_backward(std::vector<DenseLayer>& layers, const MlpTape& tape, Tensor dy) {
    for (std::size_t i = layers.size(); i-- > 0;) {
        if (i + 1 != layers.size()) dy = relu_backward(tape.pre[i], dy);
        dy = dense_backward(layers[i], tape.inputs[i], dy);
    }
    return dy;
}

// ---- multi-head self-attention context matrix -----------------------------

// Per head h: Q = U Wq_h, K = U Wk_h, A_h = rowsoftmax(Q K^T / sqrt(d_h)).
// Output S = mean_h A_h, an l x l matrix whose rows sum to one. There is no
// value projection: the attention weights themselves are the context scores.
struct MhsaParams {
    std::size_t width = 0;       // s, input row width
    std::size_t head_width = 0;  // d_h
    std::vector<Tensor> Wq, Wk;  // heads x (width x head_width)
    std::vector<Tensor> dWq, dWk;

    std::size_t heads() const noexcept { return Wq.size(); }
    void zero_grad() {
        for (auto& g : dWq) g.fill(0.0);
        for (auto& g : dWk) g.fill(0.0);
    }
};

inline MhsaParams make_mhsa(std::size_t width, std::size_t heads, std::size_t head_width, Rng& rng) {
    MhsaParams p;
    p.width = width;
    p.head_width = head_width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(width));
    for (std::size_t h = 0; h < heads; ++h) {
        for (auto* set : {&p.Wq, &p.Wk}) {
            Tensor w = Tensor::matrix(width, head_width);
            for (auto& v : w.data) v = rng.uniform_real(-bound, bound);
            set->push_back(std::move(w));
        }
        p.dWq.push_back(Tensor::matrix(width, head_width));
        p.dWk.push_back(Tensor::matrix(width, head_width));
    }
    return p;
}

struct MhsaTape {
    std::vector<Tensor> q, k, attn;
};

inline void softmax_rows(RowMatrix& z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

inline Tensor mhsa_forward(const MhsaParams& p, const Tensor& u, MhsaTape* tape = nullptr) {
    if (u.rank() != 2 || u.cols() != p.width) throw ShapeError("mhsa_forward: input must be l x " + std::to_string(p.width));
    const std::size_t l = u.rows();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.head_width));
    const auto U = as_matrix(u);
    Tensor s = Tensor::matrix(l, l);
    auto S = as_matrix(s);
    if (tape) *tape = MhsaTape{};
    for (std::size_t h = 0; h < p.heads(); ++h) {
        Tensor q = Tensor::matrix(l, p.head_width), k = Tensor::matrix(l, p.head_width);
        as_matrix(q).noalias() = U * as_matrix(p.Wq[h]);
        as_matrix(k).noalias() = U * as_matrix(p.Wk[h]);
        RowMatrix a = (as_matrix(q) * as_matrix(k).transpose()) * inv_sqrt;
        softmax_rows(a);
        S += a;
        if (tape) {
            Tensor at = Tensor::matrix(l, l);
            as_matrix(at) = a;
            tape->q.push_back(std::move(q));
            tape->k.push_back(std::move(k));
            tape->attn.push_back(std::move(at));
        }
    }
    S /= static_cast<double>(p.heads());
    return s;
}

// Accumulates dWq/dWk; returns dU.
inline Tensor mhsa_backward(MhsaParams& p, const Tensor& u, const MhsaTape& tape, const Tensor& ds) {
    const std::size_t l = u.rows();
    if (ds.rows() != l || ds.cols() != l) throw ShapeError("mhsa_backward: dS must be l x l");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.head_width));
    const auto U = as_matrix(u);
    Tensor du(u.shape);
    auto dU = as_matrix(du);
    const RowMatrix dA = as_matrix(ds) / static_cast<double>(p.heads());
    for (std::size_t h = 0; h < p.heads(); ++h) {
        const auto A = as_matrix(tape.attn[h]);
        // softmax backward, row-wise: dZ = A .* (dA - rowsum(dA .* A))
        const Eigen::VectorXd dot = (dA.array() * A.array()).rowwise().sum();
        RowMatrix dZ = (A.array() * (dA.colwise() - dot).array()).matrix() * inv_sqrt;
        const RowMatrix dQ = dZ * as_matrix(tape.k[h]);
        const RowMatrix dK = dZ.transpose() * as_matrix(tape.q[h]);
        as_matrix(p.dWq[h]).noalias() += U.transpose() * dQ;
        as_matrix(p.dWk[h]).noalias() += U.transpose() * dK;
        dU.noalias() += dQ * as_matrix(p.Wq[h]).transpose();
        dU.noalias() += dK * as_matrix(p.Wk[h]).transpose();
    }
    return du;
}

// ---- loss ------------------------------------------------------------------

struct LossGrad {
    double loss = 0.0;
    std::vector<double> dpred;
};

// sum_i (pred_i m_i - target_i m_i)^2
inline LossGrad masked_mse(std::span<const double> pred, std::span<const double> target,
                           std::span<const std::uint8_t> mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw ShapeError("masked_mse: length mismatch");
    LossGrad out{0.0, std::vector<double>(pred.size(), 0.0)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const double diff = pred[i] - target[i];
        out.loss += diff * diff;
        out.dpred[i] = 2.0 * diff;
    }
    return out;
}

// ---- Adam ------------------------------------------------------------------

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor> m, v;  // mirror the parameter list
};

inline AdamState make_adam(std::span<const ParamRef> params) {
    AdamState st;
    for (const auto& p : params) {
        st.m.emplace_back(p.value->shape);
        st.v.emplace_back(p.value->shape);
    }
    return st;
}

// Bias-corrected Adam. A non-finite gradient aborts before anything changes.
inline void adam_step(std::span<const ParamRef> params, AdamState& st, double lr) {
    if (st.m.size() != params.size() || st.v.size() != params.size())
        throw ShapeError("adam_step: moment buffers do not match parameters");
    for (const auto& p : params) {
        if (p.grad->shape != p.value->shape) throw ShapeError("adam_step: gradient shape mismatch for " + p.name);
        if (!p.grad->all_finite()) throw NumericError("adam_step: non-finite gradient in " + p.name);
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k].value->data;
        const auto& g = params[k].grad->data;
        auto& m = st.m[k].data;
        auto& v = st.v[k].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

// ---- finite-difference gradient check -------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t kinks = 0;  // entries re-probed with a smaller step
    std::string worst;      // "name[index]"
};

// |a - b| / max(|a|, |b|, floor). Central differences of an O(1) loss resolve
// gradients only to about 1e-10, so the floor keeps vanishing gradients from
// turning rounding noise into large ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares the gradients already accumulated in params[*].grad with central
// differences of `loss`. When max_per_tensor is non-zero only that many
// randomly chosen entries of each tensor are probed.
//
// A probe whose two one-sided slopes disagree has straddled a ReLU kink; it is
// repeated with the step divided by ten, at most twice.
inline GradCheckResult grad_check(const std::function<double()>& loss, std::span<const ParamRef> params,
                                  double epsilon, std::size_t max_per_tensor = 0, std::uint64_t seed = 0) {
    GradCheckResult result;
    Rng rng(seed);
    const double base = loss();
    for (const auto& p : params) {
        std::vector<std::size_t> idx(p.value->size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (max_per_tensor != 0 && idx.size() > max_per_tensor) {
            for (std::size_t i = 0; i < max_per_tensor; ++i)
                std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
            idx.resize(max_per_tensor);
        }
        for (std::size_t i : idx) {
            double& w = p.value->data[i];
            const double saved = w;
            double numeric = 0.0;
            double step = epsilon;
            for (int attempt = 0; attempt < 3; ++attempt, step /= 10.0) {
                w = saved + step;
                const double up = loss();
                w = saved - step;
                const double down = loss();
                w = saved;
                numeric = (up - down) / (2.0 * step);
                const double right = up - base, left = base - down;
                const double gap = std::abs(right - left);
                if (gap <= 1e-3 * std::max(std::abs(right), std::abs(left)) || gap <= 1e-11) break;
                if (attempt == 0) ++result.kinks;
            }
            const double err = relative_error(p.grad->data[i], numeric);
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

}  // namespace sliceforge::nn
