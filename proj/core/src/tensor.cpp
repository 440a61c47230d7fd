#include "codemix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace codemix {

namespace {

int product(std::span<const int> shape) {
    int p = 1;
    for (int e : shape) p *= e;
    return p;
}

std::string shape_text(std::span<const int> shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << "x";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFinite(op);
    }
}

// b broadcasts over a when its shape is a suffix of a's shape.
bool is_suffix_shape(const std::vector<int>& a, const std::vector<int>& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

Tape* merge_tapes(const Tensor& a, const Tensor& b, const char* op) {
    Tape* ta = a.node() >= 0 ? a.tape() : nullptr;
    Tape* tb = b.node() >= 0 ? b.tape() : nullptr;
    if (ta && tb && ta != tb) {
        throw Error(std::string(op) + ": inputs recorded on different tapes");
    }
    return ta ? ta : tb;
}

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double sum = 0.0;
            for (int kk = 0; kk < k; ++kk) sum += arow[kk] * brow[kk];
            crow[j] += sum;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
void gemm_tn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

std::vector<double> permute_data(const double* src, const std::vector<int>& in_shape,
                                 const std::vector<int>& perm) {
    const auto nd = static_cast<int>(in_shape.size());
    std::vector<int> out_shape(nd);
    for (int d = 0; d < nd; ++d) out_shape[d] = in_shape[perm[d]];

    std::vector<int> in_strides(nd, 1);
    for (int d = nd - 2; d >= 0; --d) in_strides[d] = in_strides[d + 1] * in_shape[d + 1];

    // stride in the source for each output axis
    std::vector<int> src_strides(nd);
    for (int d = 0; d < nd; ++d) src_strides[d] = in_strides[perm[d]];

    const int total = product(in_shape);
    std::vector<double> out(static_cast<std::size_t>(total));
    std::vector<int> idx(nd, 0);
    int src_offset = 0;
    for (int i = 0; i < total; ++i) {
        out[static_cast<std::size_t>(i)] = src[src_offset];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[d] < out_shape[d]) {
                src_offset += src_strides[d];
                break;
            }
            idx[d] = 0;
            src_offset -= src_strides[d] * (out_shape[d] - 1);
        }
    }
    return out;
}

struct AxisSpans {
    int outer, extent, inner;
};

AxisSpans axis_spans(const std::vector<int>& shape, int axis) {
    AxisSpans s{1, shape[axis], 1};
    for (int d = 0; d < axis; ++d) s.outer *= shape[d];
    for (int d = axis + 1; d < static_cast<int>(shape.size()); ++d) s.inner *= shape[d];
    return s;
}

} // namespace

// ---- Tensor ------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    size_ = product(shape_);
    if (size_ <= 0) throw ShapeMismatch("tensor", "extents must be positive, got " + shape_text(shape_));
    data_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(size_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
    size_ = product(shape_);
    if (size_ <= 0 || static_cast<std::size_t>(size_) != values.size()) {
        throw ShapeMismatch("tensor", "data length " + std::to_string(values.size()) +
                                          " does not match shape " + shape_text(shape_));
    }
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

double Tensor::item() const {
    if (size_ != 1) throw ShapeMismatch("item", "expected a scalar, got " + shape_string());
    return (*data_)[0];
}

double Tensor::at(std::initializer_list<int> index) const {
    if (static_cast<int>(index.size()) != ndim()) {
        throw ShapeMismatch("at", "index rank does not match " + shape_string());
    }
    int flat = 0;
    int d = 0;
    for (int i : index) {
        flat = flat * shape_[d] + i;
        ++d;
    }
    return (*data_)[static_cast<std::size_t>(flat)];
}

std::string Tensor::shape_string() const { return shape_text(shape_); }

// ---- Gradients -----------------------------------------------------------

Tensor Gradients::for_tensor(const Tensor& t) const {
    if (t.node() < 0) throw Error("gradient requested for a tensor that is not on the tape");
    const auto node = static_cast<std::size_t>(t.node());
    if (node >= grads_.size() || grads_[node].empty()) {
        return Tensor(t.shape()); // did not participate: zero gradient
    }
    return Tensor(t.shape(), grads_[node]);
}

std::vector<double>& Gradients::buffer(int node, int size) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(static_cast<std::size_t>(size), 0.0);
    return g;
}

const std::vector<double>* Gradients::maybe_buffer(int node) const {
    const auto& g = grads_[static_cast<std::size_t>(node)];
    return g.empty() ? nullptr : &g;
}

// ---- Tape ----------------------------------------------------------------

Tensor Tape::watch(const Tensor& t) {
    Tensor watched = t;
    watch_inplace(watched);
    return watched;
}

void Tape::watch_inplace(Tensor& t) {
    if (t.node() >= 0 && t.tape() == this) return;
    t.bind(this, record(t.size(), BackwardFn{}));
}

int Tape::record(int out_size, BackwardFn fn) {
    node_sizes_.push_back(out_size);
    backward_fns_.push_back(std::move(fn));
    return static_cast<int>(node_sizes_.size()) - 1;
}

Gradients Tape::backward(const Tensor& loss) const {
    if (loss.size() != 1 || loss.node() < 0 || loss.tape() != this) throw NotScalarLoss();
    Gradients grads(node_sizes_.size());
    grads.buffer(loss.node(), 1)[0] = 1.0;
    for (int node = loss.node(); node >= 0; --node) {
        const auto* g = grads.maybe_buffer(node);
        if (!g) continue;
        const auto& fn = backward_fns_[static_cast<std::size_t>(node)];
        if (fn) fn(*g, grads);
    }
    return grads;
}

// ---- Operations ------------------------------------------------------

namespace {

// Shared implementation for elementwise binary ops with suffix broadcast.
template <typename Fwd, typename Back>
Tensor broadcast_binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Back back) {
    if (!is_suffix_shape(a.shape(), b.shape())) {
        throw ShapeMismatch(op, a.shape_string() + " vs " + b.shape_string());
    }
    const int bsize = b.size();
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < a.size(); ++i) {
        out[static_cast<std::size_t>(i)] = fwd(pa[i], pb[i % bsize]);
    }
    check_finite(op, out);

    Tensor result(a.shape(), std::move(out));
    if (Tape* tape = merge_tapes(a, b, op)) {
        const int node_a = a.tape() == tape ? a.node() : -1;
        const int node_b = b.tape() == tape ? b.node() : -1;
        Tensor ca = a, cb = b;
        const int node = tape->record(
            result.size(),
            [node_a, node_b, ca, cb, bsize, back](const std::vector<double>& g, Gradients& grads) {
                const double* pa = ca.data();
                const double* pb = cb.data();
                if (node_a >= 0) {
                    auto& ga = grads.buffer(node_a, ca.size());
                    for (int i = 0; i < ca.size(); ++i) {
                        ga[static_cast<std::size_t>(i)] +=
                            back(g[static_cast<std::size_t>(i)], pa[i], pb[i % bsize], true);
                    }
                }
                if (node_b >= 0) {
                    auto& gb = grads.buffer(node_b, cb.size());
                    for (int i = 0; i < ca.size(); ++i) {
                        gb[static_cast<std::size_t>(i % bsize)] +=
                            back(g[static_cast<std::size_t>(i)], pa[i], pb[i % bsize], false);
                    }
                }
            });
        result.bind(tape, node);
    }
    return result;
}

template <typename Fwd, typename Back>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Back back) {
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    const double* pa = a.data();
    for (int i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = fwd(pa[i]);
    check_finite(op, out);

    Tensor result(a.shape(), std::move(out));
    if (a.node() >= 0) {
        Tape* tape = a.tape();
        Tensor ca = a;
        Tensor cy = result;
        const int node_a = a.node();
        const int node =
            tape->record(result.size(), [node_a, ca, cy, back](const std::vector<double>& g,
                                                               Gradients& grads) {
                auto& ga = grads.buffer(node_a, ca.size());
                const double* px = ca.data();
                const double* py = cy.data();
                for (int i = 0; i < ca.size(); ++i) {
                    ga[static_cast<std::size_t>(i)] +=
                        g[static_cast<std::size_t>(i)] * back(px[i], py[i]);
                }
            });
        result.bind(tape, node);
    }
    return result;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double, bool) { return g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double x, double y, bool wrt_a) { return wrt_a ? g * y : g * x; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(
        "mul_scalar", a, [s](double x) { return s * x; },
        [s](double, double) { return s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) {
        throw ShapeMismatch("matmul", "inputs must have rank >= 2");
    }
    const bool shared_b = b.ndim() == 2;
    const int m = a.extent(a.ndim() - 2);
    const int k = a.extent(a.ndim() - 1);
    const int kb = b.extent(b.ndim() - 2);
    const int n = b.extent(b.ndim() - 1);
    if (k != kb) {
        throw ShapeMismatch("matmul", "inner extents differ: " + a.shape_string() + " vs " +
                                          b.shape_string());
    }
    std::vector<int> lead(a.shape().begin(), a.shape().end() - 2);
    if (!shared_b) {
        std::vector<int> lead_b(b.shape().begin(), b.shape().end() - 2);
        if (lead != lead_b) {
            throw ShapeMismatch("matmul", "batch extents differ: " + a.shape_string() + " vs " +
                                              b.shape_string());
        }
    }
    const int batches = product(lead);

    std::vector<int> out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(batches) * m * n, 0.0);
    for (int bi = 0; bi < batches; ++bi) {
        const double* pa = a.data() + static_cast<std::size_t>(bi) * m * k;
        const double* pb = b.data() + (shared_b ? 0 : static_cast<std::size_t>(bi) * k * n);
        gemm_nn(out.data() + static_cast<std::size_t>(bi) * m * n, pa, pb, m, k, n);
    }
    check_finite("matmul", out);

    Tensor result(out_shape, std::move(out));
    if (Tape* tape = merge_tapes(a, b, "matmul")) {
        const int node_a = a.tape() == tape ? a.node() : -1;
        const int node_b = b.tape() == tape ? b.node() : -1;
        Tensor ca = a, cb = b;
        const int node = tape->record(
            result.size(), [node_a, node_b, ca, cb, batches, m, k, n,
                            shared_b](const std::vector<double>& g, Gradients& grads) {
                if (node_a >= 0) {
                    auto& ga = grads.buffer(node_a, ca.size());
                    for (int bi = 0; bi < batches; ++bi) {
                        const double* pg = g.data() + static_cast<std::size_t>(bi) * m * n;
                        const double* pb =
                            cb.data() + (shared_b ? 0 : static_cast<std::size_t>(bi) * k * n);
                        gemm_nt(ga.data() + static_cast<std::size_t>(bi) * m * k, pg, pb, m, n, k);
                    }
                }
                if (node_b >= 0) {
                    auto& gb = grads.buffer(node_b, cb.size());
                    for (int bi = 0; bi < batches; ++bi) {
                        const double* pa = ca.data() + static_cast<std::size_t>(bi) * m * k;
                        const double* pg = g.data() + static_cast<std::size_t>(bi) * m * n;
                        gemm_tn(gb.data() + (shared_b ? 0 : static_cast<std::size_t>(bi) * k * n),
                                pa, pg, m, k, n);
                    }
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
    const int nd = a.ndim();
    if (static_cast<int>(perm.size()) != nd) {
        throw ShapeMismatch("transpose", "permutation rank does not match " + a.shape_string());
    }
    std::vector<bool> seen(static_cast<std::size_t>(nd), false);
    for (int p : perm) {
        if (p < 0 || p >= nd || seen[static_cast<std::size_t>(p)]) {
            throw ShapeMismatch("transpose", "invalid permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
    }
    std::vector<int> out_shape(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) out_shape[d] = a.extent(perm[d]);

    Tensor result(out_shape, permute_data(a.data(), a.shape(), perm));
    if (a.node() >= 0) {
        Tape* tape = a.tape();
        std::vector<int> inv(static_cast<std::size_t>(nd));
        for (int d = 0; d < nd; ++d) inv[static_cast<std::size_t>(perm[d])] = d;
        const int node_a = a.node();
        const int asize = a.size();
        const int node = tape->record(
            result.size(),
            [node_a, asize, out_shape, inv](const std::vector<double>& g, Gradients& grads) {
                auto& ga = grads.buffer(node_a, asize);
                std::vector<double> gt = permute_data(g.data(), out_shape, inv);
                for (std::size_t i = 0; i < gt.size(); ++i) ga[i] += gt[i];
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor reshape(const Tensor& a, const std::vector<int>& shape) {
    if (product(shape) != a.size()) {
        throw ShapeMismatch("reshape", a.shape_string() + " to " + shape_text(shape));
    }
    Tensor result(shape, std::vector<double>(a.data(), a.data() + a.size()));
    if (a.node() >= 0) {
        Tape* tape = a.tape();
        const int node_a = a.node();
        const int asize = a.size();
        const int node = tape->record(
            result.size(), [node_a, asize](const std::vector<double>& g, Gradients& grads) {
                auto& ga = grads.buffer(node_a, asize);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor narrow(const Tensor& a, int axis, int start, int length) {
    if (axis < 0 || axis >= a.ndim() || start < 0 || length <= 0 ||
        start + length > a.extent(axis)) {
        throw ShapeMismatch("narrow", "invalid slice on " + a.shape_string());
    }
    const AxisSpans spans = axis_spans(a.shape(), axis);
    std::vector<int> out_shape = a.shape();
    out_shape[axis] = length;

    std::vector<double> out(static_cast<std::size_t>(spans.outer) * length * spans.inner);
    const double* pa = a.data();
    for (int o = 0; o < spans.outer; ++o) {
        const double* src =
            pa + (static_cast<std::size_t>(o) * spans.extent + start) * spans.inner;
        double* dst = out.data() + static_cast<std::size_t>(o) * length * spans.inner;
        std::copy(src, src + static_cast<std::size_t>(length) * spans.inner, dst);
    }

    Tensor result(out_shape, std::move(out));
    if (a.node() >= 0) {
        Tape* tape = a.tape();
        const int node_a = a.node();
        const int asize = a.size();
        const int node = tape->record(
            result.size(),
            [node_a, asize, spans, start, length](const std::vector<double>& g, Gradients& grads) {
                auto& ga = grads.buffer(node_a, asize);
                for (int o = 0; o < spans.outer; ++o) {
                    const double* src = g.data() + static_cast<std::size_t>(o) * length * spans.inner;
                    double* dst = ga.data() +
                                  (static_cast<std::size_t>(o) * spans.extent + start) * spans.inner;
                    for (int i = 0; i < length * spans.inner; ++i) dst[i] += src[i];
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    if (a.ndim() != b.ndim() || a.ndim() < 1) {
        throw ShapeMismatch("concat_last", a.shape_string() + " vs " + b.shape_string());
    }
    for (int d = 0; d + 1 < a.ndim(); ++d) {
        if (a.extent(d) != b.extent(d)) {
            throw ShapeMismatch("concat_last", a.shape_string() + " vs " + b.shape_string());
        }
    }
    const int la = a.extent(a.ndim() - 1);
    const int lb = b.extent(b.ndim() - 1);
    const int rows = a.size() / la;
    std::vector<int> out_shape = a.shape();
    out_shape.back() = la + lb;

    std::vector<double> out(static_cast<std::size_t>(rows) * (la + lb));
    for (int r = 0; r < rows; ++r) {
        std::copy(a.data() + static_cast<std::size_t>(r) * la,
                  a.data() + static_cast<std::size_t>(r + 1) * la,
                  out.data() + static_cast<std::size_t>(r) * (la + lb));
        std::copy(b.data() + static_cast<std::size_t>(r) * lb,
                  b.data() + static_cast<std::size_t>(r + 1) * lb,
                  out.data() + static_cast<std::size_t>(r) * (la + lb) + la);
    }

    Tensor result(out_shape, std::move(out));
    if (Tape* tape = merge_tapes(a, b, "concat_last")) {
        const int node_a = a.tape() == tape ? a.node() : -1;
        const int node_b = b.tape() == tape ? b.node() : -1;
        const int asize = a.size(), bsize = b.size();
        const int node = tape->record(
            result.size(), [node_a, node_b, asize, bsize, rows, la,
                            lb](const std::vector<double>& g, Gradients& grads) {
                if (node_a >= 0) {
                    auto& ga = grads.buffer(node_a, asize);
                    for (int r = 0; r < rows; ++r) {
                        for (int i = 0; i < la; ++i) {
                            ga[static_cast<std::size_t>(r) * la + i] +=
                                g[static_cast<std::size_t>(r) * (la + lb) + i];
                        }
                    }
                }
                if (node_b >= 0) {
                    auto& gb = grads.buffer(node_b, bsize);
                    for (int r = 0; r < rows; ++r) {
                        for (int i = 0; i < lb; ++i) {
                            gb[static_cast<std::size_t>(r) * lb + i] +=
                                g[static_cast<std::size_t>(r) * (la + lb) + la + i];
                        }
                    }
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor softmax(const Tensor& a, int axis) {
    if (axis < 0 || axis >= a.ndim()) {
        throw ShapeMismatch("softmax", "axis out of range for " + a.shape_string());
    }
    const AxisSpans spans = axis_spans(a.shape(), axis);
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    const double* pa = a.data();
    for (int o = 0; o < spans.outer; ++o) {
        for (int in = 0; in < spans.inner; ++in) {
            const std::size_t base =
                static_cast<std::size_t>(o) * spans.extent * spans.inner + in;
            double mx = -HUGE_VAL;
            for (int e = 0; e < spans.extent; ++e) {
                mx = std::max(mx, pa[base + static_cast<std::size_t>(e) * spans.inner]);
            }
            double sum = 0.0;
            for (int e = 0; e < spans.extent; ++e) {
                const std::size_t at = base + static_cast<std::size_t>(e) * spans.inner;
                out[at] = std::exp(pa[at] - mx);
                sum += out[at];
            }
            for (int e = 0; e < spans.extent; ++e) {
                out[base + static_cast<std::size_t>(e) * spans.inner] /= sum;
            }
        }
    }
    check_finite("softmax", out);

    Tensor result(a.shape(), std::move(out));
    if (a.node() >= 0) {
        Tape* tape = a.tape();
        Tensor cy = result;
        const int node_a = a.node();
        const int node = tape->record(
            result.size(), [node_a, cy, spans](const std::vector<double>& g, Gradients& grads) {
                auto& ga = grads.buffer(node_a, cy.size());
                const double* py = cy.data();
                for (int o = 0; o < spans.outer; ++o) {
                    for (int in = 0; in < spans.inner; ++in) {
                        const std::size_t base =
                            static_cast<std::size_t>(o) * spans.extent * spans.inner + in;
                        double dot = 0.0;
                        for (int e = 0; e < spans.extent; ++e) {
                            const std::size_t at = base + static_cast<std::size_t>(e) * spans.inner;
                            dot += g[at] * py[at];
                        }
                        for (int e = 0; e < spans.extent; ++e) {
                            const std::size_t at = base + static_cast<std::size_t>(e) * spans.inner;
                            ga[at] += py[at] * (g[at] - dot);
                        }
                    }
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor layer_norm(const Tensor& a, double eps) {
    if (a.ndim() < 1) throw ShapeMismatch("layer_norm", "rank must be >= 1");
    const int width = a.extent(a.ndim() - 1);
    const int rows = a.size() / width;

    std::vector<double> out(static_cast<std::size_t>(a.size()));
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    const double* pa = a.data();
    for (int r = 0; r < rows; ++r) {
        const double* row = pa + static_cast<std::size_t>(r) * width;
        double mean = 0.0;
        for (int i = 0; i < width; ++i) mean += row[i];
        mean /= width;
        double var = 0.0;
        for (int i = 0; i < width; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= width;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = istd;
        double* orow = out.data() + static_cast<std::size_t>(r) * width;
        for (int i = 0; i < width; ++i) orow[i] = (row[i] - mean) * istd;
    }
    check_finite("layer_norm", out);

    Tensor result(a.shape(), std::move(out));
    if (a.node() >= 0) {
        Tape* tape = a.tape();
        Tensor cy = result;
        const int node_a = a.node();
        const int node = tape->record(
            result.size(),
            [node_a, cy, inv_std, rows, width](const std::vector<double>& g, Gradients& grads) {
                auto& ga = grads.buffer(node_a, cy.size());
                const double* py = cy.data();
                for (int r = 0; r < rows; ++r) {
                    const std::size_t base = static_cast<std::size_t>(r) * width;
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (int i = 0; i < width; ++i) {
                        mean_g += g[base + i];
                        mean_gy += g[base + i] * py[base + i];
                    }
                    mean_g /= width;
                    mean_gy /= width;
                    const double istd = inv_std[static_cast<std::size_t>(r)];
                    for (int i = 0; i < width; ++i) {
                        ga[base + i] += istd * (g[base + i] - mean_g - py[base + i] * mean_gy);
                    }
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor gelu(const Tensor& a) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    return unary_op(
        "gelu", a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> indices) {
    if (table.ndim() != 2) throw ShapeMismatch("embedding_lookup", "table must be 2-D");
    const int vocab = table.extent(0);
    const int width = table.extent(1);
    const auto n = static_cast<int>(indices.size());
    if (n == 0) throw ShapeMismatch("embedding_lookup", "no indices");
    for (int idx : indices) {
        if (idx < 0 || idx >= vocab) {
            throw ShapeMismatch("embedding_lookup", "index " + std::to_string(idx) +
                                                        " out of range [0, " +
                                                        std::to_string(vocab) + ")");
        }
    }
    std::vector<double> out(static_cast<std::size_t>(n) * width);
    const double* pt = table.data();
    for (int i = 0; i < n; ++i) {
        const double* row = pt + static_cast<std::size_t>(indices[i]) * width;
        std::copy(row, row + width, out.data() + static_cast<std::size_t>(i) * width);
    }

    Tensor result({n, width}, std::move(out));
    if (table.node() >= 0) {
        Tape* tape = table.tape();
        const int node_t = table.node();
        const int tsize = table.size();
        std::vector<int> idx(indices.begin(), indices.end());
        const int node = tape->record(
            result.size(),
            [node_t, tsize, idx, width](const std::vector<double>& g, Gradients& grads) {
                auto& gt = grads.buffer(node_t, tsize);
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    double* dst = gt.data() + static_cast<std::size_t>(idx[i]) * width;
                    const double* src = g.data() + i * width;
                    for (int j = 0; j < width; ++j) dst[j] += src[j];
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor select_positions(const Tensor& x, std::span<const int> positions) {
    if (x.ndim() != 3) throw ShapeMismatch("select_positions", "input must be 3-D");
    const int batch = x.extent(0);
    const int seq = x.extent(1);
    const int width = x.extent(2);
    if (static_cast<int>(positions.size()) != batch) {
        throw ShapeMismatch("select_positions", "one position per batch row required");
    }
    for (int p : positions) {
        if (p < 0 || p >= seq) throw ShapeMismatch("select_positions", "position out of range");
    }
    std::vector<double> out(static_cast<std::size_t>(batch) * width);
    for (int b = 0; b < batch; ++b) {
        const double* src =
            x.data() + (static_cast<std::size_t>(b) * seq + positions[b]) * width;
        std::copy(src, src + width, out.data() + static_cast<std::size_t>(b) * width);
    }

    Tensor result({batch, width}, std::move(out));
    if (x.node() >= 0) {
        Tape* tape = x.tape();
        const int node_x = x.node();
        const int xsize = x.size();
        std::vector<int> pos(positions.begin(), positions.end());
        const int node = tape->record(
            result.size(),
            [node_x, xsize, pos, seq, width](const std::vector<double>& g, Gradients& grads) {
                auto& gx = grads.buffer(node_x, xsize);
                for (std::size_t b = 0; b < pos.size(); ++b) {
                    double* dst = gx.data() + (b * seq + static_cast<std::size_t>(pos[b])) * width;
                    const double* src = g.data() + b * width;
                    for (int j = 0; j < width; ++j) dst[j] += src[j];
                }
            });
        result.bind(tape, node);
    }
    return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index) {
    if (logits.ndim() != 2) throw ShapeMismatch("cross_entropy", "logits must be 2-D");
    const int n = logits.extent(0);
    const int classes = logits.extent(1);
    if (static_cast<int>(targets.size()) != n) {
        throw ShapeMismatch("cross_entropy", "one target per logits row required");
    }

    std::vector<double> probs(static_cast<std::size_t>(logits.size()));
    const double* pl = logits.data();
    double loss_sum = 0.0;
    int counted = 0;
    for (int i = 0; i < n; ++i) {
        const double* row = pl + static_cast<std::size_t>(i) * classes;
        double* prow = probs.data() + static_cast<std::size_t>(i) * classes;
        double mx = -HUGE_VAL;
        for (int c = 0; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) {
            prow[c] = std::exp(row[c] - mx);
            sum += prow[c];
        }
        for (int c = 0; c < classes; ++c) prow[c] /= sum;

        const int t = targets[i];
        if (t == ignore_index) continue;
        if (t < 0 || t >= classes) {
            throw ShapeMismatch("cross_entropy", "target " + std::to_string(t) + " out of range");
        }
        loss_sum += (mx + std::log(sum)) - row[t];
        ++counted;
    }
    if (counted == 0) throw Error("cross_entropy: no rows with a target");
    const double loss = loss_sum / counted;
    if (!std::isfinite(loss)) throw NonFinite("cross_entropy");

    Tensor result = Tensor::scalar(loss);
    if (logits.node() >= 0) {
        Tape* tape = logits.tape();
        const int node_l = logits.node();
        const int lsize = logits.size();
        std::vector<int> tgt(targets.begin(), targets.end());
        const int node = tape->record(
            1, [node_l, lsize, probs = std::move(probs), tgt, classes, counted,
                ignore_index](const std::vector<double>& g, Gradients& grads) {
                auto& gl = grads.buffer(node_l, lsize);
                const double scale = g[0] / counted;
                for (std::size_t i = 0; i < tgt.size(); ++i) {
                    if (tgt[i] == ignore_index) continue;
                    const double* prow = probs.data() + i * classes;
                    double* grow = gl.data() + i * classes;
                    for (int c = 0; c < classes; ++c) {
                        grow[c] += scale * (prow[c] - (c == tgt[i] ? 1.0 : 0.0));
                    }
                }
            });
        result.bind(tape, node);
    }
    return result;
}

} // namespace codemix
