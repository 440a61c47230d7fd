#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "codemix/error.hpp"

namespace codemix {

class ShapeMismatch : public Error {
public:
    ShapeMismatch(const std::string& op, const std::string& detail)
        : Error("shape mismatch in " + op + ": " + detail) {}
};

class NonFinite : public Error {
public:
    explicit NonFinite(const std::string& op)
        : Error("non-finite value produced by " + op) {}
};

class NotScalarLoss : public Error {
public:
    NotScalarLoss() : Error("backward requires a scalar loss recorded on the tape") {}
};

class Tape;

// Dense row-major 64-bit float tensor. Copies share the underlying buffer;
// operations never mutate their inputs. A tensor watched by a tape carries
// the tape pointer and its node id.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor full(std::vector<int> shape, double value);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int size() const { return size_; }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::span<const double> values() const { return {data_->data(), data_->size()}; }

    double item() const;
    double at(std::initializer_list<int> index) const;

    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    void bind(Tape* tape, int node) {
        tape_ = tape;
        node_ = node;
    }
    void unbind() {
        tape_ = nullptr;
        node_ = -1;
    }

    std::string shape_string() const;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
    int size_ = 0;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Per-node gradient buffers produced by Tape::backward.
class Gradients {
public:
    explicit Gradients(std::size_t node_count) : grads_(node_count) {}

    // Gradient for a watched tensor; zeros if it did not participate.
    Tensor for_tensor(const Tensor& t) const;

    std::vector<double>& buffer(int node, int size);
    const std::vector<double>* maybe_buffer(int node) const;

private:
    std::vector<std::vector<double>> grads_;
};

// Reverse-mode tape. Nodes are recorded in topological order by
// construction; backward replays them in reverse, accumulating gradients
// additively. One tape per thread of execution.
class Tape {
public:
    using BackwardFn = std::function<void(const std::vector<double>& out_grad, Gradients& grads)>;

    // Registers a leaf. The returned tensor shares the input's buffer.
    Tensor watch(const Tensor& t);
    // Binds an existing tensor (typically a model parameter) as a leaf.
    void watch_inplace(Tensor& t);

    int record(int out_size, BackwardFn fn);
    std::size_t node_count() const { return node_sizes_.size(); }

    Gradients backward(const Tensor& loss) const;

private:
    std::vector<int> node_sizes_;
    std::vector<BackwardFn> backward_fns_;
};

// ---- Operations ------------------------------------------------------
// All operations are pure; they record themselves on the tape of their
// taped inputs (which must agree) and propagate no tape otherwise.

// Elementwise add. `b` may have a shape that is a suffix of `a`'s shape, in
// which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
// Elementwise multiply, same broadcast rule as add.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);

// Matrix product over the last two axes. `b` is either 2-D (shared across
// batches) or has the same leading axes as `a`.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a, const std::vector<int>& perm);
Tensor reshape(const Tensor& a, const std::vector<int>& shape);
Tensor narrow(const Tensor& a, int axis, int start, int length);
Tensor concat_last(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& a, int axis);
// Normalizes the last axis to zero mean and unit variance (no affine part).
Tensor layer_norm(const Tensor& a, double eps);

Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Rows of `table` selected by index; output shape [indices.size(), width].
Tensor embedding_lookup(const Tensor& table, std::span<const int> indices);

// Per-row position select: x is [batch, seq, width], positions has one
// entry per batch row; output [batch, width].
Tensor select_positions(const Tensor& x, std::span<const int> positions);

// Mean negative log-likelihood over rows of 2-D logits whose target is not
// ignore_index.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index = -1);

} // namespace codemix
