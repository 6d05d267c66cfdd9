#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fwionet/common.hpp"

namespace fwionet {

// Reverse-mode autodiff currency. A Tensor is a cheap handle onto shared
// storage; ops build new tensors and record backward rules on a Tape.
// Production runs in float; gradient verification instantiates double.
template <typename T>
struct TensorStorage {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false)
        : s_(std::make_shared<TensorStorage<T>>()) {
        s_->shape = std::move(shape);
        s_->data.assign(checked_numel(s_->shape), T(0));
        s_->requires_grad = requires_grad;
    }

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<T> data, bool requires_grad = false) {
        if (checked_numel(shape) != data.size())
            throw std::invalid_argument("tensor data length does not match shape product");
        Tensor t;
        t.s_ = std::make_shared<TensorStorage<T>>();
        t.s_->shape = std::move(shape);
        t.s_->data = std::move(data);
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(std::vector<std::size_t> shape, T value, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        std::fill(t.s_->data.begin(), t.s_->data.end(), value);
        return t;
    }

    static Tensor scalar(T value) { return from_data({1}, {value}); }

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<std::size_t>& shape() const { return s_->shape; }
    std::size_t ndim() const { return s_->shape.size(); }
    std::size_t numel() const { return s_->data.size(); }
    std::size_t extent(std::size_t d) const { return s_->shape[d]; }

    T* data() { return s_->data.data(); }
    const T* data() const { return s_->data.data(); }
    std::vector<T>& vec() { return s_->data; }
    const std::vector<T>& vec() const { return s_->data; }

    T item() const {
        if (numel() != 1) throw std::invalid_argument("item() requires a one-element tensor");
        return s_->data[0];
    }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool rg) { s_->requires_grad = rg; }

    bool has_grad() const { return !s_->grad.empty(); }

    // Allocates the gradient buffer (zeros) on first use.
    std::vector<T>& grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
        return s_->grad;
    }
    const std::vector<T>& grad_view() const { return s_->grad; }

    void zero_grad() {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
    }

    bool all_finite() const {
        for (const T& v : s_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    Tensor clone() const {
        Tensor t;
        t.s_ = std::make_shared<TensorStorage<T>>(*s_);
        return t;
    }

    // Identity of the underlying storage; doubles as the node id on a tape.
    const void* node_id() const { return static_cast<const void*>(s_.get()); }

    std::shared_ptr<TensorStorage<T>> storage() const { return s_; }

    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw std::invalid_argument("tensor extents must be positive");
            n *= e;
        }
        return n;
    }

private:
    std::shared_ptr<TensorStorage<T>> s_;
};

// Records executed operations in order. Because entries are appended as ops
// execute, the list is topologically ordered and a single reverse sweep
// visits every node exactly once.
template <typename T>
class Tape {
public:
    void record(std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> backward) {
        Entry e;
        e.inputs = std::move(inputs);
        e.output = std::move(output);
        e.backward = std::move(backward);
        entries_.push_back(std::move(e));
    }

    std::size_t size() const { return entries_.size(); }
    bool spent() const { return spent_; }

    // Seeds d(loss)/d(loss) = 1 and replays backward rules in reverse order.
    void backward(Tensor<T>& loss) {
        if (spent_) throw NumericError("tape already consumed by backward(); reset() before reuse");
        if (loss.numel() != 1) throw std::invalid_argument("backward() requires a scalar loss");
        bool on_tape = false;
        for (const Entry& e : entries_) {
            if (e.output.node_id() == loss.node_id()) {
                on_tape = true;
                break;
            }
        }
        if (!on_tape) throw NumericError("loss tensor is not a product of this tape (detached graph)");
        loss.grad()[0] = T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (!it->output.has_grad()) continue;  // branch never contributed to the loss
            it->backward();
        }
        spent_ = true;
    }

    void reset() {
        entries_.clear();
        spent_ = false;
    }

private:
    struct Entry {
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        std::function<void()> backward;
    };
    std::vector<Entry> entries_;
    bool spent_ = false;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace fwionet
