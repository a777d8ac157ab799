#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dksg {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int numel_of(const Shape& s);

class Tape;

// Dense float32 tensor, row-major, N-d (rank 1..4 in practice).
// Storage is shared between copies; mutation goes through mutable_array(),
// which clones when the buffer is shared (tape closures hold references to
// the values they saw).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from(Shape shape, std::vector<float> values);

    bool empty() const { return !data_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int numel() const { return data_ ? static_cast<int>(data_->size()) : 0; }

    const Eigen::ArrayXf& array() const;
    // Detaches from any tape: after mutation this is a new value.
    Eigen::ArrayXf& mutable_array();

    float at(int i) const;
    float at(int r, int c) const;
    float at(int n, int c, int h, int w) const;
    float scalar() const;  // requires numel()==1

    // Tape bookkeeping (set by Tape::watch and by ops).
    int node() const { return node_; }
    uint64_t tape_gen() const { return gen_; }
    void attach(int node, uint64_t gen) { node_ = node; gen_ = gen; }
    void detach() { node_ = -1; gen_ = 0; }

private:
    Shape shape_;
    std::shared_ptr<Eigen::ArrayXf> data_;
    int node_ = -1;
    uint64_t gen_ = 0;
};

// Reverse-mode tape: ops append nodes in forward order; backward() walks
// them once in reverse. One tape is active per thread at a time.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Marks a tensor as a leaf on this tape.
    void watch(Tensor& t);
    // Leaf registered as a named trainable parameter.
    void watch_param(const std::string& name, Tensor& t);

    // Runs the reverse sweep from a scalar loss and returns gradients for
    // every registered parameter (zero tensors for unused ones).
    // Gradient accumulation across multiple uses is a sum.
    std::map<std::string, Tensor> backward(const Tensor& loss);

    // Gradient of any watched/derived tensor after backward(); for tests.
    Tensor grad_of(const Tensor& t) const;

    uint64_t generation() const { return gen_; }
    size_t size() const { return nodes_.size(); }

    // --- used by op implementations ---
    using BackwardFn = std::function<void(const Eigen::ArrayXf& gout, Tape&)>;
    int record(int numel, BackwardFn fn);
    // Accumulation buffer for a node, zero-initialized on first access.
    Eigen::ArrayXf& gbuf(int node, int numel);
    bool has_grad(int node) const;

private:
    struct Node {
        int numel;
        BackwardFn fn;  // null for leaves
    };
    std::vector<Node> nodes_;
    std::vector<Eigen::ArrayXf> grads_;
    std::vector<std::pair<std::string, int>> params_;
    std::vector<Shape> param_shapes_;
    uint64_t gen_;
    bool backward_done_ = false;
};

// Scoped activation: ops only trace while a tape is active.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// True when t participates in the currently active tape.
bool tracked(const Tensor& t);

// Free-function form of the backward entry point.
std::map<std::string, Tensor> backward(const Tensor& loss);

}  // namespace dksg
