#include "dksg/tensor.hpp"

#include <atomic>
#include <sstream>

namespace dksg {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int numel_of(const Shape& s) {
    int n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    data_ = std::make_shared<Eigen::ArrayXf>(Eigen::ArrayXf::Zero(numel_of(shape_)));
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, float value) {
    Tensor t(std::move(shape));
    t.data_->setConstant(value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
    Tensor t(std::move(shape));
    if (static_cast<int>(values.size()) != t.numel())
        throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                    " values for shape " + shape_str(t.shape_));
    for (int i = 0; i < t.numel(); ++i) (*t.data_)(i) = values[static_cast<size_t>(i)];
    return t;
}

const Eigen::ArrayXf& Tensor::array() const {
    if (!data_) throw std::logic_error("tensor: access to empty tensor");
    return *data_;
}

Eigen::ArrayXf& Tensor::mutable_array() {
    if (!data_) throw std::logic_error("tensor: access to empty tensor");
    if (data_.use_count() > 1) data_ = std::make_shared<Eigen::ArrayXf>(*data_);
    detach();
    return *data_;
}

float Tensor::at(int i) const {
    if (i < 0 || i >= numel()) throw std::out_of_range("tensor: flat index out of range");
    return (*data_)(i);
}

float Tensor::at(int r, int c) const {
    if (rank() != 2) throw std::logic_error("tensor: 2-d access on shape " + shape_str(shape_));
    return at(r * shape_[1] + c);
}

float Tensor::at(int n, int c, int h, int w) const {
    if (rank() != 4) throw std::logic_error("tensor: 4-d access on shape " + shape_str(shape_));
    return at(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w);
}

float Tensor::scalar() const {
    if (numel() != 1) throw std::logic_error("tensor: scalar() on shape " + shape_str(shape_));
    return (*data_)(0);
}

namespace {
std::atomic<uint64_t> g_tape_gen{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Tape() : gen_(g_tape_gen.fetch_add(1)) {}
Tape::~Tape() {
    if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

bool tracked(const Tensor& t) {
    Tape* tape = Tape::active();
    return tape && t.node() >= 0 && t.tape_gen() == tape->generation();
}

void Tape::watch(Tensor& t) {
    if (t.empty()) throw std::invalid_argument("tape: cannot watch empty tensor");
    int id = record(t.numel(), nullptr);
    t.attach(id, gen_);
}

void Tape::watch_param(const std::string& name, Tensor& t) {
    for (const auto& p : params_)
        if (p.first == name) throw std::invalid_argument("tape: duplicate parameter '" + name + "'");
    watch(t);
    params_.emplace_back(name, t.node());
    param_shapes_.push_back(t.shape());
}

int Tape::record(int numel, BackwardFn fn) {
    nodes_.push_back(Node{numel, std::move(fn)});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

Eigen::ArrayXf& Tape::gbuf(int node, int numel) {
    auto& g = grads_.at(static_cast<size_t>(node));
    if (g.size() == 0) g = Eigen::ArrayXf::Zero(numel);
    return g;
}

bool Tape::has_grad(int node) const {
    return grads_.at(static_cast<size_t>(node)).size() != 0;
}

std::map<std::string, Tensor> Tape::backward(const Tensor& loss) {
    if (backward_done_) throw std::logic_error("tape: backward called twice");
    if (loss.numel() != 1) throw std::invalid_argument("tape: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (loss.node() < 0 || loss.tape_gen() != gen_)
        throw std::invalid_argument("tape: loss was not produced on this tape");
    backward_done_ = true;

    gbuf(loss.node(), 1).setConstant(1.0f);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        const auto& node = nodes_[static_cast<size_t>(i)];
        if (!node.fn) continue;
        if (!has_grad(i)) continue;  // no path from the loss
        node.fn(grads_[static_cast<size_t>(i)], *this);
    }

    std::map<std::string, Tensor> out;
    for (size_t p = 0; p < params_.size(); ++p) {
        const auto& [name, id] = params_[p];
        Tensor g(param_shapes_[p]);
        if (has_grad(id)) g.mutable_array() = grads_[static_cast<size_t>(id)];
        out.emplace(name, std::move(g));
    }
    return out;
}

Tensor Tape::grad_of(const Tensor& t) const {
    if (t.node() < 0 || t.tape_gen() != gen_)
        throw std::invalid_argument("tape: tensor not on this tape");
    Tensor g(t.shape());
    if (has_grad(t.node())) g.mutable_array() = grads_[static_cast<size_t>(t.node())];
    return g;
}

std::map<std::string, Tensor> backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (!tape) throw std::logic_error("backward: no active tape");
    return tape->backward(loss);
}

}  // namespace dksg
