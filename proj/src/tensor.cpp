#include "mscl/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "mscl/error.hpp"

namespace mscl {

namespace {

thread_local Tape *g_active_tape = nullptr;

struct Corruption {
  std::string op;
  double factor = 1.0;
};
thread_local Corruption g_corruption;

}  // namespace

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : s_(std::make_shared<TensorStorage>()) {
  for (auto d : shape) {
    if (d == 0) throw EmptyInputError("tensor dimension is zero in " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw RankError("rows() on rank " + std::to_string(rank()) + " tensor");
  return s_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw RankError("cols() on rank " + std::to_string(rank()) + " tensor");
  return s_->shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return s_->data[r * cols() + c]; }

double Tensor::item() const {
  if (numel() != 1) throw RankError("item() on tensor of shape " + shape_str(shape()));
  return s_->data[0];
}

Tensor &Tensor::set_requires_grad(bool value) {
  s_->requires_grad = value;
  return *this;
}

std::span<double> Tensor::mutable_grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  return s_->grad;
}

Tensor Tensor::clone() const {
  auto s = std::make_shared<TensorStorage>(*s_);
  return Tensor(std::move(s));
}

Tensor Tensor::detach() const {
  auto s = std::make_shared<TensorStorage>();
  s->shape = s_->shape;
  s->data = s_->data;
  return Tensor(std::move(s));
}

void Tape::record(std::string_view op, const Tensor &output, BackwardFn fn) {
  if (consumed_) throw AccumulationError("recording onto a tape after backward()");
  entries_.push_back(Entry{std::string(op), output.storage(), std::move(fn)});
}

void Tape::backward(const Tensor &loss) {
  if (consumed_) {
    throw AccumulationError("backward() called twice on the same tape; reset gradients first");
  }
  if (loss.rank() != 0) {
    throw RankError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw RankError("loss is not on the tape (no input requires grad)");
  }
  consumed_ = true;
  auto &seed = loss.storage()->grad;
  seed.assign(1, 1.0);

  std::vector<double> scaled;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto &g = it->output->grad;
    if (g.empty()) continue;
    if (!g_corruption.op.empty() && g_corruption.op == it->op) {
      scaled.assign(g.begin(), g.end());
      for (auto &v : scaled) v *= g_corruption.factor;
      it->fn(scaled);
    } else {
      it->fn(g);
    }
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto &e : entries_) names.push_back(e.op);
  return names;
}

Tape *Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape &tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void set_gradient_corruption(std::string op, double factor) {
  g_corruption = Corruption{std::move(op), factor};
}

void clear_gradient_corruption() { g_corruption = Corruption{}; }

}  // namespace mscl
