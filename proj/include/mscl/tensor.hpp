#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mscl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape &shape);
std::string shape_str(const Shape &shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  // Empty until a gradient reaches this tensor.
  std::vector<double> grad;
  bool requires_grad = false;
};

// Dense row-major fp64 array. Copies share storage; use clone() for a deep
// copy. Rank 0 tensors are scalars.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape &shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return s_->data; }
  std::span<double> mutable_data() { return s_->data; }
  double operator[](std::size_t i) const { return s_->data[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  Tensor &set_requires_grad(bool value = true);

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  // Allocates a zero gradient if none exists yet.
  std::span<double> mutable_grad() const;
  void clear_grad() { s_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const;

  const std::shared_ptr<TensorStorage> &storage() const { return s_; }
  bool same_storage(const Tensor &other) const { return s_ == other.s_; }

 private:
  explicit Tensor(std::shared_ptr<TensorStorage> s) : s_(std::move(s)) {}
  std::shared_ptr<TensorStorage> s_;
};

// Ordered record of executed differentiable operations. Operations record
// onto the tape made active by a TapeScope on the current thread; with no
// active tape they only compute values.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  void record(std::string_view op, const Tensor &output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward once, in
  // reverse execution order. A second call throws AccumulationError.
  void backward(const Tensor &loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::vector<std::string> op_names() const;

  static Tape *active();

 private:
  struct Entry {
    std::string op;
    std::shared_ptr<TensorStorage> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;

  friend class TapeScope;
};

class TapeScope {
 public:
  explicit TapeScope(Tape &tape);
  ~TapeScope();
  TapeScope(const TapeScope &) = delete;
  TapeScope &operator=(const TapeScope &) = delete;

 private:
  Tape *previous_;
};

// Test hook: scales the incoming gradient of every op with this name by
// `factor` during backward. Used as a negative control for gradcheck.
void set_gradient_corruption(std::string op, double factor = 1.5);
void clear_gradient_corruption();

}  // namespace mscl
