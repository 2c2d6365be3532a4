#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dodt::ad {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  // Empty until the first gradient is accumulated; never allocated when
  // requires_grad is false.
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::string name;

  void ensure_grad();
};

}  // namespace detail

// Shared handle over a dense row-major array of doubles. Copies alias the same
// storage; use detach() or clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Direct write access; meant for optimizers and parameter loading, not for
  // tensors that are part of a live graph.
  std::span<double> values_mut();
  double item() const;

  bool requires_grad() const;
  // Leaves only. Turning it off drops any accumulated gradient.
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  const std::string& name() const;
  Tensor& set_name(std::string name);

  // Copy of the values with no graph history and no gradient.
  Tensor detach() const;
  // Independent leaf copy that keeps the requires_grad flag.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of operations performed on tensors that require gradients.
// One graph per thread; recording never crosses threads.
class Graph {
 public:
  struct Node {
    const char* kind;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backward;
  };

  static Graph& current();

  void record(const char* kind, const Tensor& output,
              std::function<void()> backward);
  std::size_t size() const { return nodes_.size(); }
  // Drops every node and frees intermediate gradients.
  void clear();

  // Number of nodes visited by the most recent backward pass.
  std::size_t last_backward_visits() const { return last_visits_; }

  bool enabled() const { return disable_depth_ == 0; }

 private:
  friend class NoGradGuard;
  friend void backward(const Tensor& loss);

  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
  int disable_depth_ = 0;
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Reverse pass from a scalar loss. Populates grads of every reachable leaf
// that requires grad (accumulating into existing grads), then clears the
// graph.
void backward(const Tensor& loss);

}  // namespace dodt::ad
