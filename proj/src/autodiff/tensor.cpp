#include "dodt/autodiff/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dodt::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void detail::TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw std::invalid_argument("Tensor: zero extent in shape " +
                                  to_string(shape));
    }
  }
  if (ad::numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + to_string(shape) +
                                " does not match " +
                                std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) +
                            " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->values.size() : 0; }

std::span<const double> Tensor::values() const {
  shape();
  return impl_->values;
}

std::span<double> Tensor::values_mut() {
  shape();
  return impl_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " +
                                to_string(shape()) + " is not a scalar");
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_->is_leaf) {
    throw std::logic_error("set_requires_grad: only leaf tensors can be toggled");
  }
  impl_->requires_grad = on;
  if (!on) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  shape();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

const std::string& Tensor::name() const {
  shape();
  return impl_->name;
}

Tensor& Tensor::set_name(std::string name) {
  shape();
  impl_->name = std::move(name);
  return *this;
}

Tensor Tensor::detach() const {
  return Tensor(shape(), impl_->values, false);
}

Tensor Tensor::clone() const {
  Tensor out(shape(), impl_->values, impl_->requires_grad);
  out.impl_->name = impl_->name;
  return out;
}

Graph& Graph::current() {
  thread_local Graph graph;
  return graph;
}

void Graph::record(const char* kind, const Tensor& output,
                   std::function<void()> backward) {
  output.impl()->is_leaf = false;
  nodes_.push_back(Node{kind, output.impl(), std::move(backward)});
}

void Graph::clear() {
  for (Node& node : nodes_) {
    node.output->grad.clear();
    node.output->grad.shrink_to_fit();
  }
  nodes_.clear();
}

NoGradGuard::NoGradGuard() { ++Graph::current().disable_depth_; }
NoGradGuard::~NoGradGuard() { --Graph::current().disable_depth_; }

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                to_string(loss.shape()));
  }
  Graph& graph = Graph::current();
  if (graph.nodes_.empty() || !loss.requires_grad()) {
    throw std::invalid_argument(
        "backward: loss has no recorded graph (no input requires grad)");
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  std::size_t visits = 0;
  for (auto it = graph.nodes_.rbegin(); it != graph.nodes_.rend(); ++it) {
    ++visits;
    if (!it->output->grad.empty()) it->backward();
  }
  graph.last_visits_ = visits;
  graph.clear();
}

}  // namespace dodt::ad
