// src/tensor.cc

#include "rnnt/tensor.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rnnt {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int extent : shape) {
    if (extent <= 0) {
      throw std::invalid_argument("tensor extent must be positive, got " +
                                  std::to_string(extent));
    }
    n *= extent;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) : shape_(std::move(shape)) {
  const int64_t n = shape_numel(shape_);
  data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 0.0);
  if (requires_grad) set_requires_grad(true);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (auto& x : t.vec()) x = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  Tensor t(std::move(shape), requires_grad);
  t.vec() = std::move(values);
  return t;
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.vec()) x = dist(rng);
  return t;
}

double Tensor::scalar() const {
  if (numel() != 1) {
    throw std::invalid_argument("scalar() on tensor of shape " +
                                shape_str(shape_));
  }
  return (*data_)[0];
}

void Tensor::set_requires_grad(bool value) {
  requires_grad_ = value;
  if (value) {
    if (!grad_) {
      grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
    }
  } else {
    grad_.reset();
  }
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double x : *data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor Tensor::clone() const {
  Tensor t(shape_);
  t.vec() = *data_;
  return t;
}

namespace {
thread_local Graph* g_active_graph = nullptr;
}  // namespace

Graph::~Graph() = default;

Graph::Scope::Scope(Graph& graph) : previous_(g_active_graph) {
  g_active_graph = &graph;
}

Graph::Scope::~Scope() { g_active_graph = previous_; }

Graph* Graph::active() { return g_active_graph; }

void Graph::record(std::function<void()> backward) {
  nodes_.push_back(std::move(backward));
}

void Graph::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));
  }
  if (!loss.has_grad()) {
    throw std::invalid_argument(
        "backward: loss does not participate in gradients");
  }
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

uint64_t derive_seed(uint64_t base, uint64_t stream) {
  // splitmix64 over the combined value.
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rnnt
