// rnnt/tensor.h
//
// Dense double-precision tensors with define-by-run reverse-mode
// gradient recording. A Graph (tape) is activated per execution context;
// primitives append backward closures while a tape is active and any
// input participates in gradients.

#ifndef RNNT_TENSOR_H_
#define RNNT_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace rnnt {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  // Gaussian init, mean 0.
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev,
                      bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return shape_numel(shape_); }
  bool defined() const { return data_ != nullptr; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& vec() { return *data_; }
  const std::vector<double>& vec() const { return *data_; }

  double& at(int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
  // Row-major 2-D access.
  double& at(int r, int c) { return (*data_)[idx2(r, c)]; }
  double at(int r, int c) const { return (*data_)[idx2(r, c)]; }

  double scalar() const;

  bool requires_grad() const { return requires_grad_; }
  // Toggles participation; allocates or drops the accumulator.
  void set_requires_grad(bool value);

  bool has_grad() const { return grad_ != nullptr; }
  double* grad() { return grad_->data(); }
  const double* grad() const { return grad_->data(); }
  std::vector<double>& grad_vec() { return *grad_; }
  const std::vector<double>& grad_vec() const { return *grad_; }
  void zero_grad();

  // True when every element is finite (no NaN/Inf).
  bool all_finite() const;

  // Deep copy with its own storage; gradient state is not copied.
  Tensor clone() const;

  // Storage identity (aliasing check).
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  size_t idx2(int r, int c) const {
    return static_cast<size_t>(r) * static_cast<size_t>(shape_[1]) +
           static_cast<size_t>(c);
  }

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

// Tape of executed primitives. Backward replays closures in strict
// reverse execution order; accumulation into .grad is additive.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph();

  // Activates this graph on the current thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Graph& graph);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* previous_;
  };

  static Graph* active();

  void record(std::function<void()> backward);
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds loss.grad with 1 and replays the tape backwards.
  // The loss must be a scalar recorded under this graph.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
};

// True when gradients should be tracked for an op consuming `t`.
inline bool track_grad(const Tensor& t) {
  return t.requires_grad() && Graph::active() != nullptr;
}

// Mixes a base seed with a stream index into an independent seed.
uint64_t derive_seed(uint64_t base, uint64_t stream);

}  // namespace rnnt

#endif  // RNNT_TENSOR_H_
