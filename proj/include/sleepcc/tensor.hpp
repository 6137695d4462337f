#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Minimal dense 2-D tensor library with reverse-mode automatic
// differentiation. All values are doubles; graphs are built implicitly by
// the free-function operations and consumed by a single backward() call.

namespace sleepcc {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
  };

  Tensor() = default;
  Tensor(int rows, int cols, std::vector<double> data,
         bool requires_grad = false);

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double v, bool requires_grad = false);
  static Tensor scalar(double v);

  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  int size() const { return node_->rows * node_->cols; }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  double at(int r, int c) const;

  void zero_grad();

  std::shared_ptr<Node> node() const { return node_; }

 private:
  friend Tensor make_op(int rows, int cols, std::vector<double> value,
                        std::vector<std::shared_ptr<Tensor::Node>> parents,
                        std::function<void(Tensor::Node&)> backward_fn);
  std::shared_ptr<Node> node_;
};

// Elementwise and linear-algebra primitives. Each registers a backward
// rule when any input requires gradients.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);  // equal shape or row-broadcast
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, equal shape
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor slice_cols(const Tensor& a, int start, int len);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor clamp_t(const Tensor& a, double lo, double hi);
Tensor pick(const Tensor& a, int r, int c);

// Reverse pass from a scalar loss. Visits each node once in reverse
// topological order; a second call on the same graph throws GraphError.
void backward(const Tensor& loss);

// Named parameter with Adam state.
struct Parameter {
  std::string name;
  Tensor tensor;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = AdamConfig{}) : cfg_(cfg) {}

  // Applies one update from the gradients currently stored on the
  // parameters, then leaves the gradients untouched (callers zero them).
  void step(std::vector<Parameter>& params);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

// Kaiming-style uniform fan-in initialization.
Tensor init_uniform_fan_in(int rows, int cols, int fan_in,
                           std::mt19937_64& rng);

}  // namespace sleepcc
