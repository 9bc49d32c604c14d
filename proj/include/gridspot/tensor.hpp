#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "gridspot/common.hpp"

namespace gridspot {

using Shape = std::vector<int>;

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One recorded op on the tape: the node remembers its parents and how to
// push its output gradient back into them. Walking nodes in reverse
// creation order replays the tape backward, visiting each op exactly once.
struct TensorNode {
  Shape shape;
  Eigen::ArrayXd data;
  Eigen::ArrayXd grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  void accumulate(const Eigen::ArrayXd& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

// Thread-local switch: with grad disabled no tape is recorded, so
// inference builds no graph. Each thread has its own flag; graphs are
// never shared between threads.
namespace autograd {
bool enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};
}  // namespace autograd

// Value-semantic handle over a shared node. Copies alias the same buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double v, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<double> v,
                          bool requires_grad = false);
  static Tensor from_array(Shape s, Eigen::ArrayXd v,
                           bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int size() const { return static_cast<int>(node_->data.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }

  Eigen::ArrayXd& array() { return node_->data; }
  const Eigen::ArrayXd& array() const { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  bool has_grad() const { return node_->grad.size() > 0; }
  Eigen::ArrayXd& grad() { return node_->grad; }
  const Eigen::ArrayXd& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Eigen::ArrayXd::Zero(node_->data.size()); }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// --- elementwise ---
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);  // Hadamard
Tensor operator*(const Tensor& a, double s);
Tensor operator+(const Tensor& a, double s);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor relu(const Tensor& x);

// --- shape / selection ---
Tensor reshape(const Tensor& x, Shape s);
Tensor concat0(const std::vector<Tensor>& xs);
Tensor gather0(const Tensor& x, const std::vector<int>& idx);
Tensor select1(const Tensor& x, int idx);          // [A,B,...] -> [A,...]
Tensor stack1(const std::vector<Tensor>& xs);      // B x [A,...] -> [A,B,...]
Tensor slice_cols(const Tensor& m, int c0, int c1);  // [R,C] -> [R,c1-c0]
Tensor transpose2d(const Tensor& m);

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int padding);

// --- reductions & normalizations ---
Tensor sum(const Tensor& x);  // -> shape {1}
Tensor softmax(const Tensor& x, int axis);
// Divides each row of a 2-D tensor by (row sum + eps).
Tensor row_normalize(const Tensor& m, double eps);

// --- losses (fused, analytic gradients) ---
Tensor cross_entropy_mean(const Tensor& logits2d, const std::vector<int>& targets);
// target01 is a constant 0/1 tensor of the same shape as logits [K,H,W];
// returns the mean over channels of the soft Dice loss.
Tensor dice_loss(const Tensor& logits, const Tensor& target01, double eps = 1e-4);

// Reverse pass from a scalar loss. Grads of interior nodes are reset;
// leaf grads are reset too unless accumulate_leaf is set (gradient
// accumulation across samples).
void backward(const Tensor& loss, bool accumulate_leaf = false);

}  // namespace gridspot
