#include "gridspot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace gridspot {

using Eigen::ArrayXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d < 0) throw DimError("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace autograd {
namespace {
thread_local bool g_enabled = true;
}
bool enabled() { return g_enabled; }
NoGradGuard::NoGradGuard() : prev(g_enabled) { g_enabled = false; }
NoGradGuard::~NoGradGuard() { g_enabled = prev; }
}  // namespace autograd

namespace {

NodePtr make_node(Shape s, ArrayXd data) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->data = std::move(data);
  return n;
}

bool taping(std::initializer_list<const Tensor*> ins) {
  if (!autograd::enabled()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void record(const Tensor& out, std::vector<NodePtr> parents,
            std::function<void(TensorNode&)> fn) {
  out.node()->requires_grad = true;
  out.node()->parents = std::move(parents);
  out.node()->backward_fn = std::move(fn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                   " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  int n = shape_size(s);
  Tensor t(make_node(std::move(s), ArrayXd::Zero(n)));
  t.node()->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape s, double v, bool requires_grad) {
  int n = shape_size(s);
  Tensor t(make_node(std::move(s), ArrayXd::Constant(n, v)));
  t.node()->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_data(Shape s, std::vector<double> v, bool requires_grad) {
  return from_array(std::move(s),
                    Eigen::Map<const ArrayXd>(v.data(), static_cast<long>(v.size())),
                    requires_grad);
}

Tensor Tensor::from_array(Shape s, ArrayXd v, bool requires_grad) {
  if (shape_size(s) != v.size())
    throw DimError("from_array: " + shape_str(s) + " does not hold " +
                   std::to_string(v.size()) + " values");
  Tensor t(make_node(std::move(s), std::move(v)));
  t.node()->requires_grad = requires_grad;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item(): tensor is not scalar");
  return node_->data[0];
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor operator+(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(make_node(a.shape(), a.array() + b.array()));
  if (taping({&a, &b})) {
    record(out, {a.node(), b.node()}, [pa = a.node(), pb = b.node()](TensorNode& self) {
      if (pa->requires_grad) pa->accumulate(self.grad);
      if (pb->requires_grad) pb->accumulate(self.grad);
    });
  }
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(make_node(a.shape(), a.array() - b.array()));
  if (taping({&a, &b})) {
    record(out, {a.node(), b.node()}, [pa = a.node(), pb = b.node()](TensorNode& self) {
      if (pa->requires_grad) pa->accumulate(self.grad);
      if (pb->requires_grad) pb->accumulate(-self.grad);
    });
  }
  return out;
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(make_node(a.shape(), a.array() * b.array()));
  if (taping({&a, &b})) {
    record(out, {a.node(), b.node()}, [pa = a.node(), pb = b.node()](TensorNode& self) {
      if (pa->requires_grad) pa->accumulate(self.grad * pb->data);
      if (pb->requires_grad) pb->accumulate(self.grad * pa->data);
    });
  }
  return out;
}

Tensor operator*(const Tensor& a, double s) {
  Tensor out(make_node(a.shape(), a.array() * s));
  if (taping({&a})) {
    record(out, {a.node()}, [pa = a.node(), s](TensorNode& self) {
      pa->accumulate(self.grad * s);
    });
  }
  return out;
}

Tensor operator+(const Tensor& a, double s) {
  Tensor out(make_node(a.shape(), a.array() + s));
  if (taping({&a})) {
    record(out, {a.node()}, [pa = a.node()](TensorNode& self) {
      pa->accumulate(self.grad);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  ArrayXd y = 0.5 * (1.0 + (0.5 * x.array()).tanh());  // stable for large |x|
  Tensor out(make_node(x.shape(), std::move(y)));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node(), po = out.node()](TensorNode& self) {
      px->accumulate(self.grad * po->data * (1.0 - po->data));
    });
  }
  return out;
}

Tensor tanh_op(const Tensor& x) {
  Tensor out(make_node(x.shape(), x.array().tanh()));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node(), po = out.node()](TensorNode& self) {
      px->accumulate(self.grad * (1.0 - po->data.square()));
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(make_node(x.shape(), x.array().max(0.0)));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node()](TensorNode& self) {
      px->accumulate(self.grad * (self.data > 0.0).cast<double>());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape / selection
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape s) {
  if (shape_size(s) != x.size())
    throw DimError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                   shape_str(s));
  Tensor out(make_node(std::move(s), x.array()));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node()](TensorNode& self) {
      px->accumulate(self.grad);
    });
  }
  return out;
}

Tensor concat0(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw UsageError("concat0: empty input list");
  Shape rest(xs[0].shape().begin() + 1, xs[0].shape().end());
  int inner = shape_size(rest);
  int d0 = 0;
  for (const Tensor& t : xs) {
    Shape r(t.shape().begin() + 1, t.shape().end());
    if (r != rest) throw DimError("concat0: trailing dims differ");
    d0 += t.dim(0);
  }
  Shape os = {d0};
  os.insert(os.end(), rest.begin(), rest.end());
  ArrayXd data(static_cast<long>(d0) * inner);
  long off = 0;
  for (const Tensor& t : xs) {
    data.segment(off, t.size()) = t.array();
    off += t.size();
  }
  Tensor out(make_node(std::move(os), std::move(data)));
  bool tape = false;
  for (const Tensor& t : xs) tape = tape || taping({&t});
  if (tape) {
    std::vector<NodePtr> parents;
    for (const Tensor& t : xs) parents.push_back(t.node());
    record(out, parents, [parents](TensorNode& self) {
      long off2 = 0;
      for (const NodePtr& p : parents) {
        if (p->requires_grad) p->accumulate(self.grad.segment(off2, p->data.size()));
        off2 += p->data.size();
      }
    });
  }
  return out;
}

Tensor gather0(const Tensor& x, const std::vector<int>& idx) {
  int d0 = x.dim(0);
  int inner = x.size() / std::max(d0, 1);
  for (int i : idx)
    if (i < 0 || i >= d0) throw UsageError("gather0: index out of range");
  Shape os = x.shape();
  os[0] = static_cast<int>(idx.size());
  ArrayXd data(static_cast<long>(idx.size()) * inner);
  for (size_t r = 0; r < idx.size(); ++r)
    data.segment(static_cast<long>(r) * inner, inner) =
        x.array().segment(static_cast<long>(idx[r]) * inner, inner);
  Tensor out(make_node(std::move(os), std::move(data)));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node(), idx, inner](TensorNode& self) {
      ArrayXd g = ArrayXd::Zero(px->data.size());
      for (size_t r = 0; r < idx.size(); ++r)
        g.segment(static_cast<long>(idx[r]) * inner, inner) +=
            self.grad.segment(static_cast<long>(r) * inner, inner);
      px->accumulate(g);
    });
  }
  return out;
}

Tensor select1(const Tensor& x, int idx) {
  if (x.shape().size() < 2) throw DimError("select1: rank < 2");
  int a = x.dim(0), b = x.dim(1);
  if (idx < 0 || idx >= b) throw UsageError("select1: index out of range");
  int inner = x.size() / (a * b);
  Shape os = {a};
  os.insert(os.end(), x.shape().begin() + 2, x.shape().end());
  ArrayXd data(static_cast<long>(a) * inner);
  for (int i = 0; i < a; ++i)
    data.segment(static_cast<long>(i) * inner, inner) =
        x.array().segment((static_cast<long>(i) * b + idx) * inner, inner);
  Tensor out(make_node(std::move(os), std::move(data)));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node(), a, b, idx, inner](TensorNode& self) {
      ArrayXd g = ArrayXd::Zero(px->data.size());
      for (int i = 0; i < a; ++i)
        g.segment((static_cast<long>(i) * b + idx) * inner, inner) =
            self.grad.segment(static_cast<long>(i) * inner, inner);
      px->accumulate(g);
    });
  }
  return out;
}

Tensor stack1(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw UsageError("stack1: empty input list");
  const Shape& es = xs[0].shape();
  for (const Tensor& t : xs)
    if (t.shape() != es) throw DimError("stack1: element shapes differ");
  int a = es[0];
  int inner = xs[0].size() / std::max(a, 1);
  int b = static_cast<int>(xs.size());
  Shape os = {a, b};
  os.insert(os.end(), es.begin() + 1, es.end());
  ArrayXd data(static_cast<long>(a) * b * inner);
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      data.segment((static_cast<long>(i) * b + j) * inner, inner) =
          xs[static_cast<size_t>(j)].array().segment(static_cast<long>(i) * inner, inner);
  Tensor out(make_node(std::move(os), std::move(data)));
  bool tape = false;
  for (const Tensor& t : xs) tape = tape || taping({&t});
  if (tape) {
    std::vector<NodePtr> parents;
    for (const Tensor& t : xs) parents.push_back(t.node());
    record(out, parents, [parents, a, b, inner](TensorNode& self) {
      for (int j = 0; j < b; ++j) {
        const NodePtr& p = parents[static_cast<size_t>(j)];
        if (!p->requires_grad) continue;
        ArrayXd g(static_cast<long>(a) * inner);
        for (int i = 0; i < a; ++i)
          g.segment(static_cast<long>(i) * inner, inner) =
              self.grad.segment((static_cast<long>(i) * b + j) * inner, inner);
        p->accumulate(g);
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& m, int c0, int c1) {
  if (m.shape().size() != 2) throw DimError("slice_cols: not a matrix");
  int r = m.dim(0), c = m.dim(1);
  if (c0 < 0 || c1 > c || c0 >= c1) throw UsageError("slice_cols: bad range");
  int w = c1 - c0;
  ArrayXd data(static_cast<long>(r) * w);
  for (int i = 0; i < r; ++i)
    data.segment(static_cast<long>(i) * w, w) =
        m.array().segment(static_cast<long>(i) * c + c0, w);
  Tensor out(make_node({r, w}, std::move(data)));
  if (taping({&m})) {
    record(out, {m.node()}, [pm = m.node(), r, c, c0, w](TensorNode& self) {
      ArrayXd g = ArrayXd::Zero(pm->data.size());
      for (int i = 0; i < r; ++i)
        g.segment(static_cast<long>(i) * c + c0, w) =
            self.grad.segment(static_cast<long>(i) * w, w);
      pm->accumulate(g);
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& m) {
  if (m.shape().size() != 2) throw DimError("transpose2d: not a matrix");
  int r = m.dim(0), c = m.dim(1);
  ArrayXd data(m.size());
  MapRM(data.data(), c, r) = CMapRM(m.array().data(), r, c).transpose();
  Tensor out(make_node({c, r}, std::move(data)));
  if (taping({&m})) {
    record(out, {m.node()}, [pm = m.node(), r, c](TensorNode& self) {
      ArrayXd g(pm->data.size());
      MapRM(g.data(), r, c) = CMapRM(self.grad.data(), c, r).transpose();
      pm->accumulate(g);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw DimError("matmul: operands must be matrices");
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw DimError("matmul: inner dims disagree " + shape_str(a.shape()) +
                   " vs " + shape_str(b.shape()));
  ArrayXd data(static_cast<long>(m) * n);
  MapRM(data.data(), m, n) = CMapRM(a.array().data(), m, k) * CMapRM(b.array().data(), k, n);
  Tensor out(make_node({m, n}, std::move(data)));
  if (taping({&a, &b})) {
    record(out, {a.node(), b.node()},
           [pa = a.node(), pb = b.node(), m, k, n](TensorNode& self) {
             CMapRM gy(self.grad.data(), m, n);
             if (pa->requires_grad) {
               ArrayXd ga(static_cast<long>(m) * k);
               MapRM(ga.data(), m, k) = gy * CMapRM(pb->data.data(), k, n).transpose();
               pa->accumulate(ga);
             }
             if (pb->requires_grad) {
               ArrayXd gb(static_cast<long>(k) * n);
               MapRM(gb.data(), k, n) = CMapRM(pa->data.data(), m, k).transpose() * gy;
               pb->accumulate(gb);
             }
           });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2)
    throw DimError("linear: operands must be matrices");
  int p = x.dim(0), in = x.dim(1), in2 = w.dim(0), m = w.dim(1);
  if (in != in2 || b.size() != m) throw DimError("linear: dims disagree");
  ArrayXd data(static_cast<long>(p) * m);
  MapRM y(data.data(), p, m);
  y = CMapRM(x.array().data(), p, in) * CMapRM(w.array().data(), in, m);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.array().data(), m);
  Tensor out(make_node({p, m}, std::move(data)));
  if (taping({&x, &w, &b})) {
    record(out, {x.node(), w.node(), b.node()},
           [px = x.node(), pw = w.node(), pb = b.node(), p, in, m](TensorNode& self) {
             CMapRM gy(self.grad.data(), p, m);
             if (px->requires_grad) {
               ArrayXd gx(static_cast<long>(p) * in);
               MapRM(gx.data(), p, in) = gy * CMapRM(pw->data.data(), in, m).transpose();
               px->accumulate(gx);
             }
             if (pw->requires_grad) {
               ArrayXd gw(static_cast<long>(in) * m);
               MapRM(gw.data(), in, m) = CMapRM(px->data.data(), p, in).transpose() * gy;
               pw->accumulate(gw);
             }
             if (pb->requires_grad) {
               ArrayXd gb(m);
               Eigen::Map<Eigen::RowVectorXd>(gb.data(), m) = gy.colwise().sum();
               pb->accumulate(gb);
             }
           });
  }
  return out;
}

namespace {

// cols is (Cin*k*k) x (OH*OW), column-major storage.
void im2col(const ArrayXd& in, int cin, int h, int w, int k, int stride, int pad,
            int oh, int ow, Eigen::MatrixXd& cols) {
  cols.resize(static_cast<long>(cin) * k * k, static_cast<long>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      long col = static_cast<long>(y) * ow + x;
      long row = 0;
      for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
          int iy = y * stride - pad + ki;
          for (int kj = 0; kj < k; ++kj, ++row) {
            int ix = x * stride - pad + kj;
            cols(row, col) = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                 ? in[(static_cast<long>(ci) * h + iy) * w + ix]
                                 : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const Eigen::MatrixXd& cols, int cin, int h, int w, int k, int stride,
            int pad, int oh, int ow, ArrayXd& out) {
  out = ArrayXd::Zero(static_cast<long>(cin) * h * w);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      long col = static_cast<long>(y) * ow + x;
      long row = 0;
      for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
          int iy = y * stride - pad + ki;
          for (int kj = 0; kj < k; ++kj, ++row) {
            int ix = x * stride - pad + kj;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
              out[(static_cast<long>(ci) * h + iy) * w + ix] += cols(row, col);
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int padding) {
  if (input.shape().size() != 3 || kernels.shape().size() != 4)
    throw DimError("conv2d: expects input [C,H,W], kernels [Co,Ci,k,k]");
  int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  int cout = kernels.dim(0), kci = kernels.dim(1), k = kernels.dim(2);
  if (kernels.dim(3) != k) throw DimError("conv2d: kernel not square");
  if (kci != cin)
    throw DimError("conv2d: input has " + std::to_string(cin) +
                   " channels, kernels expect " + std::to_string(kci));
  if (stride < 1) throw UsageError("conv2d: stride must be >= 1");
  if (bias.defined() && bias.size() != cout) throw DimError("conv2d: bias size");
  int oh = (h + 2 * padding - k) / stride + 1;
  int ow = (w + 2 * padding - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw DimError("conv2d: empty output");

  auto cols = std::make_shared<Eigen::MatrixXd>();
  im2col(input.array(), cin, h, w, k, stride, padding, oh, ow, *cols);
  long ckk = static_cast<long>(cin) * k * k;
  ArrayXd data(static_cast<long>(cout) * oh * ow);
  MapRM y(data.data(), cout, static_cast<long>(oh) * ow);
  y = CMapRM(kernels.array().data(), cout, ckk) * (*cols);
  if (bias.defined())
    y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.array().data(), cout);
  Tensor out(make_node({cout, oh, ow}, std::move(data)));
  if (taping({&input, &kernels, &bias})) {
    std::vector<NodePtr> parents = {input.node(), kernels.node()};
    if (bias.defined()) parents.push_back(bias.node());
    NodePtr pbias = bias.defined() ? bias.node() : nullptr;
    record(out, parents,
           [pi = input.node(), pk = kernels.node(), pbias, cols, cin, h, w, k,
            stride, padding, oh, ow, cout, ckk](TensorNode& self) {
             CMapRM gy(self.grad.data(), cout, static_cast<long>(oh) * ow);
             if (pk->requires_grad) {
               ArrayXd gk(pk->data.size());
               MapRM(gk.data(), cout, ckk) = gy * cols->transpose();
               pk->accumulate(gk);
             }
             if (pi->requires_grad) {
               Eigen::MatrixXd gcols =
                   CMapRM(pk->data.data(), cout, ckk).transpose() * gy;
               ArrayXd gi;
               col2im(gcols, cin, h, w, k, stride, padding, oh, ow, gi);
               pi->accumulate(gi);
             }
             if (pbias && pbias->requires_grad) {
               ArrayXd gb(cout);
               Eigen::Map<Eigen::VectorXd>(gb.data(), cout) = gy.rowwise().sum();
               pbias->accumulate(gb);
             }
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions & normalizations
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out(make_node({1}, ArrayXd::Constant(1, x.array().sum())));
  if (taping({&x})) {
    record(out, {x.node()}, [px = x.node()](TensorNode& self) {
      px->accumulate(ArrayXd::Constant(px->data.size(), self.grad[0]));
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  int rank = static_cast<int>(x.shape().size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw UsageError("softmax: bad axis");
  int n = x.dim(axis);
  if (n < 1) throw DimError("softmax: empty axis");
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(i);
  ArrayXd y(x.size());
  const ArrayXd& in = x.array();
  for (long o = 0; o < outer; ++o) {
    for (long i = 0; i < inner; ++i) {
      long base = o * n * inner + i;
      double mx = in[base];
      for (int j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      double s = 0;
      for (int j = 0; j < n; ++j) {
        double e = std::exp(in[base + j * inner] - mx);
        y[base + j * inner] = e;
        s += e;
      }
      for (int j = 0; j < n; ++j) y[base + j * inner] /= s;
    }
  }
  Tensor out(make_node(x.shape(), std::move(y)));
  if (taping({&x})) {
    record(out, {x.node()},
           [px = x.node(), po = out.node(), outer, inner, n](TensorNode& self) {
             ArrayXd g(px->data.size());
             const ArrayXd& yv = po->data;
             for (long o = 0; o < outer; ++o) {
               for (long i = 0; i < inner; ++i) {
                 long base = o * n * inner + i;
                 double dot = 0;
                 for (int j = 0; j < n; ++j)
                   dot += self.grad[base + j * inner] * yv[base + j * inner];
                 for (int j = 0; j < n; ++j)
                   g[base + j * inner] =
                       yv[base + j * inner] * (self.grad[base + j * inner] - dot);
               }
             }
             px->accumulate(g);
           });
  }
  return out;
}

Tensor row_normalize(const Tensor& m, double eps) {
  if (m.shape().size() != 2) throw DimError("row_normalize: not a matrix");
  int r = m.dim(0), c = m.dim(1);
  ArrayXd y(m.size());
  std::vector<double> sums(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    double s = m.array().segment(static_cast<long>(i) * c, c).sum() + eps;
    sums[static_cast<size_t>(i)] = s;
    y.segment(static_cast<long>(i) * c, c) =
        m.array().segment(static_cast<long>(i) * c, c) / s;
  }
  Tensor out(make_node({r, c}, std::move(y)));
  if (taping({&m})) {
    record(out, {m.node()}, [pm = m.node(), sums, r, c](TensorNode& self) {
      ArrayXd g(pm->data.size());
      for (int i = 0; i < r; ++i) {
        long base = static_cast<long>(i) * c;
        double s = sums[static_cast<size_t>(i)];
        double dot = (self.grad.segment(base, c) * pm->data.segment(base, c)).sum();
        g.segment(base, c) = self.grad.segment(base, c) / s - dot / (s * s);
      }
      pm->accumulate(g);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor cross_entropy_mean(const Tensor& logits2d, const std::vector<int>& targets) {
  if (logits2d.shape().size() != 2) throw DimError("cross_entropy: not a matrix");
  int p = logits2d.dim(0), m = logits2d.dim(1);
  if (static_cast<int>(targets.size()) != p)
    throw DimError("cross_entropy: target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= m) throw DataError("cross_entropy: target class out of range");
  auto probs = std::make_shared<ArrayXd>(logits2d.size());
  const ArrayXd& in = logits2d.array();
  double loss = 0;
  for (int i = 0; i < p; ++i) {
    long base = static_cast<long>(i) * m;
    double mx = in.segment(base, m).maxCoeff();
    ArrayXd e = (in.segment(base, m) - mx).exp();
    double s = e.sum();
    probs->segment(base, m) = e / s;
    loss -= std::log((*probs)[base + targets[static_cast<size_t>(i)]]);
  }
  loss /= p;
  Tensor out(make_node({1}, ArrayXd::Constant(1, loss)));
  if (taping({&logits2d})) {
    record(out, {logits2d.node()},
           [px = logits2d.node(), probs, targets, p, m](TensorNode& self) {
             ArrayXd g = *probs;
             for (int i = 0; i < p; ++i)
               g[static_cast<long>(i) * m + targets[static_cast<size_t>(i)]] -= 1.0;
             px->accumulate(g * (self.grad[0] / p));
           });
  }
  return out;
}

Tensor dice_loss(const Tensor& logits, const Tensor& target01, double eps) {
  if (logits.shape() != target01.shape())
    throw DimError("dice_loss: shape mismatch");
  if (logits.shape().empty()) throw DimError("dice_loss: rank 0");
  int k = logits.dim(0);
  long inner = logits.size() / std::max(k, 1);
  auto probs = std::make_shared<ArrayXd>(
      0.5 * (1.0 + (0.5 * logits.array()).tanh()));
  auto nums = std::make_shared<std::vector<double>>(static_cast<size_t>(k));
  auto dens = std::make_shared<std::vector<double>>(static_cast<size_t>(k));
  double loss = 0;
  for (int i = 0; i < k; ++i) {
    long base = static_cast<long>(i) * inner;
    auto pc = probs->segment(base, inner);
    auto gc = target01.array().segment(base, inner);
    double num = 2.0 * (pc * gc).sum() + eps;
    double den = pc.square().sum() + gc.square().sum() + eps;
    (*nums)[static_cast<size_t>(i)] = num;
    (*dens)[static_cast<size_t>(i)] = den;
    loss += 1.0 - num / den;
  }
  loss /= k;
  Tensor out(make_node({1}, ArrayXd::Constant(1, loss)));
  if (taping({&logits})) {
    record(out, {logits.node()},
           [px = logits.node(), pt = target01.node(), probs, nums, dens, k,
            inner](TensorNode& self) {
             ArrayXd g(px->data.size());
             for (int i = 0; i < k; ++i) {
               long base = static_cast<long>(i) * inner;
               auto pc = probs->segment(base, inner);
               auto gc = pt->data.segment(base, inner);
               double num = (*nums)[static_cast<size_t>(i)];
               double den = (*dens)[static_cast<size_t>(i)];
               // d(1 - num/den)/dp, then chain through sigmoid.
               g.segment(base, inner) =
                   -((2.0 * gc) * den - num * (2.0 * pc)) / (den * den) * pc *
                   (1.0 - pc);
             }
             px->accumulate(g * (self.grad[0] / k));
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss, bool accumulate_leaf) {
  if (!loss.defined() || loss.size() != 1)
    throw UsageError("backward: loss must be a defined scalar");
  if (!loss.node()->requires_grad || !loss.node()->backward_fn)
    throw UsageError("backward: loss is not attached to a tape");

  // Post-order DFS; reverse gives tape order with each op visited once.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* n : topo) {
    bool leaf = !n->backward_fn;
    if (!leaf || !accumulate_leaf) n->grad.resize(0);
  }
  loss.node()->grad = ArrayXd::Constant(1, 1.0);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

}  // namespace gridspot
