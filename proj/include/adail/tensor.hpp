#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adail/common.hpp"

namespace adail {

using GradMap = std::map<std::string, Mat>;

// One vertex of a define-by-run computation graph. Values are dense
// 64-bit matrices; batches are rows, features are columns. The graph
// is rebuilt per forward pass and node values are never mutated.
struct Node {
  Mat value;
  Mat grad;  // allocated lazily by backward()
  const char* op = "";
  std::string name;         // non-empty for named leaves
  std::vector<Node*> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grads
  bool requires_grad = false;
  int id = -1;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
};

class Graph {
 public:
  // Tracked parameter leaf; its gradient is reported by backward().
  // Repeated requests for one name return the same node, so gradients
  // accumulate across every use of a shared parameter.
  Node* leaf(const std::string& name, const Mat& v) {
    auto it = named_index_.find(name);
    if (it != named_index_.end()) return it->second;
    Node* n = fresh("leaf", v);
    n->name = name;
    n->requires_grad = true;
    named_.emplace_back(n);
    named_index_.emplace(name, n);
    return n;
  }

  // Untracked input; gradients do not flow into it.
  Node* constant(Mat v) { return fresh("const", std::move(v)); }

  Node* matmul(Node* a, Node* b) {
    if (a->cols() != b->rows())
      fail("matmul", "inner dims " + std::to_string(a->cols()) + " vs " +
                         std::to_string(b->rows()));
    Node* n = make("matmul", a->value * b->value, {a, b});
    n->backward_fn = [a, b](Node& self) {
      if (a->requires_grad) a->grad.noalias() += self.grad * b->value.transpose();
      if (b->requires_grad) b->grad.noalias() += a->value.transpose() * self.grad;
    };
    return n;
  }

  // b must match a's shape or be a single row broadcast over a's rows.
  Node* add(Node* a, Node* b) {
    if (b->rows() == a->rows() && b->cols() == a->cols()) {
      Node* n = make("add", a->value + b->value, {a, b});
      n->backward_fn = [a, b](Node& self) {
        if (a->requires_grad) a->grad += self.grad;
        if (b->requires_grad) b->grad += self.grad;
      };
      return n;
    }
    if (b->rows() == 1 && b->cols() == a->cols()) {
      Node* n = make("add", a->value.rowwise() + b->value.row(0), {a, b});
      n->backward_fn = [a, b](Node& self) {
        if (a->requires_grad) a->grad += self.grad;
        if (b->requires_grad) b->grad += self.grad.colwise().sum();
      };
      return n;
    }
    fail("add", "shape mismatch");
    return nullptr;
  }

  Node* sub(Node* a, Node* b) {
    if (a->rows() != b->rows() || a->cols() != b->cols())
      fail("sub", "shape mismatch");
    Node* n = make("sub", a->value - b->value, {a, b});
    n->backward_fn = [a, b](Node& self) {
      if (a->requires_grad) a->grad += self.grad;
      if (b->requires_grad) b->grad -= self.grad;
    };
    return n;
  }

  // elementwise; b may be a single row broadcast over a's rows
  Node* mul(Node* a, Node* b) {
    if (b->rows() == a->rows() && b->cols() == a->cols()) {
      Node* n = make("mul", a->value.cwiseProduct(b->value), {a, b});
      n->backward_fn = [a, b](Node& self) {
        if (a->requires_grad) a->grad += self.grad.cwiseProduct(b->value);
        if (b->requires_grad) b->grad += self.grad.cwiseProduct(a->value);
      };
      return n;
    }
    if (b->rows() == 1 && b->cols() == a->cols()) {
      Mat v = a->value.array().rowwise() * b->value.row(0).array();
      Node* n = make("mul", std::move(v), {a, b});
      n->backward_fn = [a, b](Node& self) {
        if (a->requires_grad)
          a->grad.array() += self.grad.array().rowwise() * b->value.row(0).array();
        if (b->requires_grad)
          b->grad += (self.grad.cwiseProduct(a->value)).colwise().sum();
      };
      return n;
    }
    fail("mul", "shape mismatch");
    return nullptr;
  }

  Node* scale(Node* a, double s) {
    Node* n = make("scale", a->value * s, {a});
    n->backward_fn = [a, s](Node& self) {
      if (a->requires_grad) a->grad += self.grad * s;
    };
    return n;
  }

  Node* neg(Node* a) { return scale(a, -1.0); }

  Node* add_scalar(Node* a, double s) {
    Node* n = make("add_scalar", a->value.array() + s, {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad) a->grad += self.grad;
    };
    return n;
  }

  Node* exp_(Node* a) {
    Node* n = make("exp", a->value.array().exp(), {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad) a->grad += self.grad.cwiseProduct(self.value);
    };
    return n;
  }

  Node* log_(Node* a) {
    Node* n = make("log", a->value.array().log(), {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad)
        a->grad.array() += self.grad.array() / a->value.array();
    };
    return n;
  }

  Node* tanh_(Node* a) {
    Node* n = make("tanh", a->value.array().tanh(), {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad)
        a->grad.array() +=
            self.grad.array() * (1.0 - self.value.array().square());
    };
    return n;
  }

  Node* square(Node* a) {
    Node* n = make("square", a->value.array().square(), {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad)
        a->grad.array() += self.grad.array() * 2.0 * a->value.array();
    };
    return n;
  }

  Node* sum(Node* a) {
    Node* n = make("sum", Mat::Constant(1, 1, a->value.sum()), {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad) a->grad.array() += self.grad(0, 0);
    };
    return n;
  }

  Node* mean(Node* a) {
    double inv = 1.0 / static_cast<double>(a->value.size());
    Node* n = make("mean", Mat::Constant(1, 1, a->value.sum() * inv), {a});
    n->backward_fn = [a, inv](Node& self) {
      if (a->requires_grad) a->grad.array() += self.grad(0, 0) * inv;
    };
    return n;
  }

  Node* row_sum(Node* a) {
    Node* n = make("row_sum", Mat(a->value.rowwise().sum()), {a});
    n->backward_fn = [a](Node& self) {
      if (a->requires_grad)
        a->grad.colwise() += Eigen::VectorXd(self.grad.col(0));
    };
    return n;
  }

  // rowwise log softmax, numerically stabilized
  Node* log_softmax(Node* a) {
    Mat z = a->value;
    for (int i = 0; i < z.rows(); ++i) {
      double m = z.row(i).maxCoeff();
      double lse = std::log((z.row(i).array() - m).exp().sum()) + m;
      z.row(i).array() -= lse;
    }
    Node* n = make("log_softmax", std::move(z), {a});
    n->backward_fn = [a](Node& self) {
      if (!a->requires_grad) return;
      Mat sm = self.value.array().exp();
      Vec gsum = self.grad.rowwise().sum();
      a->grad += self.grad - (sm.array().colwise() * gsum.array()).matrix();
    };
    return n;
  }

  // pick one column per row: out(i, 0) = a(i, idx[i])
  Node* gather_cols(Node* a, const std::vector<int>& idx) {
    if (static_cast<int>(idx.size()) != a->rows())
      fail("gather_cols", "index count != rows");
    Mat v(a->rows(), 1);
    for (int i = 0; i < a->rows(); ++i) v(i, 0) = a->value(i, idx[i]);
    Node* n = make("gather_cols", std::move(v), {a});
    auto indices = idx;
    n->backward_fn = [a, indices](Node& self) {
      if (!a->requires_grad) return;
      for (int i = 0; i < a->rows(); ++i)
        a->grad(i, indices[i]) += self.grad(i, 0);
    };
    return n;
  }

  // elementwise Huber of a residual: quadratic inside delta, linear outside
  Node* huber(Node* a, double delta) {
    Mat v = a->value.unaryExpr([delta](double e) {
      double ae = std::abs(e);
      return ae < delta ? 0.5 * e * e : delta * ae - 0.5 * delta * delta;
    });
    Node* n = make("huber", std::move(v), {a});
    n->backward_fn = [a, delta](Node& self) {
      if (!a->requires_grad) return;
      a->grad += self.grad.cwiseProduct(a->value.unaryExpr([delta](double e) {
        return e > delta ? delta : (e < -delta ? -delta : e);
      }));
    };
    return n;
  }

  // stable sigmoid cross entropy against fixed 0/1 labels, elementwise
  Node* bce_with_logits(Node* logits, const Mat& labels) {
    if (labels.rows() != logits->rows() || labels.cols() != logits->cols())
      fail("bce_with_logits", "label shape mismatch");
    Mat v(logits->rows(), logits->cols());
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) {
        double z = logits->value(i, j);
        double y = labels(i, j);
        v(i, j) = std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
      }
    Node* n = make("bce_with_logits", std::move(v), {logits});
    Mat lab = labels;
    n->backward_fn = [logits, lab](Node& self) {
      if (!logits->requires_grad) return;
      Mat sig = logits->value.unaryExpr(
          [](double z) { return 1.0 / (1.0 + std::exp(-z)); });
      logits->grad += self.grad.cwiseProduct(sig - lab);
    };
    return n;
  }

  // elementwise min; on ties the gradient routes to a
  Node* emin(Node* a, Node* b) {
    if (a->rows() != b->rows() || a->cols() != b->cols())
      fail("emin", "shape mismatch");
    Node* n = make("emin", a->value.cwiseMin(b->value), {a, b});
    n->backward_fn = [a, b](Node& self) {
      for (int i = 0; i < self.value.rows(); ++i)
        for (int j = 0; j < self.value.cols(); ++j) {
          if (a->value(i, j) <= b->value(i, j)) {
            if (a->requires_grad) a->grad(i, j) += self.grad(i, j);
          } else if (b->requires_grad) {
            b->grad(i, j) += self.grad(i, j);
          }
        }
    };
    return n;
  }

  Node* emin_scalar(Node* a, double c) {
    Node* n = make("emin_scalar", a->value.cwiseMin(c), {a});
    n->backward_fn = [a, c](Node& self) {
      if (!a->requires_grad) return;
      for (int i = 0; i < self.value.rows(); ++i)
        for (int j = 0; j < self.value.cols(); ++j)
          if (a->value(i, j) <= c) a->grad(i, j) += self.grad(i, j);
    };
    return n;
  }

  // clamp to [lo, hi]; gradient passes where the input is within bounds
  Node* clip(Node* a, double lo, double hi) {
    Node* n = make("clip", a->value.cwiseMax(lo).cwiseMin(hi), {a});
    n->backward_fn = [a, lo, hi](Node& self) {
      if (!a->requires_grad) return;
      for (int i = 0; i < self.value.rows(); ++i)
        for (int j = 0; j < self.value.cols(); ++j) {
          double x = a->value(i, j);
          if (x >= lo && x <= hi) a->grad(i, j) += self.grad(i, j);
        }
    };
    return n;
  }

  // gradient reversal: identity forward, grad scaled by -lambda backward
  Node* grl(Node* a, double lambda) {
    if (lambda < 0.0) fail("grl", "lambda must be >= 0");
    Node* n = make("grl", a->value, {a});
    n->backward_fn = [a, lambda](Node& self) {
      if (a->requires_grad) a->grad -= self.grad * lambda;
    };
    return n;
  }

  Node* concat_cols(Node* a, Node* b) {
    if (a->rows() != b->rows()) fail("concat_cols", "row mismatch");
    Mat v(a->rows(), a->cols() + b->cols());
    v.leftCols(a->cols()) = a->value;
    v.rightCols(b->cols()) = b->value;
    Node* n = make("concat_cols", std::move(v), {a, b});
    n->backward_fn = [a, b](Node& self) {
      if (a->requires_grad) a->grad += self.grad.leftCols(a->value.cols());
      if (b->requires_grad) b->grad += self.grad.rightCols(b->value.cols());
    };
    return n;
  }

  Node* slice_cols(Node* a, int start, int count) {
    if (start < 0 || start + count > a->cols()) fail("slice_cols", "range");
    Node* n = make("slice_cols", a->value.middleCols(start, count), {a});
    n->backward_fn = [a, start, count](Node& self) {
      if (a->requires_grad)
        a->grad.middleCols(start, count) += self.grad;
    };
    return n;
  }

  // Reverse pass from a scalar loss. Returns the gradient of every
  // named leaf; leaves unreachable from the loss get zero gradients.
  GradMap backward(Node* loss) {
    if (loss->rows() != 1 || loss->cols() != 1)
      fail("backward", "loss must be scalar, got " +
                           std::to_string(loss->rows()) + "x" +
                           std::to_string(loss->cols()));
    std::vector<char> reach(nodes_.size(), 0);
    std::vector<Node*> stack{loss};
    reach[loss->id] = 1;
    while (!stack.empty()) {
      Node* n = stack.back();
      stack.pop_back();
      for (Node* p : n->parents)
        if (p->requires_grad && !reach[p->id]) {
          reach[p->id] = 1;
          stack.push_back(p);
        }
    }
    for (auto& n : nodes_)
      if (reach[n.id])
        n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    loss->grad(0, 0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (reach[it->id] && it->backward_fn) it->backward_fn(*it);

    GradMap out;
    for (Node* n : named_) {
      if (reach[n->id])
        out[n->name] = n->grad;
      else
        out[n->name] = Mat::Zero(n->value.rows(), n->value.cols());
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Node* fresh(const char* op, Mat v) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.op = op;
    n.value = std::move(v);
    n.id = static_cast<int>(nodes_.size()) - 1;
    return &n;
  }

  Node* make(const char* op, Mat v, std::vector<Node*> parents) {
    Node* n = fresh(op, std::move(v));
    n->parents = std::move(parents);
    for (Node* p : n->parents)
      if (p->requires_grad) n->requires_grad = true;
    return n;
  }

  [[noreturn]] static void fail(const char* op, const std::string& what) {
    throw std::invalid_argument(std::string("graph op ") + op + ": " + what);
  }

  std::deque<Node> nodes_;
  std::vector<Node*> named_;
  std::map<std::string, Node*> named_index_;
};

}  // namespace adail
