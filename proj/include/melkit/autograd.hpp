#pragma once
// Minimal reverse-mode autodiff over dense Eigen matrices. Values are computed
// eagerly; creation order is the topological order, so backward() is a single
// reverse sweep. Scalar-templated: double for finite-difference checks, float
// for training.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace mel {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename S>
class Tape {
 public:
  using M = Mat<S>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf node. Gradients accumulate into every reachable leaf; whether anyone
  // reads them is the caller's business (parameters do, constants don't).
  Var leaf(M value) { return push(std::move(value), nullptr); }

  Var scalar(S value) { return leaf(M::Constant(1, 1, value)); }

  const M& value(Var v) const { return nodes_[check(v)].value; }

  // Gradient of the last backward() target w.r.t. v (zeros if v was unreached).
  M grad(Var v) const {
    const auto& n = nodes_[check(v)];
    if (grads_[v.id].size() == 0) return M::Zero(n.value.rows(), n.value.cols());
    return grads_[v.id];
  }

  Var matmul(Var a, Var b) {
    const M& A = value(a);
    const M& B = value(b);
    if (A.cols() != B.rows()) throw std::invalid_argument("matmul: shape mismatch");
    return push(A * B, [a, b](Tape& t, const M& g, const M&) {
      t.accumulate(a, g * t.value(b).transpose());
      t.accumulate(b, t.value(a).transpose() * g);
    });
  }

  Var transpose(Var a) {
    return push(value(a).transpose(), [a](Tape& t, const M& g, const M&) {
      t.accumulate(a, g.transpose());
    });
  }

  Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    return push(value(a) + value(b), [a, b](Tape& t, const M& g, const M&) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    return push(value(a) - value(b), [a, b](Tape& t, const M& g, const M&) {
      t.accumulate(a, g);
      t.accumulate(b, -g);
    });
  }

  // A (n×d) + broadcast row b (1×d).
  Var add_rowvec(Var a, Var b) {
    const M& A = value(a);
    const M& B = value(b);
    if (B.rows() != 1 || A.cols() != B.cols()) throw std::invalid_argument("add_rowvec: shape mismatch");
    return push(A.rowwise() + B.row(0), [a, b](Tape& t, const M& g, const M&) {
      t.accumulate(a, g);
      t.accumulate(b, g.colwise().sum());
    });
  }

  Var cmul(Var a, Var b) {
    require_same_shape(a, b, "cmul");
    return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, const M& g, const M&) {
      t.accumulate(a, g.cwiseProduct(t.value(b)));
      t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
  }

  Var scale(Var a, S c) {
    return push(value(a) * c, [a, c](Tape& t, const M& g, const M&) {
      t.accumulate(a, g * c);
    });
  }

  // C = s * A where s is a 1×1 node.
  Var scale_by(Var a, Var s) {
    const M& sv = value(s);
    if (sv.size() != 1) throw std::invalid_argument("scale_by: scalar node must be 1x1");
    return push(value(a) * sv(0, 0), [a, s](Tape& t, const M& g, const M&) {
      t.accumulate(a, g * t.value(s)(0, 0));
      M ds(1, 1);
      ds(0, 0) = g.cwiseProduct(t.value(a)).sum();
      t.accumulate(s, ds);
    });
  }

  Var tanh_(Var a) {
    M y = value(a).array().tanh().matrix();
    return push(std::move(y), [a](Tape& t, const M& g, const M& out) {
      t.accumulate(a, g.cwiseProduct((M::Ones(out.rows(), out.cols()) - out.cwiseProduct(out))));
    });
  }

  Var sigmoid_(Var a) {
    M y = (S(1) / (S(1) + (-value(a).array()).exp())).matrix();
    return push(std::move(y), [a](Tape& t, const M& g, const M& out) {
      t.accumulate(a, g.cwiseProduct(out.cwiseProduct(M::Ones(out.rows(), out.cols()) - out)));
    });
  }

  Var relu(Var a) {
    M y = value(a).cwiseMax(S(0));
    return push(std::move(y), [a](Tape& t, const M& g, const M&) {
      const M& x = t.value(a);
      t.accumulate(a, (x.array() > S(0)).template cast<S>().matrix().cwiseProduct(g));
    });
  }

  Var log_(Var a) {
    return push(value(a).array().log().matrix(), [a](Tape& t, const M& g, const M&) {
      t.accumulate(a, g.cwiseQuotient(t.value(a)));
    });
  }

  Var exp_(Var a) {
    return push(value(a).array().exp().matrix(), [a](Tape& t, const M& g, const M& out) {
      t.accumulate(a, g.cwiseProduct(out));
    });
  }

  Var hconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hconcat: empty");
    Eigen::Index rows = value(parts[0]).rows(), cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("hconcat: row mismatch");
      cols += value(p).cols();
    }
    M out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    auto parts_copy = parts;
    return push(std::move(out), [parts_copy](Tape& t, const M& g, const M&) {
      Eigen::Index at = 0;
      for (Var p : parts_copy) {
        const Eigen::Index c = t.value(p).cols();
        t.accumulate(p, g.middleCols(at, c));
        at += c;
      }
    });
  }

  Var vconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("vconcat: empty");
    Eigen::Index cols = value(parts[0]).cols(), rows = 0;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw std::invalid_argument("vconcat: column mismatch");
      rows += value(p).rows();
    }
    M out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    auto parts_copy = parts;
    return push(std::move(out), [parts_copy](Tape& t, const M& g, const M&) {
      Eigen::Index at = 0;
      for (Var p : parts_copy) {
        const Eigen::Index r = t.value(p).rows();
        t.accumulate(p, g.middleRows(at, r));
        at += r;
      }
    });
  }

  Var slice_cols(Var a, Eigen::Index from, Eigen::Index n) {
    const M& A = value(a);
    if (from < 0 || n < 0 || from + n > A.cols()) throw std::invalid_argument("slice_cols: out of range");
    return push(A.middleCols(from, n), [a, from, n](Tape& t, const M& g, const M&) {
      M d = M::Zero(t.value(a).rows(), t.value(a).cols());
      d.middleCols(from, n) = g;
      t.accumulate(a, d);
    });
  }

  Var slice_rows(Var a, Eigen::Index from, Eigen::Index n) {
    const M& A = value(a);
    if (from < 0 || n < 0 || from + n > A.rows()) throw std::invalid_argument("slice_rows: out of range");
    return push(A.middleRows(from, n), [a, from, n](Tape& t, const M& g, const M&) {
      M d = M::Zero(t.value(a).rows(), t.value(a).cols());
      d.middleRows(from, n) = g;
      t.accumulate(a, d);
    });
  }

  // Row-wise softmax with max subtraction.
  Var softmax_rows(Var a) {
    M y = value(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const S m = y.row(i).maxCoeff();
      y.row(i) = (y.row(i).array() - m).exp();
      y.row(i) /= y.row(i).sum();
    }
    return push(std::move(y), [a](Tape& t, const M& g, const M& out) {
      M d(out.rows(), out.cols());
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const S dot = g.row(i).cwiseProduct(out.row(i)).sum();
        d.row(i) = out.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
      }
      t.accumulate(a, d);
    });
  }

  // Subtract the mean row (mean over rows) from every row.
  Var mean_shift_rows(Var a) {
    const M& A = value(a);
    M y = A.rowwise() - A.colwise().mean();
    return push(std::move(y), [a](Tape& t, const M& g, const M&) {
      t.accumulate(a, g.rowwise() - g.colwise().mean());
    });
  }

  // L2-normalize each row. Rows with norm < 1e-30 map to zero (degenerate).
  Var normalize_rows(Var a) {
    const M& A = value(a);
    M y(A.rows(), A.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const S n = A.row(i).norm();
      y.row(i) = n < S(1e-30) ? M::Zero(1, A.cols()) : (A.row(i) / n).eval();
    }
    return push(std::move(y), [a](Tape& t, const M& g, const M& out) {
      const M& x = t.value(a);
      M d(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S n = x.row(i).norm();
        if (n < S(1e-30)) {
          d.row(i).setZero();
          continue;
        }
        const S dot = g.row(i).cwiseProduct(out.row(i)).sum();
        d.row(i) = (g.row(i) - out.row(i) * dot) / n;
      }
      t.accumulate(a, d);
    });
  }

  // log(sum_j exp(A_ij)) per row, max-stabilized; n×1 output.
  Var logsumexp_rows(Var a) {
    const M& A = value(a);
    M y(A.rows(), 1);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const S m = A.row(i).maxCoeff();
      y(i, 0) = m + std::log((A.row(i).array() - m).exp().sum());
    }
    return push(std::move(y), [a](Tape& t, const M& g, const M&) {
      const M& x = t.value(a);
      M d(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S m = x.row(i).maxCoeff();
        Eigen::Matrix<S, 1, Eigen::Dynamic> e = (x.row(i).array() - m).exp().matrix();
        d.row(i) = e * (g(i, 0) / e.sum());
      }
      t.accumulate(a, d);
    });
  }

  Var rowwise_sum(Var a) {
    const M& A = value(a);
    return push(M(A.rowwise().sum()), [a](Tape& t, const M& g, const M&) {
      const M& x = t.value(a);
      t.accumulate(a, g * M::Ones(1, x.cols()));
    });
  }

  Var sum_all(Var a) {
    M y(1, 1);
    y(0, 0) = value(a).sum();
    return push(std::move(y), [a](Tape& t, const M& g, const M&) {
      const M& x = t.value(a);
      t.accumulate(a, M::Constant(x.rows(), x.cols(), g(0, 0)));
    });
  }

  Var mean_all(Var a) {
    M y(1, 1);
    y(0, 0) = value(a).mean();
    return push(std::move(y), [a](Tape& t, const M& g, const M&) {
      const M& x = t.value(a);
      const S f = g(0, 0) / static_cast<S>(x.size());
      t.accumulate(a, M::Constant(x.rows(), x.cols(), f));
    });
  }

  // Seeds the target (must be 1×1) with gradient 1 and sweeps the tape.
  void backward(Var target) {
    if (value(target).size() != 1) throw std::invalid_argument("backward: target must be a 1x1 scalar");
    for (auto& g : grads_) g.resize(0, 0);
    grads_[target.id] = M::Constant(1, 1, S(1));
    for (int i = target.id; i >= 0; --i) {
      if (grads_[i].size() == 0 || !nodes_[i].backward) continue;
      nodes_[i].backward(*this, grads_[i], nodes_[i].value);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  // backward(tape, upstream_grad, node_value)
  using BackwardFn = std::function<void(Tape&, const M&, const M&)>;

  struct Node {
    M value;
    BackwardFn backward;
  };

  Var push(M value, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), std::move(fn)});
    grads_.emplace_back();
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::out_of_range("invalid tape variable");
    return v.id;
  }

  void require_same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  void accumulate(Var v, const M& g) {
    M& slot = grads_[check(v)];
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  }

  std::vector<Node> nodes_;
  std::vector<M> grads_;
};

}  // namespace mel
