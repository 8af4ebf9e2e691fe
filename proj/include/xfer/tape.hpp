#pragma once

// Minimal reverse-mode tape covering exactly the operations the translation
// model and language model use. Each recorded operation pushes a closure that
// propagates gradients from its outputs to its inputs; backward() replays the
// closures in reverse recording order, so fan-out accumulates additively.

#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "xfer/tensor.hpp"

namespace xfer {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix<T> value);
  /// Binds an external parameter. Gradients accumulate directly into `grad`
  /// (which must already have the parameter's shape); a null `grad` makes the
  /// parameter a constant.
  Var parameter(const Matrix<T>& value, Matrix<T>* grad);
  Var result(Matrix<T> value, bool needs_grad);

  const Matrix<T>& value(Var v) const { return *nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool has_grad(Var v) const { return nodes_[v.id].grad && nodes_[v.id].grad->size() > 0; }
  Matrix<T>& grad(Var v);

  void on_backward(std::function<void()> fn) { closures_.push_back(std::move(fn)); }
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> own_value;
    const Matrix<T>* value = nullptr;
    Matrix<T> own_grad;
    Matrix<T>* grad = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;
  std::vector<std::function<void()>> closures_;
};

namespace ops {

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);
/// a^T * b
template <typename T>
Var matmul_tn(Tape<T>& tape, Var a, Var b);
template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
/// Adds a column vector to every column.
template <typename T>
Var add_bias(Tape<T>& tape, Var a, Var bias);
template <typename T>
Var tanh(Tape<T>& tape, Var a);
template <typename T>
Var sigmoid(Tape<T>& tape, Var a);
template <typename T>
Var cmul(Tape<T>& tape, Var a, Var b);
/// Elementwise product with a fixed matrix (dropout masks).
template <typename T>
Var mask(Tape<T>& tape, Var a, Matrix<T> m);
template <typename T>
Var concat_rows(Tape<T>& tape, Var top, Var bottom);
/// Concatenates equally-shaped blocks left to right.
template <typename T>
Var hstack(Tape<T>& tape, std::span<const Var> parts);
template <typename T>
Var scale_columns(Tape<T>& tape, Var a, std::vector<T> factors);
/// Column b of the result is `fresh` where keep[b] is set, `old` otherwise.
template <typename T>
Var select_columns(Tape<T>& tape, Var fresh, Var old, std::vector<bool> keep);
/// Gathers rows of a |V| x d table into a d x B matrix.
template <typename T>
Var embedding(Tape<T>& tape, Var table, std::vector<int> ids);
template <typename T>
std::pair<Var, Var> lstm(Tape<T>& tape, Var x, Var h, Var c, Var w_input, Var w_recurrent,
                         Var bias);
/// Returns the context vector; the attention weights are written to `weights`
/// when it is non-null.
template <typename T>
Var local_attention(Tape<T>& tape, Var states,
                    std::shared_ptr<const std::vector<std::vector<int>>> columns, Var query,
                    Var position, int window, std::vector<std::vector<T>>* weights = nullptr);
/// Summed negative log-likelihood of the target rows; columns with a negative
/// target are masked out. Returns a 1x1 value.
template <typename T>
Var softmax_nll(Tape<T>& tape, Var logits, std::vector<int> targets);
template <typename T>
Var scale(Tape<T>& tape, Var a, T factor);

}  // namespace ops
}  // namespace xfer
