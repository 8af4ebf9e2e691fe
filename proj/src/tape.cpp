#include "xfer/tape.hpp"

#include <cmath>

#include "xfer/error.hpp"

namespace xfer {

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  return result(std::move(value), false);
}

template <typename T>
Var Tape<T>::parameter(const Matrix<T>& value, Matrix<T>* grad) {
  Node& n = nodes_.emplace_back();
  n.value = &value;
  if (grad) {
    if (grad->rows() != value.rows() || grad->cols() != value.cols()) {
      throw DimensionError("tape.parameter", "grad", value.rows(), value.cols(), grad->rows(),
                           grad->cols());
    }
    n.grad = grad;
    n.needs_grad = true;
  }
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::result(Matrix<T> value, bool needs_grad) {
  Node& n = nodes_.emplace_back();
  n.own_value = std::move(value);
  n.value = &n.own_value;
  n.grad = &n.own_grad;
  n.needs_grad = needs_grad;
  return Var{nodes_.size() - 1};
}

template <typename T>
Matrix<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.grad) {
    n.grad = &n.own_grad;
  }
  if (n.grad->size() == 0) n.grad->setZero(n.value->rows(), n.value->cols());
  return *n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("tape.backward", "loss", 1, 1, lv.rows(), lv.cols());
  }
  if (!needs_grad(loss)) return;
  grad(loss)(0, 0) += T(1);
  for (auto it = closures_.rbegin(); it != closures_.rend(); ++it) (*it)();
  closures_.clear();
}

namespace ops {

namespace {

template <typename T>
bool any_grad(const Tape<T>& tape, std::initializer_list<Var> vars) {
  for (Var v : vars)
    if (tape.needs_grad(v)) return true;
  return false;
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.cols() != bv.rows())
    throw DimensionError("matmul", "rhs", av.cols(), bv.cols(), bv.rows(), bv.cols());
  const bool ng = any_grad(tape, {a, b});
  Var out = tape.result(av * bv, ng);
  if (ng) {
    tape.on_backward([&tape, a, b, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      if (tape.needs_grad(a)) tape.grad(a).noalias() += g * tape.value(b).transpose();
      if (tape.needs_grad(b)) tape.grad(b).noalias() += tape.value(a).transpose() * g;
    });
  }
  return out;
}

template <typename T>
Var matmul_tn(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rows() != bv.rows())
    throw DimensionError("matmul_tn", "rhs", av.rows(), bv.cols(), bv.rows(), bv.cols());
  const bool ng = any_grad(tape, {a, b});
  Var out = tape.result(av.transpose() * bv, ng);
  if (ng) {
    tape.on_backward([&tape, a, b, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      if (tape.needs_grad(a)) tape.grad(a).noalias() += tape.value(b) * g.transpose();
      if (tape.needs_grad(b)) tape.grad(b).noalias() += tape.value(a) * g;
    });
  }
  return out;
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw DimensionError("add", "rhs", av.rows(), av.cols(), bv.rows(), bv.cols());
  const bool ng = any_grad(tape, {a, b});
  Var out = tape.result(av + bv, ng);
  if (ng) {
    tape.on_backward([&tape, a, b, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      if (tape.needs_grad(a)) tape.grad(a) += g;
      if (tape.needs_grad(b)) tape.grad(b) += g;
    });
  }
  return out;
}

template <typename T>
Var add_bias(Tape<T>& tape, Var a, Var bias) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(bias);
  if (bv.rows() != av.rows() || bv.cols() != 1)
    throw DimensionError("add_bias", "bias", av.rows(), 1, bv.rows(), bv.cols());
  const bool ng = any_grad(tape, {a, bias});
  Matrix<T> v = av;
  v.colwise() += bv.col(0);
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, a, bias, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      if (tape.needs_grad(a)) tape.grad(a) += g;
      if (tape.needs_grad(bias)) tape.grad(bias).col(0) += g.rowwise().sum();
    });
  }
  return out;
}

template <typename T>
Var tanh(Tape<T>& tape, Var a) {
  const bool ng = tape.needs_grad(a);
  Var out = tape.result(tape.value(a).array().tanh().matrix(), ng);
  if (ng) {
    tape.on_backward([&tape, a, out] {
      if (!tape.has_grad(out)) return;
      const auto& y = tape.value(out).array();
      tape.grad(a).array() += tape.grad(out).array() * (T(1) - y.square());
    });
  }
  return out;
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var a) {
  const bool ng = tape.needs_grad(a);
  Matrix<T> v = (T(1) / (T(1) + (-tape.value(a).array()).exp())).matrix();
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, a, out] {
      if (!tape.has_grad(out)) return;
      const auto& y = tape.value(out).array();
      tape.grad(a).array() += tape.grad(out).array() * y * (T(1) - y);
    });
  }
  return out;
}

template <typename T>
Var cmul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw DimensionError("cmul", "rhs", av.rows(), av.cols(), bv.rows(), bv.cols());
  const bool ng = any_grad(tape, {a, b});
  Var out = tape.result((av.array() * bv.array()).matrix(), ng);
  if (ng) {
    tape.on_backward([&tape, a, b, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out).array();
      if (tape.needs_grad(a)) tape.grad(a).array() += g * tape.value(b).array();
      if (tape.needs_grad(b)) tape.grad(b).array() += g * tape.value(a).array();
    });
  }
  return out;
}

template <typename T>
Var mask(Tape<T>& tape, Var a, Matrix<T> m) {
  const auto& av = tape.value(a);
  if (av.rows() != m.rows() || av.cols() != m.cols())
    throw DimensionError("mask", "mask", av.rows(), av.cols(), m.rows(), m.cols());
  const bool ng = tape.needs_grad(a);
  Var out = tape.result((av.array() * m.array()).matrix(), ng);
  if (ng) {
    tape.on_backward([&tape, a, out, m = std::move(m)] {
      if (!tape.has_grad(out)) return;
      tape.grad(a).array() += tape.grad(out).array() * m.array();
    });
  }
  return out;
}

template <typename T>
Var concat_rows(Tape<T>& tape, Var top, Var bottom) {
  const auto& tv = tape.value(top);
  const auto& bv = tape.value(bottom);
  if (tv.cols() != bv.cols())
    throw DimensionError("concat_rows", "bottom", bv.rows(), tv.cols(), bv.rows(), bv.cols());
  const bool ng = any_grad(tape, {top, bottom});
  Matrix<T> v(tv.rows() + bv.rows(), tv.cols());
  v << tv, bv;
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, top, bottom, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      const auto rows = tape.value(top).rows();
      if (tape.needs_grad(top)) tape.grad(top) += g.topRows(rows);
      if (tape.needs_grad(bottom)) tape.grad(bottom) += g.bottomRows(g.rows() - rows);
    });
  }
  return out;
}

template <typename T>
Var hstack(Tape<T>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw DataError("hstack: no operands");
  const auto rows = tape.value(parts[0]).rows();
  const auto cols = tape.value(parts[0]).cols();
  Matrix<T> v(rows, cols * static_cast<Eigen::Index>(parts.size()));
  bool ng = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& pv = tape.value(parts[i]);
    if (pv.rows() != rows || pv.cols() != cols)
      throw DimensionError("hstack", "part", rows, cols, pv.rows(), pv.cols());
    v.middleCols(static_cast<Eigen::Index>(i) * cols, cols) = pv;
    ng = ng || tape.needs_grad(parts[i]);
  }
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, ids = std::vector<Var>(parts.begin(), parts.end()), cols, out] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (tape.needs_grad(ids[i]))
          tape.grad(ids[i]) += g.middleCols(static_cast<Eigen::Index>(i) * cols, cols);
    });
  }
  return out;
}

template <typename T>
Var scale_columns(Tape<T>& tape, Var a, std::vector<T> factors) {
  const auto& av = tape.value(a);
  if (static_cast<Eigen::Index>(factors.size()) != av.cols())
    throw DimensionError("scale_columns", "factors", 1, av.cols(), 1,
                         static_cast<long>(factors.size()));
  Matrix<T> v = av;
  for (Eigen::Index b = 0; b < v.cols(); ++b) v.col(b) *= factors[b];
  const bool ng = tape.needs_grad(a);
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, a, out, factors = std::move(factors)] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      auto& ga = tape.grad(a);
      for (Eigen::Index b = 0; b < g.cols(); ++b) ga.col(b) += factors[b] * g.col(b);
    });
  }
  return out;
}

template <typename T>
Var select_columns(Tape<T>& tape, Var fresh, Var old, std::vector<bool> keep) {
  const auto& fv = tape.value(fresh);
  const auto& ov = tape.value(old);
  if (fv.rows() != ov.rows() || fv.cols() != ov.cols())
    throw DimensionError("select_columns", "old", fv.rows(), fv.cols(), ov.rows(), ov.cols());
  Matrix<T> v(fv.rows(), fv.cols());
  for (Eigen::Index b = 0; b < v.cols(); ++b) v.col(b) = keep[b] ? fv.col(b) : ov.col(b);
  const bool ng = any_grad(tape, {fresh, old});
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, fresh, old, out, keep = std::move(keep)] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      for (Eigen::Index b = 0; b < g.cols(); ++b) {
        Var dst = keep[b] ? fresh : old;
        if (tape.needs_grad(dst)) tape.grad(dst).col(b) += g.col(b);
      }
    });
  }
  return out;
}

template <typename T>
Var embedding(Tape<T>& tape, Var table, std::vector<int> ids) {
  const auto& tv = tape.value(table);
  Matrix<T> v(tv.cols(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] < 0 || ids[b] >= tv.rows())
      throw DataError("embedding: id " + std::to_string(ids[b]) + " outside table of " +
                      std::to_string(tv.rows()) + " rows");
    v.col(static_cast<Eigen::Index>(b)) = tv.row(ids[b]).transpose();
  }
  const bool ng = tape.needs_grad(table);
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, table, out, ids = std::move(ids)] {
      if (!tape.has_grad(out)) return;
      const auto& g = tape.grad(out);
      auto& gt = tape.grad(table);
      for (std::size_t b = 0; b < ids.size(); ++b)
        gt.row(ids[b]) += g.col(static_cast<Eigen::Index>(b)).transpose();
    });
  }
  return out;
}

template <typename T>
std::pair<Var, Var> lstm(Tape<T>& tape, Var x, Var h, Var c, Var w_input, Var w_recurrent,
                         Var bias) {
  auto step = lstm_cell<T>(tape.value(x), tape.value(h), tape.value(c), tape.value(w_input),
                           tape.value(w_recurrent), tape.value(bias));
  const bool ng = any_grad(tape, {x, h, c, w_input, w_recurrent, bias});
  Var h_out = tape.result(std::move(step.h), ng);
  Var c_out = tape.result(std::move(step.c), ng);
  if (ng) {
    tape.on_backward([&tape, x, h, c, w_input, w_recurrent, bias, h_out, c_out,
                      cache = std::move(step.cache)] {
      if (!tape.has_grad(h_out) && !tape.has_grad(c_out)) return;
      const auto& dh = tape.grad(h_out);
      const auto& dc = tape.grad(c_out);
      auto g = lstm_cell_backward<T>(
          cache, dh, dc, tape.value(w_input), tape.value(w_recurrent),
          tape.needs_grad(w_input) ? &tape.grad(w_input) : nullptr,
          tape.needs_grad(w_recurrent) ? &tape.grad(w_recurrent) : nullptr,
          tape.needs_grad(bias) ? &tape.grad(bias) : nullptr);
      if (tape.needs_grad(x)) tape.grad(x) += g.x;
      if (tape.needs_grad(h)) tape.grad(h) += g.h_prev;
      if (tape.needs_grad(c)) tape.grad(c) += g.c_prev;
    });
  }
  return {h_out, c_out};
}

template <typename T>
Var local_attention(Tape<T>& tape, Var states,
                    std::shared_ptr<const std::vector<std::vector<int>>> columns, Var query,
                    Var position, int window, std::vector<std::vector<T>>* weights) {
  auto step = xfer::local_attention<T>(tape.value(states), *columns, tape.value(query),
                                       tape.value(position), window);
  if (weights) *weights = step.weights;
  const bool ng = any_grad(tape, {states, query, position});
  Var out = tape.result(std::move(step.context), ng);
  if (ng) {
    step.context.resize(0, 0);
    tape.on_backward([&tape, states, columns, query, position, out, step = std::move(step)] {
      if (!tape.has_grad(out)) return;
      xfer::local_attention_backward<T>(
          step, tape.value(states), *columns, tape.value(query), tape.value(position),
          tape.grad(out), tape.needs_grad(states) ? &tape.grad(states) : nullptr,
          tape.needs_grad(query) ? &tape.grad(query) : nullptr,
          tape.needs_grad(position) ? &tape.grad(position) : nullptr);
    });
  }
  return out;
}

template <typename T>
Var softmax_nll(Tape<T>& tape, Var logits, std::vector<int> targets) {
  const auto& lv = tape.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != lv.cols())
    throw DimensionError("softmax_nll", "targets", 1, lv.cols(), 1,
                         static_cast<long>(targets.size()));
  Matrix<T> logp = log_softmax_columns<T>(lv);
  T nll = 0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const int y = targets[b];
    if (y < 0) continue;
    if (y >= lv.rows())
      throw DataError("softmax_nll: target id " + std::to_string(y) + " outside vocabulary");
    nll -= logp(y, static_cast<Eigen::Index>(b));
  }
  Matrix<T> v(1, 1);
  v(0, 0) = nll;
  const bool ng = tape.needs_grad(logits);
  Var out = tape.result(std::move(v), ng);
  if (ng) {
    tape.on_backward([&tape, logits, out, targets = std::move(targets), logp = std::move(logp)] {
      if (!tape.has_grad(out)) return;
      const T g = tape.grad(out)(0, 0);
      auto& gl = tape.grad(logits);
      for (std::size_t b = 0; b < targets.size(); ++b) {
        const int y = targets[b];
        if (y < 0) continue;
        const auto col = static_cast<Eigen::Index>(b);
        gl.col(col) += g * logp.col(col).array().exp().matrix();
        gl(y, col) -= g;
      }
    });
  }
  return out;
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  const bool ng = tape.needs_grad(a);
  Var out = tape.result(tape.value(a) * factor, ng);
  if (ng) {
    tape.on_backward([&tape, a, out, factor] {
      if (!tape.has_grad(out)) return;
      tape.grad(a) += factor * tape.grad(out);
    });
  }
  return out;
}

#define XFER_INSTANTIATE(T)                                                                   \
  template Var matmul(Tape<T>&, Var, Var);                                                    \
  template Var matmul_tn(Tape<T>&, Var, Var);                                                 \
  template Var add(Tape<T>&, Var, Var);                                                       \
  template Var add_bias(Tape<T>&, Var, Var);                                                  \
  template Var tanh(Tape<T>&, Var);                                                           \
  template Var sigmoid(Tape<T>&, Var);                                                        \
  template Var cmul(Tape<T>&, Var, Var);                                                      \
  template Var mask(Tape<T>&, Var, Matrix<T>);                                                \
  template Var concat_rows(Tape<T>&, Var, Var);                                               \
  template Var hstack(Tape<T>&, std::span<const Var>);                                        \
  template Var scale_columns(Tape<T>&, Var, std::vector<T>);                                  \
  template Var select_columns(Tape<T>&, Var, Var, std::vector<bool>);                         \
  template Var embedding(Tape<T>&, Var, std::vector<int>);                                    \
  template std::pair<Var, Var> lstm(Tape<T>&, Var, Var, Var, Var, Var, Var);                  \
  template Var local_attention(Tape<T>&, Var,                                                 \
                               std::shared_ptr<const std::vector<std::vector<int>>>, Var, Var, \
                               int, std::vector<std::vector<T>>*);                            \
  template Var softmax_nll(Tape<T>&, Var, std::vector<int>);                                  \
  template Var scale(Tape<T>&, Var, T);

XFER_INSTANTIATE(float)
XFER_INSTANTIATE(double)

#undef XFER_INSTANTIATE

}  // namespace ops

template class Tape<float>;
template class Tape<double>;

}  // namespace xfer
