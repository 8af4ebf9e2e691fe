#include "xfer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xfer/error.hpp"

namespace xfer {

namespace {

template <typename T>
void require_shape(const char* op, const char* name, const Matrix<T>& m, Eigen::Index rows,
                   Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(op, name, rows, cols, m.rows(), m.cols());
  }
}

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

}  // namespace

template <typename T>
LstmStep<T> lstm_cell(const Matrix<T>& x, const Matrix<T>& h_prev, const Matrix<T>& c_prev,
                      const Matrix<T>& w_input, const Matrix<T>& w_recurrent,
                      const Matrix<T>& bias) {
  const Eigen::Index d = w_recurrent.cols();
  const Eigen::Index batch = x.cols();
  require_shape("lstm_cell", "w_recurrent", w_recurrent, 4 * d, d);
  require_shape("lstm_cell", "w_input", w_input, 4 * d, x.rows());
  require_shape("lstm_cell", "bias", bias, 4 * d, 1);
  require_shape("lstm_cell", "h_prev", h_prev, d, batch);
  require_shape("lstm_cell", "c_prev", c_prev, d, batch);

  Matrix<T> gates = w_input * x + w_recurrent * h_prev;
  gates.colwise() += bias.col(0);

  LstmStep<T> out;
  auto& k = out.cache;
  k.x = x;
  k.h_prev = h_prev;
  k.c_prev = c_prev;
  k.i = sigmoid<T>(gates.topRows(d));
  k.f = sigmoid<T>(gates.middleRows(d, d));
  k.o = sigmoid<T>(gates.middleRows(2 * d, d));
  k.g = gates.bottomRows(d).array().tanh().matrix();
  out.c = (k.f.array() * c_prev.array() + k.i.array() * k.g.array()).matrix();
  k.tanh_c = out.c.array().tanh().matrix();
  out.h = (k.o.array() * k.tanh_c.array()).matrix();
  return out;
}

template <typename T>
LstmInputGrads<T> lstm_cell_backward(const LstmCache<T>& k, const Matrix<T>& dh,
                                     const Matrix<T>& dc_in, const Matrix<T>& w_input,
                                     const Matrix<T>& w_recurrent, Matrix<T>* dw_input,
                                     Matrix<T>* dw_recurrent, Matrix<T>* dbias) {
  const Eigen::Index d = w_recurrent.cols();
  const Eigen::Index batch = k.x.cols();

  auto dc = (dc_in.array() + dh.array() * k.o.array() * (T(1) - k.tanh_c.array().square())).eval();
  Matrix<T> dgates(4 * d, batch);
  dgates.topRows(d) = (dc * k.g.array() * k.i.array() * (T(1) - k.i.array())).matrix();
  dgates.middleRows(d, d) =
      (dc * k.c_prev.array() * k.f.array() * (T(1) - k.f.array())).matrix();
  dgates.middleRows(2 * d, d) =
      (dh.array() * k.tanh_c.array() * k.o.array() * (T(1) - k.o.array())).matrix();
  dgates.bottomRows(d) = (dc * k.i.array() * (T(1) - k.g.array().square())).matrix();

  if (dw_input) dw_input->noalias() += dgates * k.x.transpose();
  if (dw_recurrent) dw_recurrent->noalias() += dgates * k.h_prev.transpose();
  if (dbias) dbias->col(0) += dgates.rowwise().sum();

  LstmInputGrads<T> g;
  g.x = w_input.transpose() * dgates;
  g.h_prev = w_recurrent.transpose() * dgates;
  g.c_prev = (dc * k.f.array()).matrix();
  return g;
}

template <typename T>
AttentionStep<T> local_attention(const Matrix<T>& states,
                                 std::span<const std::vector<int>> columns,
                                 const Matrix<T>& query, const Matrix<T>& position, int window) {
  const Eigen::Index d = states.rows();
  const auto batch = static_cast<Eigen::Index>(columns.size());
  require_shape("local_attention", "query", query, d, batch);
  require_shape("local_attention", "position", position, 1, batch);
  if (window < 1) throw DataError("local_attention: window must be >= 1");

  AttentionStep<T> out;
  out.context = Matrix<T>::Zero(d, batch);
  auto& k = out.cache;
  k.lo.resize(batch);
  k.hi.resize(batch);
  k.align.resize(batch);
  k.gaussian.resize(batch);
  k.sigma.resize(batch);
  out.weights.resize(batch);

  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& cols = columns[b];
    const int len = static_cast<int>(cols.size());
    if (len == 0) throw DataError("local_attention: empty source sentence");
    const T p = position(0, b);
    const int span_d = std::min(window, len);
    const T sigma = T(span_d) / T(2);
    const int lo = std::max(0, static_cast<int>(std::ceil(p - T(span_d))));
    const int hi = std::min(len - 1, static_cast<int>(std::floor(p + T(span_d))));
    k.lo[b] = lo;
    k.hi[b] = hi;
    k.sigma[b] = sigma;

    std::vector<T> scores(hi - lo + 1);
    for (int j = lo; j <= hi; ++j) scores[j - lo] = states.col(cols[j]).dot(query.col(b));
    k.align[b] = softmax<T>(scores);

    auto& gauss = k.gaussian[b];
    gauss.resize(scores.size());
    out.weights[b].assign(len, T(0));
    for (int j = lo; j <= hi; ++j) {
      const T dist = T(j) - p;
      gauss[j - lo] = std::exp(-dist * dist / (T(2) * sigma * sigma));
      const T w = k.align[b][j - lo] * gauss[j - lo];
      out.weights[b][j] = w;
      out.context.col(b) += w * states.col(cols[j]);
    }
  }
  return out;
}

template <typename T>
void local_attention_backward(const AttentionStep<T>& step, const Matrix<T>& states,
                              std::span<const std::vector<int>> columns, const Matrix<T>& query,
                              const Matrix<T>& position, const Matrix<T>& dcontext,
                              Matrix<T>* dstates, Matrix<T>* dquery, Matrix<T>* dposition) {
  const auto& k = step.cache;
  const auto batch = static_cast<Eigen::Index>(columns.size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& cols = columns[b];
    const int lo = k.lo[b];
    const int n = k.hi[b] - lo + 1;
    const T p = position(0, b);
    const T var = k.sigma[b] * k.sigma[b];
    const auto& a = k.align[b];
    const auto& gauss = k.gaussian[b];

    std::vector<T> dalign(n);
    T dp = 0;
    T weighted = 0;
    for (int m = 0; m < n; ++m) {
      const auto s = states.col(cols[lo + m]);
      const T dw = dcontext.col(b).dot(s);
      if (dstates) dstates->col(cols[lo + m]) += (a[m] * gauss[m]) * dcontext.col(b);
      dalign[m] = dw * gauss[m];
      dp += dw * a[m] * gauss[m] * (T(lo + m) - p) / var;
      weighted += a[m] * dalign[m];
    }
    if (dposition) (*dposition)(0, b) += dp;
    for (int m = 0; m < n; ++m) {
      const T dscore = a[m] * (dalign[m] - weighted);
      const auto s = states.col(cols[lo + m]);
      if (dquery) dquery->col(b) += dscore * s;
      if (dstates) dstates->col(cols[lo + m]) += dscore * query.col(b);
    }
  }
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw DataError("softmax: empty input");
  const T max = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

template <typename T>
Matrix<T> log_softmax_columns(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const T max = logits.col(b).maxCoeff();
    const T lse = max + std::log((logits.col(b).array() - max).exp().sum());
    out.col(b) = logits.col(b).array() - lse;
  }
  return out;
}

template <typename T>
T global_norm(std::span<const Matrix<T>* const> grads) {
  T sq = 0;
  for (const auto* g : grads) sq += g->squaredNorm();
  return std::sqrt(sq);
}

template <typename T>
T clip_gradients(std::span<Matrix<T>* const> grads, T threshold) {
  if (!(threshold > 0)) throw DataError("clip_gradients: threshold must be positive");
  T sq = 0;
  for (const auto* g : grads) sq += g->squaredNorm();
  const T norm = std::sqrt(sq);
  if (norm > threshold) {
    const T scale = threshold / norm;
    for (auto* g : grads) *g *= scale;
  }
  return norm;
}

template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  if (p < 0 || p >= 1) throw DataError("dropout: probability must lie in [0, 1)");
  Matrix<T> mask(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = T(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : T(0);
  return mask;
}

template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double p, Rng& rng, bool train) {
  if (p < 0 || p >= 1) throw DataError("dropout: probability must lie in [0, 1)");
  if (!train || p == 0) return x;
  return (x.array() * dropout_mask<T>(x.rows(), x.cols(), p, rng).array()).matrix();
}

template <typename T>
void fill_uniform(Matrix<T>& m, double range, Rng& rng) {
  if (range <= 0) {
    m.setZero();
    return;
  }
  std::uniform_real_distribution<double> dist(-range, range);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

#define XFER_INSTANTIATE(T)                                                                     \
  template LstmStep<T> lstm_cell(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,          \
                                 const Matrix<T>&, const Matrix<T>&, const Matrix<T>&);         \
  template LstmInputGrads<T> lstm_cell_backward(const LstmCache<T>&, const Matrix<T>&,          \
                                                const Matrix<T>&, const Matrix<T>&,             \
                                                const Matrix<T>&, Matrix<T>*, Matrix<T>*,       \
                                                Matrix<T>*);                                    \
  template AttentionStep<T> local_attention(const Matrix<T>&, std::span<const std::vector<int>>, \
                                            const Matrix<T>&, const Matrix<T>&, int);           \
  template void local_attention_backward(                                                       \
      const AttentionStep<T>&, const Matrix<T>&, std::span<const std::vector<int>>,             \
      const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, Matrix<T>*, Matrix<T>*, Matrix<T>*); \
  template std::vector<T> softmax(std::span<const T>);                                          \
  template Matrix<T> log_softmax_columns(const Matrix<T>&);                                     \
  template T global_norm(std::span<const Matrix<T>* const>);                                    \
  template T clip_gradients(std::span<Matrix<T>* const>, T);                                    \
  template Matrix<T> dropout_mask(Eigen::Index, Eigen::Index, double, Rng&);                    \
  template Matrix<T> dropout(const Matrix<T>&, double, Rng&, bool);                             \
  template void fill_uniform(Matrix<T>&, double, Rng&);

XFER_INSTANTIATE(float)
XFER_INSTANTIATE(double)

#undef XFER_INSTANTIATE

}  // namespace xfer
