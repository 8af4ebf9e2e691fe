#pragma once

// Dense kernels shared by the taped training path and the tape-free decoding
// path. Batched operands are column-major: one column per sentence.

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace xfer {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

/// One LSTM layer. Gate rows are stacked in the order input, forget, output,
/// candidate; `input` is 4d x in, `recurrent` is 4d x d, `bias` is 4d x 1.
template <typename T>
struct LstmWeights {
  Matrix<T> input;
  Matrix<T> recurrent;
  Matrix<T> bias;
};

template <typename T>
struct LstmCache {
  Matrix<T> x, h_prev, c_prev;
  Matrix<T> i, f, o, g, tanh_c;
};

template <typename T>
struct LstmStep {
  Matrix<T> h;
  Matrix<T> c;
  LstmCache<T> cache;
};

template <typename T>
struct LstmInputGrads {
  Matrix<T> x, h_prev, c_prev;
};

template <typename T>
LstmStep<T> lstm_cell(const Matrix<T>& x, const Matrix<T>& h_prev, const Matrix<T>& c_prev,
                      const Matrix<T>& w_input, const Matrix<T>& w_recurrent,
                      const Matrix<T>& bias);

template <typename T>
LstmStep<T> lstm_cell(const Matrix<T>& x, const Matrix<T>& h_prev, const Matrix<T>& c_prev,
                      const LstmWeights<T>& w) {
  return lstm_cell(x, h_prev, c_prev, w.input, w.recurrent, w.bias);
}

// Weight gradients are accumulated into the non-null outputs.
template <typename T>
LstmInputGrads<T> lstm_cell_backward(const LstmCache<T>& cache, const Matrix<T>& dh,
                                     const Matrix<T>& dc, const Matrix<T>& w_input,
                                     const Matrix<T>& w_recurrent, Matrix<T>* dw_input,
                                     Matrix<T>* dw_recurrent, Matrix<T>* dbias);

/// Local-p attention over encoder states. `columns[b][j]` is the column of
/// `states` holding source position j of sentence b (original word order);
/// `position(0, b)` is the predicted centre, already scaled into [0, S_b - 1].
/// Scores are dot products, normalised by a softmax over the window
/// [p - D, p + D] and damped by a Gaussian with sigma = D / 2, where
/// D = min(window, S_b).
template <typename T>
struct AttentionCache {
  std::vector<int> lo, hi;
  std::vector<std::vector<T>> align;     // softmax over the window
  std::vector<std::vector<T>> gaussian;  // exp(-(j - p)^2 / 2 sigma^2)
  std::vector<T> sigma;
};

template <typename T>
struct AttentionStep {
  Matrix<T> context;
  std::vector<std::vector<T>> weights;  // per sentence, one entry per source position
  AttentionCache<T> cache;
};

template <typename T>
AttentionStep<T> local_attention(const Matrix<T>& states,
                                 std::span<const std::vector<int>> columns,
                                 const Matrix<T>& query, const Matrix<T>& position, int window);

template <typename T>
void local_attention_backward(const AttentionStep<T>& step, const Matrix<T>& states,
                              std::span<const std::vector<int>> columns, const Matrix<T>& query,
                              const Matrix<T>& position, const Matrix<T>& dcontext,
                              Matrix<T>* dstates, Matrix<T>* dquery, Matrix<T>* dposition);

/// Max-subtracted softmax. Throws on empty input.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

/// Column-wise log-softmax.
template <typename T>
Matrix<T> log_softmax_columns(const Matrix<T>& logits);

template <typename T>
T global_norm(std::span<const Matrix<T>* const> grads);

/// Rescales every gradient by threshold / g when the global L2 norm g exceeds
/// the threshold. Returns g as measured before rescaling.
template <typename T>
T clip_gradients(std::span<Matrix<T>* const> grads, T threshold);

/// Inverted-dropout mask: entries are 0 with probability p, else 1 / (1 - p).
template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double p, Rng& rng, bool train);

template <typename T>
void fill_uniform(Matrix<T>& m, double range, Rng& rng);

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return m.allFinite();
}

}  // namespace xfer
