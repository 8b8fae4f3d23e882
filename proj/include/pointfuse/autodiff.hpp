#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pointfuse/tensor.hpp"

namespace pointfuse {

// Reverse-mode tape. Primitives below compute their forward value and, when
// given a tape, record a closure that accumulates exact gradients into the
// inputs' grad buffers. Passing a null tape gives a plain (no-grad) forward.
// A tape is single-threaded; gradients accumulate in fixed reverse order.
class Tape {
 public:
  void record(std::function<void()> backward_op) {
    ops_.push_back(std::move(backward_op));
  }

  // Seeds d(loss)/d(loss) = 1 and runs all recorded closures in reverse.
  void backward(const TensorPtr& loss);

  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// ---- primitives -----------------------------------------------------------

// y = x * W^T + b with x:[N,Cin], W:[Cout,Cin], b:[Cout] -> [N,Cout].
// Shared over rows, i.e. the "shared MLP" building block.
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b);

TensorPtr relu(Tape* tape, const TensorPtr& x);

// 3x3 convolution, stride 1, zero padding 1. x:[B,Cin,H,W], w:[Cout,Cin,3,3].
TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b);

// 2x2 max pooling, stride 2. Ties route gradient to the lowest flat index.
TensorPtr maxpool2d(Tape* tape, const TensorPtr& x);

// 2x2 transposed convolution, stride 2. x:[B,Cin,H,W], w:[Cin,Cout,2,2]
// -> [B,Cout,2H,2W].
TensorPtr tconv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                  const TensorPtr& b);

// Per-channel batch normalization over [B,C,H,W] with running statistics.
// The stats live in tensors so checkpoints can carry them as named buffers.
struct BatchNormState {
  TensorPtr running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(int channels = 0)
      : running_mean(make_tensor({channels})),
        running_var(make_tensor({channels})) {
    for (double& v : running_var->data) v = 1.0;
  }
};
TensorPtr batchnorm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                    const TensorPtr& beta, BatchNormState& state,
                    bool training);

// Concatenation along axis 1 (feature/channel axis).
TensorPtr concat(Tape* tape, const std::vector<TensorPtr>& xs);
// Concatenation along axis 0 (rows).
TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& xs);

// out[i] = x[idx[i]] over leading-axis rows.
TensorPtr gather_rows(Tape* tape, const TensorPtr& x,
                      const std::vector<int>& idx);

// out[idx[i]] += x[i]; out has out_rows leading rows. Sequential adds.
TensorPtr scatter_add_rows(Tape* tape, const TensorPtr& x,
                           const std::vector<int>& idx, int out_rows);

// Group reductions over the middle axis of [G,S,C].
TensorPtr reduce_sum_groups(Tape* tape, const TensorPtr& x);
TensorPtr reduce_mean_groups(Tape* tape, const TensorPtr& x);
// Max routes gradient to the argmax element, lowest group index on ties.
TensorPtr reduce_max_groups(Tape* tape, const TensorPtr& x);

TensorPtr scale(Tape* tape, const TensorPtr& x, double c);
// row i scaled by s[i]; s is a constant (no gradient w.r.t. s).
TensorPtr scale_rows(Tape* tape, const TensorPtr& x,
                     const std::vector<double>& s);

TensorPtr reshape(Tape* tape, const TensorPtr& x, std::vector<int> shape);

// [C,H,W] -> [H*W, C] pixel-major rows (and exact inverse in backward).
TensorPtr chw_to_rows(Tape* tape, const TensorPtr& x);
// [B,C,H,W] -> [B*H*W, C], batch-major then pixel-major.
TensorPtr nchw_to_rows(Tape* tape, const TensorPtr& x);

// Zero padding at the bottom/right of [B,C,H,W].
TensorPtr pad2d(Tape* tape, const TensorPtr& x, int pad_h, int pad_w);
// Top-left crop of [B,C,H,W] to h x w.
TensorPtr crop2d(Tape* tape, const TensorPtr& x, int h, int w);

// Weighted mean of -log softmax probability of the true class.
// labels[i] == ignore_label contributes zero loss and zero gradient.
// class_weights empty means uniform weights.
TensorPtr softmax_cross_entropy(Tape* tape, const TensorPtr& logits,
                                const std::vector<int>& labels,
                                const std::vector<double>& class_weights,
                                int ignore_label);

// Row-wise argmax of [N,C]; ties resolved to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

// ---- optimizer -------------------------------------------------------------

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // (epoch, multiplier); multipliers compound once their epoch is reached
  std::vector<std::pair<int, double>> schedule;

  void validate() const;
  double lr_at(int epoch) const;
};

using ParamList = std::vector<std::pair<std::string, TensorPtr>>;

// v <- momentum*v + grad + weight_decay*param; param <- param - lr(epoch)*v.
// velocities must be sized like params (zero-initialized on first use).
void sgd_step(ParamList& params, std::vector<std::vector<double>>& velocities,
              const SgdConfig& config, int epoch);

void zero_grads(ParamList& params);

}  // namespace pointfuse
