#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointfuse/autodiff.hpp"
#include "pointfuse/geometry.hpp"
#include "pointfuse/rng.hpp"

namespace pointfuse {

struct Unet2dConfig {
  int width = 40, height = 30;
  std::vector<int> stage_channels{16, 32, 64};
  int feature_dim = 64;
  int num_classes = 6;

  int stages() const { return static_cast<int>(stage_channels.size()); }
  // inputs are padded internally to this multiple, outputs cropped back
  int pad_multiple() const { return 1 << (stages() - 1); }
  void validate() const;
};

struct ConvBn {
  TensorPtr w, b, gamma, beta;
  BatchNormState bn;
};

// U-Net-style encoder-decoder. The per-pixel feature map (last pre-head
// activation) and the segmentation logits share one trunk.
struct Net2d {
  Unet2dConfig cfg;
  std::vector<ConvBn> enc_a, enc_b;      // two conv blocks per stage
  std::vector<TensorPtr> up_w, up_b;     // transposed conv per decoder step
  std::vector<ConvBn> dec;               // skip-fusion conv per decoder step
  ConvBn feat;                           // stage0 channels -> feature_dim
  TensorPtr head_w, head_b;              // 1x1 head as a per-pixel linear

  static Net2d init(const Unet2dConfig& cfg, Rng& rng);

  struct Output {
    TensorPtr features;  // [B, feature_dim, H, W]
    TensorPtr logits;    // [B*H*W, num_classes], batch-major pixel rows
  };
  Output forward(Tape* tape, const TensorPtr& rgb, bool training);

  void collect_params(ParamList& out) const;   // trainable
  void collect_buffers(ParamList& out) const;  // batchnorm running stats
  ParamList all_state() const;
};

// [B,3,H,W] tensor from frames; flip mirrors u -> W-1-u.
TensorPtr frames_to_batch(const std::vector<const RgbdFrame*>& frames,
                          const std::vector<bool>& flip);
// batch-major pixel labels aligned with Net2d logits rows; 65535 -> -1
std::vector<int> labels_to_rows(
    const std::vector<const std::vector<uint16_t>*>& labels2d, int width,
    int height, const std::vector<bool>& flip);

struct Pretrain2dLog {
  std::vector<double> train_loss;     // per epoch
  double final_train_pixel_acc = 0;
};

// 2D segmentation pretraining with random horizontal flip.
Net2d pretrain2d(const std::vector<const RgbdFrame*>& frames,
                 const std::vector<const std::vector<uint16_t>*>& labels2d,
                 const Unet2dConfig& cfg, const SgdConfig& sgd, int epochs,
                 int batch_size, bool flip_augment, uint64_t seed,
                 Pretrain2dLog* log = nullptr);

}  // namespace pointfuse
