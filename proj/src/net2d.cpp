#include "pointfuse/net2d.hpp"

#include <algorithm>
#include <cmath>

#include "pointfuse/errors.hpp"

namespace pointfuse {

void Unet2dConfig::validate() const {
  if (width < 4 || height < 4)
    throw ValidationError("Unet2dConfig: image too small");
  if (stage_channels.empty())
    throw ValidationError("Unet2dConfig: at least one stage required");
  for (int c : stage_channels)
    if (c < 1) throw ValidationError("Unet2dConfig: channels must be positive");
  if (feature_dim < 1)
    throw ValidationError("Unet2dConfig: feature_dim must be >= 1");
  if (num_classes < 2)
    throw ValidationError("Unet2dConfig: need at least two classes");
}

namespace {

TensorPtr kaiming_conv(int cout, int cin, int kh, int kw, Rng& rng) {
  auto w = make_tensor({cout, cin, kh, kw});
  const double bound = std::sqrt(6.0 / (cin * kh * kw));
  for (double& v : w->data) v = rng.uniform(-bound, bound);
  return w;
}

ConvBn make_conv_bn(int cout, int cin, Rng& rng) {
  ConvBn layer;
  layer.w = kaiming_conv(cout, cin, 3, 3, rng);
  layer.b = make_tensor({cout});
  layer.gamma = make_tensor({cout});
  for (double& v : layer.gamma->data) v = 1.0;
  layer.beta = make_tensor({cout});
  layer.bn = BatchNormState(cout);
  return layer;
}

TensorPtr conv_bn_relu(Tape* tape, const TensorPtr& x, ConvBn& layer,
                       bool training) {
  return relu(tape,
              batchnorm(tape, conv2d(tape, x, layer.w, layer.b), layer.gamma,
                        layer.beta, layer.bn, training));
}

void collect_conv_bn(const std::string& prefix, const ConvBn& layer,
                     ParamList& params) {
  params.emplace_back(prefix + ".w", layer.w);
  params.emplace_back(prefix + ".b", layer.b);
  params.emplace_back(prefix + ".gamma", layer.gamma);
  params.emplace_back(prefix + ".beta", layer.beta);
}

}  // namespace

Net2d Net2d::init(const Unet2dConfig& cfg, Rng& rng) {
  cfg.validate();
  Net2d net;
  net.cfg = cfg;
  const auto& ch = cfg.stage_channels;
  const int stages = cfg.stages();
  int cin = 3;
  for (int s = 0; s < stages; ++s) {
    net.enc_a.push_back(make_conv_bn(ch[static_cast<size_t>(s)], cin, rng));
    net.enc_b.push_back(
        make_conv_bn(ch[static_cast<size_t>(s)], ch[static_cast<size_t>(s)], rng));
    cin = ch[static_cast<size_t>(s)];
  }
  for (int s = stages - 2; s >= 0; --s) {
    // transposed conv from the stage below, then a conv fusing the skip
    const int cup = ch[static_cast<size_t>(s) + 1];
    const int cs = ch[static_cast<size_t>(s)];
    auto w = make_tensor({cup, cs, 2, 2});
    const double bound = std::sqrt(6.0 / (cup * 4));
    for (double& v : w->data) v = rng.uniform(-bound, bound);
    net.up_w.push_back(std::move(w));
    net.up_b.push_back(make_tensor({cs}));
    net.dec.push_back(make_conv_bn(cs, 2 * cs, rng));
  }
  net.feat = make_conv_bn(cfg.feature_dim, ch[0], rng);
  net.head_w = make_tensor({cfg.num_classes, cfg.feature_dim});
  const double bound = std::sqrt(6.0 / cfg.feature_dim);
  for (double& v : net.head_w->data) v = rng.uniform(-bound, bound);
  net.head_b = make_tensor({cfg.num_classes});
  return net;
}

Net2d::Output Net2d::forward(Tape* tape, const TensorPtr& rgb, bool training) {
  if (rgb->rank() != 4 || rgb->dim(1) != 3 || rgb->dim(2) != cfg.height ||
      rgb->dim(3) != cfg.width)
    throw ShapeError("Net2d::forward: input must be [B,3," +
                     std::to_string(cfg.height) + "," +
                     std::to_string(cfg.width) + "]");
  const int stages = cfg.stages();
  const int mult = cfg.pad_multiple();
  const int ph = (mult - cfg.height % mult) % mult;
  const int pw = (mult - cfg.width % mult) % mult;

  TensorPtr x = ph || pw ? pad2d(tape, rgb, ph, pw) : rgb;
  std::vector<TensorPtr> skips;
  for (int s = 0; s < stages; ++s) {
    x = conv_bn_relu(tape, x, enc_a[static_cast<size_t>(s)], training);
    x = conv_bn_relu(tape, x, enc_b[static_cast<size_t>(s)], training);
    skips.push_back(x);
    if (s + 1 < stages) x = maxpool2d(tape, x);
  }
  x = skips.back();
  for (int d = 0; d < stages - 1; ++d) {
    const int s = stages - 2 - d;
    x = tconv2d(tape, x, up_w[static_cast<size_t>(d)],
                up_b[static_cast<size_t>(d)]);
    x = concat(tape, {x, skips[static_cast<size_t>(s)]});
    x = conv_bn_relu(tape, x, dec[static_cast<size_t>(d)], training);
  }
  x = conv_bn_relu(tape, x, feat, training);
  if (ph || pw) x = crop2d(tape, x, cfg.height, cfg.width);

  Output out;
  out.features = x;
  out.logits = linear(tape, nchw_to_rows(tape, x), head_w, head_b);
  return out;
}

void Net2d::collect_params(ParamList& out) const {
  for (size_t s = 0; s < enc_a.size(); ++s) {
    collect_conv_bn("net2d.enc" + std::to_string(s) + "a", enc_a[s], out);
    collect_conv_bn("net2d.enc" + std::to_string(s) + "b", enc_b[s], out);
  }
  for (size_t d = 0; d < dec.size(); ++d) {
    out.emplace_back("net2d.up" + std::to_string(d) + ".w", up_w[d]);
    out.emplace_back("net2d.up" + std::to_string(d) + ".b", up_b[d]);
    collect_conv_bn("net2d.dec" + std::to_string(d), dec[d], out);
  }
  collect_conv_bn("net2d.feat", feat, out);
  out.emplace_back("net2d.head.w", head_w);
  out.emplace_back("net2d.head.b", head_b);
}

void Net2d::collect_buffers(ParamList& out) const {
  auto add = [&out](const std::string& prefix, const ConvBn& layer) {
    out.emplace_back(prefix + ".running_mean", layer.bn.running_mean);
    out.emplace_back(prefix + ".running_var", layer.bn.running_var);
  };
  for (size_t s = 0; s < enc_a.size(); ++s) {
    add("net2d.enc" + std::to_string(s) + "a", enc_a[s]);
    add("net2d.enc" + std::to_string(s) + "b", enc_b[s]);
  }
  for (size_t d = 0; d < dec.size(); ++d)
    add("net2d.dec" + std::to_string(d), dec[d]);
  add("net2d.feat", feat);
}

ParamList Net2d::all_state() const {
  ParamList out;
  collect_params(out);
  collect_buffers(out);
  return out;
}

TensorPtr frames_to_batch(const std::vector<const RgbdFrame*>& frames,
                          const std::vector<bool>& flip) {
  if (frames.empty()) throw ValidationError("frames_to_batch: empty batch");
  const int w = frames[0]->width(), h = frames[0]->height();
  const int b = static_cast<int>(frames.size());
  auto x = make_tensor({b, 3, h, w});
  for (int bi = 0; bi < b; ++bi) {
    const RgbdFrame& f = *frames[static_cast<size_t>(bi)];
    if (f.width() != w || f.height() != h)
      throw ShapeError("frames_to_batch: mixed image sizes");
    const bool fl = flip[static_cast<size_t>(bi)];
    for (int c = 0; c < 3; ++c)
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const int su = fl ? w - 1 - u : u;
          x->data[((static_cast<size_t>(bi) * 3 + c) * h + v) * w + u] =
              f.rgb[3 * (static_cast<size_t>(v) * w + su) + c];
        }
  }
  return x;
}

std::vector<int> labels_to_rows(
    const std::vector<const std::vector<uint16_t>*>& labels2d, int width,
    int height, const std::vector<bool>& flip) {
  std::vector<int> out;
  out.reserve(labels2d.size() * static_cast<size_t>(width) * height);
  for (size_t bi = 0; bi < labels2d.size(); ++bi) {
    const auto& l = *labels2d[bi];
    if (l.size() != static_cast<size_t>(width) * height)
      throw ShapeError("labels_to_rows: label map size mismatch");
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u) {
        const int su = flip[bi] ? width - 1 - u : u;
        const uint16_t raw = l[static_cast<size_t>(v) * width + su];
        out.push_back(raw == 65535 ? -1 : static_cast<int>(raw));
      }
  }
  return out;
}

Net2d pretrain2d(const std::vector<const RgbdFrame*>& frames,
                 const std::vector<const std::vector<uint16_t>*>& labels2d,
                 const Unet2dConfig& cfg, const SgdConfig& sgd, int epochs,
                 int batch_size, bool flip_augment, uint64_t seed,
                 Pretrain2dLog* log) {
  if (frames.empty() || frames.size() != labels2d.size())
    throw ValidationError("pretrain2d: empty or misaligned dataset");
  sgd.validate();
  Rng init_rng(mix_seed(seed, 0x32646e6574ULL));
  Net2d net = Net2d::init(cfg, init_rng);

  ParamList params;
  net.collect_params(params);
  std::vector<std::vector<double>> velocities;

  std::vector<int> order(frames.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng erng(mix_seed(seed, 0x6570326441ULL, static_cast<uint64_t>(epoch)));
    shuffle(order, erng);
    double loss_sum = 0;
    int steps = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(batch_size)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(batch_size));
      std::vector<const RgbdFrame*> batch;
      std::vector<const std::vector<uint16_t>*> batch_labels;
      std::vector<bool> flip;
      for (size_t i = begin; i < end; ++i) {
        batch.push_back(frames[static_cast<size_t>(order[i])]);
        batch_labels.push_back(labels2d[static_cast<size_t>(order[i])]);
        flip.push_back(flip_augment && erng.uniform() < 0.5);
      }
      Tape tape;
      auto rgb = frames_to_batch(batch, flip);
      auto out = net.forward(&tape, rgb, /*training=*/true);
      auto labels = labels_to_rows(batch_labels, cfg.width, cfg.height, flip);
      auto loss = softmax_cross_entropy(&tape, out.logits, labels, {}, -1);
      check_finite(*loss, "pretrain2d loss");
      zero_grads(params);
      tape.backward(loss);
      sgd_step(params, velocities, sgd, epoch);
      loss_sum += loss->data[0];
      ++steps;
    }
    if (log) log->train_loss.push_back(loss_sum / std::max(1, steps));
  }

  if (log) {
    // pixel accuracy over the (unflipped) training set in eval mode
    size_t correct = 0, counted = 0;
    for (size_t i = 0; i < frames.size(); ++i) {
      auto rgb = frames_to_batch({frames[i]}, {false});
      auto out = net.forward(nullptr, rgb, /*training=*/false);
      auto labels = labels_to_rows({labels2d[i]}, cfg.width, cfg.height,
                                   {false});
      auto pred = argmax_rows(*out.logits);
      for (size_t p = 0; p < pred.size(); ++p) {
        if (labels[p] < 0) continue;
        ++counted;
        if (pred[p] == labels[p]) ++correct;
      }
    }
    log->final_train_pixel_acc =
        counted ? static_cast<double>(correct) / counted : 0.0;
  }
  return net;
}

}  // namespace pointfuse
