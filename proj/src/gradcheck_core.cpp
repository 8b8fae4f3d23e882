#include <algorithm>
#include <cmath>

#include "pointfuse/errors.hpp"
#include "pointfuse/gradcheck.hpp"
#include "pointfuse/rng.hpp"

namespace pointfuse {

double gradcheck_max_rel_err(const std::vector<TensorPtr>& inputs,
                             const std::function<TensorPtr(Tape*)>& forward,
                             double h, int max_coords, uint64_t seed) {
  // analytic gradients
  for (const auto& t : inputs) t->zero_grad();
  Tape tape;
  TensorPtr loss = forward(&tape);
  if (loss->numel() != 1)
    throw ShapeError("gradcheck: forward must produce a scalar");
  tape.backward(loss);

  double max_rel = 0.0;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = *inputs[ti];
    t.ensure_grad();
    std::vector<size_t> coords;
    if (max_coords <= 0 || t.numel() <= static_cast<size_t>(max_coords)) {
      coords.resize(t.numel());
      for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      Rng rng(mix_seed(seed, 0x67636b64ULL, ti));
      auto picks = sample_without_replacement(static_cast<int>(t.numel()),
                                              max_coords, rng);
      coords.assign(picks.begin(), picks.end());
    }
    for (size_t ci : coords) {
      const double saved = t.data[ci];
      t.data[ci] = saved + h;
      const double lp = forward(nullptr)->data[0];
      t.data[ci] = saved - h;
      const double lm = forward(nullptr)->data[0];
      t.data[ci] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = t.grad[ci];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace pointfuse
