#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pointfuse/autodiff.hpp"

namespace pointfuse {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

// Central finite differences against the tape's analytic gradients.
// `forward` must rebuild the scalar loss from the current contents of
// `inputs`; it runs once on a tape for the analytic side and twice per probed
// coordinate for the numeric side. max_coords == 0 probes every coordinate,
// otherwise a seeded random subset per tensor.
double gradcheck_max_rel_err(const std::vector<TensorPtr>& inputs,
                             const std::function<TensorPtr(Tape*)>& forward,
                             double h = 1e-4, int max_coords = 0,
                             uint64_t seed = 0);

// The full suite: every primitive, the feature aggregation module, one set
// abstraction layer, one feature propagation layer, the 2d encoder-decoder,
// and each fusion variant end to end on a micro chunk.
std::vector<GradCheckCase> run_gradcheck_suite();

constexpr double kGradCheckTol = 1e-4;

}  // namespace pointfuse
