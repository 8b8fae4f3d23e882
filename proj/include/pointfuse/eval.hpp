#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pointfuse {

// row = ground truth, column = prediction; ignore-labeled points are skipped
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<int64_t> counts;  // C x C

  explicit ConfusionMatrix(int classes)
      : num_classes(classes),
        counts(static_cast<size_t>(classes) * classes, 0) {}

  void add(int gt, int pred);
  int64_t at(int gt, int pred) const {
    return counts[static_cast<size_t>(gt) * num_classes + pred];
  }
  int64_t total() const;
};

struct IouResult {
  std::vector<double> per_class;  // NaN-free; invalid classes hold 0
  std::vector<bool> valid;        // false when TP+FP+FN == 0
  double miou = 0;                // mean over valid classes only
};

IouResult miou(const ConfusionMatrix& cm);
double overall_accuracy(const ConfusionMatrix& cm);

struct MetricsRow {
  std::string key;    // epoch number, split name or keep ratio
  std::string split;
  double loss = 0;
  bool evaluable = true;
  IouResult iou;
};

// header: key,split,loss,miou,iou_<class>...
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows,
                       const std::vector<std::string>& class_names);

struct RobustnessRow {
  double ratio = 0;
  bool evaluable = false;
  IouResult iou;
};

// single polyline chart of mIoU against keep ratio
void write_robustness_svg(const std::filesystem::path& path,
                          const std::vector<RobustnessRow>& rows);

// uniform random subsample keeping round(ratio*N) points in original order;
// ratio 1 returns indices 0..N-1 unchanged
std::vector<int> subsample_indices(size_t n, double ratio, uint64_t seed);

}  // namespace pointfuse
