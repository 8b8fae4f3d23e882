#include "pointfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pointfuse/errors.hpp"
#include "pointfuse/rng.hpp"

namespace pointfuse {

void ConfusionMatrix::add(int gt, int pred) {
  if (gt < 0) return;  // ignore-labeled ground truth
  if (gt >= num_classes || pred < 0 || pred >= num_classes)
    throw ValidationError("ConfusionMatrix: class id out of range");
  ++counts[static_cast<size_t>(gt) * num_classes + pred];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

IouResult miou(const ConfusionMatrix& cm) {
  const int C = cm.num_classes;
  IouResult res;
  res.per_class.assign(static_cast<size_t>(C), 0.0);
  res.valid.assign(static_cast<size_t>(C), false);
  double sum = 0;
  int n_valid = 0;
  for (int c = 0; c < C; ++c) {
    const int64_t tp = cm.at(c, c);
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const int64_t denom = tp + fp + fn;
    if (denom == 0) continue;  // class absent everywhere: excluded from mean
    res.per_class[static_cast<size_t>(c)] =
        static_cast<double>(tp) / static_cast<double>(denom);
    res.valid[static_cast<size_t>(c)] = true;
    sum += res.per_class[static_cast<size_t>(c)];
    ++n_valid;
  }
  res.miou = n_valid ? sum / n_valid : 0.0;
  return res;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const int64_t t = cm.total();
  if (t == 0) return 0.0;
  int64_t correct = 0;
  for (int c = 0; c < cm.num_classes; ++c) correct += cm.at(c, c);
  return static_cast<double>(correct) / static_cast<double>(t);
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows,
                       const std::vector<std::string>& class_names) {
  std::ofstream out(path);
  if (!out) throw DependencyError("cannot write " + path.string());
  out << "key,split,loss,miou";
  for (const auto& n : class_names) out << ",iou_" << n;
  out << "\n";
  for (const auto& r : rows) {
    out << r.key << "," << r.split << "," << fmt(r.loss) << ",";
    if (!r.evaluable) {
      out << "unevaluable";
      for (size_t c = 0; c < class_names.size(); ++c) out << ",";
      out << "\n";
      continue;
    }
    out << fmt(r.iou.miou);
    for (size_t c = 0; c < class_names.size(); ++c) {
      out << ",";
      if (c < r.iou.valid.size() && r.iou.valid[c])
        out << fmt(r.iou.per_class[c]);
    }
    out << "\n";
  }
}

void write_robustness_svg(const std::filesystem::path& path,
                          const std::vector<RobustnessRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DependencyError("cannot write " + path.string());
  const int W = 480, H = 320, ml = 56, mr = 16, mt = 16, mb = 44;
  const double px = ml, pw = W - ml - mr, py = mt, ph = H - mt - mb;
  auto xmap = [&](double ratio) { return px + ratio * pw; };
  auto ymap = [&](double v) { return py + (1.0 - v) * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  // axes
  out << "<line x1=\"" << px << "\" y1=\"" << py + ph << "\" x2=\"" << px + pw
      << "\" y2=\"" << py + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px << "\" y1=\"" << py << "\" x2=\"" << px
      << "\" y2=\"" << py + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    out << "<line x1=\"" << px - 4 << "\" y1=\"" << ymap(v) << "\" x2=\"" << px
        << "\" y2=\"" << ymap(v) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px - 8 << "\" y=\"" << ymap(v) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(v) << "</text>\n";
    out << "<line x1=\"" << xmap(v) << "\" y1=\"" << py + ph << "\" x2=\""
        << xmap(v) << "\" y2=\"" << py + ph + 4 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << xmap(v) << "\" y=\"" << py + ph + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(v)
        << "</text>\n";
  }
  out << "<text x=\"" << px + pw / 2 << "\" y=\"" << H - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">keep ratio</text>\n";
  out << "<text x=\"14\" y=\"" << py + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
      << py + ph / 2 << ")\">mIoU</text>\n";

  std::string pts;
  for (const auto& r : rows) {
    if (!r.evaluable) continue;
    pts += fmt(xmap(r.ratio)) + "," + fmt(ymap(r.iou.miou)) + " ";
  }
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" "
         "points=\""
      << pts << "\"/>\n";
  for (const auto& r : rows) {
    if (!r.evaluable) continue;
    out << "<circle cx=\"" << xmap(r.ratio) << "\" cy=\"" << ymap(r.iou.miou)
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  out << "</svg>\n";
}

std::vector<int> subsample_indices(size_t n, double ratio, uint64_t seed) {
  if (ratio < 0 || ratio > 1)
    throw ValidationError("subsample_indices: ratio must be in [0,1]");
  const int keep = static_cast<int>(std::lround(ratio * static_cast<double>(n)));
  std::vector<int> out;
  if (keep <= 0) return out;
  if (static_cast<size_t>(keep) >= n) {
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i);
    return out;
  }
  Rng rng(mix_seed(seed, 0x737562ULL));
  return sample_without_replacement(static_cast<int>(n), keep, rng);
}

}  // namespace pointfuse
