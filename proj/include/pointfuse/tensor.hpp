#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace pointfuse {

// Dense row-major n-d value with an optionally materialized gradient.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();  // allocate zeros if absent
  void zero_grad();    // drop accumulated gradient

  std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data);

size_t shape_numel(const std::vector<int>& shape);

// throws NumericError if any element is NaN/Inf
void check_finite(const Tensor& t, const char* what);

}  // namespace pointfuse
