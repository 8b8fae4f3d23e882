#include "pointfuse/tensor.hpp"

#include <cmath>

#include "pointfuse/errors.hpp"

namespace pointfuse {

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(shape_numel(shape), 0.0);
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.clear(); }

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

TensorPtr make_tensor(std::vector<int> shape) {
  return std::make_shared<Tensor>(std::move(shape));
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data) {
  auto t = std::make_shared<Tensor>(std::move(shape));
  if (data.size() != t->data.size())
    throw ShapeError("tensor data length does not match shape " +
                     t->shape_str());
  t->data = std::move(data);
  return t;
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace pointfuse
