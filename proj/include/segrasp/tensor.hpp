#pragma once
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace segrasp {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream o;
  o << "[";
  for (size_t i = 0; i < s.size(); i++) o << (i ? "," : "") << s[i];
  o << "]";
  return o.str();
}

inline size_t shape_numel(const std::vector<int>& s) {
  size_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
    n *= static_cast<size_t>(e);
  }
  return n;
}

// Dense row-major tensor of f32 or f64 scalars.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> sh) : shape(std::move(sh)), v(shape_numel(shape), S(0)) {}

  size_t size() const { return v.size(); }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  void zero() { std::fill(v.begin(), v.end(), S(0)); }

  bool same_shape(const std::vector<int>& other) const { return shape == other; }
  void require_shape(const std::vector<int>& want, const char* who) const {
    if (shape != want)
      throw ShapeError(std::string(who) + ": got " + shape_str(shape) + ", want " +
                       shape_str(want));
  }
};

}  // namespace segrasp
