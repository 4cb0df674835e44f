#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "unlearn/tensor.hpp"

namespace unlearn {

struct Tensor {
  std::string name;
  Matrix value;
};

/// Ordered list of named parameter tensors. Gradients use the same layout.
class ParameterSet {
 public:
  ParameterSet() = default;

  Matrix& add(std::string name, Matrix value);

  std::size_t size() const noexcept { return tensors_.size(); }
  Matrix& operator[](std::size_t i) { return tensors_[i].value; }
  const Matrix& operator[](std::size_t i) const { return tensors_[i].value; }
  const std::string& name(std::size_t i) const { return tensors_[i].name; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

  /// Total scalar count.
  std::size_t count() const;
  ParameterSet zeros_like() const;
  void set_zero();
  bool same_shape(const ParameterSet& other) const;
  bool all_finite() const;
  double squared_norm() const;
  /// this += alpha * other.
  void add_scaled(const ParameterSet& other, double alpha);

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<Tensor> tensors_;
};

/// Gradients of one loss evaluation: parameter gradients plus the
/// per-position gradient w.r.t. the input embeddings (T x m).
struct GradientBundle {
  ParameterSet params;
  Matrix input_grads;
  /// Span model only: gradient w.r.t. the question embeddings.
  Matrix question_grads;
  double loss = 0.0;
};

/// L2 norm of all parameter gradients concatenated.
double grad_global_norm(const ParameterSet& grads);
inline double grad_global_norm(const GradientBundle& g) { return grad_global_norm(g.params); }

}  // namespace unlearn
