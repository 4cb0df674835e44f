#include "unlearn/parameters.hpp"

#include <cmath>

#include "unlearn/error.hpp"

namespace unlearn {

Matrix& ParameterSet::add(std::string name, Matrix value) {
  tensors_.push_back({std::move(name), std::move(value)});
  return tensors_.back().value;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& t : tensors_) out.add(t.name, Matrix::Zero(t.value.rows(), t.value.cols()));
  return out;
}

void ParameterSet::set_zero() {
  for (auto& t : tensors_) t.value.setZero();
}

bool ParameterSet::same_shape(const ParameterSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (tensors_[i].value.rows() != other[i].rows() || tensors_[i].value.cols() != other[i].cols()) return false;
  return true;
}

bool ParameterSet::all_finite() const {
  for (const auto& t : tensors_)
    if (!t.value.allFinite()) return false;
  return true;
}

double ParameterSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) s += t.value.squaredNorm();
  return s;
}

void ParameterSet::add_scaled(const ParameterSet& other, double alpha) {
  if (!same_shape(other)) throw Error("parameter shapes do not match");
  for (std::size_t i = 0; i < size(); ++i) tensors_[i].value += alpha * other[i];
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors_[i].name != other.name(i)) return false;
    if (tensors_[i].value != other[i]) return false;
  }
  return true;
}

double grad_global_norm(const ParameterSet& grads) { return std::sqrt(grads.squared_norm()); }

}  // namespace unlearn
