#include "ihvrnn/params.hpp"

#include <cmath>

#include "ihvrnn/errors.hpp"

namespace ihvrnn {

void ParamTree::add(const std::string& name, Matrix init) {
  if (contains(name)) throw ContractViolation("duplicate parameter name: " + name);
  index_[name] = names_.size();
  names_.push_back(name);
  values_.push_back(std::move(init));
}

void ParamTree::add_glorot(const std::string& name, int rows, int cols, int fan_in, int fan_out,
                           Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  add(name, std::move(m));
}

const Matrix& ParamTree::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
  return values_[it->second];
}

void ParamTree::assign(const std::string& name, const Matrix& value) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
  if (!values_[it->second].same_shape(value)) throw ShapeError("shape mismatch assigning " + name);
  values_[it->second] = value;
}

std::span<double> ParamTree::values(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
  return values_[it->second].values();
}

std::size_t ParamTree::total_size() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::pair<std::size_t, std::size_t> ParamTree::locate(std::size_t flat) const {
  for (std::size_t e = 0; e < values_.size(); ++e) {
    if (flat < values_[e].size()) return {e, flat};
    flat -= values_[e].size();
  }
  throw ShapeError("flat parameter coordinate out of range");
}

double& ParamTree::coord(std::size_t flat) {
  auto [e, off] = locate(flat);
  return values_[e].data()[off];
}

double ParamTree::coord(std::size_t flat) const {
  auto [e, off] = locate(flat);
  return values_[e].data()[off];
}

ParamTree ParamTree::zeros_like() const {
  ParamTree out;
  for (std::size_t e = 0; e < names_.size(); ++e) out.add_zeros(names_[e], values_[e].rows(), values_[e].cols());
  return out;
}

bool ParamTree::same_layout(const ParamTree& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t e = 0; e < values_.size(); ++e)
    if (!values_[e].same_shape(other.values_[e])) return false;
  return true;
}

ad::Var ParamBinding::get(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  ad::Var v = tape_.variable(params_.at(name));
  leaves_.emplace(name, v);
  return v;
}

ParamTree ParamBinding::gradients() const {
  ParamTree out = params_.zeros_like();
  for (const auto& [name, var] : leaves_) out.assign(name, tape_.grad_of(var));
  return out;
}

}  // namespace ihvrnn
