#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ihvrnn/matrix.hpp"
#include "ihvrnn/rng.hpp"
#include "ihvrnn/tape.hpp"

namespace ihvrnn {

// Named collection of learnable arrays. Names are unique and shapes are fixed
// once added; values may change.
class ParamTree {
 public:
  void add(const std::string& name, Matrix init);
  // Uniform on +-sqrt(6 / (fan_in + fan_out)).
  void add_glorot(const std::string& name, int rows, int cols, int fan_in, int fan_out, Rng& rng);
  void add_zeros(const std::string& name, int rows, int cols) { add(name, Matrix(rows, cols)); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Matrix& at(const std::string& name) const;
  // Overwrites values; the shape must match.
  void assign(const std::string& name, const Matrix& value);
  std::span<double> values(const std::string& name);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t total_size() const;

  // Flat coordinate view across all entries in insertion order.
  double& coord(std::size_t flat);
  double coord(std::size_t flat) const;

  ParamTree zeros_like() const;
  bool same_layout(const ParamTree& other) const;

  friend bool operator==(const ParamTree& a, const ParamTree& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t flat) const;

  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, std::size_t> index_;
};

// Binds a ParamTree onto a tape. Leaves are created on first use, so parameters
// a forward pass never touches receive zero gradient.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamTree& params) : tape_(tape), params_(params) {}

  ad::Var get(const std::string& name);
  ad::Tape& tape() { return tape_; }
  const ParamTree& params() const { return params_; }

  // Gradients of every parameter after tape.backward(); same layout as params.
  ParamTree gradients() const;

 private:
  ad::Tape& tape_;
  const ParamTree& params_;
  std::unordered_map<std::string, ad::Var> leaves_;
};

}  // namespace ihvrnn
