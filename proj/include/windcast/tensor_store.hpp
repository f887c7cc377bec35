#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "windcast/error.hpp"

namespace windcast {

enum class TensorKind { weight, bias, gain };

/// Named dense tensors laid out back to back in one flat buffer, so the
/// optimizer, gradient clipping and persistence can treat a model as a
/// single parameter vector. Tensors are column-major.
class TensorStore {
 public:
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    TensorKind kind = TensorKind::weight;
    std::size_t size() const { return rows * cols; }
  };

  using Map = Eigen::Map<Eigen::MatrixXd>;
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;

  std::size_t add(std::string name, std::size_t rows, std::size_t cols,
                  TensorKind kind = TensorKind::weight) {
    entries_.push_back({std::move(name), data_.size(), rows, cols, kind});
    data_.resize(data_.size() + rows * cols, 0.0);
    return entries_.size() - 1;
  }

  Map operator[](std::size_t i) {
    const auto& e = entries_[i];
    return {data_.data() + e.offset, static_cast<Eigen::Index>(e.rows),
            static_cast<Eigen::Index>(e.cols)};
  }
  ConstMap operator[](std::size_t i) const {
    const auto& e = entries_[i];
    return {data_.data() + e.offset, static_cast<Eigen::Index>(e.rows),
            static_cast<Eigen::Index>(e.cols)};
  }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    throw DataError("no tensor named '" + name + "'");
  }

  /// Same layout, all zeros.
  TensorStore zeros_like() const {
    TensorStore out = *this;
    std::fill(out.data_.begin(), out.data_.end(), 0.0);
    return out;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  bool same_layout(const TensorStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::vector<double> data_;
};

}  // namespace windcast
