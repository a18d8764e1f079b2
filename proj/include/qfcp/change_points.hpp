#pragma once

#include <algorithm>
#include <initializer_list>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfcp {

/// Sorted 1-based indices i in {2..n} where beta_i != beta_{i-1}.
class ChangePointSet {
 public:
  ChangePointSet() = default;
  explicit ChangePointSet(std::vector<int> indices) : indices_(std::move(indices)) {
    for (std::size_t k = 1; k < indices_.size(); ++k)
      if (indices_[k] <= indices_[k - 1]) throw std::invalid_argument("change-point indices must be strictly increasing");
  }
  ChangePointSet(std::initializer_list<int> il) : ChangePointSet(std::vector<int>(il)) {}

  void validate(int n) const {
    for (int t : indices_)
      if (t < 2 || t > n)
        throw std::invalid_argument("change-point " + std::to_string(t) + " outside {2.." + std::to_string(n) + "}");
  }

  [[nodiscard]] const std::vector<int>& indices() const { return indices_; }
  [[nodiscard]] std::size_t size() const { return indices_.size(); }
  [[nodiscard]] bool empty() const { return indices_.empty(); }
  [[nodiscard]] int operator[](std::size_t k) const { return indices_[k]; }
  [[nodiscard]] auto begin() const { return indices_.begin(); }
  [[nodiscard]] auto end() const { return indices_.end(); }
  [[nodiscard]] bool contains(int t) const { return std::binary_search(indices_.begin(), indices_.end(), t); }

  /// Minimal / maximal gap between consecutive phase starts, with t_0 = 1 and
  /// the final boundary at n; n when empty.
  [[nodiscard]] int min_gap(int n) const {
    if (indices_.empty()) return n;
    int prev = 1, best = n;
    for (int t : indices_) { best = std::min(best, t - prev); prev = t; }
    return std::min(best, n - prev);
  }
  [[nodiscard]] int max_gap(int n) const {
    int prev = 1, best = 0;
    for (int t : indices_) { best = std::max(best, t - prev); prev = t; }
    return std::max(best, n - prev);
  }

  friend bool operator==(const ChangePointSet&, const ChangePointSet&) = default;

  friend std::ostream& operator<<(std::ostream& os, const ChangePointSet& s) {
    os << '{';
    for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s.indices_[k];
    return os << '}';
  }

 private:
  std::vector<int> indices_;
};

}  // namespace qfcp
