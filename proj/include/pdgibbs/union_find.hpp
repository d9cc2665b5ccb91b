#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace pdgibbs {

/// Disjoint sets with path halving and union by size. Each set also tracks
/// its smallest member, which gives clusters an ordering-independent key.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1), min_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    std::iota(min_.begin(), min_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  /// Returns false when a and b were already connected.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    if (min_[b] < min_[a]) min_[a] = min_[b];
    return true;
  }

  std::size_t min_member(std::size_t x) { return min_[find(x)]; }

  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<std::size_t> min_;
};

}  // namespace pdgibbs
