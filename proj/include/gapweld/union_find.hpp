#pragma once

#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

namespace gapweld {

// Union by rank with path halving over dense indices [0, n).
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t e) {
    while (e != parent_[e]) {
      parent_[e] = parent_[parent_[e]];
      e = parent_[e];
    }
    return e;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<unsigned> rank_;
};

}  // namespace gapweld
