#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "absope/error.hpp"

namespace absope {

/// A state abstraction on a finite state space, represented by the set
/// partition it induces. Block labels are always exactly {0, ..., n_blocks-1}.
class Partition {
 public:
  Partition() = default;

  /// Takes labels that must already be surjective onto {0..k-1}.
  explicit Partition(std::vector<std::size_t> block_of) : block_of_(std::move(block_of)) {
    if (block_of_.empty()) return;
    n_blocks_ = *std::max_element(block_of_.begin(), block_of_.end()) + 1;
    std::vector<bool> seen(n_blocks_, false);
    for (std::size_t b : block_of_) seen[b] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw InvalidInput("partition labels are not surjective onto {0.." +
                         std::to_string(n_blocks_ - 1) + "}");
  }

  /// Relabels arbitrary labels by order of first occurrence.
  static Partition from_labels(const std::vector<std::size_t>& labels) {
    std::vector<std::size_t> out(labels.size());
    std::vector<std::pair<std::size_t, std::size_t>> seen;  // (label, block)
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = std::find_if(seen.begin(), seen.end(),
                             [&](const auto& p) { return p.first == labels[i]; });
      if (it == seen.end()) {
        seen.emplace_back(labels[i], seen.size());
        out[i] = seen.size() - 1;
      } else {
        out[i] = it->second;
      }
    }
    return Partition(std::move(out));
  }

  static Partition identity(std::size_t n) {
    std::vector<std::size_t> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = i;
    return Partition(std::move(b));
  }

  static Partition single_block(std::size_t n) {
    return Partition(std::vector<std::size_t>(n, 0));
  }

  std::size_t size() const { return block_of_.size(); }
  std::size_t n_blocks() const { return n_blocks_; }
  std::size_t operator[](std::size_t s) const { return block_of_[s]; }
  const std::vector<std::size_t>& block_of() const { return block_of_; }

  std::vector<std::vector<std::size_t>> blocks() const {
    std::vector<std::vector<std::size_t>> out(n_blocks_);
    for (std::size_t s = 0; s < block_of_.size(); ++s) out[block_of_[s]].push_back(s);
    return out;
  }

  /// Lowest state index in each block.
  std::vector<std::size_t> representatives() const {
    std::vector<std::size_t> rep(n_blocks_, block_of_.size());
    for (std::size_t s = block_of_.size(); s-- > 0;) rep[block_of_[s]] = s;
    return rep;
  }

  bool is_canonical() const { return *this == from_labels(block_of_); }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<std::size_t> block_of_;
  std::size_t n_blocks_ = 0;
};

/// (outer o inner)(s) = outer(inner(s)), relabelled by first occurrence.
inline Partition compose(const Partition& outer, const Partition& inner) {
  if (outer.size() != inner.n_blocks())
    throw InvalidInput("compose: outer partition covers " + std::to_string(outer.size()) +
                       " elements but inner has " + std::to_string(inner.n_blocks()) +
                       " blocks");
  std::vector<std::size_t> labels(inner.size());
  for (std::size_t s = 0; s < inner.size(); ++s) labels[s] = outer[inner[s]];
  return Partition::from_labels(labels);
}

}  // namespace absope
