#pragma once

// Multimodal sequences (prefix text, image block, instruction suffix) and the
// visibility masks induced by their assigned position indices.

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

#include "mca/positions.hpp"

namespace mca {

// visible(i, j): query i may attend to key j.
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class MultimodalSequence {
 public:
  // Text-only sequence with sequential indices 0..length-1.
  static MultimodalSequence text_only(int length);

  int prefix_len() const { return prefix_len_; }
  int suffix_len() const { return suffix_len_; }
  const std::optional<GridSpec>& grid() const { return grid_; }
  int image_len() const { return grid_ ? grid_->total() : 0; }
  int size() const { return prefix_len_ + image_len() + suffix_len_; }

  int image_begin() const { return prefix_len_; }
  int suffix_begin() const { return prefix_len_ + image_len(); }
  bool is_image(int i) const { return i >= image_begin() && i < suffix_begin(); }
  bool is_suffix(int i) const { return i >= suffix_begin(); }

  const std::vector<Position>& assigned_index() const { return assigned_; }
  std::span<const Position> image_indices() const {
    return std::span<const Position>(assigned_).subspan(image_begin(), image_len());
  }

 private:
  friend MultimodalSequence build_sequence(int, const GridSpec&, int, const PositionLayout&);
  MultimodalSequence() = default;

  int prefix_len_ = 0;
  std::optional<GridSpec> grid_;
  int suffix_len_ = 0;
  std::vector<Position> assigned_;
};

// Prefix tokens take 0..prefix-1, image tokens prefix + layout index, and the
// suffix continues from prefix + layout.num_distinct.
MultimodalSequence build_sequence(int prefix_len, const GridSpec& grid, int suffix_len,
                                  const PositionLayout& layout);

MaskMatrix lower_triangular_mask(int n);

// visible(i, j) = assigned[j] <= assigned[i]; equal indices see each other.
MaskMatrix index_causal_mask(std::span<const Position> assigned);
MaskMatrix index_causal_mask(const MultimodalSequence& seq);

struct MaskStats {
  std::vector<int> row_counts;
  long total_visible = 0;
  // Within the image block: ordered pairs (i, j), i != j, with
  // visible(i, j) != visible(j, i).
  long symmetry_violations = 0;
  // Within the image block: unordered pairs with equal assigned index that
  // are mutually visible.
  long equal_index_pairs = 0;
};

MaskStats mask_stats(const MaskMatrix& mask);
MaskStats mask_stats(const MaskMatrix& mask, const MultimodalSequence& seq);

// True when no image-token query can see a suffix key.
bool image_rows_blind_to_suffix(const MaskMatrix& mask, const MultimodalSequence& seq);

}  // namespace mca
