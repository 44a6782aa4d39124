#include "mca/masks.hpp"

#include <algorithm>

namespace mca {

MultimodalSequence MultimodalSequence::text_only(int length) {
  if (length < 0) throw InvalidArgument("sequence length must be nonnegative");
  MultimodalSequence seq;
  seq.prefix_len_ = length;
  seq.assigned_.resize(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) seq.assigned_[static_cast<std::size_t>(i)] = i;
  return seq;
}

MultimodalSequence build_sequence(int prefix_len, const GridSpec& grid, int suffix_len,
                                  const PositionLayout& layout) {
  if (prefix_len < 0 || suffix_len < 0) {
    throw InvalidArgument("prefix and suffix lengths must be nonnegative");
  }
  if (layout.side != grid.side() || static_cast<int>(layout.indices.size()) != grid.total()) {
    throw ShapeError("layout does not match a grid of side " + std::to_string(grid.side()));
  }

  MultimodalSequence seq;
  seq.prefix_len_ = prefix_len;
  seq.grid_ = grid;
  seq.suffix_len_ = suffix_len;
  seq.assigned_.reserve(static_cast<std::size_t>(seq.size()));
  for (int i = 0; i < prefix_len; ++i) seq.assigned_.push_back(i);
  for (Position idx : layout.indices) seq.assigned_.push_back(prefix_len + idx);
  const Position suffix_start = Position(prefix_len) + layout.num_distinct;
  for (int i = 0; i < suffix_len; ++i) seq.assigned_.push_back(suffix_start + i);
  return seq;
}

MaskMatrix lower_triangular_mask(int n) {
  MaskMatrix m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = j <= i;
  }
  return m;
}

MaskMatrix index_causal_mask(std::span<const Position> assigned) {
  const auto n = static_cast<Eigen::Index>(assigned.size());
  MaskMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = assigned[j] <= assigned[i];
  }
  return m;
}

MaskMatrix index_causal_mask(const MultimodalSequence& seq) {
  return index_causal_mask(std::span<const Position>(seq.assigned_index()));
}

namespace {

MaskStats row_stats(const MaskMatrix& mask) {
  MaskStats stats;
  stats.row_counts.resize(static_cast<std::size_t>(mask.rows()));
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    const int count = static_cast<int>(mask.row(i).count());
    stats.row_counts[static_cast<std::size_t>(i)] = count;
    stats.total_visible += count;
  }
  return stats;
}

}  // namespace

MaskStats mask_stats(const MaskMatrix& mask) { return row_stats(mask); }

MaskStats mask_stats(const MaskMatrix& mask, const MultimodalSequence& seq) {
  if (mask.rows() != seq.size() || mask.cols() != seq.size()) {
    throw ShapeError("mask size does not match sequence length");
  }
  MaskStats stats = row_stats(mask);
  const auto& idx = seq.assigned_index();
  const int b = seq.image_begin();
  const int e = seq.suffix_begin();
  for (int i = b; i < e; ++i) {
    for (int j = b; j < e; ++j) {
      if (i == j) continue;
      if (mask(i, j) != mask(j, i)) ++stats.symmetry_violations;
      if (j > i && idx[static_cast<std::size_t>(i)] == idx[static_cast<std::size_t>(j)] &&
          mask(i, j) && mask(j, i)) {
        ++stats.equal_index_pairs;
      }
    }
  }
  return stats;
}

bool image_rows_blind_to_suffix(const MaskMatrix& mask, const MultimodalSequence& seq) {
  const int s = seq.suffix_begin();
  if (seq.suffix_len() == 0) return true;
  return !mask.block(seq.image_begin(), s, seq.image_len(), seq.suffix_len()).any();
}

}  // namespace mca
