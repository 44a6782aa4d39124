#pragma once

// Position-index layouts for a square grid of image tokens.
//
// Cells are addressed (row, col), top-to-bottom and left-to-right, and every
// per-cell array is stored row-major. The MCA layout mirrors the grid into
// four quadrants with an origin at each corner; the index of a cell is the
// sum of its mirrored coordinates.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mca/rope.hpp"

namespace mca {

enum class Scheme { raster, reverse_raster, cca, mca, reverse_mca };

inline constexpr std::array<Scheme, 5> kAllSchemes = {
    Scheme::raster, Scheme::reverse_raster, Scheme::cca, Scheme::mca, Scheme::reverse_mca};

std::string_view to_string(Scheme scheme);
std::optional<Scheme> parse_scheme(std::string_view name);
// "raster, reverse_raster, ..." for usage messages.
std::string scheme_names();

class GridSpec {
 public:
  // Throws InvalidGrid unless side is even and >= 2.
  explicit GridSpec(int side);

  int side() const { return side_; }
  int total() const { return side_ * side_; }
  int half() const { return side_ / 2; }
  int cell(int row, int col) const { return row * side_ + col; }
  int row_of(int cell) const { return cell / side_; }
  int col_of(int cell) const { return cell % side_; }

  bool operator==(const GridSpec&) const = default;

 private:
  int side_;
};

struct Coord2D {
  int x = 0;
  int y = 0;
  auto operator<=>(const Coord2D&) const = default;
};

struct PositionLayout {
  Scheme scheme = Scheme::raster;
  int side = 0;
  std::vector<Position> indices;  // row-major, length side*side
  int num_distinct = 0;

  Position at(int row, int col) const { return indices[static_cast<std::size_t>(row * side + col)]; }
  Position max_index() const;
};

PositionLayout raster_indices(const GridSpec& grid);
PositionLayout reverse_raster_indices(const GridSpec& grid);
std::vector<Coord2D> manhattan_coords(const GridSpec& grid);
PositionLayout manhattan_indices(const GridSpec& grid);
PositionLayout reverse_mca_indices(const GridSpec& grid);
PositionLayout cca_indices(const GridSpec& grid);
PositionLayout make_layout(Scheme scheme, const GridSpec& grid);

// (b.x - a.x) + (b.y - a.y). Signed, not the Manhattan metric.
constexpr Position signed_manhattan_delta(Coord2D a, Coord2D b) {
  return Position(b.x - a.x) + Position(b.y - a.y);
}

int count_distinct(std::span<const Position> indices);

}  // namespace mca
