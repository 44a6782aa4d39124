#include "mca/positions.hpp"

#include <algorithm>
#include <unordered_set>

namespace mca {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::raster:
      return "raster";
    case Scheme::reverse_raster:
      return "reverse_raster";
    case Scheme::cca:
      return "cca";
    case Scheme::mca:
      return "mca";
    case Scheme::reverse_mca:
      return "reverse_mca";
  }
  return "unknown";
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  for (Scheme s : kAllSchemes) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string scheme_names() {
  std::string out;
  for (Scheme s : kAllSchemes) {
    if (!out.empty()) out += ", ";
    out += to_string(s);
  }
  return out;
}

GridSpec::GridSpec(int side) : side_(side) {
  if (side < 2 || side % 2 != 0) {
    throw InvalidGrid("grid side must be even and >= 2, got " + std::to_string(side));
  }
}

Position PositionLayout::max_index() const {
  return indices.empty() ? 0 : *std::max_element(indices.begin(), indices.end());
}

int count_distinct(std::span<const Position> indices) {
  std::unordered_set<Position> seen(indices.begin(), indices.end());
  return static_cast<int>(seen.size());
}

namespace {

template <typename F>
PositionLayout build(Scheme scheme, const GridSpec& grid, F&& index_of) {
  PositionLayout layout;
  layout.scheme = scheme;
  layout.side = grid.side();
  layout.indices.reserve(static_cast<std::size_t>(grid.total()));
  for (int r = 0; r < grid.side(); ++r) {
    for (int c = 0; c < grid.side(); ++c) {
      layout.indices.push_back(index_of(r, c));
    }
  }
  layout.num_distinct = count_distinct(layout.indices);
  return layout;
}

Coord2D mirrored(const GridSpec& grid, int r, int c) {
  const int last = grid.side() - 1;
  return {std::min(r, last - r), std::min(c, last - c)};
}

}  // namespace

PositionLayout raster_indices(const GridSpec& grid) {
  return build(Scheme::raster, grid, [&](int r, int c) { return Position(grid.cell(r, c)); });
}

PositionLayout reverse_raster_indices(const GridSpec& grid) {
  return build(Scheme::reverse_raster, grid,
               [&](int r, int c) { return Position(grid.total() - 1 - grid.cell(r, c)); });
}

std::vector<Coord2D> manhattan_coords(const GridSpec& grid) {
  std::vector<Coord2D> coords;
  coords.reserve(static_cast<std::size_t>(grid.total()));
  for (int r = 0; r < grid.side(); ++r) {
    for (int c = 0; c < grid.side(); ++c) {
      coords.push_back(mirrored(grid, r, c));
    }
  }
  return coords;
}

PositionLayout manhattan_indices(const GridSpec& grid) {
  return build(Scheme::mca, grid, [&](int r, int c) {
    const Coord2D p = mirrored(grid, r, c);
    return Position(p.x + p.y);
  });
}

PositionLayout reverse_mca_indices(const GridSpec& grid) {
  // (side - 2) is the largest Manhattan index, so this flips the order.
  return build(Scheme::reverse_mca, grid, [&](int r, int c) {
    const Coord2D p = mirrored(grid, r, c);
    return Position(grid.side() - 2 - (p.x + p.y));
  });
}

PositionLayout cca_indices(const GridSpec& grid) {
  // Outermost ring is 0; the center rings carry the largest index.
  return build(Scheme::cca, grid, [&](int r, int c) {
    const Coord2D p = mirrored(grid, r, c);
    return Position(std::min(p.x, p.y));
  });
}

PositionLayout make_layout(Scheme scheme, const GridSpec& grid) {
  switch (scheme) {
    case Scheme::raster:
      return raster_indices(grid);
    case Scheme::reverse_raster:
      return reverse_raster_indices(grid);
    case Scheme::cca:
      return cca_indices(grid);
    case Scheme::mca:
      return manhattan_indices(grid);
    case Scheme::reverse_mca:
      return reverse_mca_indices(grid);
  }
  throw InvalidArgument("unknown scheme");
}

}  // namespace mca
