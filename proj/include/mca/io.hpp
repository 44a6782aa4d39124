#pragma once

// Serialization of layouts, masks, heatmaps, decay curves and toy-model
// artifacts. Every writer is deterministic: the same input produces the same
// bytes.

#include <Eigen/Dense>

#include <ostream>
#include <span>
#include <string>

#include "json.hpp"
#include "mca/attention.hpp"
#include "mca/masks.hpp"
#include "mca/positions.hpp"
#include "mca/toy_model.hpp"

namespace mca::io {

using nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

json layout_to_json(const PositionLayout& layout);
PositionLayout layout_from_json(const json& j);
// One line per grid row, comma separated.
void write_layout_csv(std::ostream& out, const PositionLayout& layout);
// Fixed-width ASCII table of the index grid.
std::string layout_table(const PositionLayout& layout);

// P2 grayscale, 0 = blocked, 255 = visible.
void write_mask_pgm(std::ostream& out, const MaskMatrix& mask);
json mask_to_json(const MaskMatrix& mask, std::span<const Position> assigned);
MaskMatrix mask_from_json(const json& j);

struct HeatmapBounds {
  double min = 0.0;
  double max = 0.0;
};

HeatmapBounds bounds_of(const Eigen::MatrixXd& grid);
// P2 with linear min-max normalization to 0..255. A constant grid maps to 0.
void write_heatmap_pgm(std::ostream& out, const Eigen::MatrixXd& grid, const HeatmapBounds& bounds);
// Cells colored on a fixed 8-stop viridis-like ramp.
void write_heatmap_svg(std::ostream& out, const Eigen::MatrixXd& grid, const HeatmapBounds& bounds,
                       int cell_px = 16);
json bounds_to_json(const HeatmapBounds& bounds);

void write_grid_csv(std::ostream& out, const Eigen::MatrixXd& grid);
void write_decay_csv(std::ostream& out, const DecayProfile& profile);
void write_loss_csv(std::ostream& out, std::span<const double> loss_trace);

json config_to_json(const ToyModelConfig& cfg);
// Reads known keys over `base`; unknown keys are rejected.
ToyModelConfig config_from_json(const json& j, ToyModelConfig base = {});

json model_to_json(const ToyModel& model);
ToyModel model_from_json(const json& j);

json report_to_json(const RegionReport& report);
RegionReport report_from_json(const json& j);

// Shortest round-trippable decimal form.
std::string format_double(double v);

}  // namespace mca::io
