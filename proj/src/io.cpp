#include "mca/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace mca::io {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

json layout_to_json(const PositionLayout& layout) {
  return json{{"scheme", std::string(to_string(layout.scheme))},
              {"side", layout.side},
              {"indices", layout.indices},
              {"num_distinct", layout.num_distinct}};
}

PositionLayout layout_from_json(const json& j) {
  const auto scheme = parse_scheme(j.at("scheme").get<std::string>());
  if (!scheme) throw InvalidArgument("unknown scheme in layout document");
  PositionLayout layout;
  layout.scheme = *scheme;
  layout.side = j.at("side").get<int>();
  layout.indices = j.at("indices").get<std::vector<Position>>();
  layout.num_distinct = j.at("num_distinct").get<int>();
  if (static_cast<int>(layout.indices.size()) != layout.side * layout.side) {
    throw ShapeError("layout document has the wrong number of indices");
  }
  if (count_distinct(layout.indices) != layout.num_distinct) {
    throw InvalidArgument("layout document num_distinct disagrees with its indices");
  }
  return layout;
}

void write_layout_csv(std::ostream& out, const PositionLayout& layout) {
  for (int r = 0; r < layout.side; ++r) {
    for (int c = 0; c < layout.side; ++c) {
      if (c) out << ',';
      out << layout.at(r, c);
    }
    out << '\n';
  }
}

std::string layout_table(const PositionLayout& layout) {
  const std::size_t width = std::to_string(layout.max_index()).size() + 1;
  std::ostringstream os;
  for (int r = 0; r < layout.side; ++r) {
    for (int c = 0; c < layout.side; ++c) os << std::setw(static_cast<int>(width)) << layout.at(r, c);
    os << '\n';
  }
  return os.str();
}

void write_mask_pgm(std::ostream& out, const MaskMatrix& mask) {
  out << "P2\n" << mask.cols() << ' ' << mask.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (j) out << ' ';
      out << (mask(i, j) ? 255 : 0);
    }
    out << '\n';
  }
}

json mask_to_json(const MaskMatrix& mask, std::span<const Position> assigned) {
  std::vector<std::string> rows;
  rows.reserve(static_cast<std::size_t>(mask.rows()));
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    std::string row(static_cast<std::size_t>(mask.cols()), '0');
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask(i, j)) row[static_cast<std::size_t>(j)] = '1';
    }
    rows.push_back(std::move(row));
  }
  return json{{"n", mask.rows()},
              {"assigned_index", std::vector<Position>(assigned.begin(), assigned.end())},
              {"rows", rows}};
}

MaskMatrix mask_from_json(const json& j) {
  const auto n = j.at("n").get<Eigen::Index>();
  const auto rows = j.at("rows").get<std::vector<std::string>>();
  if (static_cast<Eigen::Index>(rows.size()) != n) throw ShapeError("mask document row count mismatch");
  MaskMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != n) throw ShapeError("mask document row length mismatch");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row[static_cast<std::size_t>(k)] == '1';
  }
  return m;
}

HeatmapBounds bounds_of(const Eigen::MatrixXd& grid) { return {grid.minCoeff(), grid.maxCoeff()}; }

namespace {

int level(double v, const HeatmapBounds& b) {
  if (!(b.max > b.min)) return 0;
  const double t = std::clamp((v - b.min) / (b.max - b.min), 0.0, 1.0);
  return static_cast<int>(std::lround(t * 255.0));
}

// Viridis sampled at 8 evenly spaced stops.
constexpr std::array<std::array<int, 3>, 8> kRamp = {{{68, 1, 84},
                                                      {70, 50, 127},
                                                      {54, 92, 141},
                                                      {39, 127, 142},
                                                      {31, 161, 135},
                                                      {74, 194, 109},
                                                      {159, 218, 58},
                                                      {253, 231, 37}}};

std::array<int, 3> ramp_color(int lvl) {
  const double t = lvl / 255.0 * (kRamp.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), kRamp.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<int, 3> c{};
  for (std::size_t k = 0; k < 3; ++k) {
    c[k] = static_cast<int>(std::lround(kRamp[i][k] + f * (kRamp[i + 1][k] - kRamp[i][k])));
  }
  return c;
}

}  // namespace

void write_heatmap_pgm(std::ostream& out, const Eigen::MatrixXd& grid, const HeatmapBounds& bounds) {
  out << "P2\n" << grid.cols() << ' ' << grid.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      if (c) out << ' ';
      out << level(grid(r, c), bounds);
    }
    out << '\n';
  }
}

void write_heatmap_svg(std::ostream& out, const Eigen::MatrixXd& grid, const HeatmapBounds& bounds, int cell_px) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << grid.cols() * cell_px << "\" height=\""
      << grid.rows() * cell_px << "\">\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      const auto rgb = ramp_color(level(grid(r, c), bounds));
      out << "<rect x=\"" << c * cell_px << "\" y=\"" << r * cell_px << "\" width=\"" << cell_px
          << "\" height=\"" << cell_px << "\" fill=\"rgb(" << rgb[0] << ',' << rgb[1] << ',' << rgb[2]
          << ")\"/>\n";
    }
  }
  out << "</svg>\n";
}

json bounds_to_json(const HeatmapBounds& bounds) { return json{{"min", bounds.min}, {"max", bounds.max}}; }

void write_grid_csv(std::ostream& out, const Eigen::MatrixXd& grid) {
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      if (c) out << ',';
      out << format_double(grid(r, c));
    }
    out << '\n';
  }
}

void write_decay_csv(std::ostream& out, const DecayProfile& profile) {
  out << "distance,score\n";
  for (std::size_t i = 0; i < profile.distances.size(); ++i) {
    out << profile.distances[i] << ',' << format_double(profile.mean_score[i]) << '\n';
  }
}

void write_loss_csv(std::ostream& out, std::span<const double> loss_trace) {
  out << "step,loss\n";
  for (std::size_t i = 0; i < loss_trace.size(); ++i) out << i << ',' << format_double(loss_trace[i]) << '\n';
}

json config_to_json(const ToyModelConfig& cfg) {
  return json{{"layers", cfg.layers},
              {"heads", cfg.heads},
              {"model_dim", cfg.model_dim},
              {"ffn_dim", cfg.ffn_dim},
              {"side", cfg.side},
              {"scheme", std::string(to_string(cfg.scheme))},
              {"vocab", cfg.vocab},
              {"instruction_len", cfg.instruction_len},
              {"seed", cfg.seed},
              {"mode", std::string(to_string(cfg.mode))},
              {"rope_base", cfg.rope_base},
              {"abs_pos_scale", cfg.abs_pos_scale},
              {"batch_size", cfg.batch_size},
              {"adam_beta1", cfg.adam_beta1},
              {"adam_beta2", cfg.adam_beta2},
              {"adam_eps", cfg.adam_eps}};
}

ToyModelConfig config_from_json(const json& j, ToyModelConfig cfg) {
  if (!j.is_object()) throw InvalidArgument("model config must be a JSON object");
  static const std::set<std::string> known = {
      "layers", "heads",     "model_dim",     "ffn_dim",    "side",       "scheme",     "vocab",   "instruction_len",
      "seed",   "mode",      "rope_base",     "abs_pos_scale", "batch_size", "adam_beta1", "adam_beta2", "adam_eps"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InvalidArgument("unknown model config key '" + key + "'");
  }
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    read("layers", cfg.layers);
    read("heads", cfg.heads);
    read("model_dim", cfg.model_dim);
    read("ffn_dim", cfg.ffn_dim);
    read("side", cfg.side);
    read("vocab", cfg.vocab);
    read("instruction_len", cfg.instruction_len);
    read("seed", cfg.seed);
    read("rope_base", cfg.rope_base);
    read("abs_pos_scale", cfg.abs_pos_scale);
    read("batch_size", cfg.batch_size);
    read("adam_beta1", cfg.adam_beta1);
    read("adam_beta2", cfg.adam_beta2);
    read("adam_eps", cfg.adam_eps);
    if (j.contains("scheme")) {
      const auto name = j.at("scheme").get<std::string>();
      const auto s = parse_scheme(name);
      if (!s) throw InvalidArgument("unknown scheme '" + name + "' (valid: " + scheme_names() + ")");
      cfg.scheme = *s;
    }
    if (j.contains("mode")) cfg.mode = parse_label_mode(j.at("mode").get<std::string>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json model_to_json(const ToyModel& model) {
  json params = json::object();
  for (const auto& b : model.blocks()) {
    const auto m = model.param(b.name);
    params[b.name] = std::vector<double>(m.data(), m.data() + m.size());
  }
  return json{{"format", "mca-toy-model"},
              {"version", kModelFormatVersion},
              {"config", config_to_json(model.config())},
              {"params", params}};
}

ToyModel model_from_json(const json& j) {
  if (j.value("format", "") != "mca-toy-model") throw InvalidArgument("not a toy model document");
  if (j.value("version", 0) != kModelFormatVersion) {
    throw InvalidArgument("unsupported toy model version " + std::to_string(j.value("version", 0)));
  }
  ToyModel model(config_from_json(j.at("config")));
  const json& params = j.at("params");
  for (const auto& b : model.blocks()) {
    const auto values = params.at(b.name).get<std::vector<double>>();
    auto m = model.param(b.name);
    if (static_cast<Eigen::Index>(values.size()) != m.size()) {
      throw ShapeError("parameter block '" + b.name + "' has the wrong size");
    }
    std::copy(values.begin(), values.end(), m.data());
  }
  return model;
}

json report_to_json(const RegionReport& r) {
  return json{{"format", "mca-region-report"},
              {"version", kModelFormatVersion},
              {"accuracy", r.accuracy},
              {"attention_mass", r.attention_mass},
              {"count", r.count},
              {"overall_accuracy", r.overall_accuracy},
              {"spread", r.spread}};
}

RegionReport report_from_json(const json& j) {
  if (j.value("format", "") != "mca-region-report") throw InvalidArgument("not a region report document");
  RegionReport r;
  r.accuracy = j.at("accuracy").get<std::array<double, 4>>();
  r.attention_mass = j.at("attention_mass").get<std::array<double, 4>>();
  r.count = j.at("count").get<std::array<int, 4>>();
  r.overall_accuracy = j.at("overall_accuracy").get<double>();
  r.spread = j.at("spread").get<double>();
  return r;
}

}  // namespace mca::io
