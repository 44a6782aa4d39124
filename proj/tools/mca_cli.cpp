// mca: command-line front end for the layout, mask, decay, toy-model and
// CHAIR tools. Every command writes under <out>/<tag> where <out> defaults to
// $MCA_OUT_ROOT (or ./runs) and <tag> defaults to a UTC timestamp.
//
// Exit codes: 0 success, 1 usage or config error, 2 numeric/runtime failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mca/attention.hpp"
#include "mca/chair.hpp"
#include "mca/errors.hpp"
#include "mca/io.hpp"
#include "mca/masks.hpp"
#include "mca/positions.hpp"
#include "mca/saliency.hpp"
#include "mca/toy_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Thrown for bad flags or config that CLI11 cannot catch on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutputOptions {
  std::string root;
  std::string tag;
};

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

fs::path make_run_dir(const OutputOptions& o) {
  fs::path dir = fs::path(o.root) / (o.tag.empty() ? utc_stamp() : o.tag);
  if (o.tag.empty()) {
    const fs::path base = dir;
    for (int i = 1; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  }
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

mca::Scheme scheme_or_throw(const std::string& name) {
  const auto s = mca::parse_scheme(name);
  if (!s) throw UsageError("unknown scheme '" + name + "' (valid: " + mca::scheme_names() + ")");
  return *s;
}

void write_heatmaps(const fs::path& dir, const std::string& stem, const Eigen::MatrixXd& grid) {
  const auto bounds = mca::io::bounds_of(grid);
  auto pgm = open_out(dir / (stem + ".pgm"));
  mca::io::write_heatmap_pgm(pgm, grid, bounds);
  auto svg = open_out(dir / (stem + ".svg"));
  mca::io::write_heatmap_svg(svg, grid, bounds);
  auto csv = open_out(dir / (stem + ".csv"));
  mca::io::write_grid_csv(csv, grid);
  write_json(dir / (stem + "_bounds.json"), mca::io::bounds_to_json(bounds));
}

void print_quadrants(const char* label, const std::array<double, 4>& q) {
  std::cout << label << " TL=" << mca::io::format_double(q[0]) << " TR=" << mca::io::format_double(q[1])
            << " BL=" << mca::io::format_double(q[2]) << " BR=" << mca::io::format_double(q[3]) << '\n';
}

// ---- indices ---------------------------------------------------------------

struct IndicesArgs {
  std::string scheme = "mca";
  int side = 24;
};

void cmd_indices(const IndicesArgs& a, const OutputOptions& out) {
  const auto layout = mca::make_layout(scheme_or_throw(a.scheme), mca::GridSpec(a.side));
  const fs::path dir = make_run_dir(out);
  auto csv = open_out(dir / "indices.csv");
  mca::io::write_layout_csv(csv, layout);
  const std::string table = mca::io::layout_table(layout);
  open_out(dir / "indices.txt") << table;
  write_json(dir / "layout.json", mca::io::layout_to_json(layout));
  std::cout << table << "distinct=" << layout.num_distinct << '\n' << "out=" << dir.string() << '\n';
}

// ---- mask ------------------------------------------------------------------

struct MaskArgs {
  std::string scheme = "mca";
  int side = 6;
  int prefix = 0;
  int suffix = 0;
};

void cmd_mask(const MaskArgs& a, const OutputOptions& out) {
  if (a.prefix < 0 || a.suffix < 0 || a.side < 0) throw UsageError("lengths must be nonnegative");
  std::optional<mca::MultimodalSequence> seq;
  if (a.side == 0) {
    if (a.prefix + a.suffix == 0) throw UsageError("empty sequence: need an image grid or text tokens");
    seq = mca::MultimodalSequence::text_only(a.prefix + a.suffix);
  } else {
    const mca::GridSpec grid(a.side);
    seq = mca::build_sequence(a.prefix, grid, a.suffix, mca::make_layout(scheme_or_throw(a.scheme), grid));
  }
  const mca::MaskMatrix mask = mca::index_causal_mask(*seq);
  const mca::MaskStats st = mca::mask_stats(mask, *seq);
  const fs::path dir = make_run_dir(out);
  auto pgm = open_out(dir / "mask.pgm");
  mca::io::write_mask_pgm(pgm, mask);
  write_json(dir / "mask.json", mca::io::mask_to_json(mask, seq->assigned_index()));
  std::cout << "n=" << seq->size() << " visible=" << st.total_visible << " equal_index_pairs=" << st.equal_index_pairs
            << '\n'
            << "out=" << dir.string() << '\n';
}

// ---- decay -----------------------------------------------------------------

struct DecayArgs {
  std::string scheme = "raster";
  int side = 24;
  int dim = 64;
  double base = 10000.0;
  int samples = 2048;
  int max_dist = 256;
  std::uint64_t seed = 0;
};

void cmd_decay(const DecayArgs& a, int workers, const OutputOptions& out) {
  const mca::GridSpec grid(a.side);
  const auto layout = mca::make_layout(scheme_or_throw(a.scheme), grid);
  const auto freq = mca::make_frequencies(a.dim, a.base);
  if (a.samples < 1) throw UsageError("--samples must be positive");
  if (a.max_dist < 0) throw UsageError("--max-dist must be nonnegative");
  const auto profile = mca::decay_profile(freq, a.dim, a.samples, a.max_dist, a.seed, workers);
  // The query sits where the first instruction token would follow the image.
  const mca::Position query = layout.max_index() + 1;
  const Eigen::MatrixXd map = mca::grid_decay_map(grid, layout, query, freq, a.dim, a.samples, a.seed, workers);

  const fs::path dir = make_run_dir(out);
  auto csv = open_out(dir / "decay.csv");
  mca::io::write_decay_csv(csv, profile);
  write_heatmaps(dir, "heatmap", map);

  Eigen::Index r = 0, c = 0;
  map.maxCoeff(&r, &c);
  std::cout << "query_position=" << query << " max_cell=" << r << "," << c << '\n' << "out=" << dir.string() << '\n';
}

// ---- train-toy -------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::optional<std::string> scheme;
  std::optional<int> side;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<int> train_size;
  std::optional<int> eval_size;
};

struct RunSettings {
  int steps = 2000;
  double learning_rate = 1e-3;
  int train_size = 4096;
  int eval_size = 512;
};

// Seed offsets that keep the train and eval splits disjoint streams.
constexpr std::uint64_t kTrainSeedOffset = 1000;
constexpr std::uint64_t kEvalSeedOffset = 2000;

void cmd_train(const TrainArgs& a, int workers, const OutputOptions& out) {
  json file = json::object();
  if (!a.config_path.empty()) {
    if (!fs::exists(a.config_path)) throw UsageError("config file not found: " + a.config_path);
    file = read_json_file(a.config_path);
    if (!file.is_object()) throw UsageError("config '" + a.config_path + "' must be a flat JSON object");
  }
  RunSettings run;
  json model_part = json::object();
  try {
    for (const auto& [key, value] : file.items()) {
      if (key == "steps") run.steps = value.get<int>();
      else if (key == "learning_rate") run.learning_rate = value.get<double>();
      else if (key == "train_size") run.train_size = value.get<int>();
      else if (key == "eval_size") run.eval_size = value.get<int>();
      else model_part[key] = value;
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (a.scheme) model_part["scheme"] = *a.scheme;
  if (a.side) model_part["side"] = *a.side;
  if (a.seed) model_part["seed"] = *a.seed;
  if (a.steps) run.steps = *a.steps;
  if (a.lr) run.learning_rate = *a.lr;
  if (a.train_size) run.train_size = *a.train_size;
  if (a.eval_size) run.eval_size = *a.eval_size;

  const mca::ToyModelConfig cfg = mca::io::config_from_json(model_part);
  if (run.steps < 0) throw UsageError("steps must be nonnegative");
  if (!(run.learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (run.train_size < 1 || run.eval_size < 1) throw UsageError("dataset sizes must be positive");

  const auto train_set = mca::gen_dataset(cfg.grid(), run.train_size, cfg.seed + kTrainSeedOffset, cfg.mode, cfg.vocab);
  const auto eval_set = mca::gen_dataset(cfg.grid(), run.eval_size, cfg.seed + kEvalSeedOffset, cfg.mode, cfg.vocab);

  const fs::path dir = make_run_dir(out);
  json effective = mca::io::config_to_json(cfg);
  effective["steps"] = run.steps;
  effective["learning_rate"] = run.learning_rate;
  effective["train_size"] = run.train_size;
  effective["eval_size"] = run.eval_size;
  write_json(dir / "config.json", effective);

  const auto result = mca::train(cfg, train_set, run.steps, run.learning_rate);
  const auto report = mca::eval_by_region(result.model, eval_set, workers);

  write_json(dir / "model.json", mca::io::model_to_json(result.model));
  write_json(dir / "report.json", mca::io::report_to_json(report));
  auto loss = open_out(dir / "loss.csv");
  mca::io::write_loss_csv(loss, result.loss_trace);

  if (!result.loss_trace.empty()) {
    std::cout << "loss " << mca::io::format_double(result.loss_trace.front()) << " -> "
              << mca::io::format_double(result.loss_trace.back()) << '\n';
  }
  print_quadrants("accuracy", report.accuracy);
  print_quadrants("marker_attention", report.attention_mass);
  std::cout << "overall=" << mca::io::format_double(report.overall_accuracy)
            << " spread=" << mca::io::format_double(report.spread) << '\n'
            << "out=" << dir.string() << '\n';
}

// ---- saliency --------------------------------------------------------------

struct SaliencyArgs {
  std::string model_path;
  std::string scheme = "raster";
  int side = 8;
  std::uint64_t seed = 0;
  int samples = 64;
};

void cmd_saliency(const SaliencyArgs& a, int workers, const OutputOptions& out) {
  std::optional<mca::ToyModel> model;
  if (!a.model_path.empty()) {
    model = mca::io::model_from_json(read_json_file(a.model_path));
  } else {
    mca::ToyModelConfig cfg;
    cfg.scheme = scheme_or_throw(a.scheme);
    cfg.side = a.side;
    cfg.seed = a.seed;
    cfg.validate();
    model.emplace(cfg);
  }
  if (a.samples < 1) throw UsageError("--samples must be positive");
  const auto& cfg = model->config();
  const auto samples = mca::gen_dataset(cfg.grid(), a.samples, a.seed + kEvalSeedOffset, cfg.mode, cfg.vocab);
  const mca::SaliencyGrid grid = mca::mean_saliency_flow(*model, samples, workers);

  const fs::path dir = make_run_dir(out);
  write_heatmaps(dir, "saliency", grid);
  print_quadrants("flow", mca::quadrant_sums(grid));
  std::cout << "out=" << dir.string() << '\n';
}

// ---- chair -----------------------------------------------------------------

void cmd_chair(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path + "'");
  const auto batch = mca::read_chair_jsonl(f);
  if (batch.empty()) throw UsageError("'" + path + "' holds no captions");
  std::cout << std::fixed << std::setprecision(4) << "captions=" << batch.size() << '\n'
            << "object_ratio=" << mca::chair_object_ratio(batch) << '\n'
            << "caption_ratio=" << mca::chair_caption_ratio(batch) << '\n';
}

// ---- compare ---------------------------------------------------------------

mca::RegionReport load_report(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "report.json";
  try {
    return mca::io::report_from_json(read_json_file(p.string()));
  } catch (const json::exception& e) {
    throw UsageError("'" + p.string() + "' is not a region report: " + e.what());
  }
}

void cmd_compare(const std::vector<std::string>& paths) {
  std::cout << std::left << std::setw(40) << "report" << std::right << std::setw(8) << "TL" << std::setw(8) << "TR"
            << std::setw(8) << "BL" << std::setw(8) << "BR" << std::setw(9) << "overall" << std::setw(8) << "spread"
            << '\n'
            << std::fixed << std::setprecision(4);
  std::vector<double> spreads;
  for (const auto& p : paths) {
    const auto r = load_report(p);
    std::string label = p.size() > 39 ? "..." + p.substr(p.size() - 36) : p;
    std::cout << std::left << std::setw(40) << label << std::right;
    for (double acc : r.accuracy) std::cout << std::setw(8) << acc;
    std::cout << std::setw(9) << r.overall_accuracy << std::setw(8) << r.spread << '\n';
    spreads.push_back(r.spread);
  }
  if (spreads.size() == 2) std::cout << "spread_delta=" << spreads[1] - spreads[0] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Manhattan causal attention numeric lab"};
  app.require_subcommand(1);
  app.fallthrough();

  OutputOptions out;
  const char* env_root = std::getenv("MCA_OUT_ROOT");
  out.root = env_root && *env_root ? env_root : "runs";
  int workers = 1;
  app.add_option("--out", out.root, "Output root (default $MCA_OUT_ROOT or ./runs)");
  app.add_option("--tag", out.tag, "Run directory name (default: UTC timestamp)");
  app.add_option("--workers", workers, "Evaluation worker threads")->check(CLI::PositiveNumber);

  const std::string scheme_help = "Layout: " + mca::scheme_names();

  IndicesArgs ia;
  auto* indices = app.add_subcommand("indices", "Write the position-index grid of a layout");
  indices->add_option("--scheme", ia.scheme, scheme_help);
  indices->add_option("--side", ia.side, "Grid side (even)");

  MaskArgs ma;
  auto* mask = app.add_subcommand("mask", "Write the index-causal mask of a multimodal sequence");
  mask->add_option("--scheme", ma.scheme, scheme_help);
  mask->add_option("--side", ma.side, "Grid side (even; 0 for text only)");
  mask->add_option("--prefix", ma.prefix, "Text tokens before the image");
  mask->add_option("--suffix", ma.suffix, "Text tokens after the image");

  DecayArgs da;
  auto* decay = app.add_subcommand("decay", "Decay profile and grid decay heatmap");
  decay->add_option("--scheme", da.scheme, scheme_help);
  decay->add_option("--side", da.side, "Grid side (even)");
  decay->add_option("--dim", da.dim, "Head dimension (even)");
  decay->add_option("--base", da.base, "Rotary base");
  decay->add_option("--samples", da.samples, "Random query samples");
  decay->add_option("--max-dist", da.max_dist, "Largest relative distance in the profile");
  decay->add_option("--seed", da.seed, "Sampling seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train-toy", "Train and evaluate the toy multimodal model");
  train->add_option("--config", ta.config_path, "Flat JSON config; flags override it");
  train->add_option("--scheme", ta.scheme, scheme_help);
  train->add_option("--side", ta.side, "Grid side (even)");
  train->add_option("--seed", ta.seed, "Model and data seed");
  train->add_option("--steps", ta.steps, "Optimizer steps");
  train->add_option("--lr", ta.lr, "Learning rate");
  train->add_option("--train-size", ta.train_size, "Training samples");
  train->add_option("--eval-size", ta.eval_size, "Evaluation samples");

  SaliencyArgs sa;
  auto* saliency = app.add_subcommand("saliency", "Mean image-to-instruction flow of a model");
  saliency->add_option("--model", sa.model_path, "model.json from train-toy (default: untrained model)");
  saliency->add_option("--scheme", sa.scheme, scheme_help + " (untrained model only)");
  saliency->add_option("--side", sa.side, "Grid side (untrained model only)");
  saliency->add_option("--seed", sa.seed, "Model and sample seed");
  saliency->add_option("--samples", sa.samples, "Samples to average");

  std::string chair_path;
  auto* chair = app.add_subcommand("chair", "CHAIR ratios of a JSON-lines fixture file");
  chair->add_option("fixtures", chair_path, "JSON-lines file")->required();

  std::vector<std::string> reports;
  auto* compare = app.add_subcommand("compare", "Tabulate region reports side by side");
  compare->add_option("reports", reports, "report.json files or run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*indices) cmd_indices(ia, out);
    else if (*mask) cmd_mask(ma, out);
    else if (*decay) cmd_decay(da, workers, out);
    else if (*train) cmd_train(ta, workers, out);
    else if (*saliency) cmd_saliency(sa, workers, out);
    else if (*chair) cmd_chair(chair_path);
    else if (*compare) cmd_compare(reports);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const mca::DivergenceError& e) {
    std::cerr << "error: training diverged at step " << e.step() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const mca::ParseError& e) {
    std::cerr << "error: line " << e.line() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const mca::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
