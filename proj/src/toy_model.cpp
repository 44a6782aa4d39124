#include "mca/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <thread>

namespace mca {

std::string_view to_string(LabelMode mode) { return mode == LabelMode::quadrant ? "quadrant" : "cell"; }

LabelMode parse_label_mode(std::string_view name) {
  if (name == "quadrant") return LabelMode::quadrant;
  if (name == "cell") return LabelMode::cell;
  throw InvalidArgument("unknown label mode '" + std::string(name) + "' (expected quadrant or cell)");
}

void ToyModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument(msg);
  };
  require(layers >= 1, "layers must be positive");
  require(heads >= 1, "heads must be positive");
  require(model_dim >= 1 && model_dim % heads == 0, "model_dim must be a positive multiple of heads");
  require(head_dim() % 2 == 0, "model_dim / heads must be even");
  require(ffn_dim >= 1, "ffn_dim must be positive");
  require(vocab >= 2, "vocab must be >= 2 (one id is reserved for the marker)");
  require(instruction_len >= 1, "instruction_len must be positive");
  require(rope_base > 1.0, "rope_base must be > 1");
  require(abs_pos_scale >= 0.0, "abs_pos_scale must be nonnegative");
  require(batch_size >= 1, "batch_size must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  (void)GridSpec(side);
}

int quadrant_of(const GridSpec& grid, int row, int col) {
  return (row >= grid.half() ? 2 : 0) + (col >= grid.half() ? 1 : 0);
}

std::vector<SyntheticSample> gen_dataset(const GridSpec& grid, int n, std::uint64_t seed, LabelMode mode,
                                         int vocab) {
  if (n < 1) throw InvalidArgument("dataset size must be >= 1");
  if (vocab < 2) throw InvalidArgument("vocab must be >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cell_dist(0, grid.total() - 1);
  std::uniform_int_distribution<int> patch_dist(0, vocab - 2);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    SyntheticSample sample;
    sample.patch_ids.resize(static_cast<std::size_t>(grid.total()));
    for (int& id : sample.patch_ids) id = patch_dist(rng);
    const int cell = cell_dist(rng);
    sample.marker_row = grid.row_of(cell);
    sample.marker_col = grid.col_of(cell);
    sample.patch_ids[static_cast<std::size_t>(cell)] = vocab - 1;
    sample.label = mode == LabelMode::quadrant ? quadrant_of(grid, sample.marker_row, sample.marker_col) : cell;
    out.push_back(std::move(sample));
  }
  return out;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Eigen::MatrixXd xhat;
  Eigen::VectorXd rstd;
};

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::Ref<const Eigen::MatrixXd>& gamma,
                           const Eigen::Ref<const Eigen::MatrixXd>& beta,
                           LayerNormCache& cache) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  cache.xhat = x.colwise() - mean;
  cache.rstd = (cache.xhat.array().square().rowwise().mean() + kLayerNormEps).rsqrt();
  cache.xhat = cache.rstd.asDiagonal() * cache.xhat;
  Eigen::MatrixXd out = cache.xhat.array().rowwise() * gamma.reshaped().transpose().array();
  out.rowwise() += beta.reshaped().transpose();
  return out;
}

// Returns dL/dx; accumulates dL/dgamma and dL/dbeta.
Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& d_out, const Eigen::Ref<const Eigen::MatrixXd>& gamma,
                                    const LayerNormCache& cache, Eigen::Map<Eigen::MatrixXd> d_gamma,
                                    Eigen::Map<Eigen::MatrixXd> d_beta) {
  d_gamma.reshaped() += (d_out.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  d_beta.reshaped() += d_out.colwise().sum().transpose();
  const Eigen::MatrixXd d_xhat = d_out.array().rowwise() * gamma.reshaped().transpose().array();
  const Eigen::VectorXd m1 = d_xhat.rowwise().mean();
  const Eigen::VectorXd m2 = (d_xhat.array() * cache.xhat.array()).rowwise().mean();
  Eigen::MatrixXd dx = d_xhat;
  dx.colwise() -= m1;
  dx -= m2.asDiagonal() * cache.xhat;
  return cache.rstd.asDiagonal() * dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z))); }

double gelu_grad(double z) {
  const double t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

struct LayerCache {
  Eigen::MatrixXd x_in;
  LayerNormCache ln1;
  Eigen::MatrixXd h1;
  std::vector<Eigen::MatrixXd> q, k, v;
  AttentionResult attn;
  Eigen::MatrixXd concat;
  Eigen::MatrixXd x_mid;
  LayerNormCache ln2;
  Eigen::MatrixXd h2;
  Eigen::MatrixXd z;
  Eigen::MatrixXd g;
};

std::vector<Eigen::MatrixXd> split_heads(const Eigen::MatrixXd& m, int heads, int head_dim) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) out.emplace_back(m.middleCols(h * head_dim, head_dim));
  return out;
}

Eigen::MatrixXd join_heads(std::span<const Eigen::MatrixXd> parts) {
  Eigen::MatrixXd out(parts.front().rows(), parts.front().cols() * static_cast<Eigen::Index>(parts.size()));
  for (std::size_t h = 0; h < parts.size(); ++h) {
    out.middleCols(static_cast<Eigen::Index>(h) * parts[h].cols(), parts[h].cols()) = parts[h];
  }
  return out;
}

Eigen::MatrixXd sinusoidal_2d(const GridSpec& grid, int dim, double scale) {
  Eigen::MatrixXd pe = Eigen::MatrixXd::Zero(grid.total(), dim);
  const int half = dim / 2;
  const int pairs = std::max(1, half / 2);
  for (int cell = 0; cell < grid.total(); ++cell) {
    const double coord[2] = {double(grid.row_of(cell)), double(grid.col_of(cell))};
    for (int axis = 0; axis < 2; ++axis) {
      for (int j = 0; j < pairs && axis * half + 2 * j + 1 < dim; ++j) {
        const double w = std::pow(double(grid.side()), -double(j) / pairs);
        pe(cell, axis * half + 2 * j) = std::sin(coord[axis] * w);
        pe(cell, axis * half + 2 * j + 1) = std::cos(coord[axis] * w);
      }
    }
  }
  return scale * pe;
}

MultimodalSequence toy_sequence(const ToyModelConfig& cfg) {
  cfg.validate();
  const GridSpec grid = cfg.grid();
  return build_sequence(0, grid, cfg.instruction_len, make_layout(cfg.scheme, grid));
}

}  // namespace

ToyModel::ToyModel(const ToyModelConfig& cfg)
    : cfg_(cfg),
      seq_(toy_sequence(cfg)),
      mask_(index_causal_mask(seq_)),
      freq_(cfg.head_dim(), cfg.rope_base),
      attn_cfg_(AttentionConfig::make(cfg.head_dim(), cfg.heads)),
      abs_pos_(sinusoidal_2d(cfg.grid(), cfg.model_dim, cfg.abs_pos_scale)) {
  const int d = cfg.model_dim;
  const int f = cfg.ffn_dim;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    blocks_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  add("patch_embed", cfg.vocab, d);
  add("instr_embed", cfg.instruction_len, d);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1_gamma", 1, d);
    add(p + "ln1_beta", 1, d);
    add(p + "wq", d, d);
    add(p + "wk", d, d);
    add(p + "wv", d, d);
    add(p + "wo", d, d);
    add(p + "ln2_gamma", 1, d);
    add(p + "ln2_beta", 1, d);
    add(p + "w1", d, f);
    add(p + "b1", 1, f);
    add(p + "w2", f, d);
    add(p + "b2", 1, d);
  }
  add("lnf_gamma", 1, d);
  add("lnf_beta", 1, d);
  add("w_out", d, cfg.num_classes());
  add("b_out", 1, cfg.num_classes());
  params_ = Eigen::VectorXd::Zero(offset);

  // Initialization depends only on the seed and the shapes, never on the
  // layout, so paired runs start from identical parameters.
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  for (const Block& b : blocks_) {
    auto m = param(b.name);
    const std::string_view leaf = std::string_view(b.name).substr(b.name.find('.') + 1);
    if (leaf.ends_with("gamma")) {
      m.setOnes();
    } else if (leaf.ends_with("beta") || leaf == "b1" || leaf == "b2" || leaf == "b_out") {
      m.setZero();
    } else {
      double stddev = 1.0;
      if (b.name != "patch_embed" && b.name != "instr_embed") {
        stddev = 1.0 / std::sqrt(static_cast<double>(b.rows));
        if (leaf == "wo" || leaf == "w2") stddev /= std::sqrt(2.0 * cfg.layers);
      }
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal(rng);
    }
  }
}

const ToyModel::Block& ToyModel::find(std::string_view name) const {
  for (const Block& b : blocks_) {
    if (b.name == name) return b;
  }
  throw InvalidArgument("no parameter block named '" + std::string(name) + "'");
}

Eigen::Map<Eigen::MatrixXd> ToyModel::param(std::string_view name) {
  const Block& b = find(name);
  return {params_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const Eigen::MatrixXd> ToyModel::param(std::string_view name) const {
  const Block& b = find(name);
  return {params_.data() + b.offset, b.rows, b.cols};
}

double ToyModel::run(const SyntheticSample& sample, Eigen::VectorXd* grad, Trace* trace, bool backward) const {
  const GridSpec grid = cfg_.grid();
  if (static_cast<int>(sample.patch_ids.size()) != grid.total()) {
    throw ShapeError("sample grid does not match model grid");
  }
  const int n = seq_.size();
  const int d = cfg_.model_dim;
  const int hd = cfg_.head_dim();
  const int image = grid.total();
  const std::span<const Position> positions(seq_.assigned_index());

  const auto patch_embed = param("patch_embed");
  const auto instr_embed = param("instr_embed");
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < image; ++i) {
    const int id = sample.patch_ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= cfg_.vocab) throw ShapeError("patch id out of vocabulary");
    x.row(i) = patch_embed.row(id) + abs_pos_.row(i);
  }
  for (int t = 0; t < cfg_.instruction_len; ++t) x.row(image + t) = instr_embed.row(t);

  std::vector<LayerCache> caches(static_cast<std::size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerCache& c = caches[static_cast<std::size_t>(l)];
    c.x_in = x;
    c.h1 = layer_norm(x, param(p + "ln1_gamma"), param(p + "ln1_beta"), c.ln1);
    c.q = split_heads(c.h1 * param(p + "wq"), cfg_.heads, hd);
    c.k = split_heads(c.h1 * param(p + "wk"), cfg_.heads, hd);
    c.v = split_heads(c.h1 * param(p + "wv"), cfg_.heads, hd);
    c.attn = rope_attention(c.q, c.k, c.v, positions, mask_, freq_, attn_cfg_);
    c.concat = join_heads(c.attn.outputs);
    c.x_mid = x + c.concat * param(p + "wo");
    c.h2 = layer_norm(c.x_mid, param(p + "ln2_gamma"), param(p + "ln2_beta"), c.ln2);
    c.z = c.h2 * param(p + "w1");
    c.z.rowwise() += param(p + "b1").row(0);
    c.g = c.z.unaryExpr(&gelu);
    x = c.x_mid + c.g * param(p + "w2");
    x.rowwise() += param(p + "b2").row(0);
  }

  LayerNormCache lnf;
  const Eigen::MatrixXd last = x.row(n - 1);
  const Eigen::MatrixXd hf = layer_norm(last, param("lnf_gamma"), param("lnf_beta"), lnf);
  Eigen::RowVectorXd logits = hf * param("w_out") + param("b_out");
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  const double loss = lse - logits(sample.label);
  if (!std::isfinite(loss)) throw NumericError("toy model loss is not finite");

  if (trace) {
    trace->logits = logits.transpose();
    trace->loss = loss;
    trace->attention.clear();
    for (const auto& c : caches) trace->attention.push_back(c.attn);
  }
  if (!backward) return loss;

  Eigen::VectorXd local_grad;
  Eigen::VectorXd* g = grad;
  if (!g) {
    local_grad = Eigen::VectorXd::Zero(params_.size());
    g = &local_grad;
  }
  auto dparam = [&](std::string_view name) {
    const Block& b = find(name);
    return Eigen::Map<Eigen::MatrixXd>(g->data() + b.offset, b.rows, b.cols);
  };

  Eigen::RowVectorXd d_logits = (logits.array() - lse).exp().matrix();
  d_logits(sample.label) -= 1.0;
  dparam("w_out") += hf.transpose() * d_logits;
  dparam("b_out") += d_logits;
  const Eigen::MatrixXd d_hf = d_logits * param("w_out").transpose();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, d);
  dx.row(n - 1) = layer_norm_backward(d_hf, param("lnf_gamma"), lnf, dparam("lnf_gamma"), dparam("lnf_beta"));

  std::vector<AttentionGrads> attn_grads(static_cast<std::size_t>(cfg_.layers));
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const LayerCache& c = caches[static_cast<std::size_t>(l)];
    // Feed-forward residual branch.
    dparam(p + "w2") += c.g.transpose() * dx;
    dparam(p + "b2") += dx.colwise().sum();
    Eigen::MatrixXd d_z = dx * param(p + "w2").transpose();
    d_z.array() *= c.z.unaryExpr(&gelu_grad).array();
    dparam(p + "w1") += c.h2.transpose() * d_z;
    dparam(p + "b1") += d_z.colwise().sum();
    const Eigen::MatrixXd d_h2 = d_z * param(p + "w1").transpose();
    Eigen::MatrixXd d_mid =
        dx + layer_norm_backward(d_h2, param(p + "ln2_gamma"), c.ln2, dparam(p + "ln2_gamma"),
                                 dparam(p + "ln2_beta"));
    // Attention residual branch.
    dparam(p + "wo") += c.concat.transpose() * d_mid;
    const Eigen::MatrixXd d_concat = d_mid * param(p + "wo").transpose();
    const std::vector<Eigen::MatrixXd> d_heads = split_heads(d_concat, cfg_.heads, hd);
    AttentionGrads ag = rope_attention_backward(c.q, c.k, c.v, positions, freq_, attn_cfg_, c.attn, d_heads);
    const Eigen::MatrixXd d_q = join_heads(ag.d_q);
    const Eigen::MatrixXd d_k = join_heads(ag.d_k);
    const Eigen::MatrixXd d_v = join_heads(ag.d_v);
    dparam(p + "wq") += c.h1.transpose() * d_q;
    dparam(p + "wk") += c.h1.transpose() * d_k;
    dparam(p + "wv") += c.h1.transpose() * d_v;
    const Eigen::MatrixXd d_h1 = d_q * param(p + "wq").transpose() + d_k * param(p + "wk").transpose() +
                                 d_v * param(p + "wv").transpose();
    dx = d_mid + layer_norm_backward(d_h1, param(p + "ln1_gamma"), c.ln1, dparam(p + "ln1_gamma"),
                                     dparam(p + "ln1_beta"));
    attn_grads[static_cast<std::size_t>(l)] = std::move(ag);
  }

  auto d_patch = dparam("patch_embed");
  auto d_instr = dparam("instr_embed");
  for (int i = 0; i < image; ++i) d_patch.row(sample.patch_ids[static_cast<std::size_t>(i)]) += dx.row(i);
  for (int t = 0; t < cfg_.instruction_len; ++t) d_instr.row(t) += dx.row(image + t);

  if (trace) trace->attention_grads = std::move(attn_grads);
  return loss;
}

double ToyModel::loss(const SyntheticSample& sample) const { return run(sample, nullptr, nullptr, false); }

double ToyModel::accumulate_gradient(const SyntheticSample& sample, Eigen::Ref<Eigen::VectorXd> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer has the wrong size");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params_.size());
  const double l = run(sample, &g, nullptr, true);
  grad += g;
  return l;
}

ToyModel::Trace ToyModel::trace(const SyntheticSample& sample, bool with_gradients) const {
  Trace t;
  run(sample, nullptr, &t, with_gradients);
  return t;
}

int ToyModel::predict(const SyntheticSample& sample) const {
  const Trace t = trace(sample, false);
  Eigen::Index arg = 0;
  t.logits.maxCoeff(&arg);
  return static_cast<int>(arg);
}

std::uint64_t ToyModel::parameter_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
  const std::size_t len = static_cast<std::size_t>(params_.size()) * sizeof(double);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<double> train_in_place(ToyModel& model, std::span<const SyntheticSample> dataset, int steps,
                                   double learning_rate) {
  if (steps < 0) throw InvalidArgument("steps must be nonnegative");
  if (steps > 0 && dataset.empty()) throw InvalidArgument("training needs a nonempty dataset");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  const ToyModelConfig& cfg = model.config();
  Eigen::VectorXd& theta = model.parameters();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad(theta.size());
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  double b1t = 1.0;
  double b2t = 1.0;
  for (int step = 0; step < steps; ++step) {
    if (!image_rows_blind_to_suffix(model.mask(), model.sequence())) {
      throw NumericError("mask lets image tokens see instruction tokens");
    }
    grad.setZero();
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      try {
        loss += model.accumulate_gradient(dataset[pick(rng)], grad);
      } catch (const NumericError& e) {
        throw DivergenceError(static_cast<std::size_t>(step), e.what());
      }
    }
    loss /= cfg.batch_size;
    grad /= cfg.batch_size;
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw DivergenceError(static_cast<std::size_t>(step), "training diverged");
    }
    b1t *= cfg.adam_beta1;
    b2t *= cfg.adam_beta2;
    m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * grad;
    m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * grad.cwiseAbs2();
    theta.array() -= learning_rate * (m1.array() / (1.0 - b1t)) /
                     ((m2.array() / (1.0 - b2t)).sqrt() + cfg.adam_eps);
    trace.push_back(loss);
  }
  return trace;
}

TrainResult train(const ToyModelConfig& cfg, std::span<const SyntheticSample> dataset, int steps,
                  double learning_rate) {
  TrainResult result{ToyModel(cfg), {}};
  result.loss_trace = train_in_place(result.model, dataset, steps, learning_rate);
  return result;
}

RegionReport eval_by_region(const ToyModel& model, std::span<const SyntheticSample> dataset, int workers) {
  if (dataset.empty()) throw CoverageError("evaluation dataset is empty");
  const GridSpec grid = model.config().grid();
  const int n = static_cast<int>(dataset.size());
  const int last = model.sequence().size() - 1;

  struct Row {
    int quadrant = 0;
    bool correct = false;
    double mass = 0.0;
  };
  std::vector<Row> rows(static_cast<std::size_t>(n));
  auto body = [&](int begin, int end) {
    for (int s = begin; s < end; ++s) {
      const SyntheticSample& sample = dataset[static_cast<std::size_t>(s)];
      const ToyModel::Trace t = model.trace(sample, false);
      Eigen::Index arg = 0;
      t.logits.maxCoeff(&arg);
      const int marker = model.sequence().image_begin() + grid.cell(sample.marker_row, sample.marker_col);
      double mass = 0.0;
      int terms = 0;
      for (const auto& layer : t.attention) {
        for (const auto& w : layer.weights) {
          mass += w(last, marker);
          ++terms;
        }
      }
      rows[static_cast<std::size_t>(s)] = {quadrant_of(grid, sample.marker_row, sample.marker_col),
                                           static_cast<int>(arg) == sample.label, mass / terms};
    }
  };
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    body(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int b = w * chunk;
      const int e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(body, b, e);
    }
    for (auto& th : pool) th.join();
  }

  RegionReport report;
  int correct = 0;
  for (const Row& r : rows) {
    const auto q = static_cast<std::size_t>(r.quadrant);
    ++report.count[q];
    report.accuracy[q] += r.correct ? 1.0 : 0.0;
    report.attention_mass[q] += r.mass;
    correct += r.correct ? 1 : 0;
  }
  for (std::size_t q = 0; q < 4; ++q) {
    if (report.count[q] == 0) {
      throw CoverageError("no evaluation samples with the marker in quadrant " + std::to_string(q));
    }
    report.accuracy[q] /= report.count[q];
    report.attention_mass[q] /= report.count[q];
  }
  report.overall_accuracy = static_cast<double>(correct) / n;
  const auto [lo, hi] = std::minmax_element(report.accuracy.begin(), report.accuracy.end());
  report.spread = *hi - *lo;
  return report;
}

}  // namespace mca
