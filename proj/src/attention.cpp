#include "mca/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace mca {

AttentionConfig AttentionConfig::make(int head_dim, int num_heads) {
  if (head_dim < 2 || head_dim % 2 != 0) {
    throw InvalidDimension("head_dim must be even and >= 2, got " + std::to_string(head_dim));
  }
  if (num_heads < 1) throw InvalidArgument("num_heads must be positive");
  return {head_dim, num_heads, 1.0 / std::sqrt(static_cast<double>(head_dim))};
}

namespace {

void check_heads(std::span<const Eigen::MatrixXd> q, std::span<const Eigen::MatrixXd> k,
                 std::span<const Eigen::MatrixXd> v, std::size_t n, const RotaryFrequencies& freq,
                 const AttentionConfig& cfg) {
  const auto heads = static_cast<std::size_t>(cfg.num_heads);
  if (q.size() != heads || k.size() != heads || v.size() != heads) {
    throw ShapeError("expected " + std::to_string(heads) + " heads of Q, K and V");
  }
  if (freq.dim() != cfg.head_dim) throw ShapeError("rotary dimension differs from head_dim");
  const auto rows = static_cast<Eigen::Index>(n);
  for (std::size_t h = 0; h < heads; ++h) {
    if (q[h].rows() != rows || k[h].rows() != rows || v[h].rows() != rows) {
      throw ShapeError("Q, K, V must have one row per position");
    }
    if (q[h].cols() != cfg.head_dim || k[h].cols() != cfg.head_dim || v[h].cols() != cfg.head_dim) {
      throw ShapeError("Q, K, V must have head_dim columns");
    }
  }
}

void parallel_for(int count, int workers, const std::function<void(int, int)>& body) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    body(0, count);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int b = w * chunk;
    const int e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back(body, b, e);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

AttentionResult rope_attention(std::span<const Eigen::MatrixXd> q, std::span<const Eigen::MatrixXd> k,
                               std::span<const Eigen::MatrixXd> v, std::span<const Position> positions,
                               const MaskMatrix& mask, const RotaryFrequencies& freq,
                               const AttentionConfig& cfg) {
  const std::size_t n = positions.size();
  check_heads(q, k, v, n, freq, cfg);
  const auto rows = static_cast<Eigen::Index>(n);
  if (mask.rows() != rows || mask.cols() != rows) throw ShapeError("mask must be n x n");
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!mask.row(i).any()) {
      throw DegenerateMaskError("query row " + std::to_string(i) + " has no visible keys");
    }
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  AttentionResult out;
  out.weights.reserve(q.size());
  out.outputs.reserve(q.size());
  for (std::size_t h = 0; h < q.size(); ++h) {
    const Eigen::MatrixXd qr = rotate_rows(q[h], positions, freq);
    const Eigen::MatrixXd kr = rotate_rows(k[h], positions, freq);
    Eigen::MatrixXd logits = (qr * kr.transpose()) * cfg.scale;
    logits = mask.select(logits, kNegInf);
    Eigen::MatrixXd w(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double mx = logits.row(i).maxCoeff();
      w.row(i) = (logits.row(i).array() - mx).exp().matrix();
      w.row(i) /= w.row(i).sum();
    }
    out.outputs.push_back(w * v[h]);
    out.weights.push_back(std::move(w));
  }
  return out;
}

AttentionGrads rope_attention_backward(std::span<const Eigen::MatrixXd> q,
                                       std::span<const Eigen::MatrixXd> k,
                                       std::span<const Eigen::MatrixXd> v,
                                       std::span<const Position> positions, const RotaryFrequencies& freq,
                                       const AttentionConfig& cfg, const AttentionResult& forward,
                                       std::span<const Eigen::MatrixXd> d_outputs) {
  check_heads(q, k, v, positions.size(), freq, cfg);
  if (d_outputs.size() != q.size() || forward.weights.size() != q.size()) {
    throw ShapeError("backward: head count mismatch");
  }
  AttentionGrads g;
  for (std::size_t h = 0; h < q.size(); ++h) {
    const Eigen::MatrixXd& a = forward.weights[h];
    const Eigen::MatrixXd& d_out = d_outputs[h];
    g.d_v.push_back(a.transpose() * d_out);
    Eigen::MatrixXd d_a = d_out * v[h].transpose();
    // Softmax backward; masked entries have a == 0 and drop out.
    const Eigen::VectorXd row_dot = (d_a.array() * a.array()).rowwise().sum();
    const Eigen::MatrixXd d_logits =
        (a.array() * (d_a.colwise() - row_dot).array()).matrix() * cfg.scale;
    const Eigen::MatrixXd qr = rotate_rows(q[h], positions, freq);
    const Eigen::MatrixXd kr = rotate_rows(k[h], positions, freq);
    g.d_q.push_back(rotate_rows(d_logits * kr, positions, freq, -1));
    g.d_k.push_back(rotate_rows(d_logits.transpose() * qr, positions, freq, -1));
    g.d_weights.push_back(std::move(d_a));
  }
  return g;
}

DecayProfile decay_profile(const RotaryFrequencies& freq, int dim, int num_samples, Position max_dist,
                           std::uint64_t seed, int workers) {
  if (num_samples < 1) throw InvalidArgument("num_samples must be >= 1");
  if (dim != freq.dim()) throw ShapeError("decay_profile: dim does not match frequency table");
  if (max_dist < 0) throw InvalidArgument("max_dist must be nonnegative");

  const auto len = static_cast<std::size_t>(max_dist + 1);
  // Per-sample rows, reduced afterwards in sample order.
  Eigen::MatrixXd scores(num_samples, static_cast<Eigen::Index>(len));
  parallel_for(num_samples, workers, [&](int begin, int end) {
    for (int s = begin; s < end; ++s) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(s)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal;
      Eigen::VectorXd q(dim);
      for (int i = 0; i < dim; ++i) q[i] = normal(rng);
      q.normalize();
      for (std::size_t d = 0; d < len; ++d) {
        scores(s, static_cast<Eigen::Index>(d)) = q.dot(rotate(q, static_cast<Position>(d), freq));
      }
    }
  });

  DecayProfile p;
  p.num_samples = num_samples;
  p.distances.resize(len);
  p.mean_score.assign(len, 0.0);
  for (std::size_t d = 0; d < len; ++d) {
    p.distances[d] = static_cast<Position>(d);
    double acc = 0.0;
    for (int s = 0; s < num_samples; ++s) acc += scores(s, static_cast<Eigen::Index>(d));
    p.mean_score[d] = acc / num_samples;
  }
  return p;
}

Eigen::MatrixXd grid_decay_map(const GridSpec& grid, const PositionLayout& layout, Position query_position,
                               const RotaryFrequencies& freq, int dim, int num_samples, std::uint64_t seed,
                               int workers) {
  if (layout.side != grid.side()) throw ShapeError("layout does not match grid");
  if (query_position < layout.max_index()) {
    throw InvalidArgument("query position must not precede any image token");
  }
  const Position min_index = *std::min_element(layout.indices.begin(), layout.indices.end());
  const DecayProfile profile = decay_profile(freq, dim, num_samples, query_position - min_index, seed, workers);
  Eigen::MatrixXd map(grid.side(), grid.side());
  for (int r = 0; r < grid.side(); ++r) {
    for (int c = 0; c < grid.side(); ++c) {
      map(r, c) = profile.mean_score[static_cast<std::size_t>(query_position - layout.at(r, c))];
    }
  }
  return map;
}

double grad_check(const Differentiable& fn, const Eigen::VectorXd& point, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw InvalidArgument("epsilon must be in (0, 1e-2]");
  const Eigen::VectorXd analytic = fn.gradient(point);
  if (analytic.size() != point.size()) throw ShapeError("gradient size differs from point size");
  if (!analytic.allFinite()) throw NumericError("analytic gradient is not finite");

  Eigen::VectorXd x = point;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + epsilon;
    const double up = fn.value(x);
    x[i] = saved - epsilon;
    const double down = fn.value(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("function value is not finite at component " + std::to_string(i));
    }
    const double fd = (up - down) / (2.0 * epsilon);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

}  // namespace mca
