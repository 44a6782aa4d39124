#pragma once

// RoPE attention with arbitrary position assignments and visibility masks,
// plus the decay and gradient-checking machinery built on top of it.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mca/masks.hpp"
#include "mca/positions.hpp"
#include "mca/rope.hpp"

namespace mca {

struct AttentionConfig {
  int head_dim = 0;
  int num_heads = 0;
  double scale = 0.0;  // 1/sqrt(head_dim)

  static AttentionConfig make(int head_dim, int num_heads);
};

// One n x n weight matrix and one n x head_dim output per head.
struct AttentionResult {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::MatrixXd> outputs;
};

struct AttentionGrads {
  std::vector<Eigen::MatrixXd> d_q;
  std::vector<Eigen::MatrixXd> d_k;
  std::vector<Eigen::MatrixXd> d_v;
  std::vector<Eigen::MatrixXd> d_weights;  // dL/dA, before the softmax backward
};

// weights(i, j) = softmax_j over visible keys of
//   scale * rotate(q_i, p_i) . rotate(k_j, p_j)
// Masked entries are exactly zero. Throws DegenerateMaskError when a query
// row sees nothing.
AttentionResult rope_attention(std::span<const Eigen::MatrixXd> q, std::span<const Eigen::MatrixXd> k,
                               std::span<const Eigen::MatrixXd> v, std::span<const Position> positions,
                               const MaskMatrix& mask, const RotaryFrequencies& freq,
                               const AttentionConfig& cfg);

// Backward pass of rope_attention given dL/d(outputs).
AttentionGrads rope_attention_backward(std::span<const Eigen::MatrixXd> q,
                                       std::span<const Eigen::MatrixXd> k,
                                       std::span<const Eigen::MatrixXd> v,
                                       std::span<const Position> positions, const RotaryFrequencies& freq,
                                       const AttentionConfig& cfg, const AttentionResult& forward,
                                       std::span<const Eigen::MatrixXd> d_outputs);

struct DecayProfile {
  std::vector<Position> distances;  // 0..max_dist
  std::vector<double> mean_score;
  int num_samples = 0;
};

// mean_score[delta] = mean over random unit vectors q of q^T R(delta) q.
// Each sample draws from its own seeded stream, so the result does not
// depend on `workers`.
DecayProfile decay_profile(const RotaryFrequencies& freq, int dim, int num_samples, Position max_dist,
                           std::uint64_t seed, int workers = 1);

// side x side map; cell (r, c) holds the decay score at relative distance
// query_position - layout.at(r, c).
Eigen::MatrixXd grid_decay_map(const GridSpec& grid, const PositionLayout& layout, Position query_position,
                               const RotaryFrequencies& freq, int dim, int num_samples, std::uint64_t seed,
                               int workers = 1);

struct Differentiable {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

// Max over components of |g_a - g_fd| / max(1, |g_a|, |g_fd|) with central
// differences of step epsilon.
double grad_check(const Differentiable& fn, const Eigen::VectorXd& point, double epsilon);

}  // namespace mca
