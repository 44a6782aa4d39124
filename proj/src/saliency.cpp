#include "mca/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace mca {

namespace {

SaliencyGrid layer_saliency(const AttentionResult& attn, const AttentionGrads& grads, const MultimodalSequence& seq) {
  const GridSpec& grid = *seq.grid();
  SaliencyGrid out = SaliencyGrid::Zero(grid.side(), grid.side());
  if (attn.weights.size() != grads.d_weights.size()) throw ShapeError("saliency: head count mismatch");
  for (std::size_t h = 0; h < attn.weights.size(); ++h) {
    const Eigen::MatrixXd& a = attn.weights[h];
    const Eigen::MatrixXd& da = grads.d_weights[h];
    if (a.rows() != seq.size() || da.rows() != seq.size()) throw ShapeError("saliency: matrix size mismatch");
    const Eigen::MatrixXd flow = (a.array() * da.array()).abs().matrix();
    const Eigen::RowVectorXd per_key =
        flow.block(seq.suffix_begin(), seq.image_begin(), seq.suffix_len(), seq.image_len()).colwise().sum();
    for (int cell = 0; cell < grid.total(); ++cell) {
      out(grid.row_of(cell), grid.col_of(cell)) += per_key(cell);
    }
  }
  return out;
}

}  // namespace

std::vector<SaliencyGrid> saliency_by_layer(std::span<const AttentionResult> attention,
                                            std::span<const AttentionGrads> grads, const MultimodalSequence& seq) {
  if (!seq.grid()) throw ShapeError("saliency needs a sequence with an image grid");
  if (attention.size() != grads.size()) throw ShapeError("saliency: layer count mismatch");
  std::vector<SaliencyGrid> out;
  out.reserve(attention.size());
  for (std::size_t l = 0; l < attention.size(); ++l) out.push_back(layer_saliency(attention[l], grads[l], seq));
  return out;
}

SaliencyGrid aggregate_saliency(std::span<const AttentionResult> attention, std::span<const AttentionGrads> grads,
                                const MultimodalSequence& seq) {
  const std::vector<SaliencyGrid> layers = saliency_by_layer(attention, grads, seq);
  SaliencyGrid total = SaliencyGrid::Zero(seq.grid()->side(), seq.grid()->side());
  for (const auto& g : layers) total += g;
  return total;
}

SaliencyGrid saliency_flow(const ToyModel& model, const SyntheticSample& sample) {
  const ToyModel::Trace t = model.trace(sample, true);
  if (!std::isfinite(t.loss)) throw NumericError("saliency: loss is not finite");
  return aggregate_saliency(t.attention, t.attention_grads, model.sequence());
}

SaliencyGrid mean_saliency_flow(const ToyModel& model, std::span<const SyntheticSample> samples, int workers) {
  if (samples.empty()) throw InvalidArgument("saliency needs at least one sample");
  const int n = static_cast<int>(samples.size());
  std::vector<SaliencyGrid> grids(samples.size());
  auto body = [&](int b, int e) {
    for (int s = b; s < e; ++s) grids[static_cast<std::size_t>(s)] = saliency_flow(model, samples[static_cast<std::size_t>(s)]);
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
  SaliencyGrid mean = SaliencyGrid::Zero(grids.front().rows(), grids.front().cols());
  for (const auto& g : grids) mean += g;
  return mean / n;
}

std::array<double, 4> quadrant_sums(const Eigen::MatrixXd& grid) {
  if (grid.rows() != grid.cols() || grid.rows() % 2 != 0) throw ShapeError("quadrant_sums needs an even square grid");
  const Eigen::Index h = grid.rows() / 2;
  return {grid.topLeftCorner(h, h).sum(), grid.topRightCorner(h, h).sum(), grid.bottomLeftCorner(h, h).sum(),
          grid.bottomRightCorner(h, h).sum()};
}

}  // namespace mca
