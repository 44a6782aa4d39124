#pragma once

// Image-to-instruction information flow: |A * dL/dA| summed over layers and
// heads, restricted to instruction-token queries and image-token keys, and
// laid out on the image grid.

#include <Eigen/Dense>

#include <array>
#include <span>
#include <vector>

#include "mca/attention.hpp"
#include "mca/toy_model.hpp"

namespace mca {

using SaliencyGrid = Eigen::MatrixXd;

// `attention` and `grads` are per layer. The sequence must contain an image
// grid.
SaliencyGrid aggregate_saliency(std::span<const AttentionResult> attention, std::span<const AttentionGrads> grads,
                                const MultimodalSequence& seq);

// Same as aggregate_saliency, one grid per layer.
std::vector<SaliencyGrid> saliency_by_layer(std::span<const AttentionResult> attention,
                                            std::span<const AttentionGrads> grads, const MultimodalSequence& seq);

SaliencyGrid saliency_flow(const ToyModel& model, const SyntheticSample& sample);

// Mean saliency grid over samples, reduced in sample order.
SaliencyGrid mean_saliency_flow(const ToyModel& model, std::span<const SyntheticSample> samples, int workers = 1);

// Sums of a square grid split at side/2: top-left, top-right, bottom-left,
// bottom-right.
std::array<double, 4> quadrant_sums(const Eigen::MatrixXd& grid);

}  // namespace mca
