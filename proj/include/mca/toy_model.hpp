#pragma once

// A small pre-norm transformer over [image grid tokens | instruction tokens]
// trained to report where a single marker patch sits. Position indices for
// the image block come from a PositionLayout, so the layout is the only thing
// that differs between otherwise identical runs.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mca/attention.hpp"
#include "mca/masks.hpp"
#include "mca/positions.hpp"

namespace mca {

enum class LabelMode { quadrant, cell };

std::string_view to_string(LabelMode mode);
LabelMode parse_label_mode(std::string_view name);

struct ToyModelConfig {
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ffn_dim = 128;
  int side = 8;
  Scheme scheme = Scheme::raster;
  int vocab = 16;
  int instruction_len = 4;
  std::uint64_t seed = 0;
  LabelMode mode = LabelMode::quadrant;
  double rope_base = 10000.0;
  // Fixed 2D sinusoidal features added to image tokens, standing in for the
  // location information a vision encoder leaves in its patch features.
  double abs_pos_scale = 1.0;
  int batch_size = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Throws InvalidArgument / InvalidGrid describing the first bad field.
  void validate() const;
  GridSpec grid() const { return GridSpec(side); }
  int head_dim() const { return model_dim / heads; }
  int num_classes() const { return mode == LabelMode::quadrant ? 4 : side * side; }
  int marker_id() const { return vocab - 1; }
};

struct SyntheticSample {
  std::vector<int> patch_ids;  // row-major, side*side
  int marker_row = 0;
  int marker_col = 0;
  int label = 0;
};

// 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right; rows and columns
// split at side/2.
int quadrant_of(const GridSpec& grid, int row, int col);

std::vector<SyntheticSample> gen_dataset(const GridSpec& grid, int n, std::uint64_t seed, LabelMode mode,
                                         int vocab);

class ToyModel {
 public:
  struct Block {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
  };

  // Everything recorded by one forward (and optionally backward) pass.
  struct Trace {
    Eigen::VectorXd logits;
    double loss = 0.0;
    std::vector<AttentionResult> attention;     // per layer
    std::vector<AttentionGrads> attention_grads;  // per layer, when requested
  };

  explicit ToyModel(const ToyModelConfig& cfg);

  const ToyModelConfig& config() const { return cfg_; }
  const MultimodalSequence& sequence() const { return seq_; }
  const MaskMatrix& mask() const { return mask_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::Map<Eigen::MatrixXd> param(std::string_view name);
  Eigen::Map<const Eigen::MatrixXd> param(std::string_view name) const;

  double loss(const SyntheticSample& sample) const;
  // Adds dL/dparams into `grad` and returns L.
  double accumulate_gradient(const SyntheticSample& sample, Eigen::Ref<Eigen::VectorXd> grad) const;
  Trace trace(const SyntheticSample& sample, bool with_gradients) const;
  int predict(const SyntheticSample& sample) const;

  // FNV-1a over the raw parameter bytes.
  std::uint64_t parameter_hash() const;

 private:
  const Block& find(std::string_view name) const;
  double run(const SyntheticSample& sample, Eigen::VectorXd* grad, Trace* trace, bool backward) const;

  ToyModelConfig cfg_;
  MultimodalSequence seq_;
  MaskMatrix mask_;
  RotaryFrequencies freq_;
  AttentionConfig attn_cfg_;
  Eigen::MatrixXd abs_pos_;  // side*side x model_dim
  std::vector<Block> blocks_;
  Eigen::VectorXd params_;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> loss_trace;  // mean batch loss per step
};

TrainResult train(const ToyModelConfig& cfg, std::span<const SyntheticSample> dataset, int steps,
                  double learning_rate);

// Trains `model` in place; returns the loss trace.
std::vector<double> train_in_place(ToyModel& model, std::span<const SyntheticSample> dataset, int steps,
                                   double learning_rate);

struct RegionReport {
  std::array<double, 4> accuracy{};
  // Mean over samples, layers and heads of the attention weight from the
  // final instruction token to the marker token.
  std::array<double, 4> attention_mass{};
  std::array<int, 4> count{};
  double overall_accuracy = 0.0;
  double spread = 0.0;  // max - min accuracy
};

RegionReport eval_by_region(const ToyModel& model, std::span<const SyntheticSample> dataset, int workers = 1);

}  // namespace mca
