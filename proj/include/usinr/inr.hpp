#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "usinr/geometry.hpp"

namespace usinr {

/// Affine map from world mm onto [-1, 1]^3 over an axis-aligned box.
class Normalizer {
 public:
  Normalizer() = default;
  /// Throws DataError for an empty or inverted box.
  Normalizer(const Vec3& lo, const Vec3& hi);

  Vec3 normalize(const Vec3& world) const;
  Vec3 denormalize(const Vec3& n) const;
  const Vec3& lo() const { return lo_; }
  const Vec3& hi() const { return hi_; }

  /// World -> normalized as a row-major 3x4 affine matrix.
  std::array<double, 12> to_affine() const;
  static Normalizer from_affine(const std::array<double, 12>& a);

 private:
  Vec3 lo_{-1.0, -1.0, -1.0};
  Vec3 hi_{1.0, 1.0, 1.0};
};

/// Per component p: sin(2^k pi p), cos(2^k pi p) for k = 0..L-1, components in x, y, z order.
Eigen::VectorXd encode(const Vec3& x, int frequencies);
/// Column-wise encoding of a 3 x N batch.
void encode_batch(const Eigen::Matrix3Xd& x, int frequencies, Eigen::MatrixXd& out);

struct InrArchitecture {
  int pe_frequencies = 10;
  bool use_positional_encoding = true;
  int hidden_layers = 6;
  int hidden_width = 256;
  int classes = 2;
  double omega0 = 30.0;

  int input_dim() const { return use_positional_encoding ? 6 * pe_frequencies : 3; }
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// All trainable tensors in a fixed order: sine layers, intensity head, semantic head.
using ParameterSet = std::vector<DenseLayer>;

struct InrOutput {
  double intensity = 0.0;
  Eigen::VectorXd logits;
};

/// Sine-activated MLP on positionally encoded coordinates with an intensity
/// head (sigmoid) and a semantic head (raw logits).
class InrModel {
 public:
  InrModel() = default;
  /// SIREN initialisation drawn from `seed`.
  InrModel(const InrArchitecture& arch, const Normalizer& normalizer, std::uint64_t seed);

  const InrArchitecture& architecture() const { return arch_; }
  const Normalizer& normalizer() const { return normalizer_; }

  InrOutput forward(const Vec3& normalized) const;
  /// Batch forward on normalized coordinates (3 x N).
  void forward_batch(const Eigen::Matrix3Xd& x, Eigen::VectorXd& intensity,
                     Eigen::MatrixXd& logits) const;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  size_t parameter_count() const;
  size_t sine_layer_count() const { return params_.size() - 2; }
  const DenseLayer& intensity_head() const { return params_[params_.size() - 2]; }
  const DenseLayer& semantic_head() const { return params_.back(); }

  /// Throws NumericError naming the first tensor with a non-finite entry.
  void check_finite() const;

  void save(const std::string& path) const;
  static InrModel load(const std::string& path);

 private:
  InrArchitecture arch_;
  Normalizer normalizer_;
  ParameterSet params_;
};

/// Training samples of one slice, coordinates already normalized.
struct TrainingBatch {
  Eigen::Matrix3Xd coords;
  Eigen::VectorXd intensity;     // targets in [0, 1]
  std::vector<int> labels;       // class ids; ignored where semantic_valid is false
  std::vector<char> semantic_valid;

  size_t size() const { return static_cast<size_t>(coords.cols()); }
  void validate(int classes) const;
};

/// (sum of squared intensity errors + cross-entropy over semantic-valid samples) / batch size.
double loss(const InrModel& model, const TrainingBatch& batch);

/// Loss and exact reverse-mode gradient. `grad` is resized to match the model.
double loss_and_gradient(const InrModel& model, const TrainingBatch& batch, ParameterSet& grad);

/// Adam with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParameterSet& params, const ParameterSet& grad);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ParameterSet m_, v_;
};

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_voxels_per_slice = 8192;
  std::uint64_t seed = 0;
  double divergence_factor = 1e3;

  void validate() const;
};

/// One slice of training data: every pixel, plus whether its labels may be trusted.
struct SliceSamples {
  Eigen::Matrix3Xd coords;  // normalized
  Eigen::VectorXd intensity;
  std::vector<int> labels;
  bool semantic_valid = true;
};

struct TrainResult {
  InrModel model;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Epochs x slices, one slice per Adam step (voxels subsampled uniformly to the
/// per-slice cap). Throws NumericError if the loss exceeds divergence_factor x
/// the first epoch's loss.
TrainResult train(InrModel model, const std::vector<SliceSamples>& slices, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

void write_loss_csv(const std::string& path, const std::vector<double>& epoch_loss);

/// Regular grid: point (i, j, k) sits at origin + (i, j, k) * spacing.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::array<int, 3> dims{0, 0, 0};

  size_t point_count() const { return static_cast<size_t>(dims[0]) * dims[1] * dims[2]; }
  size_t index(int i, int j, int k) const {
    return (static_cast<size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  Vec3 point(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  /// Grid covering [lo, hi] with the given spacing.
  static GridSpec covering(const Vec3& lo, const Vec3& hi, double spacing);
};

struct PredictedVolume {
  GridSpec grid;
  std::vector<double> intensity;
  std::vector<double> aorta_probability;  // softmax probability of class 1
};

/// Evaluates the model on a world-space grid. Throws DataError when the grid
/// exceeds `max_points`.
PredictedVolume predict_grid(const InrModel& model, const Vec3& bbox_lo, const Vec3& bbox_hi,
                             double resolution_mm, size_t max_points = size_t{1} << 26);

}  // namespace usinr
