#include "usinr/inr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "usinr/error.hpp"

namespace usinr {

namespace detail {
void vector_sin(double* x, long n);
void vector_sincos(double* x, double* c, long n);
}  // namespace detail

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

Normalizer::Normalizer(const Vec3& lo, const Vec3& hi) : lo_(lo), hi_(hi) {
  for (int k = 0; k < 3; ++k)
    if (!(hi[k] > lo[k])) throw DataError("normalizer: empty bounding box");
}

Vec3 Normalizer::normalize(const Vec3& p) const {
  return (2.0 * (p - lo_).array() / (hi_ - lo_).array() - 1.0).matrix();
}

Vec3 Normalizer::denormalize(const Vec3& n) const {
  return (lo_.array() + (n.array() + 1.0) * 0.5 * (hi_ - lo_).array()).matrix();
}

std::array<double, 12> Normalizer::to_affine() const {
  std::array<double, 12> a{};
  for (int k = 0; k < 3; ++k) {
    const double scale = 2.0 / (hi_[k] - lo_[k]);
    a[4 * k + k] = scale;
    a[4 * k + 3] = -1.0 - scale * lo_[k];
  }
  return a;
}

Normalizer Normalizer::from_affine(const std::array<double, 12>& a) {
  Vec3 lo, hi;
  for (int k = 0; k < 3; ++k) {
    const double scale = a[4 * k + k];
    const double offset = a[4 * k + 3];
    if (!(scale > 0.0)) throw DataError("normalizer: non-positive scale in affine");
    lo[k] = (-1.0 - offset) / scale;
    hi[k] = (1.0 - offset) / scale;
  }
  return Normalizer(lo, hi);
}

Eigen::VectorXd encode(const Vec3& x, int frequencies) {
  Eigen::VectorXd out(6 * frequencies);
  for (int c = 0; c < 3; ++c) {
    double freq = std::numbers::pi;
    for (int k = 0; k < frequencies; ++k) {
      out[c * 2 * frequencies + 2 * k] = std::sin(freq * x[c]);
      out[c * 2 * frequencies + 2 * k + 1] = std::cos(freq * x[c]);
      freq *= 2.0;
    }
  }
  return out;
}

void encode_batch(const Eigen::Matrix3Xd& x, int frequencies, Eigen::MatrixXd& out) {
  out.resize(6 * frequencies, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = encode(x.col(j), frequencies);
}

void InrArchitecture::validate() const {
  if (use_positional_encoding && pe_frequencies < 1) throw ConfigError("inr: pe_frequencies must be >= 1");
  if (hidden_layers < 1) throw ConfigError("inr: hidden_layers must be >= 1");
  if (hidden_width < 1) throw ConfigError("inr: hidden_width must be >= 1");
  if (classes < 2) throw ConfigError("inr: classes must be >= 2");
  if (!(omega0 > 0.0)) throw ConfigError("inr: omega0 must be positive");
}

namespace {

DenseLayer uniform_layer(int out, int in, double w_bound, double b_bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> wd(-w_bound, w_bound);
  std::uniform_real_distribution<double> bd(-b_bound, b_bound);
  DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
  for (int c = 0; c < in; ++c)
    for (int r = 0; r < out; ++r) layer.weight(r, c) = wd(rng);
  for (int r = 0; r < out; ++r) layer.bias[r] = bd(rng);
  return layer;
}

// Forward activations kept for the backward pass.
struct Workspace {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> act;     // sin(z) per sine layer
  std::vector<Eigen::MatrixXd> dsin;    // cos(z) per sine layer
  Eigen::RowVectorXd intensity;         // sigmoid outputs
  Eigen::MatrixXd logits;
};

void apply_sine(Eigen::MatrixXd& z, Eigen::MatrixXd* dsin) {
  if (dsin) {
    dsin->resize(z.rows(), z.cols());
    detail::vector_sincos(z.data(), dsin->data(), z.size());
  } else {
    detail::vector_sin(z.data(), z.size());
  }
}

void run_forward(const InrArchitecture& arch, const ParameterSet& params, const Eigen::Matrix3Xd& x,
                 Workspace& ws, bool keep_derivatives) {
  if (arch.use_positional_encoding) {
    encode_batch(x, arch.pe_frequencies, ws.input);
  } else {
    ws.input = x;
  }
  const size_t layers = params.size() - 2;
  ws.act.resize(layers);
  ws.dsin.resize(keep_derivatives ? layers : 0);
  const Eigen::MatrixXd* prev = &ws.input;
  for (size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd& z = ws.act[l];
    z.noalias() = params[l].weight * *prev;
    z.colwise() += params[l].bias;
    if (l == 0) z *= arch.omega0;
    apply_sine(z, keep_derivatives ? &ws.dsin[l] : nullptr);
    if (!z.allFinite()) {
      std::ostringstream os;
      os << "inr: non-finite activation in sine layer " << l;
      throw NumericError(os.str());
    }
    prev = &z;
  }
  const DenseLayer& ih = params[layers];
  const DenseLayer& sh = params[layers + 1];
  ws.intensity.noalias() = ih.weight * *prev;
  ws.intensity.array() += ih.bias[0];
  ws.intensity = (1.0 / (1.0 + (-ws.intensity.array()).exp())).matrix();
  ws.logits.noalias() = sh.weight * *prev;
  ws.logits.colwise() += sh.bias;
  if (!ws.intensity.allFinite() || !ws.logits.allFinite())
    throw NumericError("inr: non-finite output in the heads");
}

}  // namespace

InrModel::InrModel(const InrArchitecture& arch, const Normalizer& normalizer, std::uint64_t seed)
    : arch_(arch), normalizer_(normalizer) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  const int width = arch_.hidden_width;
  int fan_in = arch_.input_dim();
  // First layer: U(-1/n, 1/n) scaled by omega0 at run time. Hidden layers:
  // U(-sqrt(6/n), sqrt(6/n)) with the hidden omega (1) folded in. Biases
  // U(-1/sqrt(n), 1/sqrt(n)).
  params_.push_back(uniform_layer(width, fan_in, 1.0 / fan_in, 1.0 / std::sqrt(fan_in), rng));
  for (int l = 1; l < arch_.hidden_layers; ++l) {
    params_.push_back(
        uniform_layer(width, width, std::sqrt(6.0 / width), 1.0 / std::sqrt(width), rng));
  }
  const double head_bound = std::sqrt(6.0 / width) / arch_.omega0;
  params_.push_back(uniform_layer(1, width, head_bound, 1.0 / std::sqrt(width), rng));
  params_.push_back(uniform_layer(arch_.classes, width, head_bound, 1.0 / std::sqrt(width), rng));
}

size_t InrModel::parameter_count() const {
  size_t n = 0;
  for (const auto& l : params_) n += l.weight.size() + l.bias.size();
  return n;
}

void InrModel::check_finite() const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].weight.allFinite() || !params_[i].bias.allFinite()) {
      std::ostringstream os;
      os << "inr: non-finite weights in tensor " << i;
      throw NumericError(os.str());
    }
  }
}

InrOutput InrModel::forward(const Vec3& normalized) const {
  Eigen::Matrix3Xd x(3, 1);
  x.col(0) = normalized;
  Eigen::VectorXd intensity;
  Eigen::MatrixXd logits;
  forward_batch(x, intensity, logits);
  return {intensity[0], logits.col(0)};
}

void InrModel::forward_batch(const Eigen::Matrix3Xd& x, Eigen::VectorXd& intensity,
                             Eigen::MatrixXd& logits) const {
  check_finite();
  Workspace ws;
  run_forward(arch_, params_, x, ws, false);
  intensity = ws.intensity.transpose();
  logits = std::move(ws.logits);
}

void TrainingBatch::validate(int classes) const {
  const auto n = coords.cols();
  if (n == 0) throw DataError("inr: empty training batch");
  if (intensity.size() != n || static_cast<Eigen::Index>(labels.size()) != n ||
      static_cast<Eigen::Index>(semantic_valid.size()) != n)
    throw DataError("inr: training batch fields differ in length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (semantic_valid[i] && (labels[i] < 0 || labels[i] >= classes))
      throw DataError("inr: label outside class range");
}

namespace {

// Returns the loss; fills the head gradients dz (intensity, 1 x N) and dlogits (M x N).
double head_loss(const Workspace& ws, const TrainingBatch& batch, Eigen::RowVectorXd* d_intensity,
                 Eigen::MatrixXd* d_logits) {
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  double intensity_sum = 0.0;
  double semantic_sum = 0.0;
  if (d_intensity) d_intensity->resize(n);
  if (d_logits) d_logits->setZero(ws.logits.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double y = ws.intensity[j];
    const double err = y - batch.intensity[j];
    intensity_sum += err * err;
    if (d_intensity) (*d_intensity)[j] = 2.0 * err * y * (1.0 - y) * inv_n;
    if (!batch.semantic_valid[j]) continue;
    const auto col = ws.logits.col(j);
    const double mx = col.maxCoeff();
    const double sum = (col.array() - mx).exp().sum();
    const double lse = mx + std::log(sum);
    semantic_sum += lse - col[batch.labels[j]];
    if (d_logits) {
      d_logits->col(j) = ((col.array() - lse).exp() * inv_n).matrix();
      (*d_logits)(batch.labels[j], j) -= inv_n;
    }
  }
  return (intensity_sum + semantic_sum) * inv_n;
}

}  // namespace

double loss(const InrModel& model, const TrainingBatch& batch) {
  batch.validate(model.architecture().classes);
  model.check_finite();
  Workspace ws;
  run_forward(model.architecture(), model.parameters(), batch.coords, ws, false);
  return head_loss(ws, batch, nullptr, nullptr);
}

double loss_and_gradient(const InrModel& model, const TrainingBatch& batch, ParameterSet& grad) {
  batch.validate(model.architecture().classes);
  const auto& arch = model.architecture();
  const auto& params = model.parameters();
  Workspace ws;
  run_forward(arch, params, batch.coords, ws, true);
  Eigen::RowVectorXd d_int;
  Eigen::MatrixXd d_logits;
  const double value = head_loss(ws, batch, &d_int, &d_logits);
  if (!std::isfinite(value)) throw NumericError("inr: non-finite loss");

  const size_t layers = params.size() - 2;
  grad.resize(params.size());
  const Eigen::MatrixXd& top = ws.act[layers - 1];
  grad[layers].weight.noalias() = d_int * top.transpose();
  grad[layers].bias.resize(1);
  grad[layers].bias[0] = d_int.sum();
  grad[layers + 1].weight.noalias() = d_logits * top.transpose();
  grad[layers + 1].bias = d_logits.rowwise().sum();

  Eigen::MatrixXd d_act = params[layers].weight.transpose() * d_int;
  d_act.noalias() += params[layers + 1].weight.transpose() * d_logits;
  for (size_t l = layers; l-- > 0;) {
    Eigen::MatrixXd dz = d_act.cwiseProduct(ws.dsin[l]);
    if (!dz.allFinite()) {
      std::ostringstream os;
      os << "inr: non-finite gradient in sine layer " << l;
      throw NumericError(os.str());
    }
    const Eigen::MatrixXd& prev = l == 0 ? ws.input : ws.act[l - 1];
    if (l == 0) dz *= arch.omega0;
    grad[l].weight.noalias() = dz * prev.transpose();
    grad[l].bias = dz.rowwise().sum();
    if (l > 0) d_act.noalias() = params[l].weight.transpose() * dz;
  }
  return value;
}

void AdamOptimizer::step(ParameterSet& params, const ParameterSet& grad) {
  if (m_.empty()) {
    m_ = params;
    v_ = params;
    for (auto& l : m_) {
      l.weight.setZero();
      l.bias.setZero();
    }
    v_ = m_;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m.array() = beta1_ * m.array() + (1.0 - beta1_) * g.array();
    v.array() = beta2_ * v.array() + (1.0 - beta2_) * g.array().square();
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (size_t i = 0; i < params.size(); ++i) {
    update(params[i].weight, grad[i].weight, m_[i].weight, v_[i].weight);
    update(params[i].bias, grad[i].bias, m_[i].bias, v_[i].bias);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (max_voxels_per_slice < 1) throw ConfigError("train: max_voxels_per_slice must be >= 1");
  if (!(divergence_factor > 1.0)) throw ConfigError("train: divergence factor must exceed 1");
}

namespace {

void fill_batch(const SliceSamples& s, int cap, std::mt19937_64& rng, std::vector<int>& scratch,
                TrainingBatch& batch) {
  const int n = static_cast<int>(s.coords.cols());
  const int take = std::min(n, cap);
  scratch.resize(n);
  std::iota(scratch.begin(), scratch.end(), 0);
  if (take < n) {
    // Partial Fisher-Yates, then restore scan order for cache-friendly gathers.
    for (int i = 0; i < take; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(scratch[i], scratch[pick(rng)]);
    }
    std::sort(scratch.begin(), scratch.begin() + take);
  }
  batch.coords.resize(3, take);
  batch.intensity.resize(take);
  batch.labels.resize(take);
  batch.semantic_valid.assign(take, s.semantic_valid ? 1 : 0);
  for (int i = 0; i < take; ++i) {
    const int src = scratch[i];
    batch.coords.col(i) = s.coords.col(src);
    batch.intensity[i] = s.intensity[src];
    batch.labels[i] = s.labels[src];
  }
}

}  // namespace

TrainResult train(InrModel model, const std::vector<SliceSamples>& slices, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (slices.empty()) throw DataError("train: no slices");
  for (const auto& s : slices)
    if (s.coords.cols() == 0) throw DataError("train: slice without samples");

  AdamOptimizer adam(config.learning_rate, config.beta1, config.beta2, config.eps);
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);
  std::vector<int> order(slices.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> scratch;
  TrainingBatch batch;
  ParameterSet grad;
  TrainResult result;
  double initial = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    for (int idx : order) {
      fill_batch(slices[idx], config.max_voxels_per_slice, rng, scratch, batch);
      acc += loss_and_gradient(model, batch, grad);
      adam.step(model.parameters(), grad);
    }
    const double mean = acc / static_cast<double>(slices.size());
    result.epoch_loss.push_back(mean);
    if (epoch == 0) initial = mean;
    if (!std::isfinite(mean) || mean > config.divergence_factor * initial) {
      std::ostringstream os;
      os << "train: diverged at epoch " << epoch << " (loss " << mean << ", initial " << initial
         << ")";
      throw NumericError(os.str());
    }
    if (on_epoch) on_epoch(epoch, mean);
  }
  model.check_finite();
  result.model = std::move(model);
  return result;
}

void write_loss_csv(const std::string& path, const std::vector<double>& epoch_loss) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "epoch,mean_loss\n";
  os.precision(17);
  for (size_t i = 0; i < epoch_loss.size(); ++i) os << i << ',' << epoch_loss[i] << '\n';
}

// Checkpoint layout (little-endian):
//   char[8] magic "USINRCKP", u32 version, u32 L, u32 use_pe, u32 hidden_layers,
//   u32 hidden_width, u32 classes, f64 omega0, f64[12] normalizer affine,
//   then every tensor of ParameterSet order as weight (row-major) followed by bias.
namespace {

constexpr char kMagic[8] = {'U', 'S', 'I', 'N', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace

void InrModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.pe_frequencies));
  put<std::uint32_t>(os, arch_.use_positional_encoding ? 1u : 0u);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.hidden_layers));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.hidden_width));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arch_.classes));
  put<double>(os, arch_.omega0);
  for (double a : normalizer_.to_affine()) put<double>(os, a);
  for (const auto& layer : params_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) put<double>(os, layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put<double>(os, layer.bias[r]);
  }
  if (!os) throw DataError("failed writing checkpoint " + path);
}

InrModel InrModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw DataError("checkpoint: unsupported version");
  InrArchitecture arch;
  arch.pe_frequencies = static_cast<int>(get<std::uint32_t>(is));
  arch.use_positional_encoding = get<std::uint32_t>(is) != 0;
  arch.hidden_layers = static_cast<int>(get<std::uint32_t>(is));
  arch.hidden_width = static_cast<int>(get<std::uint32_t>(is));
  arch.classes = static_cast<int>(get<std::uint32_t>(is));
  arch.omega0 = get<double>(is);
  arch.validate();
  std::array<double, 12> affine;
  for (double& a : affine) a = get<double>(is);
  InrModel model(arch, Normalizer::from_affine(affine), 0);
  for (auto& layer : model.params_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get<double>(is);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = get<double>(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes");
  model.check_finite();
  return model;
}

GridSpec GridSpec::covering(const Vec3& lo, const Vec3& hi, double spacing) {
  if (!(spacing > 0.0)) throw DataError("grid: spacing must be positive");
  GridSpec g;
  g.origin = lo;
  g.spacing = spacing;
  for (int k = 0; k < 3; ++k) {
    if (!(hi[k] >= lo[k])) throw DataError("grid: inverted bounding box");
    g.dims[k] = static_cast<int>(std::floor((hi[k] - lo[k]) / spacing + 1e-9)) + 1;
  }
  return g;
}

PredictedVolume predict_grid(const InrModel& model, const Vec3& bbox_lo, const Vec3& bbox_hi,
                             double resolution_mm, size_t max_points) {
  PredictedVolume vol;
  vol.grid = GridSpec::covering(bbox_lo, bbox_hi, resolution_mm);
  const size_t total = vol.grid.point_count();
  if (total > max_points) {
    std::ostringstream os;
    os << "predict_grid: " << total << " grid points exceed the budget of " << max_points;
    throw DataError(os.str());
  }
  vol.intensity.resize(total);
  vol.aorta_probability.resize(total);
  // Fixed-size chunks keep every point's arithmetic independent of its position.
  constexpr Eigen::Index kChunk = 1024;
  Eigen::Matrix3Xd x(3, kChunk);
  Eigen::VectorXd intensity;
  Eigen::MatrixXd logits;
  const auto& g = vol.grid;
  const auto& norm = model.normalizer();
  for (size_t start = 0; start < total; start += kChunk) {
    const size_t count = std::min<size_t>(kChunk, total - start);
    for (Eigen::Index c = 0; c < kChunk; ++c) {
      const size_t idx = start + std::min<size_t>(c, count - 1);
      const int i = static_cast<int>(idx % g.dims[0]);
      const int j = static_cast<int>((idx / g.dims[0]) % g.dims[1]);
      const int k = static_cast<int>(idx / (static_cast<size_t>(g.dims[0]) * g.dims[1]));
      x.col(c) = norm.normalize(g.point(i, j, k));
    }
    model.forward_batch(x, intensity, logits);
    for (size_t c = 0; c < count; ++c) {
      vol.intensity[start + c] = intensity[c];
      const auto col = logits.col(static_cast<Eigen::Index>(c));
      const double mx = col.maxCoeff();
      const double denom = (col.array() - mx).exp().sum();
      vol.aorta_probability[start + c] = std::exp(col[1] - mx) / denom;
    }
  }
  return vol;
}

}  // namespace usinr
