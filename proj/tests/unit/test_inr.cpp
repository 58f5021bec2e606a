#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "usinr/inr.hpp"

using namespace usinr;

namespace {

InrArchitecture small_arch(int width = 16, int layers = 3, int L = 4) {
  InrArchitecture a;
  a.hidden_width = width;
  a.hidden_layers = layers;
  a.pe_frequencies = L;
  return a;
}

InrModel small_model(std::uint64_t seed = 1) { return InrModel(small_arch(), Normalizer(), seed); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Forward pass written out with plain loops.
void naive_forward(const InrModel& m, const Vec3& x, double& intensity, std::vector<double>& logits) {
  const auto& a = m.architecture();
  Eigen::VectorXd h = a.use_positional_encoding ? encode(x, a.pe_frequencies) : Eigen::VectorXd(x);
  const auto& ps = m.parameters();
  for (size_t l = 0; l < m.sine_layer_count(); ++l) {
    const double w0 = l == 0 ? a.omega0 : 1.0;
    Eigen::VectorXd next(ps[l].weight.rows());
    for (int i = 0; i < next.size(); ++i) {
      double s = ps[l].bias[i];
      for (int j = 0; j < h.size(); ++j) s += ps[l].weight(i, j) * h[j];
      next[i] = std::sin(w0 * s);
    }
    h = next;
  }
  auto head = [&](const DenseLayer& d, int i) {
    double s = d.bias[i];
    for (int j = 0; j < h.size(); ++j) s += d.weight(i, j) * h[j];
    return s;
  };
  intensity = sigmoid(head(m.intensity_head(), 0));
  logits.clear();
  for (int c = 0; c < m.semantic_head().weight.rows(); ++c) logits.push_back(head(m.semantic_head(), c));
}

}  // namespace

TEST_CASE("normalizer round trip") {
  const Normalizer n(Vec3(-10, 0, 5), Vec3(30, 100, 25));
  CHECK((n.normalize(Vec3(-10, 0, 5)) - Vec3(-1, -1, -1)).norm() < 1e-15);
  CHECK((n.normalize(Vec3(30, 100, 25)) - Vec3(1, 1, 1)).norm() < 1e-15);
  const Vec3 p(3, 47, 11);
  CHECK((n.denormalize(n.normalize(p)) - p).norm() < 1e-12);
  const auto back = Normalizer::from_affine(n.to_affine());
  CHECK((back.normalize(p) - n.normalize(p)).norm() < 1e-12);
  CHECK_THROWS_AS(Normalizer(Vec3(0, 0, 0), Vec3(1, 0, 1)), DataError);
}

TEST_CASE("positional encoding") {
  const auto z = encode(Vec3::Zero(), 10);
  REQUIRE(z.size() == 60);
  for (int i = 0; i < 60; ++i) CHECK(z[i] == (i % 2 == 0 ? 0.0 : 1.0));
  const auto e = encode(Vec3(1, 1, 1), 2);
  const double want[4] = {0, -1, 0, 1};
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 4; ++k) CHECK(std::abs(e[4 * c + k] - want[k]) < 1e-12);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::Matrix3Xd batch(3, 20);
  for (int i = 0; i < 20; ++i) batch.col(i) = Vec3(u(rng), u(rng), u(rng));
  Eigen::MatrixXd out;
  encode_batch(batch, 7, out);
  for (int i = 0; i < 20; ++i) {
    const auto single = encode(batch.col(i), 7);
    CHECK((out.col(i) - single).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(single.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("forward matches a loop implementation and is deterministic") {
  const auto m = small_model(5);
  const auto m2 = small_model(5);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    const Vec3 x(u(rng), u(rng), u(rng));
    double ni;
    std::vector<double> nl;
    naive_forward(m, x, ni, nl);
    const auto out = m.forward(x);
    CHECK(std::abs(out.intensity - ni) < 1e-12);
    for (int c = 0; c < 2; ++c) CHECK(std::abs(out.logits[c] - nl[c]) < 1e-12);
    const auto out2 = m2.forward(x);
    CHECK(out.intensity == out2.intensity);
    CHECK(out.logits == out2.logits);
  }
}

TEST_CASE("fresh models give finite outputs") {
  const InrModel m(small_arch(64, 6, 10), Normalizer(), 9);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::Matrix3Xd x(3, 10000);
  for (int i = 0; i < x.cols(); ++i) x.col(i) = Vec3(u(rng), u(rng), u(rng));
  Eigen::VectorXd inten;
  Eigen::MatrixXd logits;
  m.forward_batch(x, inten, logits);
  CHECK(inten.allFinite());
  CHECK(logits.allFinite());
  const double mean = inten.mean();
  const double var = (inten.array() - mean).square().mean();
  CHECK(std::isfinite(var));
  CHECK(inten.minCoeff() >= 0.0);
  CHECK(inten.maxCoeff() <= 1.0);
}

TEST_CASE("permuting hidden neurons leaves the output unchanged") {
  const auto m = small_model(8);
  InrModel p = m;
  auto& ps = p.parameters();
  const int a = 2, b = 11;
  // swap neurons a and b of the first sine layer: its rows, then the next layer's columns
  ps[0].weight.row(a).swap(ps[0].weight.row(b));
  std::swap(ps[0].bias[a], ps[0].bias[b]);
  ps[1].weight.col(a).swap(ps[1].weight.col(b));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const auto o1 = m.forward(x), o2 = p.forward(x);
    CHECK(std::abs(o1.intensity - o2.intensity) < 1e-12);
    CHECK((o1.logits - o2.logits).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss against a hand computation") {
  const auto m = small_model(3);
  TrainingBatch b;
  b.coords.resize(3, 3);
  b.coords << 0.1, -0.5, 0.9, 0.2, 0.0, -0.3, -0.7, 0.4, 0.6;
  b.intensity = Eigen::Vector3d(0.2, 0.8, 0.5);
  b.labels = {0, 1, 1};
  b.semantic_valid = {1, 1, 0};
  double want = 0.0;
  for (int i = 0; i < 3; ++i) {
    double ni;
    std::vector<double> nl;
    naive_forward(m, b.coords.col(i), ni, nl);
    want += (ni - b.intensity[i]) * (ni - b.intensity[i]);
    if (b.semantic_valid[i]) {
      const double lse = std::log(std::exp(nl[0]) + std::exp(nl[1]));
      want += lse - nl[b.labels[i]];
    }
  }
  CHECK(std::abs(loss(m, b) - want / 3.0) < 1e-10);

  b.semantic_valid = {0, 0, 0};
  double mse = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = m.forward(b.coords.col(i)).intensity - b.intensity[i];
    mse += d * d;
  }
  CHECK(std::abs(loss(m, b) - mse / 3.0) < 1e-12);

  TrainingBatch empty;
  CHECK_THROWS(loss(m, empty));
}

TEST_CASE("loss is zero at a perfect fit") {
  // Zero heads give intensity 0.5 everywhere; every slice semantically
  // invalid leaves only the intensity term.
  InrArchitecture a = small_arch();
  InrModel m(a, Normalizer(), 2);
  for (auto* d : {&m.parameters()[m.parameters().size() - 2], &m.parameters().back()}) {
    d->weight.setZero();
    d->bias.setZero();
  }
  auto b = gradcheck::random_batch(16, 2, 3, 1.0);
  b.intensity.setConstant(0.5);
  for (auto& l : b.labels) l = 0;
  CHECK(loss(m, b) == 0.0);
  ParameterSet g;
  loss_and_gradient(m, b, g);
  for (const auto& d : g) {
    CHECK(d.weight.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(d.bias.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gradients match central differences") {
  const InrModel m(small_arch(12, 4, 3), Normalizer(), 21);
  const auto b = gradcheck::random_batch(9, 2, 5);
  const auto probes = gradcheck::probe(m, b, 6, 1e-5, 7);
  CHECK(gradcheck::max_rel_error(probes) < 1e-4);

  // one sample, zero semantic head: the upstream semantic gradient comes from CE at the uniform softmax
  InrModel z = m;
  z.parameters().back().weight.setZero();
  z.parameters().back().bias.setZero();
  const auto one = gradcheck::random_batch(1, 2, 8, 0.0);
  for (const auto& p : gradcheck::probe(z, one, 4, 1e-5, 9)) CHECK(std::abs(p.analytic - p.numeric) < 1e-6);
}

TEST_CASE("invalid labels do not reach the loss or gradient") {
  const auto m = small_model(4);
  auto b = gradcheck::random_batch(50, 2, 6, 0.5);
  ParameterSet g1, g2;
  const double l1 = loss_and_gradient(m, b, g1);
  for (size_t i = 0; i < b.size(); ++i)
    if (!b.semantic_valid[i]) b.labels[i] = 1 - b.labels[i];
  const double l2 = loss_and_gradient(m, b, g2);
  CHECK(l1 == l2);
  for (size_t t = 0; t < g1.size(); ++t) {
    CHECK(g1[t].weight == g2[t].weight);
    CHECK(g1[t].bias == g2[t].bias);
  }
}

TEST_CASE("adam leaves weights unchanged under zero gradients") {
  auto m = small_model(4);
  const auto before = m.parameters();
  ParameterSet zero = before;
  for (auto& d : zero) {
    d.weight.setZero();
    d.bias.setZero();
  }
  AdamOptimizer opt(1e-3);
  for (int i = 0; i < 5; ++i) opt.step(m.parameters(), zero);
  for (size_t t = 0; t < before.size(); ++t) CHECK(m.parameters()[t].weight == before[t].weight);
  CHECK(opt.steps() == 5);
}

TEST_CASE("adam first step moves each weight by the learning rate") {
  auto m = small_model(4);
  const auto before = m.parameters();
  ParameterSet g = before;
  for (auto& d : g) {
    d.weight.setConstant(0.3);
    d.bias.setConstant(-2.0);
  }
  AdamOptimizer opt(1e-2);
  opt.step(m.parameters(), g);
  const auto& w = m.parameters()[0].weight;
  CHECK(std::abs(w(0, 0) - (before[0].weight(0, 0) - 1e-2)) < 1e-9);
  CHECK(std::abs(m.parameters()[0].bias[0] - (before[0].bias[0] + 1e-2)) < 1e-9);
}

TEST_CASE("training fits a constant image and is deterministic") {
  SliceSamples s;
  const int n = 200;
  s.coords.resize(3, n);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < n; ++i) s.coords.col(i) = Vec3(u(rng), u(rng), 0.0);
  s.intensity = Eigen::VectorXd::Constant(n, 0.3);
  s.labels.assign(n, 1);
  TrainConfig tc;
  tc.epochs = 300;
  tc.learning_rate = 1e-3;
  tc.seed = 4;
  const auto r1 = train(small_model(2), {s}, tc);
  const auto r2 = train(small_model(2), {s}, tc);
  REQUIRE(r1.epoch_loss.size() == 300);
  CHECK(r1.epoch_loss == r2.epoch_loss);
  for (size_t t = 0; t < r1.model.parameters().size(); ++t)
    CHECK(r1.model.parameters()[t].weight == r2.model.parameters()[t].weight);
  double mse = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = r1.model.forward(s.coords.col(i)).intensity - 0.3;
    mse += d * d;
  }
  CHECK(mse / n < 1e-4);
}

TEST_CASE("divergence is reported") {
  SliceSamples s;
  s.coords = Eigen::Matrix3Xd::Zero(3, 4);
  s.coords(0, 1) = 0.5;
  s.intensity = Eigen::VectorXd::Constant(4, 0.5);
  s.labels.assign(4, 0);
  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 10.0;
  tc.divergence_factor = 1.0001;
  CHECK_THROWS_AS(train(small_model(2), {s}, tc), NumericError);
}

TEST_CASE("checkpoint round trip") {
  const auto m = small_model(6);
  const auto path = (std::filesystem::temp_directory_path() / "usinr_test_model.bin").string();
  m.save(path);
  const auto back = InrModel::load(path);
  for (size_t t = 0; t < m.parameters().size(); ++t) CHECK(back.parameters()[t].weight == m.parameters()[t].weight);
  CHECK(back.architecture().omega0 == m.architecture().omega0);
  CHECK(back.forward(Vec3(0.1, 0.2, 0.3)).intensity == m.forward(Vec3(0.1, 0.2, 0.3)).intensity);
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(InrModel::load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite weights are named") {
  auto m = small_model(6);
  m.parameters()[1].weight(0, 0) = std::nan("");
  CHECK_THROWS_AS(m.check_finite(), NumericError);
}

TEST_CASE("grid prediction") {
  const auto m = small_model(6);
  const auto coarse = predict_grid(m, Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.5);
  const auto fine = predict_grid(m, Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.25);
  CHECK(coarse.grid.dims == std::array<int, 3>{5, 5, 5});
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) {
        const double a = coarse.aorta_probability[coarse.grid.index(i, j, k)];
        const double b = fine.aorta_probability[fine.grid.index(2 * i, 2 * j, 2 * k)];
        CHECK(a == b);
      }
  for (double p : fine.aorta_probability) CHECK(std::isfinite(p));
  CHECK_THROWS_AS(predict_grid(m, Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.01, 1000), DataError);
}
