#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "bremen/rng.hpp"
#include "bremen/tensor.hpp"
#include "oracles.hpp"

using namespace bremen;

namespace {

MlpParams random_net(std::uint64_t seed, std::vector<std::size_t> dims) {
  MlpParams p = MlpParams::xavier(dims, seed);
  Rng rng(seed + 17);
  for (auto& l : p.layers) l.bias = rng.normal_vector(l.bias.size()) * 0.3;
  return p;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("zero net outputs zeros") {
  const std::vector<std::size_t> dims{3, 5, 2};
  const auto p = MlpParams::zeros(dims);
  Matrix x(4, 3);
  x.setRandom();
  CHECK(mlp_forward(p, x).isZero(0.0));
}

TEST_CASE("identity single layer") {
  const std::vector<std::size_t> dims{2, 2};
  auto p = MlpParams::zeros(dims);
  p.layers[0].weight.setIdentity();
  Matrix x(1, 2);
  x << 1.0, 2.0;
  const Matrix y = mlp_forward(p, x);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 2.0);
}

TEST_CASE("one hidden unit evaluates tanh") {
  const std::vector<std::size_t> dims{1, 1, 1};
  auto p = MlpParams::zeros(dims);
  p.layers[0].weight(0, 0) = 1.0;
  p.layers[1].weight(0, 0) = 1.0;
  Matrix x(1, 1);
  x << 0.5;
  CHECK(mlp_forward(p, x)(0, 0) == doctest::Approx(std::tanh(0.5)).epsilon(1e-14));
  CHECK(mlp_forward(p, x)(0, 0) == doctest::Approx(0.4621).epsilon(1e-4));
}

TEST_CASE("forward rejects wrong input width") {
  const std::vector<std::size_t> dims{3, 2};
  const auto p = MlpParams::zeros(dims);
  CHECK_THROWS_AS(mlp_forward(p, Matrix::Zero(2, 4)), ShapeError);
}

TEST_CASE("forward matches a loop implementation") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_net(100 + trial, {4, 7, 6, 3});
    const Matrix x = random_matrix(rng, 5, 4);
    CHECK((mlp_forward(p, x) - oracle::forward(p, x)).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("parameter count and flat round trip") {
  const auto p = random_net(1, {3, 4, 2});
  CHECK(p.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
  auto q = MlpParams::zeros(p.dims());
  q.set_flat(p.flat());
  CHECK(q == p);
  // layer-major, weight row-major then bias
  CHECK(p.flat()[1] == p.layers[0].weight(0, 1));
  CHECK(p.flat()[12] == p.layers[0].bias[0]);
}

TEST_CASE("backward of a linear 1x1 net") {
  const std::vector<std::size_t> dims{1, 1};
  auto p = MlpParams::zeros(dims);
  p.layers[0].weight(0, 0) = 0.7;
  Matrix x(1, 1);
  x << 2.0;
  const Vector g = mlp_backward(p, x, Matrix::Ones(1, 1));
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(1.0));
}

TEST_CASE("backward with zero upstream is zero") {
  const auto p = random_net(2, {3, 5, 2});
  Matrix x(4, 3);
  x.setRandom();
  CHECK(mlp_backward(p, x, Matrix::Zero(4, 2)).isZero(0.0));
}

TEST_CASE("backward matches central differences on 100 random nets") {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 1 + rng.index(4), h1 = 1 + rng.index(6), h2 = 1 + rng.index(6), out = 1 + rng.index(3);
    const auto p = random_net(500 + trial, {in, h1, h2, out});
    const Matrix x = random_matrix(rng, 3, static_cast<Eigen::Index>(in));
    const Matrix up = random_matrix(rng, 3, static_cast<Eigen::Index>(out));
    const Vector analytic = mlp_backward(p, x, up);
    auto f = [&](const Vector& theta) {
      auto q = p;
      q.set_flat(theta);
      return (oracle::forward(q, x).array() * up.array()).sum();
    };
    worst = std::max(worst, oracle::rel_err(analytic, oracle::fd_gradient(f, p.flat())));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("jvp of a linear 1x1 net and zero tangent") {
  const std::vector<std::size_t> dims{1, 1};
  auto p = MlpParams::zeros(dims);
  Matrix x(1, 1);
  x << 3.0;
  Vector v(2);
  v << 1.0, 0.0;
  CHECK(jacobian_vector_product(p, x, v)(0, 0) == doctest::Approx(3.0));
  CHECK(jacobian_vector_product(p, x, Vector::Zero(2)).isZero(0.0));
  CHECK_THROWS_AS(jacobian_vector_product(p, x, Vector::Zero(3)), ShapeError);
}

TEST_CASE("jvp matches directional differences and is dual to backward") {
  Rng rng(12);
  double worst_fd = 0.0, worst_dual = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_net(900 + trial, {3, 6, 5, 2});
    const Matrix x = random_matrix(rng, 4, 3);
    const Vector v = rng.normal_vector(static_cast<Eigen::Index>(p.param_count()));
    const Matrix jv = jacobian_vector_product(p, x, v);
    const double h = 1e-5;
    auto pp = p, pm = p;
    pp.add_scaled(v, h);
    pm.add_scaled(v, -h);
    const Matrix fd = (oracle::forward(pp, x) - oracle::forward(pm, x)) / (2.0 * h);
    worst_fd = std::max(worst_fd, oracle::rel_err(jv.reshaped(), fd.reshaped()));

    const Matrix u = random_matrix(rng, 4, 2);
    const double lhs = (u.array() * jv.array()).sum();
    const double rhs = mlp_backward(p, x, u).dot(v);
    worst_dual = std::max(worst_dual, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
  }
  CHECK(worst_fd < 1e-4);
  CHECK(worst_dual < 1e-8);
}

TEST_CASE("adam step arithmetic") {
  AdamState s(1, 0.001);
  Vector x(1);
  x << 0.5;
  adam_step(s, x, Vector::Zero(1));
  CHECK(x[0] == 0.5);
  AdamState s2(1, 0.001);
  Vector y(1);
  y << 0.5;
  adam_step(s2, y, Vector::Ones(1));
  // m_hat = 1, v_hat = 1 after bias correction
  CHECK(y[0] == doctest::Approx(0.5 - 0.001 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(s2.step == 1);
}

TEST_CASE("adam minimises x^2") {
  AdamState s(1, 0.01);
  Vector x(1);
  x << 1.0;
  int steps = 0;
  while (std::abs(x[0]) >= 1e-3 && steps < 10000) {
    adam_step(s, x, 2.0 * x);
    ++steps;
  }
  CHECK(std::abs(x[0]) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients and bad lengths") {
  AdamState s(2, 0.01);
  Vector x = Vector::Zero(2);
  Vector g(2);
  g << 1.0, std::nan("");
  CHECK_THROWS_AS(adam_step(s, x, g), NumericError);
  CHECK_THROWS_AS(adam_step(s, x, Vector::Zero(3)), ShapeError);
}

TEST_CASE("checkpoint round trip and truncation") {
  const auto p = random_net(5, {3, 4, 2});
  std::stringstream ss;
  write_mlp(ss, p);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "BRMN");
  std::stringstream in(bytes);
  CHECK(read_mlp(in) == p);
  std::stringstream cut(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_mlp(cut), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream bad_in(bad);
  CHECK_THROWS_AS(read_mlp(bad_in), FormatError);
}

TEST_CASE("forward and backward are deterministic") {
  const auto p = random_net(6, {3, 8, 2});
  Matrix x(16, 3);
  x.setRandom();
  const Matrix up = Matrix::Ones(16, 2);
  CHECK(mlp_forward(p, x) == mlp_forward(p, x));
  CHECK(mlp_backward(p, x, up) == mlp_backward(p, x, up));
}

TEST_CASE("tanh_act is close to std::tanh") {
  Matrix z(1, 7);
  z << -30.0, -2.0, -1e-9, 0.0, 1e-9, 0.5, 30.0;
  const Matrix t = tanh_act(z);
  for (Eigen::Index i = 0; i < z.size(); ++i) CHECK(std::abs(t(0, i) - std::tanh(z(0, i))) < 1e-15);
}

}
