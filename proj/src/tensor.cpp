#include "bremen/tensor.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bremen/binary_io.hpp"
#include "bremen/rng.hpp"

namespace bremen {

namespace {

constexpr std::uint32_t kMlpVersion = 1;

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

void check_input(const MlpParams& params, const Matrix& input) {
  if (params.layers.empty()) throw ShapeError("mlp has no layers");
  if (static_cast<std::size_t>(input.cols()) != params.in_dim()) {
    throw ShapeError("mlp input has " + std::to_string(input.cols()) + " columns, expected " +
                     std::to_string(params.in_dim()));
  }
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

MlpParams MlpParams::xavier(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ShapeError("mlp needs at least input and output dims");
  Rng rng(seed);
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    if (in == 0 || out == 0) throw ShapeError("mlp layer dims must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{Matrix(in, out), Vector::Zero(out)};
    for (Eigen::Index i = 0; i < in; ++i) {
      for (Eigen::Index j = 0; j < out; ++j) layer.weight(i, j) = rng.uniform(-limit, limit);
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams MlpParams::zeros(std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw ShapeError("mlp needs at least input and output dims");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    p.layers.push_back({Matrix::Zero(in, out), Vector::Zero(out)});
  }
  return p;
}

std::size_t MlpParams::in_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.rows());
}

std::size_t MlpParams::out_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.cols());
}

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(in_dim());
  for (const auto& l : layers) d.push_back(static_cast<std::size_t>(l.weight.cols()));
  return d;
}

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vector MlpParams::flat() const {
  Vector v(static_cast<Eigen::Index>(param_count()));
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    v.segment(k, l.weight.size()) = Eigen::Map<const Vector>(l.weight.data(), l.weight.size());
    k += l.weight.size();
    v.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return v;
}

void MlpParams::set_flat(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != param_count()) {
    throw ShapeError("flat parameter vector has length " + std::to_string(flat.size()) +
                     ", expected " + std::to_string(param_count()));
  }
  Eigen::Index k = 0;
  for (auto& l : layers) {
    Eigen::Map<Vector>(l.weight.data(), l.weight.size()) = flat.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

void MlpParams::add_scaled(const Vector& direction, double scale) {
  if (static_cast<std::size_t>(direction.size()) != param_count()) {
    throw ShapeError("direction length mismatch");
  }
  Eigen::Index k = 0;
  for (auto& l : layers) {
    Eigen::Map<Vector>(l.weight.data(), l.weight.size()) += scale * direction.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias += scale * direction.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

Matrix tanh_act(const Matrix& z) { return 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0); }

Matrix mlp_forward(const MlpParams& params, const Matrix& input) {
  check_input(params, input);
  Matrix h = input;
  const std::size_t n = params.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = params.layers[l];
    Matrix z = h * layer.weight;
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < n) z = tanh_act(z);
    h = std::move(z);
  }
  return h;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpTape& tape) {
  check_input(params, input);
  tape.activations.clear();
  tape.activations.reserve(params.layers.size() + 1);
  tape.activations.push_back(input);
  const std::size_t n = params.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = params.layers[l];
    Matrix z = tape.activations.back() * layer.weight;
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < n) z = tanh_act(z);
    tape.activations.push_back(std::move(z));
  }
  return tape.activations.back();
}

Vector mlp_backward(const MlpParams& params, const Matrix& input, const Matrix& upstream) {
  MlpTape tape;
  mlp_forward(params, input, tape);
  return mlp_backward(params, tape, upstream);
}

Vector mlp_backward(const MlpParams& params, const MlpTape& tape, const Matrix& upstream) {
  const std::size_t n = params.layers.size();
  if (tape.activations.size() != n + 1) throw ShapeError("tape does not match network depth");
  const Matrix& out = tape.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw ShapeError("upstream gradient is " + shape_str(upstream.rows(), upstream.cols()) +
                     ", output is " + shape_str(out.rows(), out.cols()));
  }

  // Offsets of each layer's block in the flat vector.
  std::vector<Eigen::Index> offset(n);
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < n; ++l) {
    offset[l] = total;
    total += params.layers[l].weight.size() + params.layers[l].bias.size();
  }
  Vector grad(total);

  Matrix delta = upstream;
  for (std::size_t l = n; l-- > 0;) {
    const auto& layer = params.layers[l];
    if (l + 1 < n) {
      delta.array() *= 1.0 - tape.activations[l + 1].array().square();
    }
    const Matrix& h_in = tape.activations[l];
    Matrix dw = h_in.transpose() * delta;
    grad.segment(offset[l], dw.size()) = Eigen::Map<const Vector>(dw.data(), dw.size());
    grad.segment(offset[l] + dw.size(), layer.bias.size()) = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * layer.weight.transpose();
  }
  return grad;
}

Matrix jacobian_vector_product(const MlpParams& params, const Matrix& input, const Vector& tangent) {
  MlpTape tape;
  mlp_forward(params, input, tape);
  return jacobian_vector_product(params, tape, tangent);
}

Matrix jacobian_vector_product(const MlpParams& params, const MlpTape& tape, const Vector& tangent) {
  if (static_cast<std::size_t>(tangent.size()) != params.param_count()) {
    throw ShapeError("tangent has length " + std::to_string(tangent.size()) + ", expected " +
                     std::to_string(params.param_count()));
  }
  const std::size_t n = params.layers.size();
  if (tape.activations.size() != n + 1) throw ShapeError("tape does not match network depth");

  const Eigen::Index rows = tape.activations.front().rows();
  Matrix dh = Matrix::Zero(rows, static_cast<Eigen::Index>(params.in_dim()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = params.layers[l];
    const Eigen::Index in = layer.weight.rows();
    const Eigen::Index out = layer.weight.cols();
    Eigen::Map<const Matrix> dw(tangent.data() + k, in, out);
    k += in * out;
    Eigen::Map<const Vector> db(tangent.data() + k, out);
    k += out;

    Matrix dz = tape.activations[l] * dw;
    if (l > 0) dz.noalias() += dh * layer.weight;
    dz.rowwise() += db.transpose();
    if (l + 1 < n) dz.array() *= 1.0 - tape.activations[l + 1].array().square();
    dh = std::move(dz);
  }
  return dh;
}

AdamState::AdamState(std::size_t size, double lr)
    : first_moment(Vector::Zero(static_cast<Eigen::Index>(size))),
      second_moment(Vector::Zero(static_cast<Eigen::Index>(size))),
      learning_rate(lr) {}

void adam_step(AdamState& state, Vector& params, const Vector& grad) {
  if (params.size() != grad.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam: params, grad and moments must have equal length");
  }
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adam: non-finite gradient at index " + std::to_string(i) +
                         " (step " + std::to_string(state.step + 1) + ")");
    }
  }
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void write_mlp(std::ostream& out, const MlpParams& params) {
  io::put_magic(out, "BRMN");
  io::put<std::uint32_t>(out, kMlpVersion);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
  for (auto d : params.dims()) io::put<std::uint64_t>(out, d);
  const Vector flat = params.flat();
  io::put_doubles(out, flat.data(), static_cast<std::size_t>(flat.size()));
}

MlpParams read_mlp(std::istream& in) {
  io::expect_magic(in, "BRMN");
  const auto version = io::get<std::uint32_t>(in, "mlp version");
  if (version != kMlpVersion) {
    throw FormatError("unsupported mlp checkpoint version " + std::to_string(version));
  }
  const auto n_layers = io::get<std::uint32_t>(in, "mlp layer count");
  if (n_layers == 0 || n_layers > 64) throw FormatError("implausible mlp layer count");
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= n_layers; ++i) {
    const auto d = io::get<std::uint64_t>(in, "mlp dims");
    if (d == 0 || d > (1u << 20)) throw FormatError("implausible mlp layer width");
    dims.push_back(static_cast<std::size_t>(d));
  }
  MlpParams p = MlpParams::zeros(dims);
  Vector flat(static_cast<Eigen::Index>(p.param_count()));
  io::get_doubles(in, flat.data(), static_cast<std::size_t>(flat.size()), "mlp parameters");
  p.set_flat(flat);
  return p;
}

void save_mlp(const std::string& path, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_mlp(out, params);
}

MlpParams load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_mlp(in);
}

}  // namespace bremen
