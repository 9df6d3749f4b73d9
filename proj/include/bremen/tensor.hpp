#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bremen {

/// Dense row-major batch matrix. One row per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

struct DenseLayer {
  Matrix weight;  // in_dim x out_dim
  Vector bias;    // out_dim
};

/// Feed-forward network: tanh on every hidden layer, identity on the output.
///
/// Flat parameter order is layer-major, weight (row-major) then bias. Gradients,
/// Adam moments and tangents all use this order.
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// Xavier-uniform weights, zero biases. `dims` = {in, hidden..., out}.
  static MlpParams xavier(std::span<const std::size_t> dims, std::uint64_t seed);
  static MlpParams zeros(std::span<const std::size_t> dims);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::vector<std::size_t> dims() const;
  std::size_t param_count() const;

  Vector flat() const;
  void set_flat(const Vector& flat);
  /// this += scale * direction, in flat order.
  void add_scaled(const Vector& direction, double scale);

  bool operator==(const MlpParams& other) const;
};

/// Intermediate activations of one forward pass, reused by backward/JVP.
struct MlpTape {
  std::vector<Matrix> activations;  // activations[0] = input, back() = output
};

/// Elementwise tanh as 1 - 2 / (exp(2x) + 1). Eigen vectorizes exp but not tanh for
/// doubles; absolute error stays below 1e-15.
Matrix tanh_act(const Matrix& z);

Matrix mlp_forward(const MlpParams& params, const Matrix& input);
Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpTape& tape);

/// Gradient of sum(output .* upstream) with respect to every parameter.
Vector mlp_backward(const MlpParams& params, const Matrix& input, const Matrix& upstream);
Vector mlp_backward(const MlpParams& params, const MlpTape& tape, const Matrix& upstream);

/// Forward-mode product J v, J = d(output)/d(params).
Matrix jacobian_vector_product(const MlpParams& params, const Matrix& input,
                               const Vector& tangent);
Matrix jacobian_vector_product(const MlpParams& params, const MlpTape& tape,
                               const Vector& tangent);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t size, double lr);
};

/// Bias-corrected Adam update, applied in place. Rejects non-finite gradients.
void adam_step(AdamState& state, Vector& params, const Vector& grad);

// Checkpoint format: "BRMN", u32 version, u32 layer count, u64 dims[layers + 1],
// then every parameter as little-endian f64 in flat order.
void write_mlp(std::ostream& out, const MlpParams& params);
MlpParams read_mlp(std::istream& in);
void save_mlp(const std::string& path, const MlpParams& params);
MlpParams load_mlp(const std::string& path);

}  // namespace bremen
