#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nanoflow::flow {

enum class Activation { Tanh, Relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// y = W x + b with W stored out x in.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Fully connected network. `dims` = [inputs, hidden..., outputs]; the hidden
/// layers use `activation`, the last layer is linear.
struct ConditionerParams {
  std::vector<int> dims;
  Activation activation = Activation::Tanh;
  std::vector<DenseLayer> layers;

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  std::size_t parameter_count() const;
  void validate() const;

  static ConditionerParams zeros(std::vector<int> dims, Activation activation = Activation::Tanh);
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static ConditionerParams glorot(std::vector<int> dims, Activation activation, std::uint64_t seed);
};

/// Intermediate values kept by a forward pass for the backward pass.
struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  ///< input of each layer, rows = samples
  bool empty() const { return inputs.empty(); }
};

/// Rows of `x` are samples. Fills `cache` when given.
Eigen::MatrixXd mlp_forward(const ConditionerParams& params, const Eigen::MatrixXd& x, MlpCache* cache = nullptr);

/// Gradients of a scalar loss with respect to the parameters, given the loss
/// gradient `d_out` with respect to the network output. Writes the gradient
/// with respect to the network input into `d_input` when given.
std::vector<DenseLayer> mlp_backward(const ConditionerParams& params, const MlpCache& cache,
                                     const Eigen::MatrixXd& d_out, Eigen::MatrixXd* d_input = nullptr);

/// Smooth clamp lo + (hi - lo) * (1 + tanh((raw - mid) / half)) / 2 mapping
/// the raw log-scale into the open interval (lo, hi).
struct LogScaleClamp {
  double lo = -7.0;
  double hi = 7.0;

  double apply(double raw) const;
  /// d(apply)/d(raw) expressed through the clamped value.
  double slope_at(double clamped) const;
  void validate() const;
};

struct ConditionerOutput {
  Eigen::MatrixXd shift;      ///< t(y), rows = samples
  Eigen::MatrixXd log_scale;  ///< clamped log s(y)
  MlpCache cache;
};

/// Runs the network and splits its 2D outputs into shift (first D) and
/// clamped log-scale (last D).
ConditionerOutput conditioner_forward(const ConditionerParams& params, const Eigen::MatrixXd& y,
                                      const LogScaleClamp& clamp = {});

/// x = exp(log_s) * z + t, elementwise.
std::vector<double> flow_forward(std::span<const double> z, std::span<const double> t,
                                 std::span<const double> log_s);
/// z = (x - t) / exp(log_s), elementwise.
std::vector<double> flow_inverse(std::span<const double> x, std::span<const double> t,
                                 std::span<const double> log_s);

/// Affine coupling on top of the base bijector. Coordinates j with
/// j % 2 == parity pass through and, together with y, condition the
/// elementwise affine map of the remaining coordinates.
struct CouplingLayer {
  int parity = 0;
  ConditionerParams net;  ///< inputs M + |passed|, outputs 2 * |transformed|
};

/// Conditional flow x = C_L(...C_1(exp(log s(y)) * z + t(y))) with standard
/// normal z. With no coupling layers the conditional law is a diagonal
/// Gaussian with mean t(y) and standard deviation exp(log s(y)).
struct FlowModel {
  ConditionerParams conditioner;
  LogScaleClamp clamp;
  std::vector<CouplingLayer> couplings;

  int feature_dim() const { return conditioner.input_dim(); }
  int target_dim() const { return conditioner.output_dim() / 2; }
  std::size_t parameter_count() const;
  void validate() const;
};

struct FlowArchitecture {
  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::Tanh;
  LogScaleClamp clamp;
  int coupling_layers = 0;
  std::vector<int> coupling_hidden = {64};
  double initial_log_scale = -1.0;
};

/// Randomly initialized model for M features and D targets. The log-scale
/// output biases start at `initial_log_scale`; coupling layers start as the
/// identity.
FlowModel make_flow(int feature_dim, int target_dim, const FlowArchitecture& arch, std::uint64_t seed);

/// Per-row log p(x | y). Rows of `y` and `x` are paired samples.
Eigen::VectorXd log_prob(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x);
double log_prob(const FlowModel& model, std::span<const double> y, std::span<const double> x);

/// -mean log p over the batch.
double nll_loss(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x);

/// Same layout as the model parameters.
struct GradientSet {
  std::vector<DenseLayer> conditioner;
  std::vector<std::vector<DenseLayer>> couplings;

  static GradientSet zeros_like(const FlowModel& model);
  bool all_finite() const;
  /// Flattened in a fixed order: per layer weight (column-major) then bias.
  std::vector<double> flatten() const;
};

/// Everything a backward pass needs from the loss evaluation.
struct LossCache {
  Eigen::MatrixXd y;
  Eigen::MatrixXd base_u;  ///< input of the base bijector inverse
  Eigen::MatrixXd z;
  ConditionerOutput base;
  std::vector<ConditionerOutput> coupling_out;  ///< per coupling layer
  std::vector<Eigen::MatrixXd> coupling_x;      ///< output side of each coupling
  std::vector<Eigen::MatrixXd> coupling_u;      ///< input side of each coupling
  bool ready = false;
};

/// Batch NLL, optionally keeping what backward() needs.
double nll_forward(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x,
                   LossCache* cache = nullptr);

/// Exact gradient of the batch NLL. Throws when the cache was not filled.
GradientSet backward(const FlowModel& model, const LossCache& cache);

struct AdamState {
  GradientSet first_moment;
  GradientSet second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_model(const FlowModel& model, double lr = 1e-4);
};

/// Bias-corrected Adam update, in place.
void adam_step(FlowModel& model, const GradientSet& grads, AdamState& state);

/// `n` draws of x given one feature vector, rows = draws. Deterministic in
/// `seed` and `stream`.
Eigen::MatrixXd sample(const FlowModel& model, std::span<const double> y, std::size_t n, std::uint64_t seed,
                       std::uint64_t stream = 0);

/// Flattened parameters in the same order as GradientSet::flatten().
std::vector<double> flatten_parameters(const FlowModel& model);
void assign_parameters(FlowModel& model, std::span<const double> values);

}  // namespace nanoflow::flow
