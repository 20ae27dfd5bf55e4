#include "nanoflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "nanoflow/error.hpp"
#include "nanoflow/rng.hpp"

namespace nanoflow::flow {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::vector<int> coupling_indices(int d, int parity, bool passed) {
  std::vector<int> out;
  for (int j = 0; j < d; ++j) {
    if ((j % 2 == parity) == passed) out.push_back(j);
  }
  return out;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(c) = m.col(cols[c]);
  return out;
}

Eigen::MatrixXd hstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw numerical_error(std::string("flow: non-finite ") + what);
}

std::vector<DenseLayer*> blocks(FlowModel& m) {
  std::vector<DenseLayer*> out;
  for (auto& l : m.conditioner.layers) out.push_back(&l);
  for (auto& c : m.couplings) {
    for (auto& l : c.net.layers) out.push_back(&l);
  }
  return out;
}

std::vector<const DenseLayer*> blocks(const FlowModel& m) {
  std::vector<const DenseLayer*> out;
  for (const auto& l : m.conditioner.layers) out.push_back(&l);
  for (const auto& c : m.couplings) {
    for (const auto& l : c.net.layers) out.push_back(&l);
  }
  return out;
}

std::vector<const DenseLayer*> blocks(const GradientSet& g) {
  std::vector<const DenseLayer*> out;
  for (const auto& l : g.conditioner) out.push_back(&l);
  for (const auto& c : g.couplings) {
    for (const auto& l : c) out.push_back(&l);
  }
  return out;
}

std::vector<DenseLayer*> blocks(GradientSet& g) {
  std::vector<DenseLayer*> out;
  for (auto& l : g.conditioner) out.push_back(&l);
  for (auto& c : g.couplings) {
    for (auto& l : c) out.push_back(&l);
  }
  return out;
}

std::vector<DenseLayer> zero_layers(const ConditionerParams& p) {
  std::vector<DenseLayer> out;
  for (const auto& l : p.layers) {
    out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

void flatten_into(const DenseLayer& l, std::vector<double>& out) {
  out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
  out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
  }
  return "tanh";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw domain_error("unknown activation '" + name + "' (expected tanh or relu)");
}

std::size_t ConditionerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void ConditionerParams::validate() const {
  if (dims.size() < 2) throw domain_error("network: need at least input and output widths");
  for (int d : dims) {
    if (d < 1) throw domain_error("network: layer widths must be positive");
  }
  if (layers.size() != dims.size() - 1) throw domain_error("network: layer count does not match dims");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != dims[i + 1] || layers[i].weight.cols() != dims[i] ||
        layers[i].bias.size() != dims[i + 1]) {
      throw domain_error("network: layer " + std::to_string(i) + " has the wrong shape");
    }
  }
}

ConditionerParams ConditionerParams::zeros(std::vector<int> dims, Activation activation) {
  ConditionerParams p;
  p.dims = std::move(dims);
  p.activation = activation;
  if (p.dims.size() < 2) throw domain_error("network: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < p.dims.size(); ++i) {
    if (p.dims[i] < 1 || p.dims[i + 1] < 1) throw domain_error("network: layer widths must be positive");
    p.layers.push_back({Eigen::MatrixXd::Zero(p.dims[i + 1], p.dims[i]), Eigen::VectorXd::Zero(p.dims[i + 1])});
  }
  return p;
}

ConditionerParams ConditionerParams::glorot(std::vector<int> dims, Activation activation, std::uint64_t seed) {
  ConditionerParams p = zeros(std::move(dims), activation);
  RandomStream rng(seed, 0x696e6974ull);
  for (auto& l : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

Eigen::MatrixXd mlp_forward(const ConditionerParams& params, const Eigen::MatrixXd& x, MlpCache* cache) {
  if (x.cols() != params.input_dim()) {
    throw domain_error("network: expected " + std::to_string(params.input_dim()) + " inputs, got " +
                       std::to_string(x.cols()));
  }
  if (cache) cache->inputs.clear();
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd a = h * l.weight.transpose();
    a.rowwise() += l.bias.transpose();
    if (i + 1 < params.layers.size()) {
      if (params.activation == Activation::Tanh) {
        a = a.array().tanh();
      } else {
        a = a.cwiseMax(0.0);
      }
    }
    h = std::move(a);
  }
  return h;
}

std::vector<DenseLayer> mlp_backward(const ConditionerParams& params, const MlpCache& cache,
                                     const Eigen::MatrixXd& d_out, Eigen::MatrixXd* d_input) {
  if (cache.inputs.size() != params.layers.size()) throw domain_error("network: backward called without a forward cache");
  std::vector<DenseLayer> grads(params.layers.size());
  Eigen::MatrixXd g = d_out;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& l = params.layers[k];
    const Eigen::MatrixXd& in = cache.inputs[k];
    grads[k].weight = g.transpose() * in;
    grads[k].bias = g.colwise().sum().transpose();
    if (k == 0 && !d_input) break;
    Eigen::MatrixXd gin = g * l.weight;
    if (k > 0) {
      // `in` is the activation output of layer k-1.
      if (params.activation == Activation::Tanh) {
        gin.array() *= 1.0 - in.array().square();
      } else {
        gin.array() *= (in.array() > 0.0).cast<double>();
      }
    }
    g = std::move(gin);
  }
  if (d_input) *d_input = g;
  return grads;
}

double LogScaleClamp::apply(double raw) const {
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  return mid + half * std::tanh((raw - mid) / half);
}

double LogScaleClamp::slope_at(double clamped) const {
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double u = (clamped - mid) / half;
  return 1.0 - u * u;
}

void LogScaleClamp::validate() const {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw domain_error("log-scale clamp: need finite lo < hi");
  }
}

ConditionerOutput conditioner_forward(const ConditionerParams& params, const Eigen::MatrixXd& y,
                                      const LogScaleClamp& clamp) {
  if (params.output_dim() % 2 != 0) throw domain_error("conditioner: output width must be even (shift, log-scale)");
  ConditionerOutput out;
  const Eigen::MatrixXd raw = mlp_forward(params, y, &out.cache);
  const Eigen::Index d = params.output_dim() / 2;
  out.shift = raw.leftCols(d);
  out.log_scale = raw.rightCols(d).unaryExpr([&](double v) { return clamp.apply(v); });
  return out;
}

std::vector<double> flow_forward(std::span<const double> z, std::span<const double> t, std::span<const double> log_s) {
  if (z.size() != t.size() || z.size() != log_s.size()) throw domain_error("flow_forward: length mismatch");
  std::vector<double> x(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) x[j] = std::exp(log_s[j]) * z[j] + t[j];
  return x;
}

std::vector<double> flow_inverse(std::span<const double> x, std::span<const double> t, std::span<const double> log_s) {
  if (x.size() != t.size() || x.size() != log_s.size()) throw domain_error("flow_inverse: length mismatch");
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - t[j]) / std::exp(log_s[j]);
  return z;
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = conditioner.parameter_count();
  for (const auto& c : couplings) n += c.net.parameter_count();
  return n;
}

void FlowModel::validate() const {
  conditioner.validate();
  clamp.validate();
  if (conditioner.output_dim() % 2 != 0) throw domain_error("flow: conditioner output width must be 2D");
  const int d = target_dim();
  for (std::size_t k = 0; k < couplings.size(); ++k) {
    const auto& c = couplings[k];
    c.net.validate();
    if (c.parity != 0 && c.parity != 1) throw domain_error("flow: coupling parity must be 0 or 1");
    const auto passed = coupling_indices(d, c.parity, true);
    const auto moved = coupling_indices(d, c.parity, false);
    if (moved.empty()) throw domain_error("flow: coupling layer " + std::to_string(k) + " transforms nothing");
    if (c.net.input_dim() != feature_dim() + static_cast<int>(passed.size()) ||
        c.net.output_dim() != 2 * static_cast<int>(moved.size())) {
      throw domain_error("flow: coupling layer " + std::to_string(k) + " has the wrong widths");
    }
  }
}

FlowModel make_flow(int feature_dim, int target_dim, const FlowArchitecture& arch, std::uint64_t seed) {
  if (feature_dim < 1 || target_dim < 1) throw domain_error("flow: feature and target dimensions must be positive");
  arch.clamp.validate();
  FlowModel m;
  m.clamp = arch.clamp;
  std::vector<int> dims{feature_dim};
  dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
  dims.push_back(2 * target_dim);
  m.conditioner = ConditionerParams::glorot(dims, arch.activation, derive_seed(seed, 0));
  m.conditioner.layers.back().bias.tail(target_dim).setConstant(arch.initial_log_scale);
  if (arch.coupling_layers > 0 && target_dim < 2) {
    throw domain_error("flow: coupling layers need at least two target dimensions");
  }
  for (int k = 0; k < arch.coupling_layers; ++k) {
    CouplingLayer c;
    c.parity = k % 2;
    const int passed = static_cast<int>(coupling_indices(target_dim, c.parity, true).size());
    const int moved = target_dim - passed;
    std::vector<int> cd{feature_dim + passed};
    cd.insert(cd.end(), arch.coupling_hidden.begin(), arch.coupling_hidden.end());
    cd.push_back(2 * moved);
    c.net = ConditionerParams::glorot(cd, arch.activation, derive_seed(seed, 1 + static_cast<std::uint64_t>(k)));
    c.net.layers.back().weight.setZero();
    m.couplings.push_back(std::move(c));
  }
  m.validate();
  return m;
}

namespace {

/// Inverse pass shared by log_prob and the loss. Returns per-row log p.
Eigen::VectorXd inverse_pass(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x,
                             LossCache& c) {
  if (y.rows() != x.rows()) throw domain_error("flow: feature and target batches differ in size");
  if (y.cols() != model.feature_dim()) {
    throw domain_error("flow: expected " + std::to_string(model.feature_dim()) + " features, got " +
                       std::to_string(y.cols()));
  }
  if (x.cols() != model.target_dim()) {
    throw domain_error("flow: expected " + std::to_string(model.target_dim()) + " targets, got " +
                       std::to_string(x.cols()));
  }
  const int d = model.target_dim();
  const Eigen::Index n = x.rows();
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(n);

  const std::size_t nc = model.couplings.size();
  c.coupling_out.assign(nc, {});
  c.coupling_x.assign(nc, {});
  c.coupling_u.assign(nc, {});
  Eigen::MatrixXd u = x;
  for (std::size_t k = nc; k-- > 0;) {
    const auto& layer = model.couplings[k];
    const auto passed = coupling_indices(d, layer.parity, true);
    const auto moved = coupling_indices(d, layer.parity, false);
    c.coupling_x[k] = u;
    c.coupling_out[k] = conditioner_forward(layer.net, hstack(y, take_columns(u, passed)), model.clamp);
    const auto& o = c.coupling_out[k];
    for (std::size_t j = 0; j < moved.size(); ++j) {
      u.col(moved[j]) = (u.col(moved[j]) - o.shift.col(j)).array() * (-o.log_scale.col(j)).array().exp();
    }
    log_det += o.log_scale.rowwise().sum();
    c.coupling_u[k] = u;
  }

  c.base_u = u;
  c.base = conditioner_forward(model.conditioner, y, model.clamp);
  c.z = (u - c.base.shift).array() * (-c.base.log_scale).array().exp();
  log_det += c.base.log_scale.rowwise().sum();
  c.y = y;

  Eigen::VectorXd lp = -0.5 * (c.z.rowwise().squaredNorm().array() + d * kLog2Pi).matrix() - log_det;
  return lp;
}

}  // namespace

Eigen::VectorXd log_prob(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x) {
  LossCache c;
  Eigen::VectorXd lp = inverse_pass(model, y, x, c);
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (!std::isfinite(lp(i))) {
      throw numerical_error("log_prob: non-finite value for sample " + std::to_string(i));
    }
  }
  return lp;
}

double log_prob(const FlowModel& model, std::span<const double> y, std::span<const double> x) {
  const Eigen::MatrixXd ym = Eigen::Map<const Eigen::RowVectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::MatrixXd xm = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return log_prob(model, ym, xm)(0);
}

double nll_forward(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x, LossCache* cache) {
  if (x.rows() == 0) throw domain_error("nll: empty batch");
  LossCache local;
  LossCache& c = cache ? *cache : local;
  c.ready = false;
  const Eigen::VectorXd lp = inverse_pass(model, y, x, c);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) sum += lp(i);
  const double loss = -sum / static_cast<double>(lp.size());
  if (!std::isfinite(loss)) {
    Eigen::Index worst = 0;
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
      if (!std::isfinite(lp(i))) {
        worst = i;
        break;
      }
    }
    throw numerical_error("nll: non-finite loss (first bad sample " + std::to_string(worst) + " of " +
                          std::to_string(lp.size()) + ")");
  }
  c.ready = true;
  return loss;
}

double nll_loss(const FlowModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x) {
  return nll_forward(model, y, x, nullptr);
}

GradientSet GradientSet::zeros_like(const FlowModel& model) {
  GradientSet g;
  g.conditioner = zero_layers(model.conditioner);
  for (const auto& c : model.couplings) g.couplings.push_back(zero_layers(c.net));
  return g;
}

bool GradientSet::all_finite() const {
  for (const DenseLayer* l : blocks(*this)) {
    if (!l->weight.allFinite() || !l->bias.allFinite()) return false;
  }
  return true;
}

std::vector<double> GradientSet::flatten() const {
  std::vector<double> out;
  for (const DenseLayer* l : blocks(*this)) flatten_into(*l, out);
  return out;
}

GradientSet backward(const FlowModel& model, const LossCache& c) {
  if (!c.ready) throw domain_error("flow backward: no forward cache (run nll_forward with a cache first)");
  const int d = model.target_dim();
  const Eigen::Index n = c.z.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  GradientSet g;

  // Base bijector: loss = mean(0.5 |z|^2 + sum log_s) + const.
  const Eigen::MatrixXd inv_scale = (-c.base.log_scale).array().exp();
  Eigen::MatrixXd d_head(n, 2 * d);
  d_head.leftCols(d) = -(c.z.array() * inv_scale.array()) * inv_n;
  d_head.rightCols(d) = (1.0 - c.z.array().square()) * inv_n;
  d_head.rightCols(d).array() *= c.base.log_scale.unaryExpr([&](double v) { return model.clamp.slope_at(v); }).array();
  g.conditioner = mlp_backward(model.conditioner, c.base.cache, d_head);

  // Gradient of the loss with respect to the base input u.
  Eigen::MatrixXd g_u = c.z.array() * inv_scale.array() * inv_n;

  g.couplings.resize(model.couplings.size());
  for (std::size_t k = 0; k < model.couplings.size(); ++k) {
    const auto& layer = model.couplings[k];
    const auto passed = coupling_indices(d, layer.parity, true);
    const auto moved = coupling_indices(d, layer.parity, false);
    const auto& o = c.coupling_out[k];
    const Eigen::Index nm = static_cast<Eigen::Index>(moved.size());
    Eigen::MatrixXd head(n, 2 * nm);
    Eigen::MatrixXd g_x = g_u;
    for (Eigen::Index j = 0; j < nm; ++j) {
      const Eigen::ArrayXd inv = (-o.log_scale.col(j)).array().exp();
      const Eigen::ArrayXd gb = g_u.col(moved[j]).array();
      g_x.col(moved[j]) = gb * inv;
      head.col(j) = -gb * inv;
      const Eigen::ArrayXd slope = o.log_scale.col(j).unaryExpr([&](double v) { return model.clamp.slope_at(v); });
      head.col(nm + j) = (-gb * c.coupling_u[k].col(moved[j]).array() + inv_n) * slope;
    }
    Eigen::MatrixXd d_in;
    g.couplings[k] = mlp_backward(layer.net, o.cache, head, &d_in);
    for (std::size_t j = 0; j < passed.size(); ++j) {
      g_x.col(passed[j]) += d_in.col(model.feature_dim() + static_cast<Eigen::Index>(j));
    }
    g_u = std::move(g_x);
  }
  if (!g.all_finite()) throw numerical_error("flow backward: non-finite gradient");
  return g;
}

AdamState AdamState::for_model(const FlowModel& model, double lr) {
  AdamState s;
  s.first_moment = GradientSet::zeros_like(model);
  s.second_moment = GradientSet::zeros_like(model);
  s.lr = lr;
  return s;
}

void adam_step(FlowModel& model, const GradientSet& grads, AdamState& state) {
  auto params = blocks(model);
  const auto gb = blocks(grads);
  auto mb = blocks(state.first_moment);
  auto vb = blocks(state.second_moment);
  if (gb.size() != params.size() || mb.size() != params.size() || vb.size() != params.size()) {
    throw domain_error("adam: gradient or moment layout does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const DenseLayer* other : {gb[i], static_cast<const DenseLayer*>(mb[i]), static_cast<const DenseLayer*>(vb[i])}) {
      if (other->weight.rows() != params[i]->weight.rows() || other->weight.cols() != params[i]->weight.cols() ||
          other->bias.size() != params[i]->bias.size()) {
        throw domain_error("adam: shape mismatch in block " + std::to_string(i));
      }
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m.array() = state.beta1 * m.array() + (1.0 - state.beta1) * g.array();
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * g.array().square();
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i]->weight, gb[i]->weight, mb[i]->weight, vb[i]->weight);
    update(params[i]->bias, gb[i]->bias, mb[i]->bias, vb[i]->bias);
  }
}

Eigen::MatrixXd sample(const FlowModel& model, std::span<const double> y, std::size_t n, std::uint64_t seed,
                       std::uint64_t stream) {
  if (n < 1) throw domain_error("sample: need at least one draw");
  if (static_cast<int>(y.size()) != model.feature_dim()) {
    throw domain_error("sample: expected " + std::to_string(model.feature_dim()) + " features, got " +
                       std::to_string(y.size()));
  }
  const int d = model.target_dim();
  const Eigen::Index rows = static_cast<Eigen::Index>(n);
  const Eigen::RowVectorXd yrow = Eigen::Map<const Eigen::RowVectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const ConditionerOutput base = conditioner_forward(model.conditioner, yrow, model.clamp);

  RandomStream rng(seed, stream);
  Eigen::MatrixXd x(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  }
  const Eigen::RowVectorXd scale = base.log_scale.row(0).array().exp();
  x = x.array().rowwise() * scale.array();
  x.rowwise() += base.shift.row(0);

  if (!model.couplings.empty()) {
    const Eigen::MatrixXd ybatch = yrow.replicate(rows, 1);
    for (const auto& layer : model.couplings) {
      const auto passed = coupling_indices(d, layer.parity, true);
      const auto moved = coupling_indices(d, layer.parity, false);
      const ConditionerOutput o = conditioner_forward(layer.net, hstack(ybatch, take_columns(x, passed)), model.clamp);
      for (std::size_t j = 0; j < moved.size(); ++j) {
        x.col(moved[j]) = x.col(moved[j]).array() * o.log_scale.col(j).array().exp() + o.shift.col(j).array();
      }
    }
  }
  check_finite(x, "samples");
  return x;
}

std::vector<double> flatten_parameters(const FlowModel& model) {
  std::vector<double> out;
  for (const DenseLayer* l : blocks(model)) flatten_into(*l, out);
  return out;
}

void assign_parameters(FlowModel& model, std::span<const double> values) {
  if (values.size() != model.parameter_count()) throw domain_error("assign_parameters: wrong parameter count");
  std::size_t pos = 0;
  for (DenseLayer* l : blocks(model)) {
    for (Eigen::Index i = 0; i < l->weight.size(); ++i) l->weight.data()[i] = values[pos++];
    for (Eigen::Index i = 0; i < l->bias.size(); ++i) l->bias.data()[i] = values[pos++];
  }
}

}  // namespace nanoflow::flow
