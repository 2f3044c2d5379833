#include "ceiling/policy.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <type_traits>

namespace ceiling::policy {
namespace {

enum class LayerKind { Dense, Recurrent, Output };

struct Layer {
  LayerKind kind;
  std::size_t in;
  std::size_t out;
  std::size_t weight;
  std::size_t recurrent;  // valid only for LayerKind::Recurrent
  std::size_t bias;
};

std::vector<Layer> build_layers(const PolicyConfig& config) {
  std::vector<Layer> layers;
  std::size_t in = config.input_dim;
  std::size_t index = 0;
  for (std::size_t i = 0; i < config.hidden.size(); ++i) {
    const bool rec = config.recurrent && i + 1 == config.hidden.size();
    Layer l{rec ? LayerKind::Recurrent : LayerKind::Dense, in, config.hidden[i], index, 0, 0};
    ++index;
    if (rec) l.recurrent = index++;
    l.bias = index++;
    layers.push_back(l);
    in = config.hidden[i];
  }
  layers.push_back({LayerKind::Output, in, config.output_dim, index, 0, index + 1});
  return layers;
}

template <typename T>
T elu(T x) {
  return x > T(0) ? x : std::expm1(x);
}

template <typename T>
T elu_grad(T x) {
  return x > T(0) ? T(1) : std::exp(x);
}

// One time step through every layer. `z` and `a` hold one column per layer; `h_prev`
// is the recurrent layer's previous output (nullptr means zero state).
template <typename T, typename ZCols, typename ACols>
void step_forward(const BasicPolicyParams<T>& p, const std::vector<Layer>& layers, const Vector<T>& out_scale,
                  const std::type_identity_t<Eigen::Ref<const Vector<T>>>& x, const Vector<T>* h_prev, ZCols&& z,
                  ACols&& a) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    auto&& zl = z(l);
    auto&& al = a(l);
    if (l == 0)
      zl.noalias() = p.tensors[L.weight] * x;
    else
      zl.noalias() = p.tensors[L.weight] * a(l - 1);
    if (L.kind == LayerKind::Recurrent && h_prev != nullptr) zl.noalias() += p.tensors[L.recurrent] * *h_prev;
    zl += p.tensors[L.bias].col(0);
    switch (L.kind) {
      case LayerKind::Dense: al = zl.unaryExpr([](T v) { return elu(v); }); break;
      case LayerKind::Recurrent: al = zl.array().tanh().matrix(); break;
      case LayerKind::Output: al = zl.cwiseProduct(out_scale); break;
    }
  }
}

template <typename T>
Vector<T> output_scale_of(const PolicyConfig& config) {
  Vector<T> s = Vector<T>::Ones(static_cast<Eigen::Index>(config.output_dim));
  for (std::size_t i = 0; i < config.output_scale.size(); ++i) s(static_cast<Eigen::Index>(i)) = T(config.output_scale[i]);
  return s;
}

template <typename T>
Matrix<T> features_matrix(const PolicyConfig& config, std::span<const Observation> sequence) {
  Matrix<T> x(config.input_dim, static_cast<Eigen::Index>(sequence.size()));
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const auto& f = sequence[t].features;
    if (f.size() != config.input_dim)
      throw std::invalid_argument("policy: observation has " + std::to_string(f.size()) + " features, expected " +
                                  std::to_string(config.input_dim));
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double scale = config.input_scale.empty() ? 1.0 : config.input_scale[i];
      const double shift = config.input_shift.empty() ? 0.0 : config.input_shift[i];
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = T(scale * f[i] + shift);
    }
  }
  return x;
}

// Activations of one trajectory, one column per step.
template <typename T>
struct SequenceCache {
  Matrix<T> x;
  std::vector<Matrix<T>> z;
  std::vector<Matrix<T>> a;
};

template <typename T>
SequenceCache<T> run_sequence(const BasicPolicyParams<T>& p, const PolicyConfig& config,
                              const std::vector<Layer>& layers, std::span<const Observation> sequence) {
  SequenceCache<T> c;
  c.x = features_matrix<T>(config, sequence);
  const auto steps = c.x.cols();
  for (const auto& L : layers) {
    c.z.emplace_back(L.out, steps);
    c.a.emplace_back(L.out, steps);
  }
  std::size_t rec = layers.size();
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (layers[l].kind == LayerKind::Recurrent) rec = l;

  const Vector<T> out_scale = output_scale_of<T>(config);
  Vector<T> h_prev;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const bool has_state = rec < layers.size() && t > 0;
    if (has_state) h_prev = c.a[rec].col(t - 1);
    step_forward(
        p, layers, out_scale, c.x.col(t), has_state ? &h_prev : nullptr, [&](std::size_t l) { return c.z[l].col(t); },
        [&](std::size_t l) { return c.a[l].col(t); });
  }
  return c;
}

std::vector<Observation> observations_of(const Episode& e) {
  std::vector<Observation> obs;
  obs.reserve(e.transitions.size());
  for (const auto& t : e.transitions) obs.push_back(t.obs);
  return obs;
}

void check_batch(const Batch& batch, const PolicyConfig& config) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  for (const auto& traj : batch) {
    if (!traj.episode) throw std::invalid_argument("loss: null trajectory");
    if (traj.weights.size() != traj.episode->transitions.size())
      throw std::invalid_argument("loss: weight count does not match trajectory length");
  }
  if (config.output_dim != kActionDim) throw std::invalid_argument("loss: actions are 3-dimensional");
}

double step_scale(const Batch& batch, Reduction reduction) {
  if (reduction == Reduction::Sum) return 1.0;
  std::size_t n = 0;
  for (const auto& traj : batch) n += traj.weights.size();
  if (n == 0) throw std::invalid_argument("loss: batch has no steps");
  return 1.0 / static_cast<double>(n);
}

}  // namespace

void PolicyConfig::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("PolicyConfig: dimensions must be positive");
  if (hidden.empty()) throw std::invalid_argument("PolicyConfig: at least one hidden layer required");
  for (auto h : hidden)
    if (h == 0) throw std::invalid_argument("PolicyConfig: hidden sizes must be positive");
  if (sigma.size() != output_dim) throw std::invalid_argument("PolicyConfig: sigma must have output_dim entries");
  for (double s : sigma)
    if (!(s > 0.0)) throw std::invalid_argument("PolicyConfig: sigma components must be > 0");
  if (!(learning_rate > 0.0) || weight_decay < 0.0)
    throw std::invalid_argument("PolicyConfig: invalid optimizer settings");
  if (batch_trajectories == 0) throw std::invalid_argument("PolicyConfig: batch_trajectories must be >= 1");
  if (!(delta_max > 0.0)) throw std::invalid_argument("PolicyConfig: delta_max must be > 0");
  if ((!input_scale.empty() && input_scale.size() != input_dim) ||
      (!input_shift.empty() && input_shift.size() != input_dim))
    throw std::invalid_argument("PolicyConfig: input_scale and input_shift must be empty or have input_dim entries");
  for (double v : input_scale)
    if (!std::isfinite(v) || v == 0.0) throw std::invalid_argument("PolicyConfig: input_scale must be finite and nonzero");
  for (double v : input_shift)
    if (!std::isfinite(v)) throw std::invalid_argument("PolicyConfig: input_shift must be finite");
  if (!output_scale.empty() && output_scale.size() != output_dim)
    throw std::invalid_argument("PolicyConfig: output_scale must be empty or have output_dim entries");
  for (double s : output_scale)
    if (!(s > 0.0)) throw std::invalid_argument("PolicyConfig: output_scale components must be > 0");
}

nlohmann::json to_json(const PolicyConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden", c.hidden},
          {"recurrent", c.recurrent},
          {"output_dim", c.output_dim},
          {"sigma", c.sigma},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_trajectories", c.batch_trajectories},
          {"delta_max", c.delta_max},
          {"input_scale", c.input_scale},
          {"input_shift", c.input_shift},
          {"output_scale", c.output_scale}};
}

PolicyConfig config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.recurrent = j.value("recurrent", c.recurrent);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.sigma = j.value("sigma", c.sigma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_trajectories = j.value("batch_trajectories", c.batch_trajectories);
  c.delta_max = j.value("delta_max", c.delta_max);
  c.input_scale = j.value("input_scale", c.input_scale);
  c.input_shift = j.value("input_shift", c.input_shift);
  c.output_scale = j.value("output_scale", c.output_scale);
  c.validate();
  return c;
}

std::vector<TensorShape> parameter_layout(const PolicyConfig& config) {
  config.validate();
  std::vector<TensorShape> shapes;
  const auto layers = build_layers(config);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string prefix = L.kind == LayerKind::Output ? "out" : "layer" + std::to_string(l);
    shapes.push_back({prefix + ".weight", L.out, L.in, 2});
    if (L.kind == LayerKind::Recurrent) shapes.push_back({prefix + ".recurrent", L.out, L.out, 2});
    shapes.push_back({prefix + ".bias", L.out, 1, 1});
  }
  return shapes;
}

template <typename T>
template <typename U>
BasicPolicyParams<U> BasicPolicyParams<T>::cast() const {
  BasicPolicyParams<U> out;
  auto conv = [](const std::vector<Matrix<T>>& in) {
    std::vector<Matrix<U>> r;
    r.reserve(in.size());
    for (const auto& m : in) r.push_back(m.template cast<U>());
    return r;
  };
  out.tensors = conv(tensors);
  out.adam_m = conv(adam_m);
  out.adam_v = conv(adam_v);
  out.adam_step = adam_step;
  out.version = version;
  return out;
}

template <typename T>
std::size_t BasicPolicyParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : tensors) n += static_cast<std::size_t>(m.size());
  return n;
}

template <typename T>
BasicPolicyParams<T> zero_params(const PolicyConfig& config) {
  BasicPolicyParams<T> p;
  for (const auto& s : parameter_layout(config))
    p.tensors.push_back(Matrix<T>::Zero(static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols)));
  return p;
}

template <typename T>
BasicPolicyParams<T> init_params(const PolicyConfig& config, std::uint64_t seed) {
  BasicPolicyParams<T> p = zero_params<T>(config);
  const auto shapes = parameter_layout(config);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].rank == 1) continue;
    const double fan_out = static_cast<double>(shapes[i].rows);
    const double fan_in = static_cast<double>(shapes[i].cols);
    const double r = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-r, r);
    auto& m = p.tensors[i];
    for (Eigen::Index row = 0; row < m.rows(); ++row)
      for (Eigen::Index col = 0; col < m.cols(); ++col) m(row, col) = T(u(rng));
  }
  return p;
}

template <typename T>
void check_shapes(const BasicPolicyParams<T>& params, const PolicyConfig& config) {
  const auto shapes = parameter_layout(config);
  if (params.tensors.size() != shapes.size()) throw std::invalid_argument("policy: tensor count mismatch");
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (static_cast<std::size_t>(params.tensors[i].rows()) != shapes[i].rows ||
        static_cast<std::size_t>(params.tensors[i].cols()) != shapes[i].cols)
      throw std::invalid_argument("policy: shape mismatch for " + shapes[i].name);
}

template <typename T>
Matrix<T> forward(const BasicPolicyParams<T>& params, const PolicyConfig& config,
                  std::span<const Observation> sequence) {
  check_shapes(params, config);
  const auto layers = build_layers(config);
  auto cache = run_sequence(params, config, layers, sequence);
  return std::move(cache.a.back());
}

template <typename T>
Vector<T> initial_hidden(const PolicyConfig& config) {
  if (!config.recurrent) return Vector<T>();
  return Vector<T>::Zero(static_cast<Eigen::Index>(config.hidden.back()));
}

template <typename T>
ActResult<T> act(const BasicPolicyParams<T>& params, const PolicyConfig& config, const Observation& obs,
                 const Vector<T>& hidden) {
  const auto layers = build_layers(config);
  if (config.output_dim != kActionDim) throw std::invalid_argument("act: policy must output 3 dimensions");
  const Matrix<T> x = features_matrix<T>(config, std::span<const Observation>(&obs, 1));
  std::vector<Vector<T>> z, a;
  for (const auto& L : layers) {
    z.emplace_back(L.out);
    a.emplace_back(L.out);
  }
  // A zero-size hidden vector marks the start of a sequence.
  const bool has_state = config.recurrent && hidden.size() > 0;
  step_forward(
      params, layers, output_scale_of<T>(config), x.col(0), has_state ? &hidden : nullptr, [&](std::size_t l) -> Vector<T>& { return z[l]; },
      [&](std::size_t l) -> Vector<T>& { return a[l]; });

  const auto& mu = a.back();
  Action raw{{double(mu(0)), double(mu(1))}, double(mu(2))};
  ActResult<T> r{clip_action(raw, config.delta_max), Vector<T>()};
  if (config.recurrent) {
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].kind == LayerKind::Recurrent) r.hidden = a[l];
  }
  return r;
}

double log_prob(std::span<const double> mu, std::span<const double> sigma, std::span<const double> action) {
  if (mu.size() != sigma.size() || mu.size() != action.size())
    throw std::invalid_argument("log_prob: dimension mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    const double r = action[d] - mu[d];
    lp += -(r * r) / (2.0 * sigma[d] * sigma[d]) - std::log(sigma[d]) - half_log_2pi;
  }
  return lp;
}

template <typename T>
double loss(const BasicPolicyParams<T>& params, const PolicyConfig& config, const Batch& batch,
            Reduction reduction) {
  check_shapes(params, config);
  check_batch(batch, config);
  const double scale = step_scale(batch, reduction);
  const auto layers = build_layers(config);
  double total = 0.0;
  for (const auto& traj : batch) {
    const auto obs = observations_of(*traj.episode);
    const auto cache = run_sequence(params, config, layers, obs);
    const auto& mu = cache.a.back();
    for (std::size_t t = 0; t < traj.weights.size(); ++t) {
      const double q = traj.weights[t];
      if (q == 0.0) continue;
      const auto ti = static_cast<Eigen::Index>(t);
      const std::array<double, 3> m{double(mu(0, ti)), double(mu(1, ti)), double(mu(2, ti))};
      const auto a = traj.episode->transitions[t].action.as_array();
      total += -q * log_prob(m, config.sigma, a);
    }
  }
  return total * scale;
}

template <typename T>
LossAndGradient<T> loss_and_gradient(const BasicPolicyParams<T>& params, const PolicyConfig& config,
                                     const Batch& batch, Reduction reduction) {
  check_shapes(params, config);
  check_batch(batch, config);
  const double scale = step_scale(batch, reduction);
  const auto layers = build_layers(config);
  const std::size_t n_layers = layers.size();

  LossAndGradient<T> result;
  for (const auto& m : params.tensors) result.gradients.tensors.push_back(Matrix<T>::Zero(m.rows(), m.cols()));
  auto& grads = result.gradients.tensors;

  const Vector<T> out_scale = output_scale_of<T>(config);
  std::array<double, kActionDim> inv_var{};
  for (std::size_t d = 0; d < kActionDim; ++d) inv_var[d] = 1.0 / (config.sigma[d] * config.sigma[d]);

  double total = 0.0;
  for (const auto& traj : batch) {
    const auto obs = observations_of(*traj.episode);
    const auto cache = run_sequence(params, config, layers, obs);
    const Eigen::Index steps = cache.x.cols();

    std::vector<Matrix<T>> dz;
    for (const auto& L : layers) dz.push_back(Matrix<T>::Zero(L.out, steps));

    // Backward in time: error signals per layer and step, carrying the recurrent term.
    Vector<T> carry;
    Vector<T> da;
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const double q = traj.weights[static_cast<std::size_t>(t)];
      const auto a = traj.episode->transitions[static_cast<std::size_t>(t)].action.as_array();
      std::array<double, kActionDim> m{};
      for (std::size_t d = 0; d < kActionDim; ++d) {
        m[d] = double(cache.a.back()(static_cast<Eigen::Index>(d), t));
        dz.back()(static_cast<Eigen::Index>(d), t) =
            T(q * scale * (m[d] - a[d]) * inv_var[d]) * out_scale(static_cast<Eigen::Index>(d));
      }
      if (q != 0.0) total += -q * log_prob(m, config.sigma, a);

      da.noalias() = params.tensors[layers.back().weight].transpose() * dz.back().col(t);
      for (std::size_t l = n_layers - 1; l-- > 0;) {
        const Layer& L = layers[l];
        auto dzl = dz[l].col(t);
        if (L.kind == LayerKind::Recurrent) {
          if (carry.size() == 0) carry = Vector<T>::Zero(static_cast<Eigen::Index>(L.out));
          dzl = ((da + carry).array() * (T(1) - cache.a[l].col(t).array().square())).matrix();
          carry.noalias() = params.tensors[L.recurrent].transpose() * dzl;
        } else {
          dzl = da.binaryExpr(cache.z[l].col(t), [](T g, T z) { return g * elu_grad(z); });
        }
        if (l > 0) da.noalias() = params.tensors[L.weight].transpose() * dzl;
      }
    }

    // Parameter gradients accumulated in forward time order.
    for (Eigen::Index t = 0; t < steps; ++t) {
      for (std::size_t l = 0; l < n_layers; ++l) {
        const Layer& L = layers[l];
        const auto dzl = dz[l].col(t);
        if (l == 0)
          grads[L.weight].noalias() += dzl * cache.x.col(t).transpose();
        else
          grads[L.weight].noalias() += dzl * cache.a[l - 1].col(t).transpose();
        if (L.kind == LayerKind::Recurrent && t > 0)
          grads[L.recurrent].noalias() += dzl * cache.a[l].col(t - 1).transpose();
        grads[L.bias].col(0) += dzl;
      }
    }
  }
  result.loss = total * scale;
  return result;
}

template <typename T>
void adam_step(BasicPolicyParams<T>& params, const BasicGradientSet<T>& grads, const AdamOptions& o) {
  if (grads.tensors.size() != params.tensors.size()) throw std::invalid_argument("adam_step: tensor count mismatch");
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    if (grads.tensors[i].rows() != params.tensors[i].rows() || grads.tensors[i].cols() != params.tensors[i].cols())
      throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(i));
  if (params.adam_m.empty()) {
    for (const auto& w : params.tensors) {
      params.adam_m.push_back(Matrix<T>::Zero(w.rows(), w.cols()));
      params.adam_v.push_back(Matrix<T>::Zero(w.rows(), w.cols()));
    }
  }
  ++params.adam_step;
  const double t = static_cast<double>(params.adam_step);
  const T step_size = T(o.learning_rate / (1.0 - std::pow(o.beta1, t)));
  const T v_correction = T(1.0 / (1.0 - std::pow(o.beta2, t)));
  const T decay = T(1.0 - o.learning_rate * o.weight_decay);
  const T b1 = T(o.beta1), b2 = T(o.beta2), eps = T(o.epsilon);

  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i];
    auto& m = params.adam_m[i];
    auto& v = params.adam_v[i];
    const auto& g = grads.tensors[i];
    if (o.weight_decay != 0.0) w *= decay;
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    w.array() -= step_size * m.array() / ((v.array() * v_correction).sqrt() + eps);
  }
  ++params.version;
}

#define CEILING_INSTANTIATE(T)                                                                                 \
  template struct BasicPolicyParams<T>;                                                                        \
  template BasicPolicyParams<T> init_params<T>(const PolicyConfig&, std::uint64_t);                            \
  template BasicPolicyParams<T> zero_params<T>(const PolicyConfig&);                                           \
  template void check_shapes<T>(const BasicPolicyParams<T>&, const PolicyConfig&);                             \
  template Matrix<T> forward<T>(const BasicPolicyParams<T>&, const PolicyConfig&, std::span<const Observation>); \
  template Vector<T> initial_hidden<T>(const PolicyConfig&);                                                   \
  template ActResult<T> act<T>(const BasicPolicyParams<T>&, const PolicyConfig&, const Observation&,          \
                               const Vector<T>&);                                                              \
  template double loss<T>(const BasicPolicyParams<T>&, const PolicyConfig&, const Batch&, Reduction);          \
  template LossAndGradient<T> loss_and_gradient<T>(const BasicPolicyParams<T>&, const PolicyConfig&,           \
                                                   const Batch&, Reduction);                                   \
  template void adam_step<T>(BasicPolicyParams<T>&, const BasicGradientSet<T>&, const AdamOptions&);

CEILING_INSTANTIATE(float)
CEILING_INSTANTIATE(double)
#undef CEILING_INSTANTIATE

template BasicPolicyParams<double> BasicPolicyParams<float>::cast<double>() const;
template BasicPolicyParams<float> BasicPolicyParams<double>::cast<float>() const;
template BasicPolicyParams<float> BasicPolicyParams<float>::cast<float>() const;
template BasicPolicyParams<double> BasicPolicyParams<double>::cast<double>() const;

}  // namespace ceiling::policy
