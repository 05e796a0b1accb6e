#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lpmm/error.hpp"
#include "lpmm/model.hpp"
#include "lpmm/surrogate.hpp"

namespace lpmm {

inline constexpr int kAdaptorLayers = 3;
// Residuals at or below this magnitude are treated as sitting on the l1 kink.
inline constexpr double kL1KinkTolerance = 1e-12;

/// Weights and biases of the three linear layers. Also used for gradients
/// and Adam moments, which share the network's shapes.
struct MlpParams {
  std::array<Eigen::MatrixXd, kAdaptorLayers> weights;
  std::array<Eigen::VectorXd, kAdaptorLayers> biases;

  static MlpParams zeros_like(const MlpParams& o) {
    MlpParams z;
    for (int l = 0; l < kAdaptorLayers; ++l) {
      z.weights[l] = Eigen::MatrixXd::Zero(o.weights[l].rows(), o.weights[l].cols());
      z.biases[l] = Eigen::VectorXd::Zero(o.biases[l].size());
    }
    return z;
  }

  bool same_shape(const MlpParams& o) const {
    for (int l = 0; l < kAdaptorLayers; ++l)
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
          biases[l].size() != o.biases[l].size())
        return false;
    return true;
  }

  Eigen::Index count() const {
    Eigen::Index c = 0;
    for (int l = 0; l < kAdaptorLayers; ++l) c += weights[l].size() + biases[l].size();
    return c;
  }

  /// Visits every scalar in a fixed order (layer, weights col-major, biases).
  template <typename F>
  void for_each(F&& f) {
    for (int l = 0; l < kAdaptorLayers; ++l) {
      for (Eigen::Index i = 0; i < weights[l].size(); ++i) f(weights[l].data()[i]);
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) f(biases[l].data()[i]);
    }
  }

  bool all_finite() const {
    for (int l = 0; l < kAdaptorLayers; ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (!a.same_shape(b)) return false;
    for (int l = 0; l < kAdaptorLayers; ++l)
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    return true;
  }
};

inline double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
inline double elu_derivative(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

/// Parameter-to-latent MLP k -> 2k -> 4k -> w with ELU on the hidden layers.
/// The output is a residual added to the mean latent.
class AdaptorNet {
 public:
  AdaptorNet(MlpParams params, Eigen::VectorXd mean_latent)
      : params_(std::move(params)), mean_latent_(std::move(mean_latent)) {
    const int k = static_cast<int>(params_.weights[0].cols());
    const std::array<int, 4> expect{k, 2 * k, 4 * k, static_cast<int>(mean_latent_.size())};
    for (int l = 0; l < kAdaptorLayers; ++l)
      if (params_.weights[l].cols() != expect[l] || params_.weights[l].rows() != expect[l + 1] ||
          params_.biases[l].size() != expect[l + 1])
        throw Error(ErrorCode::dimension_mismatch, "adaptor widths must be (k, 2k, 4k, w)");
    if (k < 1 || mean_latent_.size() < 1)
      throw Error(ErrorCode::dimension_mismatch, "adaptor needs k >= 1 and w >= 1");
    if (!params_.all_finite() || !mean_latent_.allFinite())
      throw Error(ErrorCode::non_finite, "adaptor weights must be finite");
  }

  /// All weights and biases zero: forward() returns the mean latent.
  static AdaptorNet zeros(int k, int w, const Eigen::VectorXd& mean_latent) {
    MlpParams p;
    const std::array<int, 4> widths{k, 2 * k, 4 * k, w};
    for (int l = 0; l < kAdaptorLayers; ++l) {
      p.weights[l] = Eigen::MatrixXd::Zero(widths[l + 1], widths[l]);
      p.biases[l] = Eigen::VectorXd::Zero(widths[l + 1]);
    }
    return AdaptorNet(std::move(p), mean_latent);
  }

  int k() const noexcept { return static_cast<int>(params_.weights[0].cols()); }
  int w() const noexcept { return static_cast<int>(mean_latent_.size()); }
  std::array<int, 4> widths() const { return {k(), 2 * k(), 4 * k(), w()}; }
  const MlpParams& params() const noexcept { return params_; }
  MlpParams& mutable_params() noexcept { return params_; }
  const Eigen::VectorXd& mean_latent() const noexcept { return mean_latent_; }

  friend bool operator==(const AdaptorNet& a, const AdaptorNet& b) {
    return a.params_ == b.params_ && a.mean_latent_ == b.mean_latent_;
  }

 private:
  MlpParams params_;
  Eigen::VectorXd mean_latent_;
};

/// Uniform fan-in initialization, zero biases.
inline AdaptorNet init_adaptor(int k, int w, const LatentVector& mean_latent, std::uint64_t seed) {
  if (k < 1 || w < 1) throw Error(ErrorCode::out_of_range, "adaptor needs k >= 1 and w >= 1");
  if (mean_latent.w() != w) throw Error(ErrorCode::dimension_mismatch, "mean latent width != w");
  std::mt19937_64 rng(seed);
  auto net = AdaptorNet::zeros(k, w, mean_latent.values());
  auto& p = net.mutable_params();
  for (int l = 0; l < kAdaptorLayers; ++l) {
    const double bound = std::sqrt(1.0 / static_cast<double>(p.weights[l].cols()));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) p.weights[l].data()[i] = uni(rng);
  }
  return net;
}

/// Intermediate values kept for backpropagation.
struct ForwardTrace {
  Eigen::VectorXd input, z1, h1, z2, h2, residual;
};

inline ForwardTrace forward_trace(const AdaptorNet& net, const Eigen::VectorXd& p) {
  if (p.size() != net.k())
    throw Error(ErrorCode::degree_mismatch, "parameter degree " + std::to_string(p.size()) +
                                                " does not match adaptor k=" +
                                                std::to_string(net.k()));
  const auto& w = net.params().weights;
  const auto& b = net.params().biases;
  ForwardTrace t;
  t.input = p;
  t.z1 = w[0] * p + b[0];
  t.h1 = t.z1.unaryExpr([](double z) { return elu(z); });
  t.z2 = w[1] * t.h1 + b[1];
  t.h2 = t.z2.unaryExpr([](double z) { return elu(z); });
  t.residual = w[2] * t.h2 + b[2];
  return t;
}

/// v_hat = mean_latent + d(p).
inline LatentVector adaptor_forward(const AdaptorNet& net, const ParamVector& p) {
  return LatentVector(net.mean_latent() + forward_trace(net, p.values()).residual);
}

inline LatentVector map_params_to_latent(const AdaptorNet& net, const ParamVector& p) {
  return adaptor_forward(net, p);
}

/// Accumulates d(loss)/d(params) given d(loss)/d(residual) for one trace.
inline void backprop(const AdaptorNet& net, const ForwardTrace& t,
                     const Eigen::VectorXd& grad_residual, MlpParams& grads) {
  const auto& w = net.params().weights;
  grads.weights[2].noalias() += grad_residual * t.h2.transpose();
  grads.biases[2] += grad_residual;
  Eigen::VectorXd g2 = w[2].transpose() * grad_residual;
  g2.array() *= t.z2.unaryExpr([](double z) { return elu_derivative(z); }).array();
  grads.weights[1].noalias() += g2 * t.h1.transpose();
  grads.biases[1] += g2;
  Eigen::VectorXd g1 = w[1].transpose() * g2;
  g1.array() *= t.z1.unaryExpr([](double z) { return elu_derivative(z); }).array();
  grads.weights[0].noalias() += g1 * t.input.transpose();
  grads.biases[0] += g1;
}

enum class LossVariant { rgb, latent };

struct TrainConfig {
  int k = 40;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_rgb = 1.0;
  double lambda_pose_reg = 1.0;
  int batch_size = 32;
  int steps = 2000;
  std::uint64_t seed = 0;
  LossVariant loss_variant = LossVariant::rgb;
  bool pose_reg_enabled = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::out_of_range, "learning rate must be > 0");
    if (steps < 0) throw Error(ErrorCode::out_of_range, "steps must be >= 0");
    if (batch_size < 1) throw Error(ErrorCode::out_of_range, "batch size must be >= 1");
    if (k < 1) throw Error(ErrorCode::out_of_range, "k must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
      throw Error(ErrorCode::out_of_range, "invalid Adam hyper-parameters");
  }
};

/// The image-space term is reported as `rgb` for either loss variant.
struct LossBreakdown {
  double rgb = 0.0;
  double pose_reg = 0.0;
  double total = 0.0;

  static LossBreakdown combine(double rgb, double pose_reg, const TrainConfig& cfg) {
    return {rgb, pose_reg, cfg.lambda_rgb * rgb + cfg.lambda_pose_reg * pose_reg};
  }
};

inline double l1_sign(double x) {
  if (std::abs(x) <= kL1KinkTolerance) return 0.0;
  return x > 0.0 ? 1.0 : -1.0;
}

/// One training example with everything that does not depend on the net.
struct PreparedSample {
  Eigen::VectorXd params;  // fit_params(L, k)
  Eigen::VectorXd latent;  // encode(L)
  Raster target;           // render(encode(L)); empty for the latent variant
};

inline PreparedSample prepare_sample(const LpmmModel& model, const SurrogateStack& stack,
                                     const LandmarkSet& l, const TrainConfig& cfg) {
  PreparedSample s;
  s.params = fit_params(model, l, cfg.k).values();
  s.latent = encode_landmarks(stack, l).values();
  if (cfg.loss_variant == LossVariant::rgb) s.target = render_raster(stack, LatentVector(s.latent));
  return s;
}

/// The parameters the frozen pipeline assigns to the mean latent's image.
inline Eigen::VectorXd pose_reg_anchor(const AdaptorNet& net, const LpmmModel& model,
                                       const SurrogateStack& stack) {
  return fit_params(model, decode_latent(stack, LatentVector(net.mean_latent())), net.k()).values();
}

struct LossAndGradient {
  LossBreakdown loss;
  MlpParams grads;
};

/// Loss (and optionally its subgradient) over prepared samples. l1 terms are
/// per-element means.
inline LossAndGradient evaluate_prepared(const AdaptorNet& net, const SurrogateStack& stack,
                                         const std::vector<const PreparedSample*>& batch,
                                         const Eigen::VectorXd& reg_params,
                                         const TrainConfig& cfg, bool with_grad) {
  if (batch.empty()) throw Error(ErrorCode::empty_dataset, "empty batch");
  if (net.w() != stack.w()) throw Error(ErrorCode::dimension_mismatch, "adaptor w != encoder w");
  LossAndGradient out;
  if (with_grad) out.grads = MlpParams::zeros_like(net.params());
  const double batch_n = static_cast<double>(batch.size());
  const auto& cfg_r = stack.raster();
  const double pixels = static_cast<double>(cfg_r.height) * cfg_r.width;

  double rgb_sum = 0.0;
  for (const PreparedSample* s : batch) {
    const ForwardTrace t = forward_trace(net, s->params);
    const Eigen::VectorXd v_hat = net.mean_latent() + t.residual;
    Eigen::VectorXd grad_v;
    if (cfg.loss_variant == LossVariant::rgb) {
      const SplatField field(cfg_r, stack.anchor() + stack.encode_matrix().transpose() * v_hat);
      const Raster diff = field.render() - s->target;
      rgb_sum += diff.cwiseAbs().sum() / pixels;
      if (with_grad) {
        const Raster cot = diff.unaryExpr([](double x) { return l1_sign(x); }) *
                           (cfg.lambda_rgb / (pixels * batch_n));
        grad_v = stack.encode_matrix() * field.pullback(cot);
      }
    } else {
      const Eigen::VectorXd diff = v_hat - s->latent;
      rgb_sum += diff.cwiseAbs().sum() / static_cast<double>(net.w());
      if (with_grad)
        grad_v = diff.unaryExpr([](double x) { return l1_sign(x); }) *
                 (cfg.lambda_rgb / (net.w() * batch_n));
    }
    if (with_grad) backprop(net, t, grad_v, out.grads);
  }

  double pose_reg = 0.0;
  if (cfg.pose_reg_enabled) {
    const ForwardTrace t = forward_trace(net, reg_params);
    pose_reg = t.residual.cwiseAbs().sum() / static_cast<double>(net.w());
    if (with_grad) {
      const Eigen::VectorXd g =
          t.residual.unaryExpr([](double x) { return l1_sign(x); }) * (cfg.lambda_pose_reg / net.w());
      backprop(net, t, g, out.grads);
    }
  }
  out.loss = LossBreakdown::combine(rgb_sum / batch_n, pose_reg, cfg);
  return out;
}

namespace detail {
inline std::vector<PreparedSample> prepare_batch(const LpmmModel& model,
                                                 const SurrogateStack& stack,
                                                 const std::vector<LandmarkSet>& batch,
                                                 const TrainConfig& cfg) {
  std::vector<PreparedSample> prepared;
  prepared.reserve(batch.size());
  for (const auto& l : batch) prepared.push_back(prepare_sample(model, stack, l, cfg));
  return prepared;
}
inline std::vector<const PreparedSample*> pointers(const std::vector<PreparedSample>& v) {
  std::vector<const PreparedSample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}
inline void check_net(const AdaptorNet& net, const TrainConfig& cfg) {
  if (net.k() != cfg.k)
    throw Error(ErrorCode::degree_mismatch, "adaptor k does not match config k");
}
}  // namespace detail

inline LossBreakdown compute_losses(const AdaptorNet& net, const SurrogateStack& stack,
                                    const LpmmModel& model, const std::vector<LandmarkSet>& batch,
                                    const TrainConfig& cfg) {
  detail::check_net(net, cfg);
  const auto prepared = detail::prepare_batch(model, stack, batch, cfg);
  return evaluate_prepared(net, stack, detail::pointers(prepared),
                           pose_reg_anchor(net, model, stack), cfg, false)
      .loss;
}

/// Exact subgradient of the total loss w.r.t. every weight and bias, with
/// sign(0) = 0 at l1 kinks.
inline MlpParams compute_gradients(const AdaptorNet& net, const SurrogateStack& stack,
                                   const LpmmModel& model, const std::vector<LandmarkSet>& batch,
                                   const TrainConfig& cfg) {
  detail::check_net(net, cfg);
  const auto prepared = detail::prepare_batch(model, stack, batch, cfg);
  return evaluate_prepared(net, stack, detail::pointers(prepared),
                           pose_reg_anchor(net, model, stack), cfg, true)
      .grads;
}

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  long step = 0;

  static AdamState for_net(const AdaptorNet& net) {
    return {MlpParams::zeros_like(net.params()), MlpParams::zeros_like(net.params()), 0};
  }
};

/// Bias-corrected Adam update, in place.
inline void adam_step(AdaptorNet& net, const MlpParams& grads, AdamState& state,
                      const TrainConfig& cfg) {
  auto& params = net.mutable_params();
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment))
    throw Error(ErrorCode::dimension_mismatch, "adam: gradient/state shape mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int l = 0; l < kAdaptorLayers; ++l) {
    auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      theta.array() -= cfg.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + cfg.epsilon);
    };
    update(params.weights[l], grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

}  // namespace lpmm
