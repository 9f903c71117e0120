#include "negstream/inversion.hpp"

#include <cmath>
#include <limits>

namespace negstream {

SyntheticEncoder::SyntheticEncoder(std::size_t feature_dim,
                                   std::size_t token_dim, std::uint64_t seed)
    : feature_dim_(feature_dim), token_dim_(token_dim) {
  Rng rng(seed);
  projection_.resize(feature_dim * token_dim);
  double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  for (double& w : projection_) w = scale * rng.gaussian();
  prefix_offset_.resize(feature_dim);
  for (double& b : prefix_offset_) b = 0.1 * rng.gaussian();
}

SyntheticEncoder::SyntheticEncoder(std::size_t feature_dim,
                                   std::size_t token_dim,
                                   std::vector<double> projection,
                                   std::vector<double> prefix_offset)
    : feature_dim_(feature_dim),
      token_dim_(token_dim),
      projection_(std::move(projection)),
      prefix_offset_(std::move(prefix_offset)) {
  if (projection_.size() != feature_dim_ * token_dim_ ||
      prefix_offset_.size() != feature_dim_) {
    throw Error(ErrorCode::invalid_config, "encoder parameter sizes mismatch");
  }
}

std::vector<double> SyntheticEncoder::affine(
    std::span<const double> token) const {
  if (token.size() != token_dim_) {
    throw Error(ErrorCode::dimension_mismatch,
                "encoder expects token of length " +
                    std::to_string(token_dim_));
  }
  std::vector<double> u(prefix_offset_);
  for (std::size_t i = 0; i < feature_dim_; ++i) {
    const double* row = projection_.data() + i * token_dim_;
    double acc = 0.0;
    for (std::size_t j = 0; j < token_dim_; ++j) acc += row[j] * token[j];
    u[i] += acc;
  }
  return u;
}

EmbeddingVector SyntheticEncoder::encode(std::span<const double> token) const {
  return normalize(affine(token));
}

std::vector<double> SyntheticEncoder::backward(
    std::span<const double> token, std::span<const double> output_grad) const {
  if (output_grad.size() != feature_dim_) {
    throw Error(ErrorCode::dimension_mismatch,
                "output gradient must have the feature dimension");
  }
  std::vector<double> u = affine(token);
  double norm_sq = 0.0;
  for (double x : u) norm_sq += x * x;
  double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) {
    throw Error(ErrorCode::zero_vector, "encoder output norm below 1e-12");
  }

  // Exact Jacobian of the normalize step: du L = (I - t t^T) g / ||u||.
  double t_dot_g = 0.0;
  for (std::size_t i = 0; i < feature_dim_; ++i) {
    t_dot_g += (u[i] / norm) * output_grad[i];
  }
  std::vector<double> grad_u(feature_dim_);
  for (std::size_t i = 0; i < feature_dim_; ++i) {
    grad_u[i] = (output_grad[i] - (u[i] / norm) * t_dot_g) / norm;
  }

  std::vector<double> grad_z(token_dim_, 0.0);
  for (std::size_t i = 0; i < feature_dim_; ++i) {
    const double* row = projection_.data() + i * token_dim_;
    for (std::size_t j = 0; j < token_dim_; ++j) {
      grad_z[j] += row[j] * grad_u[i];
    }
  }
  return grad_z;
}

double loss_inv(const EmbeddingVector& t_neg, const EmbeddingVector& v) {
  return 1.0 - cosine(t_neg, v);
}

double loss_ours(const EmbeddingVector& t_neg, const EmbeddingVector& v,
                 const IdModel& model, double lambda) {
  double separation = 0.0;
  for (const auto& prototype : model.prototypes) {
    separation += 1.0 + cosine(t_neg, prototype);
  }
  separation /= static_cast<double>(model.class_count());
  return loss_inv(t_neg, v) + lambda * separation;
}

std::vector<double> loss_ours_feature_grad(const EmbeddingVector& v,
                                           const IdModel& model,
                                           double lambda) {
  std::size_t d = v.dim();
  std::vector<double> grad(d);
  double inv_c = lambda / static_cast<double>(model.class_count());
  for (std::size_t i = 0; i < d; ++i) {
    double acc = -v[i];
    for (const auto& prototype : model.prototypes) acc += inv_c * prototype[i];
    grad[i] = acc;
  }
  return grad;
}

std::vector<double> init_random(std::size_t k, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::invalid_sigma, "sigma must be positive");
  }
  std::vector<double> z(k);
  for (double& x : z) x = sigma * rng.gaussian();
  return z;
}

std::vector<double> init_vocabulary_prior(const EmbeddingVector& v,
                                          const StaticNegatives& static_negs,
                                          const IdModel& model, double lambda) {
  if (static_negs.entries.empty()) {
    throw Error(ErrorCode::empty_negatives,
                "vocabulary-prior initialization needs mined negatives");
  }
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < static_negs.entries.size(); ++i) {
    double loss =
        loss_ours(static_negs.entries[i].text_feature, v, model, lambda);
    if (loss < best_loss) {
      best_loss = loss;
      best = i;
    }
  }
  return static_negs.entries[best].token_embedding;
}

void adamw_step(std::vector<double>& z, std::span<const double> grad,
                OptimizerState& state, double lr, double wd) {
  if (grad.size() != z.size() || state.first_moment.size() != z.size()) {
    throw Error(ErrorCode::dimension_mismatch, "optimizer shape mismatch");
  }
  state.step_count += 1;
  double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < z.size(); ++i) {
    state.first_moment[i] =
        state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * grad[i];
    state.second_moment[i] = state.beta2 * state.second_moment[i] +
                             (1.0 - state.beta2) * grad[i] * grad[i];
    double m_hat = state.first_moment[i] / bias1;
    double v_hat = state.second_moment[i] / bias2;
    double adaptive = m_hat / (std::sqrt(v_hat) + state.epsilon);
    z[i] -= lr * (adaptive + wd * z[i]);
  }
}

InversionResult invert(const EmbeddingVector& v, const TextEncoder& encoder,
                       const IdModel& model, const InversionConfig& cfg,
                       const StaticNegatives& static_negs, Rng& rng) {
  if (encoder.feature_dim() != v.dim() ||
      encoder.feature_dim() != model.dim()) {
    throw Error(ErrorCode::dimension_mismatch,
                "encoder feature dimension must match the embedding space");
  }
  std::vector<double> z =
      cfg.init == InitStrategy::random
          ? init_random(encoder.token_dim(), cfg.sigma, rng)
          : init_vocabulary_prior(v, static_negs, model, cfg.lambda);
  if (z.size() != encoder.token_dim()) {
    throw Error(ErrorCode::dimension_mismatch,
                "initial token embedding length must match the encoder");
  }

  // dL/dt is constant: the loss is linear in the unit-norm feature.
  std::vector<double> feature_grad =
      loss_ours_feature_grad(v, model, cfg.lambda);

  OptimizerState state(z.size());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    EmbeddingVector t = encoder.encode(z);
    double loss = loss_ours(t, v, model, cfg.lambda);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::non_finite_loss,
                  "inversion loss left the finite range");
    }
    std::vector<double> grad = encoder.backward(z, feature_grad);
    adamw_step(z, grad, state, cfg.learning_rate, cfg.weight_decay);
  }

  EmbeddingVector feature = encoder.encode(z);
  double final_loss = loss_ours(feature, v, model, cfg.lambda);
  if (!std::isfinite(final_loss)) {
    throw Error(ErrorCode::non_finite_loss,
                "inversion loss left the finite range");
  }
  return {feature, final_loss};
}

}  // namespace negstream
