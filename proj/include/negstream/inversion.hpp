#pragma once

// Image-to-text modality inversion: optimize a pseudo-token embedding through
// a differentiable text encoder so its output aligns with an image feature
// while staying separated from the ID prototypes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "negstream/core.hpp"
#include "negstream/static_negatives.hpp"

namespace negstream {

// Maps a pseudo-token embedding (length k) to a unit-norm text feature
// (length d) and pulls gradients on that feature back to the token.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual std::size_t token_dim() const = 0;
  virtual std::size_t feature_dim() const = 0;

  virtual EmbeddingVector encode(std::span<const double> token) const = 0;

  // Given dL/dt for the unit-norm output t = encode(token), returns dL/dz.
  virtual std::vector<double> backward(
      std::span<const double> token,
      std::span<const double> output_grad) const = 0;
};

// Affine-then-normalize stand-in for a frozen text encoder:
//   t = normalize(projection * z + prefix_offset).
// The prefix offset plays the role of the frozen prompt contribution; only
// the token embedding z is ever optimized.
class SyntheticEncoder final : public TextEncoder {
 public:
  SyntheticEncoder(std::size_t feature_dim, std::size_t token_dim,
                   std::uint64_t seed);
  SyntheticEncoder(std::size_t feature_dim, std::size_t token_dim,
                   std::vector<double> projection,
                   std::vector<double> prefix_offset);

  std::size_t token_dim() const override { return token_dim_; }
  std::size_t feature_dim() const override { return feature_dim_; }
  EmbeddingVector encode(std::span<const double> token) const override;
  std::vector<double> backward(
      std::span<const double> token,
      std::span<const double> output_grad) const override;

  // Row-major feature_dim x token_dim.
  const std::vector<double>& projection() const { return projection_; }
  const std::vector<double>& prefix_offset() const { return prefix_offset_; }

 private:
  std::vector<double> affine(std::span<const double> token) const;

  std::size_t feature_dim_;
  std::size_t token_dim_;
  std::vector<double> projection_;
  std::vector<double> prefix_offset_;
};

enum class InitStrategy { random, vocabulary_prior };

struct InversionConfig {
  double lambda = 0.3;         // ID-separation regularization weight
  double learning_rate = 2e-2;
  double weight_decay = 1e-2;
  std::size_t iterations = 30;
  InitStrategy init = InitStrategy::vocabulary_prior;
  double sigma = 0.02;         // stddev for random initialization
};

// Bias-corrected adaptive moments with decoupled weight decay.
struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit OptimizerState(std::size_t n)
      : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// Plain alignment loss: 1 - cos(t_neg, v). Range [0, 2].
double loss_inv(const EmbeddingVector& t_neg, const EmbeddingVector& v);

// Alignment plus ID-prototype separation:
//   (1 - cos(t_neg, v)) + lambda * (1/C) * sum_c (1 + cos(t_neg, mu_c)).
double loss_ours(const EmbeddingVector& t_neg, const EmbeddingVector& v,
                 const IdModel& model, double lambda);

// Gradient of loss_ours with respect to the unit-norm feature t_neg. The
// loss is linear in t_neg, so this does not depend on t_neg itself.
std::vector<double> loss_ours_feature_grad(const EmbeddingVector& v,
                                           const IdModel& model,
                                           double lambda);

// k i.i.d. Gaussian draws with standard deviation sigma.
std::vector<double> init_random(std::size_t k, double sigma, Rng& rng);

// Token embedding of the mined negative whose text feature minimizes
// loss_ours against v; ties broken by ascending entry index.
std::vector<double> init_vocabulary_prior(const EmbeddingVector& v,
                                          const StaticNegatives& static_negs,
                                          const IdModel& model, double lambda);

// One optimizer step: z <- z - lr * (adaptive_grad + wd * z).
void adamw_step(std::vector<double>& z, std::span<const double> grad,
                OptimizerState& state, double lr, double wd);

struct InversionResult {
  EmbeddingVector feature;
  double final_loss;
};

// Runs cfg.iterations optimizer steps on z minimizing
// loss_ours(encoder(z), v, model, lambda); the encoder stays frozen.
// Throws NonFiniteLoss if the loss leaves the finite range.
InversionResult invert(const EmbeddingVector& v, const TextEncoder& encoder,
                       const IdModel& model, const InversionConfig& cfg,
                       const StaticNegatives& static_negs, Rng& rng);

}  // namespace negstream
