#pragma once

// Foundational vector types, normalization, cosine similarity and seeded
// randomness shared by every other component.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace negstream {

enum class ErrorCode {
  zero_vector,
  non_finite,
  dimension_mismatch,
  empty_class,
  vocabulary_too_small,
  too_few_negatives,
  empty_group,
  invalid_sigma,
  empty_negatives,
  non_finite_loss,
  invalid_rho,
  infeasible_geometry,
  insufficient_samples,
  total_mismatch,
  non_positive_p,
  invalid_config,
  io_failure,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

enum class Label { id, ood };

const char* label_name(Label label);
Label parse_label(const std::string& text);

// Unit-norm dense vector in the shared image/text embedding space.
// Instances are only produced by normalize(), so the unit-norm invariant
// holds for every live object.
class EmbeddingVector {
 public:
  std::size_t dim() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> span() const { return values_; }

  friend EmbeddingVector normalize(std::span<const double> raw);
  friend EmbeddingVector from_unit(std::vector<double> values,
                                   double tolerance);

 private:
  explicit EmbeddingVector(std::vector<double> values)
      : values_(std::move(values)) {}
  std::vector<double> values_;
};

// Scales a raw vector to unit L2 norm. Throws ZeroVector when the norm is
// below 1e-12 and NonFinite when any entry is NaN or infinite.
EmbeddingVector normalize(std::span<const double> raw);
EmbeddingVector normalize(const std::vector<double>& raw);

// Adopts values that are already unit norm within the given tolerance,
// without rescaling. Meant for exact round-trips of stored unit vectors.
EmbeddingVector from_unit(std::vector<double> values, double tolerance = 1e-6);

// Cosine similarity of two unit vectors: a plain dot product clamped to
// [-1, 1]. No re-normalization happens per call.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// Deterministic splittable generator (splitmix64 core). Identical seed and
// call sequence produce identical outputs on every platform; there is no
// global state. Parallel streams are created with derive().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via one Box-Muller branch (two uniforms per draw).
  double gaussian();

  // Uniform index in [0, bound); bound must be positive.
  std::size_t index(std::size_t bound);

  // Child stream whose sequence is independent of this one's position.
  Rng derive(std::uint64_t tag) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      std::size_t j = index(i + 1);
      std::swap(items[i], items[j]);
    }
  }

  // Uniform m-subset without replacement (partial Fisher-Yates).
  template <typename T>
  std::vector<T> sample(std::vector<T> pool, std::size_t m) {
    if (m > pool.size()) {
      throw Error(ErrorCode::internal, "sample size exceeds pool");
    }
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t j = i + index(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(m), pool.end());
    return pool;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t state() const { return state_; }
  static Rng restore(std::uint64_t seed, std::uint64_t state);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace negstream
