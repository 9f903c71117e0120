#include "negstream/core.hpp"

#include <algorithm>
#include <cmath>

namespace negstream {

const char* label_name(Label label) {
  return label == Label::id ? "ID" : "OOD";
}

Label parse_label(const std::string& text) {
  if (text == "ID" || text == "id") return Label::id;
  if (text == "OOD" || text == "ood") return Label::ood;
  throw Error(ErrorCode::invalid_config, "unknown label: " + text);
}

EmbeddingVector normalize(std::span<const double> raw) {
  if (raw.empty()) {
    throw Error(ErrorCode::zero_vector, "cannot normalize an empty vector");
  }
  double sum_sq = 0.0;
  for (double x : raw) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::non_finite, "non-finite entry in vector");
    }
    sum_sq += x * x;
  }
  double norm = std::sqrt(sum_sq);
  if (norm < 1e-12) {
    throw Error(ErrorCode::zero_vector, "vector norm below 1e-12");
  }
  std::vector<double> values(raw.begin(), raw.end());
  for (double& x : values) x /= norm;
  return EmbeddingVector(std::move(values));
}

EmbeddingVector normalize(const std::vector<double>& raw) {
  return normalize(std::span<const double>(raw));
}

EmbeddingVector from_unit(std::vector<double> values, double tolerance) {
  double sum_sq = 0.0;
  for (double x : values) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::non_finite, "non-finite entry in vector");
    }
    sum_sq += x * x;
  }
  if (std::abs(std::sqrt(sum_sq) - 1.0) > tolerance) {
    throw Error(ErrorCode::invalid_config,
                "stored vector is not unit norm within tolerance");
  }
  return EmbeddingVector(std::move(values));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::dimension_mismatch,
                "cosine: dimension mismatch (" + std::to_string(a.dim()) +
                    " vs " + std::to_string(b.dim()) + ")");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  return std::clamp(dot, -1.0, 1.0);
}

namespace {

// splitmix64 finalizer; also used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  // u1 in (0, 1] keeps the log finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::size_t Rng::index(std::size_t bound) {
  if (bound == 0) {
    throw Error(ErrorCode::internal, "Rng::index with zero bound");
  }
  // Rejection sampling over the top multiple of bound avoids modulo bias.
  std::uint64_t limit =
      (UINT64_MAX - static_cast<std::uint64_t>(bound) + 1) % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r < limit);
  return static_cast<std::size_t>(r % bound);
}

Rng Rng::derive(std::uint64_t tag) const {
  return Rng(mix64(seed_ ^ (0x632BE59BD9B4E019ULL * (tag + 1))));
}

Rng Rng::restore(std::uint64_t seed, std::uint64_t state) {
  Rng rng(seed);
  rng.state_ = state;
  return rng;
}

}  // namespace negstream
