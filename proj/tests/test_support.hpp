#pragma once

// Shared helpers for the test suites.

#include <cmath>
#include <string>
#include <vector>

#include "negstream/core.hpp"
#include "negstream/static_negatives.hpp"

namespace negstream::test {

inline EmbeddingVector random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> raw(dim);
  for (double& x : raw) x = rng.gaussian();
  return normalize(raw);
}

inline EmbeddingVector basis(std::size_t dim, std::size_t axis,
                             double sign = 1.0) {
  std::vector<double> raw(dim, 0.0);
  raw[axis] = sign;
  return normalize(raw);
}

// Small ID model with random unit prototypes; text features equal the
// prototypes unless perturbed.
inline IdModel random_model(std::size_t classes, std::size_t dim, Rng& rng,
                            double text_noise = 0.0) {
  std::vector<std::vector<EmbeddingVector>> shots(classes);
  std::vector<EmbeddingVector> text;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) {
    EmbeddingVector mean = random_unit(dim, rng);
    shots[c].push_back(mean);
    if (text_noise > 0.0) {
      std::vector<double> raw = mean.values();
      for (double& x : raw) x += text_noise * rng.gaussian();
      text.push_back(normalize(raw));
    } else {
      text.push_back(mean);
    }
    names.push_back("class_" + std::to_string(c));
  }
  return build_id_model(names, text, shots);
}

inline double mean_prototype_cosine(const EmbeddingVector& v,
                                    const IdModel& model) {
  double total = 0.0;
  for (const auto& p : model.prototypes) total += cosine(v, p);
  return total / static_cast<double>(model.class_count());
}

}  // namespace negstream::test
