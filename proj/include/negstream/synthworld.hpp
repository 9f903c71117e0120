#pragma once

// Synthetic embedding-world generator: shared image/text geometry, ID
// classes, OOD clusters, hard-ID samples, encoder-consistent vocabularies
// and stream orderings.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "negstream/core.hpp"
#include "negstream/engine.hpp"
#include "negstream/inversion.hpp"
#include "negstream/static_negatives.hpp"

namespace negstream {

struct WorldSpec {
  std::size_t d = 64;               // embedding dimension
  std::size_t k = 64;               // pseudo-token dimension
  std::size_t classes = 10;         // C
  std::size_t ood_clusters = 4;
  double angular_margin = 1.3;      // radians between ID means and OOD means
  // Ceiling on the mean cosine between an OOD cluster mean and the ID class
  // means. Negative values push OOD regions into the hemisphere facing away
  // from the ID semantics, which is what lets far-from-ID mining discover
  // vocabulary words near them. Values >= 1 disable the constraint.
  double ood_anti_alignment = -0.1;
  double noise_kappa = 60.0;        // concentration; higher = tighter spread
  double hard_id_fraction = 0.1;
  std::size_t vocab_size = 500;
  double anchor_fraction = 0.1;     // vocabulary share placed near OOD regions
  double anchor_noise = 0.2;        // perturbation scale for those anchors
  std::size_t shots_per_class = 16;
  std::size_t id_samples = 200;
  std::size_t ood_samples = 200;
  double text_noise = 0.2;          // class text feature vs class mean
  std::uint64_t seed = 1;
};

struct SamplePools {
  std::vector<StreamSample> id_pool;
  std::vector<std::vector<StreamSample>> ood_pools;  // one per cluster

  std::size_t ood_total() const {
    std::size_t n = 0;
    for (const auto& pool : ood_pools) n += pool.size();
    return n;
  }
};

struct World {
  WorldSpec spec;
  std::vector<std::string> class_names;
  std::vector<std::vector<EmbeddingVector>> id_shots;
  std::vector<EmbeddingVector> class_text_features;
  std::vector<VocabularyEntry> vocabulary;
  SyntheticEncoder encoder;
  SamplePools pools;
  // Geometry kept for audits.
  std::vector<EmbeddingVector> class_means;
  std::vector<EmbeddingVector> ood_means;
};

// Deterministic given the spec (including its seed). Throws
// InfeasibleGeometry when the requested margins cannot be packed in
// dimension d.
World generate_world(const WorldSpec& spec);

enum class Ordering { random, forward, reverse, temporal_shift };

const char* ordering_name(Ordering ordering);
Ordering parse_ordering(const std::string& text);

struct StreamPlan {
  Ordering ordering = Ordering::random;
  std::size_t id_count = 200;
  std::size_t ood_count = 200;
  std::size_t phases = 4;  // temporal-shift only; must not exceed clusters
};

// Materializes the ordered test stream from the pools. Temporal-shift
// partitions the OOD clusters into disjoint contiguous phase families.
std::vector<StreamSample> build_stream(const StreamPlan& plan,
                                       const SamplePools& pools, Rng& rng);

}  // namespace negstream
