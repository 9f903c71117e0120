#include "negstream/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace negstream {

namespace {

constexpr std::size_t kMaxRejectionAttempts = 200000;

std::vector<double> gaussian_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.gaussian();
  return v;
}

EmbeddingVector random_unit(std::size_t n, Rng& rng) {
  return normalize(gaussian_vector(n, rng));
}

// Isotropic Gaussian perturbation of a unit mean, re-normalized: a practical
// von Mises-Fisher-like draw whose spread shrinks as sigma does.
EmbeddingVector perturb(const EmbeddingVector& mean, double sigma, Rng& rng) {
  std::vector<double> v(mean.values());
  for (double& x : v) x += sigma * rng.gaussian();
  return normalize(v);
}

EmbeddingVector lerp_unit(const EmbeddingVector& a, const EmbeddingVector& b,
                          double w) {
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    v[i] = (1.0 - w) * a[i] + w * b[i];
  }
  return normalize(v);
}

// Solves square * x = rhs by Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(const std::vector<double>& square,
                                 std::span<const double> rhs, std::size_t n) {
  std::vector<double> a(square);
  std::vector<double> b(rhs.begin(), rhs.end());
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < n; ++row) {
      if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) {
        pivot = row;
      }
    }
    if (std::abs(a[pivot * n + col]) < 1e-10) {
      throw Error(ErrorCode::internal, "singular encoder projection");
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a[col * n + j], a[pivot * n + j]);
      }
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t row = col + 1; row < n; ++row) {
      double factor = a[row * n + col] / a[col * n + col];
      if (factor == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) {
        a[row * n + j] -= factor * a[col * n + j];
      }
      b[row] -= factor * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a[i * n + j] * x[j];
    x[i] = acc / a[i * n + i];
  }
  return x;
}

std::string format_id(const char* prefix, std::size_t group, std::size_t n) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%02zu_%04zu", prefix, group, n);
  return buf;
}

void validate_spec(const WorldSpec& spec) {
  if (spec.d < 2) {
    throw Error(ErrorCode::invalid_config, "world dimension must be >= 2");
  }
  if (spec.classes < 1) {
    throw Error(ErrorCode::invalid_config, "need at least one ID class");
  }
  if (spec.ood_clusters < 1) {
    throw Error(ErrorCode::invalid_config, "need at least one OOD cluster");
  }
  if (!(spec.hard_id_fraction >= 0.0 && spec.hard_id_fraction <= 1.0)) {
    throw Error(ErrorCode::invalid_config, "hard_id_fraction must be in [0,1]");
  }
  if (!(spec.anchor_fraction >= 0.0 && spec.anchor_fraction <= 1.0)) {
    throw Error(ErrorCode::invalid_config, "anchor_fraction must be in [0,1]");
  }
  if (!(spec.noise_kappa > 0.0)) {
    throw Error(ErrorCode::invalid_config, "noise_kappa must be positive");
  }
  if (spec.k != spec.d) {
    // Anchor tokens are produced by inverting the encoder's affine map,
    // which needs a square projection.
    throw Error(ErrorCode::invalid_config,
                "world generation requires k == d");
  }
  if (spec.shots_per_class < 1) {
    throw Error(ErrorCode::invalid_config, "shots_per_class must be >= 1");
  }
}

}  // namespace

const char* ordering_name(Ordering ordering) {
  switch (ordering) {
    case Ordering::random: return "random";
    case Ordering::forward: return "forward";
    case Ordering::reverse: return "reverse";
    case Ordering::temporal_shift: return "temporal-shift";
  }
  return "random";
}

Ordering parse_ordering(const std::string& text) {
  if (text == "random") return Ordering::random;
  if (text == "forward") return Ordering::forward;
  if (text == "reverse") return Ordering::reverse;
  if (text == "temporal-shift") return Ordering::temporal_shift;
  throw Error(ErrorCode::invalid_config, "unknown ordering: " + text);
}

World generate_world(const WorldSpec& spec) {
  validate_spec(spec);
  Rng root(spec.seed);
  Rng geometry_rng = root.derive(1);
  Rng vocab_rng = root.derive(2);
  Rng sample_rng = root.derive(3);

  double margin_cos = std::cos(spec.angular_margin);
  double sigma = 1.0 / std::sqrt(spec.noise_kappa);

  // ID class means: pairwise angle at least the margin.
  std::vector<EmbeddingVector> class_means;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
      EmbeddingVector candidate = random_unit(spec.d, geometry_rng);
      bool ok = true;
      for (const auto& other : class_means) {
        if (cosine(candidate, other) > margin_cos) {
          ok = false;
          break;
        }
      }
      if (ok) {
        class_means.push_back(std::move(candidate));
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw Error(ErrorCode::infeasible_geometry,
                  "cannot place ID class means at the requested margin");
    }
  }

  std::vector<EmbeddingVector> ood_means;
  for (std::size_t cluster = 0; cluster < spec.ood_clusters; ++cluster) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
      EmbeddingVector candidate = random_unit(spec.d, geometry_rng);
      bool ok = true;
      double mean_align = 0.0;
      for (const auto& mean : class_means) {
        double c = cosine(candidate, mean);
        mean_align += c;
        if (c > margin_cos) {
          ok = false;
          break;
        }
      }
      mean_align /= static_cast<double>(spec.classes);
      if (ok && spec.ood_anti_alignment < 1.0 &&
          mean_align > spec.ood_anti_alignment) {
        ok = false;
      }
      if (ok) {
        for (const auto& other : ood_means) {
          if (cosine(candidate, other) > margin_cos) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        ood_means.push_back(std::move(candidate));
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw Error(ErrorCode::infeasible_geometry,
                  "cannot place OOD cluster means at the requested margin");
    }
  }

  // Class text features simulate tight image/text alignment.
  std::vector<EmbeddingVector> class_text_features;
  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    class_text_features.push_back(
        perturb(class_means[c], spec.text_noise, geometry_rng));
    char name[32];
    std::snprintf(name, sizeof(name), "class_%02zu", c);
    class_names.emplace_back(name);
  }

  std::vector<std::vector<EmbeddingVector>> id_shots(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t s = 0; s < spec.shots_per_class; ++s) {
      id_shots[c].push_back(perturb(class_means[c], sigma, sample_rng));
    }
  }

  SyntheticEncoder encoder(spec.d, spec.k, root.derive(4).next_u64());

  // Vocabulary: mostly free tokens whose features land wherever the encoder
  // puts them, plus a small share of anchors deliberately placed near the
  // OOD regions (corpus words that happen to describe them). Anchor tokens
  // are recovered by inverting the affine map so encoder consistency is
  // exact.
  std::size_t n_anchor = static_cast<std::size_t>(
      std::llround(spec.anchor_fraction * static_cast<double>(spec.vocab_size)));
  n_anchor = std::min(n_anchor, spec.vocab_size);
  std::vector<VocabularyEntry> vocabulary;
  vocabulary.reserve(spec.vocab_size);
  double token_sigma = 1.0 / std::sqrt(static_cast<double>(spec.k));
  for (std::size_t i = 0; i < spec.vocab_size; ++i) {
    if (i < n_anchor) {
      const EmbeddingVector& mean = ood_means[i % spec.ood_clusters];
      EmbeddingVector target = perturb(mean, spec.anchor_noise, vocab_rng);
      std::vector<double> rhs(spec.d);
      for (std::size_t j = 0; j < spec.d; ++j) {
        rhs[j] = target[j] - encoder.prefix_offset()[j];
      }
      std::vector<double> token =
          solve_linear(encoder.projection(), rhs, spec.d);
      vocabulary.push_back(VocabularyEntry{"", std::move(token), target});
    } else {
      std::vector<double> token(spec.k);
      for (double& x : token) x = token_sigma * vocab_rng.gaussian();
      EmbeddingVector feature = encoder.encode(token);
      vocabulary.push_back(VocabularyEntry{"", std::move(token), feature});
    }
  }
  vocab_rng.shuffle(vocabulary);
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    vocabulary[i].token_id = format_id("tok", 0, i);
  }

  // Test pools. Hard ID samples sit on the boundary: the class mean pulled
  // toward the nearest OOD cluster mean.
  SamplePools pools;
  std::size_t hard_count = static_cast<std::size_t>(
      std::llround(spec.hard_id_fraction * static_cast<double>(spec.id_samples)));
  for (std::size_t i = 0; i < spec.id_samples; ++i) {
    std::size_t c = i % spec.classes;
    bool hard = i < hard_count;
    EmbeddingVector sample = [&] {
      if (!hard) return perturb(class_means[c], sigma, sample_rng);
      std::size_t nearest = 0;
      double best = -2.0;
      for (std::size_t j = 0; j < ood_means.size(); ++j) {
        double cos_j = cosine(class_means[c], ood_means[j]);
        if (cos_j > best) {
          best = cos_j;
          nearest = j;
        }
      }
      double w = 0.4 + 0.4 * sample_rng.uniform();
      EmbeddingVector boundary = lerp_unit(class_means[c], ood_means[nearest], w);
      return perturb(boundary, sigma, sample_rng);
    }();
    pools.id_pool.push_back(StreamSample{
        format_id(hard ? "idh_c" : "id_c", c, i), std::move(sample),
        Label::id, 0});
  }

  pools.ood_pools.resize(spec.ood_clusters);
  for (std::size_t i = 0; i < spec.ood_samples; ++i) {
    std::size_t cluster = i % spec.ood_clusters;
    pools.ood_pools[cluster].push_back(StreamSample{
        format_id("ood_k", cluster, i),
        perturb(ood_means[cluster], sigma, sample_rng), Label::ood, 0});
  }

  return World{
      .spec = spec,
      .class_names = std::move(class_names),
      .id_shots = std::move(id_shots),
      .class_text_features = std::move(class_text_features),
      .vocabulary = std::move(vocabulary),
      .encoder = std::move(encoder),
      .pools = std::move(pools),
      .class_means = std::move(class_means),
      .ood_means = std::move(ood_means),
  };
}

std::vector<StreamSample> build_stream(const StreamPlan& plan,
                                       const SamplePools& pools, Rng& rng) {
  if (plan.id_count > pools.id_pool.size()) {
    throw Error(ErrorCode::insufficient_samples,
                "ID pool smaller than requested count");
  }
  if (plan.ood_count > pools.ood_total()) {
    throw Error(ErrorCode::insufficient_samples,
                "OOD pools smaller than requested count");
  }

  std::vector<StreamSample> id_part = pools.id_pool;
  rng.shuffle(id_part);
  id_part.erase(id_part.begin() + static_cast<std::ptrdiff_t>(plan.id_count),
                id_part.end());

  if (plan.ordering == Ordering::temporal_shift) {
    std::size_t phases = plan.phases;
    if (phases == 0 || phases > pools.ood_pools.size()) {
      throw Error(ErrorCode::invalid_config,
                  "temporal-shift phases must be in [1, ood clusters]");
    }
    std::vector<StreamSample> stream;
    stream.reserve(plan.id_count + plan.ood_count);
    std::size_t id_cursor = 0;
    for (std::size_t p = 0; p < phases; ++p) {
      // Contiguous partition of the clusters into phase families.
      std::size_t first = p * pools.ood_pools.size() / phases;
      std::size_t last = (p + 1) * pools.ood_pools.size() / phases;
      std::vector<StreamSample> phase_ood;
      for (std::size_t cluster = first; cluster < last; ++cluster) {
        phase_ood.insert(phase_ood.end(), pools.ood_pools[cluster].begin(),
                         pools.ood_pools[cluster].end());
      }
      rng.shuffle(phase_ood);
      std::size_t ood_share =
          plan.ood_count / phases + (p < plan.ood_count % phases ? 1 : 0);
      if (ood_share > phase_ood.size()) {
        throw Error(ErrorCode::insufficient_samples,
                    "phase " + std::to_string(p) + " lacks OOD samples");
      }
      phase_ood.erase(
          phase_ood.begin() + static_cast<std::ptrdiff_t>(ood_share),
          phase_ood.end());

      std::size_t id_share =
          plan.id_count / phases + (p < plan.id_count % phases ? 1 : 0);
      std::vector<StreamSample> phase;
      phase.reserve(id_share + ood_share);
      for (std::size_t i = 0; i < id_share; ++i) {
        phase.push_back(id_part[id_cursor++]);
      }
      phase.insert(phase.end(), phase_ood.begin(), phase_ood.end());
      rng.shuffle(phase);
      for (auto& sample : phase) sample.phase = p;
      stream.insert(stream.end(), std::make_move_iterator(phase.begin()),
                    std::make_move_iterator(phase.end()));
    }
    return stream;
  }

  std::vector<StreamSample> ood_part;
  for (const auto& pool : pools.ood_pools) {
    ood_part.insert(ood_part.end(), pool.begin(), pool.end());
  }
  rng.shuffle(ood_part);
  ood_part.erase(ood_part.begin() + static_cast<std::ptrdiff_t>(plan.ood_count),
                 ood_part.end());

  std::vector<StreamSample> stream;
  stream.reserve(plan.id_count + plan.ood_count);
  switch (plan.ordering) {
    case Ordering::forward:
      stream.insert(stream.end(), id_part.begin(), id_part.end());
      stream.insert(stream.end(), ood_part.begin(), ood_part.end());
      break;
    case Ordering::reverse:
      stream.insert(stream.end(), ood_part.begin(), ood_part.end());
      stream.insert(stream.end(), id_part.begin(), id_part.end());
      break;
    case Ordering::random:
    default:
      stream.insert(stream.end(), id_part.begin(), id_part.end());
      stream.insert(stream.end(), ood_part.begin(), ood_part.end());
      rng.shuffle(stream);
      break;
  }
  for (auto& sample : stream) sample.phase = 0;
  return stream;
}

}  // namespace negstream
