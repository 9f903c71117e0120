#pragma once

// Streaming pipeline: per-sample group scoring, potential-OOD gating,
// modality inversion, criterion filtering, bank/buffer update and score
// recomputation.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "negstream/bank.hpp"
#include "negstream/core.hpp"
#include "negstream/inversion.hpp"
#include "negstream/scoring.hpp"
#include "negstream/static_negatives.hpp"

namespace negstream {

struct EngineConfig {
  double beta = 0.3;                 // potential-OOD threshold on the score
  ScoreConfig score;                 // tau, G, balancing factor
  InversionConfig inversion;
  std::size_t static_count = 2000;   // L, mined negative labels
  std::size_t bank_capacity = 2000;  // M, bank and buffer capacity
  double rho = 0.5;                  // buffer selection ratio for Flash
  std::size_t batch_size = 256;
  bool use_buffer = true;            // false drops displaced entries instead
  bool repermute_each_batch = false; // extra regrouping at batch boundaries
};

struct StreamSample {
  std::string id;
  EmbeddingVector feature;
  Label truth;
  std::size_t phase = 0;  // temporal-shift phase this sample belongs to
};

struct StreamResult {
  std::string sample_id;
  double initial_score;
  double final_score;  // recorded after any bank update for this sample
  bool potential_ood;
  std::size_t bank_size_after;
  Label truth;
};

struct EngineState {
  EngineConfig config;  // c_scale resolved to a concrete value
  IdModel model;
  StaticNegatives statics;
  NegativeBank bank;
  BufferState buffer;
  // Scoring view: static features first, then the bank snapshot in
  // insertion order. The grouping permutes indices into this list.
  std::vector<EmbeddingVector> negative_features;
  Grouping grouping;
  Rng rng;
  std::uint64_t next_insertion_index = 0;
  std::uint64_t samples_seen = 0;
};

// Builds the ID model, mines the static negatives, starts with an empty bank
// and buffer, and draws the initial grouping.
EngineState setup(const std::vector<std::vector<EmbeddingVector>>& id_shots,
                  std::vector<EmbeddingVector> class_text_features,
                  std::vector<std::string> class_names,
                  const std::vector<VocabularyEntry>& vocabulary,
                  EngineConfig cfg, Rng rng);

// Rebuilds the scoring view and draws a fresh permutation from the engine
// RNG. Called whenever the grouped set changes; exposed for checkpoint
// validation and tests.
void refresh_grouping(EngineState& state);

// One pipeline pass for a single sample. Inversion failures downgrade to
// "no candidate"; the sample is still scored.
StreamResult process(EngineState& state, const TextEncoder& encoder,
                     const StreamSample& sample);

// Processes samples strictly in stream order.
std::vector<StreamResult> run_stream(EngineState& state,
                                     const TextEncoder& encoder,
                                     std::span<const StreamSample> stream);

}  // namespace negstream
