#include "negstream/engine.hpp"

namespace negstream {

namespace {

void validate_config(const EngineConfig& cfg) {
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) {
    throw Error(ErrorCode::invalid_config, "beta must lie in [0, 1]");
  }
  if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) {
    throw Error(ErrorCode::invalid_rho, "rho must lie in [0, 1]");
  }
  if (cfg.static_count == 0) {
    throw Error(ErrorCode::invalid_config, "static_count must be >= 1");
  }
  if (cfg.bank_capacity == 0) {
    throw Error(ErrorCode::invalid_config, "bank_capacity must be >= 1");
  }
  if (!(cfg.score.tau > 0.0)) {
    throw Error(ErrorCode::invalid_config, "tau must be positive");
  }
}

}  // namespace

EngineState setup(const std::vector<std::vector<EmbeddingVector>>& id_shots,
                  std::vector<EmbeddingVector> class_text_features,
                  std::vector<std::string> class_names,
                  const std::vector<VocabularyEntry>& vocabulary,
                  EngineConfig cfg, Rng rng) {
  validate_config(cfg);
  IdModel model = build_id_model(std::move(class_names),
                                 std::move(class_text_features), id_shots);
  cfg.score.c_scale = cfg.score.effective_c_scale(model.class_count());
  StaticNegatives statics = mine_negatives(vocabulary, model, cfg.static_count);

  EngineState state{
      .config = cfg,
      .model = std::move(model),
      .statics = std::move(statics),
      .bank = NegativeBank{.entries = {}, .capacity = cfg.bank_capacity},
      .buffer = BufferState{.entries = {},
                            .capacity = cfg.bank_capacity,
                            .rho = cfg.rho},
      .negative_features = {},
      .grouping = {},
      .rng = rng,
      .next_insertion_index = 0,
      .samples_seen = 0,
  };
  refresh_grouping(state);
  return state;
}

void refresh_grouping(EngineState& state) {
  state.negative_features = static_features(state.statics);
  for (auto& feature : snapshot_features(state.bank)) {
    state.negative_features.push_back(std::move(feature));
  }
  state.grouping = make_grouping(state.negative_features.size(),
                                 state.config.score.groups, state.rng);
}

StreamResult process(EngineState& state, const TextEncoder& encoder,
                     const StreamSample& sample) {
  const EngineConfig& cfg = state.config;
  double initial = group_score(sample.feature, state.model,
                               state.negative_features, state.grouping,
                               cfg.score);
  bool potential = initial < cfg.beta;

  if (potential) {
    bool accepted = false;
    try {
      InversionResult inverted =
          invert(sample.feature, encoder, state.model, cfg.inversion,
                 state.statics, state.rng);
      if (id_separated_criterion(inverted.feature, state.model)) {
        BankEntry candidate{
            .feature = inverted.feature,
            .delta = delta(inverted.feature, state.model),
            .origin = sample.id,
            .insertion_index = state.next_insertion_index++,
        };
        if (cfg.use_buffer) {
          accepted = update(state.bank, state.buffer, std::move(candidate),
                            state.rng);
        } else {
          accepted = update_without_buffer(state.bank, std::move(candidate));
        }
      }
    } catch (const Error& err) {
      // A degenerate optimization aborts the candidate, not the stream.
      if (err.code() != ErrorCode::non_finite_loss &&
          err.code() != ErrorCode::zero_vector) {
        throw;
      }
    }
    if (accepted) refresh_grouping(state);
  }

  double final_score = group_score(sample.feature, state.model,
                                   state.negative_features, state.grouping,
                                   cfg.score);
  state.samples_seen += 1;
  return StreamResult{
      .sample_id = sample.id,
      .initial_score = initial,
      .final_score = final_score,
      .potential_ood = potential,
      .bank_size_after = state.bank.size(),
      .truth = sample.truth,
  };
}

std::vector<StreamResult> run_stream(EngineState& state,
                                     const TextEncoder& encoder,
                                     std::span<const StreamSample> stream) {
  std::vector<StreamResult> results;
  results.reserve(stream.size());
  for (const auto& sample : stream) {
    if (state.config.repermute_each_batch && state.samples_seen > 0 &&
        state.samples_seen % state.config.batch_size == 0) {
      refresh_grouping(state);
    }
    results.push_back(process(state, encoder, sample));
  }
  return results;
}

}  // namespace negstream
