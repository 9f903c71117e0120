#include <doctest.h>

#include <algorithm>
#include <map>

#include "negstream/engine.hpp"
#include "negstream/synthworld.hpp"
#include "test_support.hpp"

using namespace negstream;

namespace {

WorldSpec toy_spec() {
  WorldSpec spec;
  spec.d = 32;
  spec.k = 32;
  spec.classes = 3;
  spec.ood_clusters = 2;
  spec.angular_margin = 1.5;
  spec.noise_kappa = 300.0;
  spec.hard_id_fraction = 0.0;
  spec.vocab_size = 100;
  spec.anchor_fraction = 0.1;
  spec.shots_per_class = 4;
  spec.id_samples = 60;
  spec.ood_samples = 60;
  spec.seed = 21;
  return spec;
}

EngineConfig toy_config() {
  EngineConfig cfg;
  cfg.static_count = 10;
  cfg.bank_capacity = 5;
  cfg.score.groups = 5;
  return cfg;
}

EngineState make_state(const World& world, const EngineConfig& cfg,
                       std::uint64_t seed = 7) {
  return setup(world.id_shots, world.class_text_features, world.class_names,
               world.vocabulary, cfg, Rng(seed));
}

}  // namespace

TEST_CASE("setup produces the initial state") {
  World world = generate_world(toy_spec());
  EngineState state = make_state(world, toy_config());
  CHECK(state.statics.size() == 10);
  CHECK(state.bank.size() == 0);
  CHECK(state.buffer.size() == 0);
  CHECK(state.negative_features.size() == 10);
  CHECK(state.grouping.size() == 10);
  CHECK(state.grouping.group_count() == 5);
  // c_scale resolves to the class count.
  CHECK(state.config.score.c_scale == doctest::Approx(3.0));
}

TEST_CASE("setup propagates mining failures") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.static_count = 1000;  // more than the vocabulary holds
  try {
    make_state(world, cfg);
    FAIL("expected VocabularyTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::vocabulary_too_small);
  }
}

TEST_CASE("setup is deterministic given the seed") {
  World world = generate_world(toy_spec());
  EngineState a = make_state(world, toy_config(), 9);
  EngineState b = make_state(world, toy_config(), 9);
  CHECK(a.grouping.permutation == b.grouping.permutation);
  CHECK(a.rng.state() == b.rng.state());
  for (std::size_t i = 0; i < a.statics.size(); ++i) {
    CHECK(a.statics.entries[i].token_id == b.statics.entries[i].token_id);
  }
}

TEST_CASE("beta zero disables gating entirely") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.beta = 0.0;
  EngineState state = make_state(world, cfg);

  StreamPlan plan;
  plan.id_count = 30;
  plan.ood_count = 30;
  Rng stream_rng(3);
  auto stream = build_stream(plan, world.pools, stream_rng);
  auto results = run_stream(state, world.encoder, stream);

  CHECK(state.bank.size() == 0);
  for (const auto& r : results) {
    CHECK_FALSE(r.potential_ood);
    CHECK(r.final_score == r.initial_score);
    CHECK(r.bank_size_after == 0);
  }
}

TEST_CASE("a sample above beta never touches the bank") {
  World world = generate_world(toy_spec());
  EngineState state = make_state(world, toy_config());
  // A clean ID sample scores essentially 1 in this separated world.
  StreamSample sample = world.pools.id_pool[0];
  StreamResult result = process(state, world.encoder, sample);
  CHECK_FALSE(result.potential_ood);
  CHECK(result.final_score == result.initial_score);
  CHECK(state.bank.size() == 0);
  CHECK(state.buffer.size() == 0);
}

TEST_CASE("an accepted candidate grows the bank below capacity") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.beta = 0.9;  // widen the gate so the OOD sample is taken
  EngineState state = make_state(world, cfg);

  StreamSample sample = world.pools.ood_pools[0][0];
  StreamResult result = process(state, world.encoder, sample);
  CHECK(result.potential_ood);
  CHECK(result.bank_size_after == 1);
  CHECK(state.bank.entries[0].origin == sample.id);
  // Grouping was refreshed to cover statics plus the bank.
  CHECK(state.grouping.size() == 11);
}

TEST_CASE("empty stream gives empty results") {
  World world = generate_world(toy_spec());
  EngineState state = make_state(world, toy_config());
  auto results = run_stream(state, world.encoder, {});
  CHECK(results.empty());
}

TEST_CASE("an all-ID stream keeps the bank near-empty") {
  World world = generate_world(toy_spec());
  EngineState state = make_state(world, toy_config());
  StreamPlan plan;
  plan.id_count = 60;
  plan.ood_count = 0;
  Rng stream_rng(5);
  auto stream = build_stream(plan, world.pools, stream_rng);
  run_stream(state, world.encoder, stream);
  CHECK(state.bank.size() <= 2);
}

TEST_CASE("replaying the stream reproduces every output") {
  World world = generate_world(toy_spec());
  StreamPlan plan;
  plan.id_count = 25;
  plan.ood_count = 25;
  Rng stream_rng(6);
  auto stream = build_stream(plan, world.pools, stream_rng);

  EngineState s1 = make_state(world, toy_config(), 13);
  EngineState s2 = make_state(world, toy_config(), 13);
  auto r1 = run_stream(s1, world.encoder, stream);
  auto r2 = run_stream(s2, world.encoder, stream);
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].initial_score == r2[i].initial_score);
    CHECK(r1[i].final_score == r2[i].final_score);
    CHECK(r1[i].potential_ood == r2[i].potential_ood);
    CHECK(r1[i].bank_size_after == r2[i].bank_size_after);
  }
  CHECK(s1.rng.state() == s2.rng.state());
}

TEST_CASE("non-potential samples leave all state untouched") {
  World world = generate_world(toy_spec());
  EngineState state = make_state(world, toy_config());
  StreamPlan plan;
  plan.id_count = 30;
  plan.ood_count = 30;
  Rng stream_rng(7);
  auto stream = build_stream(plan, world.pools, stream_rng);

  std::size_t bank_before = 0;
  for (const auto& sample : stream) {
    StreamResult r = process(state, world.encoder, sample);
    if (!r.potential_ood) {
      CHECK(state.bank.size() == bank_before);
    }
    bank_before = state.bank.size();
    CHECK(r.final_score > 0.0);
    CHECK(r.final_score <= 1.0);
  }
}

TEST_CASE("every bank origin was gated below beta") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.beta = 0.5;
  EngineState state = make_state(world, cfg);
  StreamPlan plan;
  plan.id_count = 40;
  plan.ood_count = 40;
  Rng stream_rng(8);
  auto stream = build_stream(plan, world.pools, stream_rng);
  auto results = run_stream(state, world.encoder, stream);

  std::map<std::string, double> initial_by_id;
  for (const auto& r : results) initial_by_id[r.sample_id] = r.initial_score;
  for (const auto& entry : state.bank.entries) {
    REQUIRE(initial_by_id.count(entry.origin) == 1);
    CHECK(initial_by_id[entry.origin] < cfg.beta);
  }
  for (const auto& entry : state.buffer.entries) {
    REQUIRE(initial_by_id.count(entry.origin) == 1);
    CHECK(initial_by_id[entry.origin] < cfg.beta);
  }
}

TEST_CASE("bank entries always satisfy the separation criterion post hoc") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.beta = 0.6;
  EngineState state = make_state(world, cfg);
  StreamPlan plan;
  plan.id_count = 40;
  plan.ood_count = 40;
  Rng stream_rng(9);
  auto stream = build_stream(plan, world.pools, stream_rng);
  run_stream(state, world.encoder, stream);

  REQUIRE(state.bank.size() > 0);
  for (const auto& entry : state.bank.entries) {
    CHECK(id_separated_criterion(entry.feature, state.model));
  }
}

TEST_CASE("disabling the buffer never queues displaced entries") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.beta = 0.9;
  cfg.bank_capacity = 2;
  cfg.use_buffer = false;
  EngineState state = make_state(world, cfg);
  StreamPlan plan;
  plan.id_count = 0;
  plan.ood_count = 40;
  Rng stream_rng(10);
  auto stream = build_stream(plan, world.pools, stream_rng);
  run_stream(state, world.encoder, stream);
  CHECK(state.bank.size() <= 2);
  CHECK(state.buffer.size() == 0);
}

TEST_CASE("with gating disabled the scores are order independent") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.beta = 0.0;

  StreamPlan plan;
  plan.id_count = 20;
  plan.ood_count = 20;
  Rng stream_rng(12);
  auto stream = build_stream(plan, world.pools, stream_rng);
  auto shuffled = stream;
  Rng shuffle_rng(99);
  shuffle_rng.shuffle(shuffled);

  EngineState s1 = make_state(world, cfg, 4);
  EngineState s2 = make_state(world, cfg, 4);
  auto r1 = run_stream(s1, world.encoder, stream);
  auto r2 = run_stream(s2, world.encoder, shuffled);

  std::map<std::string, double> by_id;
  for (const auto& r : r1) by_id[r.sample_id] = r.final_score;
  for (const auto& r : r2) {
    CHECK(by_id.at(r.sample_id) == r.final_score);
  }
}

TEST_CASE("per-batch re-permutation stays deterministic") {
  World world = generate_world(toy_spec());
  EngineConfig cfg = toy_config();
  cfg.repermute_each_batch = true;
  cfg.batch_size = 16;

  StreamPlan plan;
  plan.id_count = 30;
  plan.ood_count = 30;
  Rng stream_rng(13);
  auto stream = build_stream(plan, world.pools, stream_rng);

  EngineState s1 = make_state(world, cfg, 5);
  EngineState s2 = make_state(world, cfg, 5);
  auto r1 = run_stream(s1, world.encoder, stream);
  auto r2 = run_stream(s2, world.encoder, stream);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].final_score == r2[i].final_score);
  }

  // The batch boundary consumed extra permutation draws, so the engine RNG
  // advanced past the plain run's state.
  EngineState plain = make_state(world, toy_config(), 5);
  run_stream(plain, world.encoder, stream);
  CHECK(s1.rng.state() != plain.rng.state());
}

TEST_CASE("chained processing equals one continuous run") {
  // Process the first half, clone the mutable state into a fresh engine,
  // continue, and compare against the uninterrupted run.
  World world = generate_world(toy_spec());
  StreamPlan plan;
  plan.id_count = 30;
  plan.ood_count = 30;
  Rng stream_rng(11);
  auto stream = build_stream(plan, world.pools, stream_rng);
  std::vector<StreamSample> first(stream.begin(), stream.begin() + 30);
  std::vector<StreamSample> second(stream.begin() + 30, stream.end());

  EngineConfig cfg = toy_config();
  cfg.beta = 0.6;

  EngineState continuous = make_state(world, cfg, 17);
  auto full = run_stream(continuous, world.encoder, stream);

  EngineState part1 = make_state(world, cfg, 17);
  auto r1 = run_stream(part1, world.encoder, first);
  EngineState part2 = make_state(world, cfg, 17);
  part2.bank = part1.bank;
  part2.buffer = part1.buffer;
  part2.grouping = part1.grouping;
  part2.negative_features = part1.negative_features;
  part2.rng = part1.rng;
  part2.next_insertion_index = part1.next_insertion_index;
  part2.samples_seen = part1.samples_seen;
  auto r2 = run_stream(part2, world.encoder, second);

  REQUIRE(r1.size() + r2.size() == full.size());
  for (std::size_t i = 0; i < r2.size(); ++i) {
    CHECK(r2[i].final_score == full[30 + i].final_score);
  }
}
