// Command-line entry point: experiment orchestration over the negstream
// library. Subcommands: gen-world, mine-negatives, run-stream, grad-check,
// verify-theorem.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "negstream/engine.hpp"
#include "negstream/io.hpp"
#include "negstream/metrics.hpp"
#include "negstream/synthworld.hpp"
#include "negstream/theorem.hpp"

namespace {

using namespace negstream;
namespace fs = std::filesystem;

// Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 internal
// invariant violation.
int exit_code_for(const Error& err) {
  switch (err.code()) {
    case ErrorCode::io_failure:
      return 2;
    case ErrorCode::internal:
      return 3;
    default:
      return 1;
  }
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir;  // empty: use the config's `output`
  std::optional<std::string> format;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool config_required) {
  auto* config =
      cmd->add_option("--config", opts.config_path, "experiment config file");
  if (config_required) config->required();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--output", opts.output_dir,
                  "output directory (overrides the config's `output`)");
  cmd->add_option("--format", opts.format, "csv or json-lines");
}

ExperimentConfig resolve_config(const CommonOptions& opts) {
  ExperimentConfig cfg = opts.config_path.empty()
                             ? ExperimentConfig{}
                             : load_config(opts.config_path);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.world.seed = *opts.seed;
  }
  if (opts.format) cfg.format = parse_format(*opts.format);
  return cfg;
}

const char* extension(OutputFormat format) {
  return format == OutputFormat::csv ? "csv" : "jsonl";
}

std::string output_dir_for(const CommonOptions& opts,
                           const ExperimentConfig& cfg) {
  return opts.output_dir.empty() ? cfg.output_dir : opts.output_dir;
}

// Everything a run needs, whichever route the world came from.
struct WorldBundle {
  std::vector<std::string> class_names;
  std::vector<std::vector<EmbeddingVector>> shots;
  std::vector<EmbeddingVector> class_text;
  std::vector<VocabularyEntry> vocabulary;
  SyntheticEncoder encoder;
  std::vector<StreamSample> stream;
};

WorldBundle assemble_world(const ExperimentConfig& cfg, bool with_stream) {
  if (cfg.world_source == WorldSource::files) {
    LoadedWorld loaded = load_world_files(cfg);
    return WorldBundle{
        .class_names = std::move(loaded.shots.class_names),
        .shots = std::move(loaded.shots.shots),
        .class_text = std::move(loaded.class_text_features),
        .vocabulary = std::move(loaded.vocabulary),
        .encoder = std::move(loaded.encoder),
        .stream = std::move(loaded.stream),
    };
  }
  World world = generate_world(cfg.world);
  std::vector<StreamSample> stream;
  if (with_stream) {
    Rng stream_rng = Rng(cfg.seed).derive(100);
    stream = build_stream(cfg.plan, world.pools, stream_rng);
  }
  return WorldBundle{
      .class_names = std::move(world.class_names),
      .shots = std::move(world.id_shots),
      .class_text = std::move(world.class_text_features),
      .vocabulary = std::move(world.vocabulary),
      .encoder = std::move(world.encoder),
      .stream = std::move(stream),
  };
}

// Synthetic sample ids carry the true class ("id_c03_0007"); when present,
// report zero-shot top-1 accuracy over the ID samples as a convenience.
std::optional<double> zero_shot_accuracy(const EngineState& state,
                                         std::span<const StreamSample> stream) {
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  for (const auto& sample : stream) {
    if (sample.truth != Label::id) continue;
    std::size_t parsed = 0;
    if (std::sscanf(sample.id.c_str(), "id_c%zu_", &parsed) != 1 &&
        std::sscanf(sample.id.c_str(), "idh_c%zu_", &parsed) != 1) {
      continue;
    }
    std::vector<double> probs = zero_shot_probabilities(
        sample.feature, state.model, state.config.score.tau);
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[argmax]) argmax = i;
    }
    ++evaluated;
    if (argmax == parsed) ++correct;
  }
  if (evaluated == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(evaluated);
}

int cmd_gen_world(const CommonOptions& opts) {
  ExperimentConfig cfg = resolve_config(opts);
  World world = generate_world(cfg.world);
  Rng stream_rng = Rng(cfg.seed).derive(100);
  std::vector<StreamSample> stream =
      build_stream(cfg.plan, world.pools, stream_rng);

  fs::path dir(output_dir_for(opts, cfg));
  ShotsTable shots{world.class_names, world.id_shots};
  write_shots(dir / "shots.csv", shots);
  write_embeddings_text(dir / "class_text.csv",
                        EmbeddingTable{world.spec.d, world.class_names,
                                       world.class_text_features});
  write_vocabulary(dir / "vocab.csv", world.vocabulary, world.spec.k,
                   world.spec.d);
  write_encoder(dir / "encoder.txt", world.encoder);
  write_stream(dir / "stream.csv", stream);

  // A ready-to-run config pointing at the emitted files.
  ExperimentConfig echo = cfg;
  echo.world_source = WorldSource::files;
  echo.shots_file = (dir / "shots.csv").string();
  echo.class_text_file = (dir / "class_text.csv").string();
  echo.vocab_file = (dir / "vocab.csv").string();
  echo.encoder_file = (dir / "encoder.txt").string();
  echo.stream_file = (dir / "stream.csv").string();
  std::ofstream config_out(dir / "world_files.conf");
  config_out << serialize_config(echo);

  std::cout << "world written to " << dir.string() << " (" << stream.size()
            << " stream samples, " << world.vocabulary.size()
            << " vocabulary entries)\n";
  return 0;
}

int cmd_mine_negatives(const CommonOptions& opts) {
  ExperimentConfig cfg = resolve_config(opts);
  WorldBundle bundle = assemble_world(cfg, /*with_stream=*/false);
  IdModel model = build_id_model(bundle.class_names, bundle.class_text,
                                 bundle.shots);
  StaticNegatives negatives =
      mine_negatives(bundle.vocabulary, model, cfg.engine.static_count);

  fs::path out = fs::path(output_dir_for(opts, cfg)) /
                 (std::string("negatives.") + extension(cfg.format));
  write_negatives(out, negatives, cfg.format);
  std::cout << "mined " << negatives.size() << " negatives from "
            << bundle.vocabulary.size() << " vocabulary entries\n"
            << "distance range [" << format_double(negatives.distances.back())
            << ", " << format_double(negatives.distances.front()) << "]\n"
            << "report: " << out.string() << '\n';
  return 0;
}

// One fresh engine run per requested ID:OOD ratio over a shared world; the
// report carries one row per ratio.
int run_ratio_sweep(const ExperimentConfig& cfg, const fs::path& dir) {
  if (cfg.world_source != WorldSource::spec) {
    throw Error(ErrorCode::invalid_config,
                "a ratio sweep needs a generated world (world.source = spec)");
  }
  World world = generate_world(cfg.world);
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (std::size_t i = 0; i < cfg.ratio_sweep.size(); ++i) {
    auto [id_count, ood_count] = cfg.ratio_sweep[i];
    StreamPlan plan = cfg.plan;
    plan.id_count = id_count;
    plan.ood_count = ood_count;
    Rng stream_rng = Rng(cfg.seed).derive(100 + i);
    std::vector<StreamSample> stream =
        build_stream(plan, world.pools, stream_rng);
    EngineState state =
        setup(world.id_shots, world.class_text_features, world.class_names,
              world.vocabulary, cfg.engine, Rng(cfg.seed).derive(200));
    std::vector<StreamResult> results =
        run_stream(state, world.encoder, stream);

    std::string label =
        std::to_string(id_count) + "x" + std::to_string(ood_count);
    write_results(dir / ("results_" + label + "." + extension(cfg.format)),
                  results, cfg.format);
    MetricReport report = evaluate(results, stream);
    rows.emplace_back("ratio_" + std::to_string(id_count) + ":" +
                          std::to_string(ood_count),
                      report);
    std::cout << "ratio " << id_count << ":" << ood_count << " auroc "
              << format_double(report.auroc) << " fpr95 "
              << format_double(report.fpr95) << '\n';
  }
  fs::path report_path = dir / (std::string("report.") + extension(cfg.format));
  write_labelled_reports(report_path, rows, cfg.format);
  std::cout << "report: " << report_path.string() << '\n';
  return 0;
}

int cmd_run_stream(const CommonOptions& opts, bool no_dynamic,
                   const std::string& checkpoint_in,
                   const std::string& checkpoint_out) {
  ExperimentConfig cfg = resolve_config(opts);
  if (no_dynamic) cfg.engine.beta = 0.0;  // gating disabled, bank stays empty

  if (!cfg.ratio_sweep.empty()) {
    if (!checkpoint_in.empty() || !checkpoint_out.empty()) {
      throw Error(ErrorCode::invalid_config,
                  "checkpoints apply to single runs, not ratio sweeps");
    }
    return run_ratio_sweep(cfg, fs::path(output_dir_for(opts, cfg)));
  }

  WorldBundle bundle = assemble_world(cfg, /*with_stream=*/true);
  EngineState state =
      setup(bundle.shots, bundle.class_text, bundle.class_names,
            bundle.vocabulary, cfg.engine, Rng(cfg.seed).derive(200));
  if (!checkpoint_in.empty()) restore_checkpoint(state, checkpoint_in);

  std::vector<StreamResult> results =
      run_stream(state, bundle.encoder, bundle.stream);
  MetricReport report = evaluate(results, bundle.stream);

  fs::path dir(output_dir_for(opts, cfg));
  fs::path results_path =
      dir / (std::string("results.") + extension(cfg.format));
  fs::path report_path = dir / (std::string("report.") + extension(cfg.format));
  write_results(results_path, results, cfg.format);
  write_report(report_path, report, cfg.format);
  if (!checkpoint_out.empty()) write_checkpoint(checkpoint_out, state);

  // Share of bank entries learned from samples that were actually ID.
  std::size_t id_origins = 0;
  {
    std::map<std::string, Label> truth_by_id;
    for (const auto& sample : bundle.stream) {
      truth_by_id.emplace(sample.id, sample.truth);
    }
    for (const auto& entry : state.bank.entries) {
      auto it = truth_by_id.find(entry.origin);
      if (it != truth_by_id.end() && it->second == Label::id) ++id_origins;
    }
  }

  std::cout << "samples: " << results.size() << " (ID " << report.n_id
            << ", OOD " << report.n_ood << ")\n"
            << "auroc: " << format_double(report.auroc) << '\n'
            << "fpr95: " << format_double(report.fpr95) << '\n'
            << "bank: " << state.bank.size() << '/' << state.bank.capacity
            << ", buffer: " << state.buffer.size() << '/'
            << state.buffer.capacity << '\n';
  if (state.bank.size() > 0) {
    std::cout << "bank ID-origin fraction: "
              << format_double(static_cast<double>(id_origins) /
                               static_cast<double>(state.bank.size()))
              << '\n';
  }
  for (const auto& [phase, phase_report] : report.per_phase) {
    std::cout << "phase " << phase << ": auroc "
              << format_double(phase_report.auroc) << ", fpr95 "
              << format_double(phase_report.fpr95) << '\n';
  }
  if (auto accuracy = zero_shot_accuracy(state, bundle.stream)) {
    std::cout << "zero-shot accuracy (ID samples): "
              << format_double(*accuracy) << '\n';
  }
  std::cout << "results: " << results_path.string() << '\n';
  return 0;
}

int cmd_grad_check(std::size_t points, std::uint64_t seed, double lambda) {
  const std::size_t d = 24;
  const std::size_t k = 20;
  const double step = 1e-5;
  Rng rng(seed);
  SyntheticEncoder encoder(d, k, rng.derive(1).next_u64());

  // A small ID model so the separation term participates.
  std::vector<std::vector<EmbeddingVector>> shots(4);
  std::vector<EmbeddingVector> class_text;
  std::vector<std::string> names;
  Rng geo = rng.derive(2);
  for (std::size_t c = 0; c < shots.size(); ++c) {
    std::vector<double> raw(d);
    for (double& x : raw) x = geo.gaussian();
    EmbeddingVector mean = normalize(raw);
    shots[c].push_back(mean);
    class_text.push_back(mean);
    names.push_back("class_" + std::to_string(c));
  }
  IdModel model = build_id_model(names, class_text, shots);

  double worst = 0.0;
  Rng point_rng = rng.derive(3);
  for (std::size_t p = 0; p < points; ++p) {
    std::vector<double> z(k);
    for (double& x : z) x = 0.5 * point_rng.gaussian();
    std::vector<double> v_raw(d);
    for (double& x : v_raw) x = point_rng.gaussian();
    EmbeddingVector v = normalize(v_raw);

    std::vector<double> analytic =
        encoder.backward(z, loss_ours_feature_grad(v, model, lambda));

    std::vector<double> numeric(k);
    for (std::size_t j = 0; j < k; ++j) {
      double saved = z[j];
      z[j] = saved + step;
      double up = loss_ours(encoder.encode(z), v, model, lambda);
      z[j] = saved - step;
      double down = loss_ours(encoder.encode(z), v, model, lambda);
      z[j] = saved;
      numeric[j] = (up - down) / (2.0 * step);
    }

    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
      scale += numeric[j] * numeric[j];
    }
    double rel = std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
    worst = std::max(worst, rel);
  }

  bool pass = worst < 1e-4;
  std::cout << (pass ? "PASS" : "FAIL") << ": max relative gradient error "
            << format_double(worst) << " over " << points << " points\n";
  return pass ? 0 : 1;
}

int cmd_verify_theorem(std::size_t trials,
                       const std::vector<std::size_t>& group_counts,
                       std::uint64_t seed) {
  std::size_t per_group =
      (trials + group_counts.size() - 1) / group_counts.size();
  bool all_ok = true;
  Rng rng(seed);
  for (std::size_t g : group_counts) {
    Rng trial_rng = rng.derive(g);
    TheoremReport report = verify_theorem(per_group, g, trial_rng);
    std::cout << "G=" << g << ": " << report.transfer_checks
              << " transfer checks, " << report.majorized_pairs
              << " majorized pairs, " << report.violations.size()
              << " violations\n";
    for (std::size_t i = 0; i < report.violations.size() && i < 5; ++i) {
      const auto& v = report.violations[i];
      std::cout << "  violation: P=" << format_double(v.p) << " before=(";
      for (std::size_t j = 0; j < v.before.size(); ++j) {
        std::cout << (j ? "," : "") << format_double(v.before[j]);
      }
      std::cout << ") after=(";
      for (std::size_t j = 0; j < v.after.size(); ++j) {
        std::cout << (j ? "," : "") << format_double(v.after[j]);
      }
      std::cout << ") scores " << format_double(v.score_before) << " -> "
                << format_double(v.score_after) << '\n';
    }
    all_ok = all_ok && report.ok();
  }
  std::cout << (all_ok ? "PASS" : "FAIL")
            << ": balanced grouping never increased the mean score\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"negstream: streaming OOD detection with learned negative semantics"};
  app.require_subcommand(1);

  CommonOptions gen_opts;
  auto* gen = app.add_subcommand("gen-world",
                                 "generate a synthetic world and stream files");
  add_common(gen, gen_opts, /*config_required=*/false);

  CommonOptions mine_opts;
  auto* mine = app.add_subcommand("mine-negatives",
                                  "mine static negatives and write the report");
  add_common(mine, mine_opts, /*config_required=*/false);

  CommonOptions run_opts;
  bool no_dynamic = false;
  std::string checkpoint_in;
  std::string checkpoint_out;
  auto* run = app.add_subcommand("run-stream",
                                 "run the streaming pipeline and emit metrics");
  add_common(run, run_opts, /*config_required=*/false);
  run->add_flag("--no-dynamic", no_dynamic,
                "disable test-time expansion (static baseline)");
  run->add_option("--checkpoint-in", checkpoint_in,
                  "restore engine state before the run");
  run->add_option("--checkpoint-out", checkpoint_out,
                  "write engine state after the run");

  std::size_t grad_points = 100;
  std::uint64_t grad_seed = 7;
  double grad_lambda = 0.3;
  auto* grad = app.add_subcommand("grad-check",
                                  "compare analytic and numeric gradients");
  grad->add_option("--points", grad_points, "number of random points");
  grad->add_option("--seed", grad_seed, "rng seed");
  grad->add_option("--lambda", grad_lambda, "regularization weight");

  std::size_t theorem_trials = 100000;
  std::vector<std::size_t> theorem_groups = {2, 3, 5, 8, 10};
  std::uint64_t theorem_seed = 11;
  auto* theorem = app.add_subcommand("verify-theorem",
                                     "randomized balanced-grouping check");
  theorem->add_option("--trials", theorem_trials, "total trials");
  theorem->add_option("--groups", theorem_groups, "group counts to test");
  theorem->add_option("--seed", theorem_seed, "rng seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_world(gen_opts);
    if (mine->parsed()) return cmd_mine_negatives(mine_opts);
    if (run->parsed()) {
      return cmd_run_stream(run_opts, no_dynamic, checkpoint_in,
                            checkpoint_out);
    }
    if (grad->parsed()) {
      return cmd_grad_check(grad_points, grad_seed, grad_lambda);
    }
    if (theorem->parsed()) {
      return cmd_verify_theorem(theorem_trials, theorem_groups, theorem_seed);
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << '\n';
    return 3;
  }
  return 0;
}
