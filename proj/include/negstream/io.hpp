#pragma once

// File formats, the experiment configuration schema, engine checkpoints and
// result emission backing the command-line tool.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "negstream/engine.hpp"
#include "negstream/metrics.hpp"
#include "negstream/synthworld.hpp"

namespace negstream {

inline constexpr char kEmbeddingMagic[] = "NEGSTREAM-EMB-1";

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<EmbeddingVector> vectors;
};

// Binary layout: 16-byte magic block (the magic string, NUL padded), then
// u32 dimension, u32 count, u32 dtype tag (1 = f32), then count rows of
// exactly `dimension` little-endian 32-bit floats.
void write_embeddings_binary(const std::filesystem::path& path,
                             std::span<const EmbeddingVector> vectors);

// Text variant: one comma-separated row per vector with a leading identifier.
void write_embeddings_text(const std::filesystem::path& path,
                           const EmbeddingTable& table);

// Shared loader: sniffs the binary magic, otherwise parses text. Every row
// is checked to be unit norm within 1e-3 (32-bit storage tolerance) and then
// re-normalized.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

struct ShotsTable {
  std::vector<std::string> class_names;
  std::vector<std::vector<EmbeddingVector>> shots;
};

// Shot rows are "class_name,values..."; rows of the same class accumulate.
void write_shots(const std::filesystem::path& path, const ShotsTable& table);
ShotsTable load_shots(const std::filesystem::path& path);

// Vocabulary rows are "token_id,<k token values>,<d feature values>" after a
// header comment declaring k and d.
void write_vocabulary(const std::filesystem::path& path,
                      std::span<const VocabularyEntry> entries, std::size_t k,
                      std::size_t d);
std::vector<VocabularyEntry> load_vocabulary(const std::filesystem::path& path);

// Stream rows are "sample_id,truth,phase,values...".
void write_stream(const std::filesystem::path& path,
                  std::span<const StreamSample> stream);
std::vector<StreamSample> load_stream(const std::filesystem::path& path);

// Synthetic encoder parameters at full double precision.
void write_encoder(const std::filesystem::path& path,
                   const SyntheticEncoder& encoder);
SyntheticEncoder load_encoder(const std::filesystem::path& path);

// Engine checkpoint (JSON): bank, buffer, grouping, RNG state and counters.
// Restoring validates the target state against the stored geometry.
void write_checkpoint(const std::filesystem::path& path,
                      const EngineState& state);
void restore_checkpoint(EngineState& state, const std::filesystem::path& path);

enum class OutputFormat { csv, json_lines };

const char* format_name(OutputFormat format);
OutputFormat parse_format(const std::string& text);

enum class WorldSource { spec, files };

struct ExperimentConfig {
  std::uint64_t seed = 1;
  OutputFormat format = OutputFormat::csv;
  std::string output_dir = "out";

  WorldSource world_source = WorldSource::spec;
  WorldSpec world;
  std::string shots_file;
  std::string class_text_file;
  std::string vocab_file;
  std::string encoder_file;
  std::string stream_file;

  // Experiment files default to desk scale; the library's full-scale
  // defaults (L = M = 2000) stay available by setting them explicitly.
  EngineConfig engine = [] {
    EngineConfig e;
    e.static_count = 50;
    e.bank_capacity = 50;
    return e;
  }();
  StreamPlan plan;
  // Optional ID:OOD count pairs; when non-empty, run-stream executes one
  // fresh run per ratio and the report carries one row per ratio.
  std::vector<std::pair<std::size_t, std::size_t>> ratio_sweep;
};

// Flat "key = value" lines with '#' comments. Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

void write_results(const std::filesystem::path& path,
                   std::span<const StreamResult> results, OutputFormat format);
void write_report(const std::filesystem::path& path,
                  const MetricReport& report, OutputFormat format);
void write_labelled_reports(
    const std::filesystem::path& path,
    std::span<const std::pair<std::string, MetricReport>> reports,
    OutputFormat format);
void write_negatives(const std::filesystem::path& path,
                     const StaticNegatives& negatives, OutputFormat format);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

// World loaded through the file-based route, shaped for engine::setup.
struct LoadedWorld {
  ShotsTable shots;
  std::vector<EmbeddingVector> class_text_features;
  std::vector<VocabularyEntry> vocabulary;
  SyntheticEncoder encoder;
  std::vector<StreamSample> stream;
};
LoadedWorld load_world_files(const ExperimentConfig& config);

}  // namespace negstream
