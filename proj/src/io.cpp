#include "negstream/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace negstream {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::size_t begin = 0;
  while (true) {
    std::size_t pos = line.find(sep, begin);
    if (pos == std::string::npos) {
      parts.push_back(line.substr(begin));
      break;
    }
    parts.push_back(line.substr(begin, pos - begin));
    begin = pos + 1;
  }
  return parts;
}

double parse_double_field(const std::string& text, const std::string& where) {
  char* end = nullptr;
  double value = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || !std::isfinite(value)) {
    throw Error(ErrorCode::invalid_config,
                where + ": cannot parse number '" + text + "'");
  }
  return value;
}

std::uint64_t parse_u64_field(const std::string& text,
                              const std::string& where) {
  char* end = nullptr;
  unsigned long long value = std::strtoull(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0') {
    throw Error(ErrorCode::invalid_config,
                where + ": cannot parse integer '" + text + "'");
  }
  return static_cast<std::uint64_t>(value);
}

bool parse_bool_field(const std::string& text, const std::string& where) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(ErrorCode::invalid_config,
              where + ": expected true/false, got '" + text + "'");
}

void put_u32(std::ofstream& out, std::uint32_t value) {
  unsigned char bytes[4] = {
      static_cast<unsigned char>(value & 0xFF),
      static_cast<unsigned char>((value >> 8) & 0xFF),
      static_cast<unsigned char>((value >> 16) & 0xFF),
      static_cast<unsigned char>((value >> 24) & 0xFF),
  };
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(const std::string& data, std::size_t offset) {
  const auto* bytes =
      reinterpret_cast<const unsigned char*>(data.data() + offset);
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

// Rows arrive from 32-bit or textual storage; verify they are still unit
// vectors before re-normalizing.
EmbeddingVector adopt_row(const std::vector<double>& values,
                          const std::string& where) {
  double sum_sq = 0.0;
  for (double x : values) sum_sq += x * x;
  if (std::abs(std::sqrt(sum_sq) - 1.0) > 1e-3) {
    throw Error(ErrorCode::invalid_config,
                where + ": row is not unit norm within 1e-3");
  }
  return normalize(values);
}

struct TextRow {
  std::string id;
  std::vector<double> values;
};

std::vector<TextRow> parse_text_rows(const std::string& text,
                                     const std::string& where) {
  std::vector<TextRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string cleaned = trim(line);
    if (cleaned.empty() || cleaned[0] == '#') continue;
    std::vector<std::string> parts = split(cleaned, ',');
    if (parts.size() < 2) {
      throw Error(ErrorCode::invalid_config,
                  where + ": line " + std::to_string(line_no) +
                      " needs an identifier and values");
    }
    TextRow row;
    row.id = trim(parts[0]);
    row.values.reserve(parts.size() - 1);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      row.values.push_back(parse_double_field(
          trim(parts[i]), where + ": line " + std::to_string(line_no)));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_row(std::ofstream& out, const std::string& id,
               std::span<const double> values) {
  out << id;
  for (double v : values) out << ',' << format_double(v);
  out << '\n';
}

json entry_to_json(const BankEntry& entry) {
  return json{{"feature", entry.feature.values()},
              {"delta", entry.delta},
              {"origin", entry.origin},
              {"insertion_index", entry.insertion_index}};
}

BankEntry entry_from_json(const json& j) {
  std::vector<double> values = j.at("feature").get<std::vector<double>>();
  return BankEntry{
      .feature = from_unit(std::move(values), 1e-9),
      .delta = j.at("delta").get<double>(),
      .origin = j.at("origin").get<std::string>(),
      .insertion_index = j.at("insertion_index").get<std::uint64_t>(),
  };
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  return buf;
}

void write_embeddings_binary(const std::filesystem::path& path,
                             std::span<const EmbeddingVector> vectors) {
  std::ofstream out = open_for_write(path);
  char magic[16] = {};
  std::memcpy(magic, kEmbeddingMagic, std::strlen(kEmbeddingMagic));
  out.write(magic, sizeof(magic));
  std::uint32_t dim = vectors.empty() ? 0 : static_cast<std::uint32_t>(vectors[0].dim());
  put_u32(out, dim);
  put_u32(out, static_cast<std::uint32_t>(vectors.size()));
  put_u32(out, 1);  // dtype: f32
  for (const auto& vec : vectors) {
    for (double v : vec.values()) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      put_u32(out, bits);
    }
  }
}

void write_embeddings_text(const std::filesystem::path& path,
                           const EmbeddingTable& table) {
  if (table.ids.size() != table.vectors.size()) {
    throw Error(ErrorCode::invalid_config, "ids and vectors must align");
  }
  std::ofstream out = open_for_write(path);
  for (std::size_t i = 0; i < table.vectors.size(); ++i) {
    write_row(out, table.ids[i], table.vectors[i].span());
  }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::string data = read_file(path);
  EmbeddingTable table;

  std::size_t magic_len = std::strlen(kEmbeddingMagic);
  if (data.size() >= 16 &&
      std::memcmp(data.data(), kEmbeddingMagic, magic_len) == 0 &&
      data[magic_len] == '\0') {
    if (data.size() < 28) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": truncated binary header");
    }
    std::uint32_t dim = get_u32(data, 16);
    std::uint32_t count = get_u32(data, 20);
    std::uint32_t dtype = get_u32(data, 24);
    if (dtype != 1) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": unsupported dtype tag");
    }
    std::size_t expected = 28 + static_cast<std::size_t>(dim) * count * 4;
    if (data.size() != expected) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": binary payload size mismatch");
    }
    table.dim = dim;
    std::size_t offset = 28;
    for (std::uint32_t row = 0; row < count; ++row) {
      std::vector<double> values(dim);
      for (std::uint32_t i = 0; i < dim; ++i) {
        std::uint32_t bits = get_u32(data, offset);
        offset += 4;
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        values[i] = static_cast<double>(f);
      }
      char id[16];
      std::snprintf(id, sizeof(id), "row_%06u", row);
      table.ids.emplace_back(id);
      table.vectors.push_back(adopt_row(values, path.string()));
    }
    return table;
  }

  for (auto& row : parse_text_rows(data, path.string())) {
    if (table.dim == 0) {
      table.dim = row.values.size();
    } else if (row.values.size() != table.dim) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": inconsistent row dimension");
    }
    table.ids.push_back(std::move(row.id));
    table.vectors.push_back(adopt_row(row.values, path.string()));
  }
  return table;
}

void write_shots(const std::filesystem::path& path, const ShotsTable& table) {
  if (table.class_names.size() != table.shots.size()) {
    throw Error(ErrorCode::invalid_config, "class names and shots must align");
  }
  std::ofstream out = open_for_write(path);
  for (std::size_t c = 0; c < table.shots.size(); ++c) {
    for (const auto& shot : table.shots[c]) {
      write_row(out, table.class_names[c], shot.span());
    }
  }
}

ShotsTable load_shots(const std::filesystem::path& path) {
  ShotsTable table;
  std::size_t dim = 0;
  for (auto& row : parse_text_rows(read_file(path), path.string())) {
    if (dim == 0) {
      dim = row.values.size();
    } else if (row.values.size() != dim) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": inconsistent row dimension");
    }
    std::size_t c = 0;
    for (; c < table.class_names.size(); ++c) {
      if (table.class_names[c] == row.id) break;
    }
    if (c == table.class_names.size()) {
      table.class_names.push_back(row.id);
      table.shots.emplace_back();
    }
    table.shots[c].push_back(adopt_row(row.values, path.string()));
  }
  return table;
}

void write_vocabulary(const std::filesystem::path& path,
                      std::span<const VocabularyEntry> entries, std::size_t k,
                      std::size_t d) {
  std::ofstream out = open_for_write(path);
  out << "# negstream-vocab k=" << k << " d=" << d << '\n';
  for (const auto& entry : entries) {
    if (entry.token_embedding.size() != k || entry.text_feature.dim() != d) {
      throw Error(ErrorCode::invalid_config,
                  "vocabulary entry dimensions do not match the header");
    }
    out << entry.token_id;
    for (double v : entry.token_embedding) out << ',' << format_double(v);
    for (double v : entry.text_feature.values()) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<VocabularyEntry> load_vocabulary(
    const std::filesystem::path& path) {
  std::string data = read_file(path);
  std::istringstream in(data);
  std::string header;
  std::getline(in, header);
  std::size_t k = 0;
  std::size_t d = 0;
  if (std::sscanf(header.c_str(), "# negstream-vocab k=%zu d=%zu", &k, &d) !=
          2 ||
      k == 0 || d == 0) {
    throw Error(ErrorCode::invalid_config,
                path.string() + ": missing vocabulary header");
  }
  std::vector<VocabularyEntry> entries;
  std::string rest((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  for (auto& row : parse_text_rows(rest, path.string())) {
    if (row.values.size() != k + d) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": vocabulary row has wrong arity");
    }
    std::vector<double> token(row.values.begin(),
                              row.values.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<double> feature(row.values.begin() + static_cast<std::ptrdiff_t>(k),
                                row.values.end());
    entries.push_back(VocabularyEntry{
        std::move(row.id), std::move(token),
        adopt_row(feature, path.string())});
  }
  return entries;
}

void write_stream(const std::filesystem::path& path,
                  std::span<const StreamSample> stream) {
  std::ofstream out = open_for_write(path);
  for (const auto& sample : stream) {
    out << sample.id << ',' << label_name(sample.truth) << ',' << sample.phase;
    for (double v : sample.feature.values()) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<StreamSample> load_stream(const std::filesystem::path& path) {
  std::vector<StreamSample> stream;
  std::size_t dim = 0;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string cleaned = trim(line);
    if (cleaned.empty() || cleaned[0] == '#') continue;
    std::vector<std::string> parts = split(cleaned, ',');
    std::string where = path.string() + ": line " + std::to_string(line_no);
    if (parts.size() < 4) {
      throw Error(ErrorCode::invalid_config,
                  where + " needs id, truth, phase and values");
    }
    std::vector<double> values;
    values.reserve(parts.size() - 3);
    for (std::size_t i = 3; i < parts.size(); ++i) {
      values.push_back(parse_double_field(trim(parts[i]), where));
    }
    if (dim == 0) {
      dim = values.size();
    } else if (values.size() != dim) {
      throw Error(ErrorCode::invalid_config,
                  where + ": inconsistent row dimension");
    }
    stream.push_back(StreamSample{
        trim(parts[0]), adopt_row(values, where),
        parse_label(trim(parts[1])),
        static_cast<std::size_t>(parse_u64_field(trim(parts[2]), where))});
  }
  return stream;
}

void write_encoder(const std::filesystem::path& path,
                   const SyntheticEncoder& encoder) {
  std::ofstream out = open_for_write(path);
  std::size_t d = encoder.feature_dim();
  std::size_t k = encoder.token_dim();
  out << "# negstream-encoder d=" << d << " k=" << k << '\n';
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (j) out << ',';
      out << format_double(encoder.projection()[i * k + j]);
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (i) out << ',';
    out << format_double(encoder.prefix_offset()[i]);
  }
  out << '\n';
}

SyntheticEncoder load_encoder(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  std::size_t d = 0;
  std::size_t k = 0;
  if (std::sscanf(header.c_str(), "# negstream-encoder d=%zu k=%zu", &d, &k) !=
          2 ||
      d == 0 || k == 0) {
    throw Error(ErrorCode::invalid_config,
                path.string() + ": missing encoder header");
  }
  std::vector<double> projection;
  projection.reserve(d * k);
  std::vector<double> offset;
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::string cleaned = trim(line);
    if (cleaned.empty() || cleaned[0] == '#') continue;
    std::vector<std::string> parts = split(cleaned, ',');
    std::vector<double> values;
    values.reserve(parts.size());
    for (const auto& part : parts) {
      values.push_back(parse_double_field(trim(part), path.string()));
    }
    if (rows < d) {
      if (values.size() != k) {
        throw Error(ErrorCode::invalid_config,
                    path.string() + ": projection row has wrong arity");
      }
      projection.insert(projection.end(), values.begin(), values.end());
    } else {
      if (values.size() != d) {
        throw Error(ErrorCode::invalid_config,
                    path.string() + ": prefix offset has wrong arity");
      }
      offset = std::move(values);
    }
    ++rows;
  }
  if (rows != d + 1) {
    throw Error(ErrorCode::invalid_config,
                path.string() + ": expected " + std::to_string(d + 1) +
                    " parameter rows");
  }
  return SyntheticEncoder(d, k, std::move(projection), std::move(offset));
}

void write_checkpoint(const std::filesystem::path& path,
                      const EngineState& state) {
  json j;
  j["format"] = "negstream-checkpoint-1";
  j["dim"] = state.model.dim();
  j["classes"] = state.model.class_count();
  j["static_count"] = state.statics.size();
  j["bank"] = {{"capacity", state.bank.capacity}, {"entries", json::array()}};
  for (const auto& entry : state.bank.entries) {
    j["bank"]["entries"].push_back(entry_to_json(entry));
  }
  j["buffer"] = {{"capacity", state.buffer.capacity},
                 {"rho", state.buffer.rho},
                 {"entries", json::array()}};
  for (const auto& entry : state.buffer.entries) {
    j["buffer"]["entries"].push_back(entry_to_json(entry));
  }
  j["grouping"] = {{"permutation", state.grouping.permutation},
                   {"boundaries", json::array()}};
  for (const auto& [begin, end] : state.grouping.boundaries) {
    j["grouping"]["boundaries"].push_back(json::array({begin, end}));
  }
  j["rng"] = {{"seed", state.rng.seed()}, {"state", state.rng.state()}};
  j["next_insertion_index"] = state.next_insertion_index;
  j["samples_seen"] = state.samples_seen;

  std::ofstream out = open_for_write(path);
  out << j.dump(2) << '\n';
}

void restore_checkpoint(EngineState& state,
                        const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config,
                path.string() + ": checkpoint parse failed: " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "negstream-checkpoint-1") {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": unknown checkpoint format");
    }
    if (j.at("dim").get<std::size_t>() != state.model.dim() ||
        j.at("classes").get<std::size_t>() != state.model.class_count() ||
        j.at("static_count").get<std::size_t>() != state.statics.size()) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": checkpoint does not match this world");
    }
    if (j.at("bank").at("capacity").get<std::size_t>() !=
            state.config.bank_capacity ||
        j.at("buffer").at("capacity").get<std::size_t>() !=
            state.config.bank_capacity) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": checkpoint capacity mismatch");
    }

    state.bank.entries.clear();
    for (const auto& entry : j.at("bank").at("entries")) {
      state.bank.entries.push_back(entry_from_json(entry));
    }
    state.buffer.entries.clear();
    state.buffer.rho = j.at("buffer").at("rho").get<double>();
    for (const auto& entry : j.at("buffer").at("entries")) {
      state.buffer.entries.push_back(entry_from_json(entry));
    }
    if (state.bank.size() > state.bank.capacity ||
        state.buffer.size() > state.buffer.capacity) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": checkpoint exceeds capacities");
    }

    state.negative_features = static_features(state.statics);
    for (auto& feature : snapshot_features(state.bank)) {
      state.negative_features.push_back(std::move(feature));
    }

    Grouping grouping;
    grouping.permutation =
        j.at("grouping").at("permutation").get<std::vector<std::size_t>>();
    for (const auto& pair : j.at("grouping").at("boundaries")) {
      grouping.boundaries.emplace_back(pair.at(0).get<std::size_t>(),
                                       pair.at(1).get<std::size_t>());
    }
    if (grouping.permutation.size() != state.negative_features.size() ||
        grouping.group_count() != state.config.score.groups) {
      throw Error(ErrorCode::invalid_config,
                  path.string() + ": checkpoint grouping mismatch");
    }
    state.grouping = std::move(grouping);

    state.rng = Rng::restore(j.at("rng").at("seed").get<std::uint64_t>(),
                             j.at("rng").at("state").get<std::uint64_t>());
    state.next_insertion_index =
        j.at("next_insertion_index").get<std::uint64_t>();
    state.samples_seen = j.at("samples_seen").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config,
                path.string() + ": malformed checkpoint: " + e.what());
  }
}

const char* format_name(OutputFormat format) {
  return format == OutputFormat::csv ? "csv" : "json-lines";
}

OutputFormat parse_format(const std::string& text) {
  if (text == "csv") return OutputFormat::csv;
  if (text == "json-lines") return OutputFormat::json_lines;
  throw Error(ErrorCode::invalid_config, "unknown format: " + text);
}

namespace {

const char* world_source_name(WorldSource source) {
  return source == WorldSource::spec ? "spec" : "files";
}

WorldSource parse_world_source(const std::string& text) {
  if (text == "spec") return WorldSource::spec;
  if (text == "files") return WorldSource::files;
  throw Error(ErrorCode::invalid_config, "unknown world source: " + text);
}

const char* init_name(InitStrategy init) {
  return init == InitStrategy::random ? "random" : "vocabulary-prior";
}

InitStrategy parse_init(const std::string& text) {
  if (text == "random") return InitStrategy::random;
  if (text == "vocabulary-prior") return InitStrategy::vocabulary_prior;
  throw Error(ErrorCode::invalid_config, "unknown init strategy: " + text);
}

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value, bool& world_seed_set) {
  auto size_field = [&](std::size_t& field) {
    field = static_cast<std::size_t>(parse_u64_field(value, key));
  };
  auto double_field = [&](double& field) {
    field = parse_double_field(value, key);
  };

  if (key == "seed") {
    cfg.seed = parse_u64_field(value, key);
  } else if (key == "format") {
    cfg.format = parse_format(value);
  } else if (key == "output") {
    cfg.output_dir = value;
  } else if (key == "world.source") {
    cfg.world_source = parse_world_source(value);
  } else if (key == "world.d") {
    size_field(cfg.world.d);
  } else if (key == "world.k") {
    size_field(cfg.world.k);
  } else if (key == "world.classes") {
    size_field(cfg.world.classes);
  } else if (key == "world.ood_clusters") {
    size_field(cfg.world.ood_clusters);
  } else if (key == "world.angular_margin") {
    double_field(cfg.world.angular_margin);
  } else if (key == "world.ood_anti_alignment") {
    double_field(cfg.world.ood_anti_alignment);
  } else if (key == "world.noise_kappa") {
    double_field(cfg.world.noise_kappa);
  } else if (key == "world.hard_id_fraction") {
    double_field(cfg.world.hard_id_fraction);
  } else if (key == "world.vocab_size") {
    size_field(cfg.world.vocab_size);
  } else if (key == "world.anchor_fraction") {
    double_field(cfg.world.anchor_fraction);
  } else if (key == "world.anchor_noise") {
    double_field(cfg.world.anchor_noise);
  } else if (key == "world.shots_per_class") {
    size_field(cfg.world.shots_per_class);
  } else if (key == "world.id_samples") {
    size_field(cfg.world.id_samples);
  } else if (key == "world.ood_samples") {
    size_field(cfg.world.ood_samples);
  } else if (key == "world.text_noise") {
    double_field(cfg.world.text_noise);
  } else if (key == "world.seed") {
    cfg.world.seed = parse_u64_field(value, key);
    world_seed_set = true;
  } else if (key == "world.shots_file") {
    cfg.shots_file = value;
  } else if (key == "world.class_text_file") {
    cfg.class_text_file = value;
  } else if (key == "world.vocab_file") {
    cfg.vocab_file = value;
  } else if (key == "world.encoder_file") {
    cfg.encoder_file = value;
  } else if (key == "world.stream_file") {
    cfg.stream_file = value;
  } else if (key == "engine.beta") {
    double_field(cfg.engine.beta);
  } else if (key == "engine.tau") {
    double_field(cfg.engine.score.tau);
  } else if (key == "engine.groups") {
    size_field(cfg.engine.score.groups);
  } else if (key == "engine.c_scale") {
    double_field(cfg.engine.score.c_scale);
  } else if (key == "engine.static_count") {
    size_field(cfg.engine.static_count);
  } else if (key == "engine.bank_capacity") {
    size_field(cfg.engine.bank_capacity);
  } else if (key == "engine.rho") {
    double_field(cfg.engine.rho);
  } else if (key == "engine.batch_size") {
    size_field(cfg.engine.batch_size);
  } else if (key == "engine.use_buffer") {
    cfg.engine.use_buffer = parse_bool_field(value, key);
  } else if (key == "engine.repermute_each_batch") {
    cfg.engine.repermute_each_batch = parse_bool_field(value, key);
  } else if (key == "engine.lambda") {
    double_field(cfg.engine.inversion.lambda);
  } else if (key == "engine.learning_rate") {
    double_field(cfg.engine.inversion.learning_rate);
  } else if (key == "engine.weight_decay") {
    double_field(cfg.engine.inversion.weight_decay);
  } else if (key == "engine.iterations") {
    size_field(cfg.engine.inversion.iterations);
  } else if (key == "engine.init") {
    cfg.engine.inversion.init = parse_init(value);
  } else if (key == "engine.sigma") {
    double_field(cfg.engine.inversion.sigma);
  } else if (key == "plan.ordering") {
    cfg.plan.ordering = parse_ordering(value);
  } else if (key == "plan.id_count") {
    size_field(cfg.plan.id_count);
  } else if (key == "plan.ood_count") {
    size_field(cfg.plan.ood_count);
  } else if (key == "plan.phases") {
    size_field(cfg.plan.phases);
  } else if (key == "plan.ratio_sweep") {
    cfg.ratio_sweep.clear();
    for (const std::string& part : split(value, ',')) {
      std::vector<std::string> pair = split(trim(part), ':');
      if (pair.size() != 2) {
        throw Error(ErrorCode::invalid_config,
                    key + ": expected id:ood pairs, got '" + part + "'");
      }
      cfg.ratio_sweep.emplace_back(
          static_cast<std::size_t>(parse_u64_field(trim(pair[0]), key)),
          static_cast<std::size_t>(parse_u64_field(trim(pair[1]), key)));
    }
  } else {
    throw Error(ErrorCode::invalid_config, "unknown config key: " + key);
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  bool world_seed_set = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string cleaned = trim(line);
    if (cleaned.empty()) continue;
    std::size_t eq = cleaned.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::invalid_config,
                  "line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_key(cfg, trim(cleaned.substr(0, eq)), trim(cleaned.substr(eq + 1)),
              world_seed_set);
  }
  if (!world_seed_set) cfg.world.seed = cfg.seed;
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << '\n';
  out << "format = " << format_name(cfg.format) << '\n';
  out << "output = " << cfg.output_dir << '\n';
  out << "world.source = " << world_source_name(cfg.world_source) << '\n';
  out << "world.d = " << cfg.world.d << '\n';
  out << "world.k = " << cfg.world.k << '\n';
  out << "world.classes = " << cfg.world.classes << '\n';
  out << "world.ood_clusters = " << cfg.world.ood_clusters << '\n';
  out << "world.angular_margin = " << format_double(cfg.world.angular_margin)
      << '\n';
  out << "world.ood_anti_alignment = "
      << format_double(cfg.world.ood_anti_alignment) << '\n';
  out << "world.noise_kappa = " << format_double(cfg.world.noise_kappa) << '\n';
  out << "world.hard_id_fraction = "
      << format_double(cfg.world.hard_id_fraction) << '\n';
  out << "world.vocab_size = " << cfg.world.vocab_size << '\n';
  out << "world.anchor_fraction = " << format_double(cfg.world.anchor_fraction)
      << '\n';
  out << "world.anchor_noise = " << format_double(cfg.world.anchor_noise)
      << '\n';
  out << "world.shots_per_class = " << cfg.world.shots_per_class << '\n';
  out << "world.id_samples = " << cfg.world.id_samples << '\n';
  out << "world.ood_samples = " << cfg.world.ood_samples << '\n';
  out << "world.text_noise = " << format_double(cfg.world.text_noise) << '\n';
  out << "world.seed = " << cfg.world.seed << '\n';
  if (!cfg.shots_file.empty()) {
    out << "world.shots_file = " << cfg.shots_file << '\n';
  }
  if (!cfg.class_text_file.empty()) {
    out << "world.class_text_file = " << cfg.class_text_file << '\n';
  }
  if (!cfg.vocab_file.empty()) {
    out << "world.vocab_file = " << cfg.vocab_file << '\n';
  }
  if (!cfg.encoder_file.empty()) {
    out << "world.encoder_file = " << cfg.encoder_file << '\n';
  }
  if (!cfg.stream_file.empty()) {
    out << "world.stream_file = " << cfg.stream_file << '\n';
  }
  out << "engine.beta = " << format_double(cfg.engine.beta) << '\n';
  out << "engine.tau = " << format_double(cfg.engine.score.tau) << '\n';
  out << "engine.groups = " << cfg.engine.score.groups << '\n';
  out << "engine.c_scale = " << format_double(cfg.engine.score.c_scale)
      << '\n';
  out << "engine.static_count = " << cfg.engine.static_count << '\n';
  out << "engine.bank_capacity = " << cfg.engine.bank_capacity << '\n';
  out << "engine.rho = " << format_double(cfg.engine.rho) << '\n';
  out << "engine.batch_size = " << cfg.engine.batch_size << '\n';
  out << "engine.use_buffer = " << (cfg.engine.use_buffer ? "true" : "false")
      << '\n';
  out << "engine.repermute_each_batch = "
      << (cfg.engine.repermute_each_batch ? "true" : "false") << '\n';
  out << "engine.lambda = " << format_double(cfg.engine.inversion.lambda)
      << '\n';
  out << "engine.learning_rate = "
      << format_double(cfg.engine.inversion.learning_rate) << '\n';
  out << "engine.weight_decay = "
      << format_double(cfg.engine.inversion.weight_decay) << '\n';
  out << "engine.iterations = " << cfg.engine.inversion.iterations << '\n';
  out << "engine.init = " << init_name(cfg.engine.inversion.init) << '\n';
  out << "engine.sigma = " << format_double(cfg.engine.inversion.sigma)
      << '\n';
  out << "plan.ordering = " << ordering_name(cfg.plan.ordering) << '\n';
  out << "plan.id_count = " << cfg.plan.id_count << '\n';
  out << "plan.ood_count = " << cfg.plan.ood_count << '\n';
  out << "plan.phases = " << cfg.plan.phases << '\n';
  if (!cfg.ratio_sweep.empty()) {
    out << "plan.ratio_sweep = ";
    for (std::size_t i = 0; i < cfg.ratio_sweep.size(); ++i) {
      if (i) out << ',';
      out << cfg.ratio_sweep[i].first << ':' << cfg.ratio_sweep[i].second;
    }
    out << '\n';
  }
  return out.str();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig cfg = parse_config(read_file(path));
  if (cfg.world_source == WorldSource::files) {
    for (const std::string& file :
         {cfg.shots_file, cfg.class_text_file, cfg.vocab_file,
          cfg.encoder_file, cfg.stream_file}) {
      if (!file.empty() && !std::filesystem::exists(file)) {
        throw Error(ErrorCode::io_failure,
                    "referenced world file does not exist: " + file);
      }
    }
  }
  return cfg;
}

void write_results(const std::filesystem::path& path,
                   std::span<const StreamResult> results,
                   OutputFormat format) {
  std::ofstream out = open_for_write(path);
  if (format == OutputFormat::csv) {
    out << "sample_id,initial_score,final_score,potential_ood,truth\n";
    for (const auto& r : results) {
      out << r.sample_id << ',' << format_double(r.initial_score) << ','
          << format_double(r.final_score) << ',' << (r.potential_ood ? 1 : 0)
          << ',' << label_name(r.truth) << '\n';
    }
    return;
  }
  for (const auto& r : results) {
    json j{{"sample_id", r.sample_id},
           {"initial_score", r.initial_score},
           {"final_score", r.final_score},
           {"potential_ood", r.potential_ood},
           {"truth", label_name(r.truth)}};
    out << j.dump() << '\n';
  }
}

namespace {

void emit_report_row(std::ofstream& out, OutputFormat format,
                     const std::string& scope, const MetricReport& r) {
  if (format == OutputFormat::csv) {
    out << scope << ',' << format_double(r.auroc) << ','
        << format_double(r.fpr95) << ',' << r.n_id << ',' << r.n_ood << '\n';
  } else {
    json j{{"scope", scope},
           {"auroc", r.auroc},
           {"fpr95", r.fpr95},
           {"n_id", r.n_id},
           {"n_ood", r.n_ood}};
    out << j.dump() << '\n';
  }
}

}  // namespace

void write_report(const std::filesystem::path& path,
                  const MetricReport& report, OutputFormat format) {
  std::ofstream out = open_for_write(path);
  if (format == OutputFormat::csv) {
    out << "scope,auroc,fpr95,n_id,n_ood\n";
  }
  emit_report_row(out, format, "overall", report);
  for (const auto& [phase, phase_report] : report.per_phase) {
    emit_report_row(out, format, "phase_" + std::to_string(phase),
                    phase_report);
  }
}

void write_labelled_reports(
    const std::filesystem::path& path,
    std::span<const std::pair<std::string, MetricReport>> reports,
    OutputFormat format) {
  std::ofstream out = open_for_write(path);
  if (format == OutputFormat::csv) {
    out << "scope,auroc,fpr95,n_id,n_ood\n";
  }
  for (const auto& [scope, report] : reports) {
    emit_report_row(out, format, scope, report);
  }
}

void write_negatives(const std::filesystem::path& path,
                     const StaticNegatives& negatives, OutputFormat format) {
  std::ofstream out = open_for_write(path);
  if (format == OutputFormat::csv) {
    out << "rank,token_id,distance\n";
    for (std::size_t i = 0; i < negatives.size(); ++i) {
      out << (i + 1) << ',' << negatives.entries[i].token_id << ','
          << format_double(negatives.distances[i]) << '\n';
    }
    return;
  }
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    json j{{"rank", i + 1},
           {"token_id", negatives.entries[i].token_id},
           {"distance", negatives.distances[i]}};
    out << j.dump() << '\n';
  }
}

LoadedWorld load_world_files(const ExperimentConfig& config) {
  if (config.shots_file.empty() || config.class_text_file.empty() ||
      config.vocab_file.empty() || config.encoder_file.empty() ||
      config.stream_file.empty()) {
    throw Error(ErrorCode::invalid_config,
                "world.source = files requires all five world file paths");
  }
  ShotsTable shots = load_shots(config.shots_file);
  EmbeddingTable class_text = load_embeddings(config.class_text_file);
  if (class_text.ids != shots.class_names) {
    throw Error(ErrorCode::invalid_config,
                "class text identifiers must match the shot classes in order");
  }
  return LoadedWorld{
      .shots = std::move(shots),
      .class_text_features = std::move(class_text.vectors),
      .vocabulary = load_vocabulary(config.vocab_file),
      .encoder = load_encoder(config.encoder_file),
      .stream = load_stream(config.stream_file),
  };
}

}  // namespace negstream
