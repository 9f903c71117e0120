// End-to-end tests of the command-line tool, run as subprocesses against the
// built binary.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (!ok) {
    std::cerr << "FAIL: " << what << '\n';
    ++failures;
  }
}

struct CommandResult {
  int exit_code;
  std::string output;
};

CommandResult run(const std::string& args) {
  std::string command = std::string(NEGSTREAM_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string output;
  std::array<char, 4096> buffer;
  while (std::size_t n = std::fread(buffer.data(), 1, buffer.size(), pipe)) {
    output.append(buffer.data(), n);
  }
  int status = ::pclose(pipe);
  return {WEXITSTATUS(status), output};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::string grab(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return "";
}

const char* kSmallWorld = R"(seed = 5
world.d = 32
world.k = 32
world.classes = 4
world.ood_clusters = 2
world.vocab_size = 120
world.shots_per_class = 4
world.id_samples = 60
world.ood_samples = 60
engine.static_count = 20
engine.bank_capacity = 10
plan.id_count = 60
plan.ood_count = 60
)";

}  // namespace

int main() {
  fs::path dir = fs::temp_directory_path() / "negstream_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path conf = dir / "small.conf";
  std::ofstream(conf) << kSmallWorld;

  // Exit codes: missing file -> 2, bad config -> 1.
  check(run("run-stream --config /does/not/exist.conf").exit_code == 2,
        "missing config exits 2");
  {
    std::ofstream(dir / "bad.conf") << "mystery.key = 1\n";
    auto r = run("run-stream --config " + (dir / "bad.conf").string());
    check(r.exit_code == 1, "unknown key exits 1");
  }
  {
    std::ofstream(dir / "toobig.conf") << kSmallWorld
                                       << "engine.static_count = 500\n";
    auto r = run("run-stream --config " + (dir / "toobig.conf").string());
    check(r.exit_code == 1, "oversized static count exits 1");
  }

  // mine-negatives: exactly L sorted records, byte-identical on rerun.
  {
    auto r1 = run("mine-negatives --config " + conf.string() + " --output " +
                  (dir / "mine1").string());
    auto r2 = run("mine-negatives --config " + conf.string() + " --output " +
                  (dir / "mine2").string());
    check(r1.exit_code == 0, "mine-negatives succeeds");
    std::string a = slurp(dir / "mine1/negatives.csv");
    check(std::count(a.begin(), a.end(), '\n') == 21,
          "negatives file holds a header plus L records");
    check(a == slurp(dir / "mine2/negatives.csv"),
          "mine-negatives rerun is byte-identical");
  }

  // run-stream --no-dynamic: bank never grows, reruns are byte-identical.
  {
    auto r1 = run("run-stream --config " + conf.string() + " --no-dynamic" +
                  " --output " + (dir / "sta1").string());
    check(r1.exit_code == 0, "static run succeeds");
    check(grab(r1.output, "bank: ").rfind("0/", 0) == 0,
          "static run keeps the bank empty");
    auto r2 = run("run-stream --config " + conf.string() + " --no-dynamic" +
                  " --output " + (dir / "sta2").string());
    check(slurp(dir / "sta1/results.csv") == slurp(dir / "sta2/results.csv"),
          "static rerun results are byte-identical");
    check(slurp(dir / "sta1/report.csv") == slurp(dir / "sta2/report.csv"),
          "static rerun report is byte-identical");
  }

  // gen-world emits a files-backed config that reproduces the run.
  {
    auto g = run("gen-world --config " + conf.string() + " --output " +
                 (dir / "world").string());
    check(g.exit_code == 0, "gen-world succeeds");
    auto direct = run("run-stream --config " + conf.string() + " --output " +
                      (dir / "direct").string());
    auto from_files =
        run("run-stream --config " + (dir / "world/world_files.conf").string() +
            " --output " + (dir / "fromfiles").string());
    check(from_files.exit_code == 0, "files-backed run succeeds");
    check(grab(direct.output, "auroc: ") == grab(from_files.output, "auroc: "),
          "files-backed run reproduces the generated-world AUROC");
  }

  // json-lines output format.
  {
    auto r = run("run-stream --config " + conf.string() +
                 " --format json-lines --output " + (dir / "jl").string());
    check(r.exit_code == 0, "json-lines run succeeds");
    std::string line = slurp(dir / "jl/results.jsonl");
    check(line.find("\"sample_id\"") != std::string::npos,
          "json-lines results contain sample ids");
  }

  // Checkpoint chaining: running A then B from a checkpoint equals the
  // continuous A+B run.
  {
    std::string full = slurp(dir / "world/stream.csv");
    std::vector<std::string> lines;
    std::istringstream in(full);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    std::size_t half = lines.size() / 2;
    std::ofstream a(dir / "world/stream_a.csv");
    std::ofstream b(dir / "world/stream_b.csv");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      (i < half ? a : b) << lines[i] << '\n';
    }
    a.close();
    b.close();

    std::string base_conf = slurp(dir / "world/world_files.conf");
    auto write_conf = [&](const char* name, const std::string& stream_file) {
      std::string text = base_conf;
      std::string needle = "world.stream_file = ";
      std::size_t pos = text.find(needle);
      std::size_t end = text.find('\n', pos);
      text.replace(pos, end - pos,
                   needle + (dir / "world" / stream_file).string());
      std::ofstream(dir / name) << text;
    };
    write_conf("phase_a.conf", "stream_a.csv");
    write_conf("phase_b.conf", "stream_b.csv");
    write_conf("phase_full.conf", "stream.csv");

    auto full_run = run("run-stream --config " +
                        (dir / "phase_full.conf").string() +
                        " --checkpoint-out " + (dir / "cp_full.json").string() +
                        " --output " + (dir / "full").string());
    auto ra = run("run-stream --config " + (dir / "phase_a.conf").string() +
                  " --checkpoint-out " + (dir / "cp_a.json").string() +
                  " --output " + (dir / "pa").string());
    auto rb = run("run-stream --config " + (dir / "phase_b.conf").string() +
                  " --checkpoint-in " + (dir / "cp_a.json").string() +
                  " --checkpoint-out " + (dir / "cp_ab.json").string() +
                  " --output " + (dir / "pb").string());
    check(full_run.exit_code == 0 && ra.exit_code == 0 && rb.exit_code == 0,
          "checkpoint chain runs succeed");
    check(slurp(dir / "cp_ab.json") == slurp(dir / "cp_full.json"),
          "chained checkpoint equals the continuous run's checkpoint");

    // The second phase's results equal the tail of the continuous run.
    std::string full_results = slurp(dir / "full/results.csv");
    std::string phase_b_results = slurp(dir / "pb/results.csv");
    std::istringstream fr(full_results);
    std::vector<std::string> full_lines;
    for (std::string line; std::getline(fr, line);) full_lines.push_back(line);
    std::istringstream br(phase_b_results);
    std::vector<std::string> b_lines;
    for (std::string line; std::getline(br, line);) b_lines.push_back(line);
    bool tail_matches = b_lines.size() == lines.size() - half + 1;
    for (std::size_t i = 1; tail_matches && i < b_lines.size(); ++i) {
      tail_matches = b_lines[i] == full_lines[half + i];
    }
    check(tail_matches, "phase-2 results equal the continuous run's tail");
  }

  // gen-world reruns are byte-identical.
  {
    auto g1 = run("gen-world --config " + conf.string() + " --output " +
                  (dir / "w1").string());
    auto g2 = run("gen-world --config " + conf.string() + " --output " +
                  (dir / "w2").string());
    check(g1.exit_code == 0 && g2.exit_code == 0, "gen-world reruns succeed");
    for (const char* name :
         {"stream.csv", "vocab.csv", "shots.csv", "class_text.csv",
          "encoder.txt"}) {
      check(slurp(dir / "w1" / name) == slurp(dir / "w2" / name),
            std::string("gen-world rerun reproduces ") + name);
    }
  }

  // Temporal-shift runs emit per-phase report rows.
  {
    std::ofstream(dir / "temporal.conf")
        << kSmallWorld << "plan.ordering = temporal-shift\nplan.phases = 2\n";
    auto r = run("run-stream --config " + (dir / "temporal.conf").string() +
                 " --output " + (dir / "temporal").string());
    check(r.exit_code == 0, "temporal-shift run succeeds");
    std::string report = slurp(dir / "temporal/report.csv");
    check(report.find("phase_0,") != std::string::npos &&
              report.find("phase_1,") != std::string::npos,
          "temporal report carries per-phase rows");
  }

  // A seed override changes the run.
  {
    auto base = run("run-stream --config " + conf.string() + " --output " +
                    (dir / "seedbase").string());
    auto other = run("run-stream --config " + conf.string() + " --seed 99" +
                     " --output " + (dir / "seedother").string());
    check(base.exit_code == 0 && other.exit_code == 0, "seeded runs succeed");
    check(slurp(dir / "seedbase/results.csv") !=
              slurp(dir / "seedother/results.csv"),
          "a different seed produces different results");
  }

  // Ratio sweep: one report row per ratio plus the header.
  {
    std::ofstream(dir / "sweep.conf")
        << kSmallWorld << "plan.ratio_sweep = 20:40,40:40,40:20\n";
    auto r = run("run-stream --config " + (dir / "sweep.conf").string() +
                 " --output " + (dir / "sweep").string());
    check(r.exit_code == 0, "ratio sweep succeeds");
    std::string report = slurp(dir / "sweep/report.csv");
    check(std::count(report.begin(), report.end(), '\n') == 4,
          "sweep report holds one row per ratio");
    check(report.find("ratio_20:40") != std::string::npos &&
              report.find("ratio_40:20") != std::string::npos,
          "sweep report labels the ratios");
    check(fs::exists(dir / "sweep/results_20x40.csv") &&
              fs::exists(dir / "sweep/results_40x20.csv"),
          "sweep writes per-ratio results");
  }

  // Full-scale negative set (the library defaults) runs end to end.
  {
    std::ofstream(dir / "full.conf") << "seed = 3\n"
                                     << "world.vocab_size = 2500\n"
                                     << "engine.static_count = 2000\n"
                                     << "engine.bank_capacity = 2000\n";
    auto r = run("run-stream --config " + (dir / "full.conf").string() +
                 " --output " + (dir / "full2000").string());
    check(r.exit_code == 0, "full-scale run succeeds");
    check(grab(r.output, "bank: ") != "0/2000, buffer: 0/2000",
          "full-scale run grows the bank");
  }

  // verify-theorem and grad-check report PASS with exit 0.
  {
    auto t = run("verify-theorem --trials 2000 --groups 2 5");
    check(t.exit_code == 0 && t.output.find("PASS") != std::string::npos,
          "verify-theorem passes");
    auto g = run("grad-check --points 25");
    check(g.exit_code == 0 && g.output.find("PASS") != std::string::npos,
          "grad-check passes");
  }

  if (failures == 0) {
    std::cout << "cli_tests: all checks passed\n";
    return 0;
  }
  std::cout << "cli_tests: " << failures << " checks failed\n";
  return 1;
}
