#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otafl/engine.hpp"

// Flat key=value configuration ("section.key = value", '#' comments), named
// experiment presets, metrics CSV output, and experiment assembly (data
// loading or generation, compromised-client selection, problem construction).
namespace otafl::cli {

engine::SimConfig default_config();

// Applies one "key" / "value" pair; throws std::invalid_argument on unknown
// keys or malformed values, naming the key.
void apply_entry(engine::SimConfig& cfg, std::string_view key,
                 std::string_view value);

// Applies every entry in `text` (later entries win) on top of `cfg`.
void apply_config_text(engine::SimConfig& cfg, std::string_view text);

// Defaults plus the entries of `text`.
engine::SimConfig parse_config(std::string_view text);

engine::SimConfig load_config_file(const std::filesystem::path& path);

// Every key, one per line, in a fixed order; parse_config(dump_config(c))
// reproduces c exactly, including float values.
std::string dump_config(const engine::SimConfig& cfg);

struct ExperimentPreset {
  std::string name;
  std::string description;
  engine::SimConfig config;
};

std::span<const ExperimentPreset> presets();
const ExperimentPreset* find_preset(std::string_view name);

// Writes the per-round metrics CSV. `bound` is either empty or the bound
// sequence indexed by round (entry 0 is round 0); missing values become empty
// fields. Numbers are written in shortest round-trip form, so identical runs
// produce byte-identical files.
void emit_metrics(std::span<const engine::RoundMetrics> metrics,
                  std::span<const double> bound,
                  const std::filesystem::path& path);

struct Experiment {
  std::unique_ptr<engine::Problem> problem;
  engine::SimConfig config;
  std::vector<std::size_t> byzantine;
  std::vector<std::string> notices;  // data fallbacks, dropped samples, ...
};

// Builds the problem the config describes. Logistic runs load IDX data from
// data.dir (or $OTA_BYZ_DATA_DIR) and fall back to synthetic class blobs when
// no directory resolves; ridge runs generate their regression instance.
// Label poisoning is applied here; the returned compromised set is what the
// simulation should be given.
Experiment make_experiment(const engine::SimConfig& cfg);

}  // namespace otafl::cli
