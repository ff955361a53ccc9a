#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "peertrade/simulation.hpp"

namespace peertrade {

// File-system level trouble (cannot open, cannot write). Distinct from data
// validation so callers can map it to a different exit code.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Canonical number form used in every emitted table: 12 significant digits.
// Values printed this way reparse to the same double.
std::string format_number(double v);

// 64-bit FNV-1a over raw bytes, rendered as "fnv1a64:<hex>".
std::string content_hash(std::string_view bytes);

ReadingsSeries parse_readings(std::string_view text);
ReadingsSeries load_readings(const std::filesystem::path& file);
std::string readings_to_csv(const ReadingsSeries& readings);
void save_readings(const ReadingsSeries& readings, const std::filesystem::path& file);

SimulationConfig parse_scenario(const std::string& text);
SimulationConfig load_scenario(const std::filesystem::path& file);

// Table serializers shared by the writer and the verifier.
std::string outcomes_to_csv(const std::vector<SlotOutcome>& outcomes);
std::string partition_to_csv(const std::vector<SlotOutcome>& outcomes,
                             const std::vector<TransitionLog>& transitions);
std::string comparison_to_csv(const ComparisonReport& report);

// Everything one cooperative run leaves behind. scenario_text and
// readings_text are byte-for-byte copies of the inputs so a bundle can be
// re-run and audited on its own.
struct ResultsBundle {
    std::string scenario_text;
    std::string readings_text;
    SimulationConfig config;
    SimulationRun p2p;
    SimulationRun fit;
    ComparisonReport comparison;
};

// Writes scenario.json, readings.csv, outcomes.csv, partition.csv,
// comparison.csv and manifest.json into dir (created if needed).
void write_results(const ResultsBundle& bundle, const std::filesystem::path& dir);

struct PartitionCsvRow {
    int slot = 0;
    std::string id;
    std::string coalition;           // W, K or L
    std::string previous_coalition;  // W, K or L
    std::string action;              // stay or split+merge
};

struct StoredBundle {
    std::string scenario_text;
    std::string readings_text;
    std::string outcomes_text;
    std::string partition_text;
    std::string comparison_text;
    std::string manifest_text;
    std::vector<SlotOutcome> outcomes;
    std::vector<PartitionCsvRow> partition_rows;
    std::vector<ComparisonRow> comparison_rows;
};

// Reads a bundle back, parsing every table. Throws on anything unreadable.
StoredBundle load_results(const std::filesystem::path& dir);

struct VerifyIssue {
    std::string where;   // file or check that failed
    std::string detail;
};

struct VerifyReport {
    bool ok = true;
    std::vector<VerifyIssue> issues;
};

// Re-checks a stored bundle: manifest hashes, a full re-run diff against the
// embedded inputs, per-slot stability, the never-detrimental comparison and
// partition consistency. Throws (rather than reporting) when the bundle
// cannot even be parsed.
VerifyReport verify_bundle(const std::filesystem::path& dir);

}  // namespace peertrade
