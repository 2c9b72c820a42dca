#pragma once
// Seeded synthetic corpus: YARA rules, random-byte files with planted
// patterns, a labeled manifest, dense side features and a plant log.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hayama/util.hpp"

namespace hayama::synth {

struct SyntheticSpec {
  std::size_t n_benign = 1000;
  std::size_t n_malware = 1000;
  std::size_t file_size_min = 2048;
  std::size_t file_size_max = 6144;
  std::size_t n_planted_patterns = 500;
  double plant_rate_malware = 0.06;  // per group and file, scaled by group weight
  double plant_rate_benign = 0.01;
  std::size_t n_noise_side_features = 12;
  std::size_t n_signal_side_features = 8;
  double side_shift = 0.5;           // class mean difference of each signal column
  std::size_t group_copies = 4;      // near-duplicate patterns per group side
  double copy_keep = 0.85;           // chance each copy is planted when its side is active
  double interaction_share = 0.3;          // paired-marker groups (see generate_synthetic)
  double interaction_rate_benign = 0.25;   // benign engagement of paired groups, one side
  double interaction_rate_malware = 0.04;  // malware engagement of paired groups, both sides
  double noise_pattern_share = 0.2;  // patterns planted independently of the label
  double noise_rate = 0.02;
  double test_fraction = 0.3;
  std::size_t pattern_len_min = 8;
  std::size_t pattern_len_max = 16;
  std::uint64_t seed = 1;

  /// Throws Error{Validation}.
  void validate() const;
};

struct PlantRecord {
  std::string key;
  std::uint32_t pattern = 0;  // index into SyntheticCorpus::pattern_ids
  std::uint64_t offset = 0;
};

struct SyntheticCorpus {
  std::filesystem::path root;
  std::filesystem::path rules_dir;
  std::filesystem::path manifest;
  std::filesystem::path side_features;
  std::filesystem::path plant_log;
  std::vector<std::string> pattern_ids;  // catalog id (16 hex) per pattern index
  std::vector<PlantRecord> plants;
  std::string digest;  // sha256 over every generated file, in a fixed order
};

/// Writes rules/, files/, manifest.csv, side.csv, plants.jsonl and
/// synth.json under out_dir. Patterns come in groups of two sides, each side
/// a set of near-duplicate copies. Plain groups engage malware at
/// plant_rate_malware and benign at plant_rate_benign, planting one side.
/// Paired groups act as benign markers: benign files engage them at
/// interaction_rate_benign with one side, malware files at
/// interaction_rate_malware with both sides, so only the pair separates the
/// classes. Side features shift the first n_signal columns by +-side_shift/2.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace hayama::synth
