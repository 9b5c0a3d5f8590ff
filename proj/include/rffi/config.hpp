#ifndef RFFI_CONFIG_HPP
#define RFFI_CONFIG_HPP

#include <cstdint>
#include <string>

#include "rffi/experiment.hpp"

namespace rffi::config {

// Parses the JSON configuration document (schema in the README). Unknown
// keys anywhere in the tree are rejected. Absent keys keep the calibrated
// defaults; held_out_receiver defaults to the last receiver.
experiment::ExperimentConfig parse_config(const std::string& json_text);

experiment::ExperimentConfig load_config(const std::string& path);

// Canonical (sorted-key) JSON of the fully resolved configuration. Seed and
// output directory are excluded so the fingerprint identifies the
// experimental condition, not the run.
std::string canonical_json(const experiment::ExperimentConfig& cfg);

// FNV-1a 64 over canonical_json.
std::uint64_t config_fingerprint(const experiment::ExperimentConfig& cfg);

// Sweep grid block of the same document ("sweep" key); requires kind plus a
// matching grid list.
experiment::SweepKind parse_sweep_kind(const std::string& json_text);
experiment::SweepGrid parse_sweep_grid(const std::string& json_text);

// Stream-ingestion job ("preprocess" block): raw interleaved little-endian
// f32 I/Q capture to a labeled dataset file.
struct PreprocessJob {
  std::string input;
  int emitter = 1;
  int receiver = 1;
  std::size_t emitters = 1;
  std::size_t receivers = 1;
  std::size_t frame_len = 256;
  std::size_t hop = 256;
  bool energy_detect = true;
  std::size_t window = 32;
  double threshold_factor = 3.0;
  double lowpass_cutoff = 0.0;  // 0 disables the filter
  std::size_t lowpass_taps = 63;
  bool normalize = true;
};

PreprocessJob parse_preprocess(const std::string& json_text);

} // namespace rffi::config

#endif
