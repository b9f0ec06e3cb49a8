// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpolstm/mpo.hpp"
#include "mpolstm/tensor.hpp"
#include "mpolstm/training.hpp"

namespace mpolstm {

// ---------------------------------------------------------------------------
// Weight files
//
// Layout, all integers little-endian:
//
//   "MPOW"                     4-byte magic
//   u32 version                currently 1
//   u32 entry_count
//   entry_count times:
//     u32 name_length, name bytes (UTF-8)
//     u8  kind                 0 = dense, 1 = mpo
//     u8  dtype                0 = f64 (only value in version 1)
//     dense: u32 rank, u64 extents[rank]
//     mpo:   u32 n, u64 input_factors[n], u64 output_factors[n], u64 bond_dims[n + 1]
//   u64 payload_bytes
//   payload                    f64 values in entry order; mpo cores in chain order
//   u32 crc32                  IEEE CRC-32 of the payload bytes

inline constexpr std::uint32_t kWeightFileVersion = 1;

struct WeightEntry {
  std::string name;
  std::variant<DenseTensor, MpoOperator> value;

  friend bool operator==(const WeightEntry&, const WeightEntry&) = default;
};

using WeightBundle = std::vector<WeightEntry>;

std::vector<std::uint8_t> encode_weights(const WeightBundle& bundle);
/// Throws IntegrityError on bad magic, unsupported version, truncation,
/// trailing bytes, inconsistent metadata or CRC mismatch.
WeightBundle decode_weights(std::span<const std::uint8_t> bytes);

/// Written to a temporary sibling and renamed into place.
void save_weights(const std::filesystem::path& path, const WeightBundle& bundle);
/// Throws IoError if the file cannot be read.
WeightBundle load_weights(const std::filesystem::path& path);

/// Atomic byte write (temp file + rename). Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { kCsv, kJson };

ReportFormat report_format_from_string(const std::string& s);
/// Guesses from the extension (.json, anything else is CSV).
ReportFormat report_format_for_path(const std::filesystem::path& path);

inline constexpr const char* kReportColumns = "rate,method,metric,params,ratio_actual,seed,wall_time";

std::string format_report(const SweepReport& report, ReportFormat fmt);
SweepReport parse_report(const std::string& text, ReportFormat fmt);

/// Rows are put in canonical order before writing.
void emit_report(const SweepReport& report, ReportFormat fmt, const std::filesystem::path& path);
SweepReport load_report(const std::filesystem::path& path, ReportFormat fmt);

// ---------------------------------------------------------------------------
// Experiment configuration (JSON)

struct ExperimentConfig {
  std::size_t nx = 16;
  std::size_t nh = 64;
  std::vector<std::size_t> x_factors{2, 2, 2, 2};
  std::vector<std::size_t> h_factors{4, 2, 2, 4};
  std::vector<double> rates{5, 25, 100};
  std::vector<Method> methods{Method::kDense, Method::kMpo, Method::kPruning};
  SyntheticTask task{};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainConfig train{64, {2, 2, 2, 2}, {4, 2, 2, 4}, AdamConfig{}, 5.0, 32, 8};
  std::size_t jobs = 1;
  bool record_wall_time = false;
};

/// Checks dims against factor products and the task, and value ranges.
/// Throws ConfigError.
void validate(const ExperimentConfig& config);

/// Missing keys keep their defaults; unknown keys are rejected. The result is
/// validated and train.hidden_dim / factor lists / task.input_dim are synced
/// from nx, nh and the factor lists.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

}  // namespace mpolstm
