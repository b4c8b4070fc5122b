#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agb/config.hpp"

namespace agb {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

struct DatasetHeader {
  int version = kDatasetVersion;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t n_coils = 0;
  double acceleration = 0.0;
  std::size_t center_lines = 0;
  std::size_t count = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<TrainingSample> samples;
};

/// Simulated samples, already rounded to the 32-bit precision of the file
/// format so that what is written equals what is read back.
Dataset generate_dataset(const DataConfig& cfg);

/// Header as one line of JSON, then per sample: m_f, maps, mask (one byte per
/// line), K_u; floats are little-endian 32-bit with (re, im) interleaved.
std::string encode_dataset(const Dataset& d);
Dataset decode_dataset(const std::string& bytes);
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

enum class CheckpointKind { train, inference };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::train;
  ExperimentConfig config;
  TrainState<float> state;  // inference checkpoints carry only generator params
  std::size_t selected_epoch = 0;
};

/// JSON manifest line listing {name, shape, offset} for every tensor, then one
/// blob of little-endian 32-bit floats.
std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes);
void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

/// Inference checkpoint with the generator of the snapshot picked by select_model.
Checkpoint best_checkpoint(const ExperimentConfig& cfg, const TrainState<float>& state);

inline constexpr const char* kMetricsCsvHeader = "epoch,nmse,fid,beta,g_ma,p_ma,critic_loss,gen_loss";
std::string metrics_csv(const MetricSeries& series);

/// Grayscale plain PGM of images laid out left to right. Magnitudes are
/// divided by `scale` and clamped to [0, 1].
std::string panel_pgm(const std::vector<ComplexImage>& panels, double scale);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// Doubles printed with enough digits to round-trip.
std::string format_double(double v);

}  // namespace agb
