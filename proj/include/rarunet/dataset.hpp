#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rarunet/mask.hpp"
#include "rarunet/noise.hpp"
#include "rarunet/rng.hpp"
#include "rarunet/train.hpp"

namespace rarunet {

// ---- PGM ----------------------------------------------------------------

/// Binary PGM ("P5", maxval 255) bytes for an image.
std::string encode_pgm(const GrayImage& image);
/// Parses binary PGM bytes. Malformed headers, other magics, ASCII "P2" files
/// and short payloads raise kFormat errors with distinct messages.
GrayImage decode_pgm(std::string_view bytes);

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Masks are stored as PGM with pixel values 0 and 255.
GrayImage mask_to_image(const BinaryMask& mask);
BinaryMask image_to_mask(const GrayImage& image);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// ---- Manifest -------------------------------------------------------------

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct ManifestRecord {
  int sample_id = 0;
  Split split = Split::kTrain;
  /// Paths relative to the manifest's directory.
  std::string image_path;
  std::string mask_path;
  std::optional<std::string> original_mask_path;
  bool corrupted = false;
  std::optional<NoiseKind> noise_kind;
  std::optional<double> alpha_target;
  std::optional<double> alpha_achieved;
  bool infeasible = false;
};

struct CorruptionSettings {
  double alpha = 1.0;
  double beta = 0.0;
  std::vector<NoiseKind> kinds;
  std::uint64_t seed = 0;
  double sigma_e = 4.0;
};

struct Manifest {
  int image_size = 0;
  std::vector<ManifestRecord> records;
  std::optional<CorruptionSettings> corruption;
  /// Directory the relative paths resolve against; not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
  /// Mask a model trains on (noisy when corrupted).
  const std::string& training_mask(const ManifestRecord& r) const { return r.mask_path; }
  /// Uncorrupted mask used for scoring.
  const std::string& ground_truth_mask(const ManifestRecord& r) const {
    return r.original_mask_path ? *r.original_mask_path : r.mask_path;
  }
  void validate() const;
};

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(std::string_view text, const std::filesystem::path& base_dir);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

// ---- Synthetic data -------------------------------------------------------

struct Ellipse {
  double cy, cx;
  double ry, rx;
  double theta;
};

/// 1-3 ellipses with semi-axes in [size/12, size/4], redrawn until their
/// union covers at least 1% of the image.
std::vector<Ellipse> draw_blobs(int size, Rng& rng);

/// Pixels whose centres lie inside any ellipse.
BinaryMask render_blobs(const std::vector<Ellipse>& blobs, int size);

struct SyntheticSample {
  GrayImage image;
  BinaryMask mask;
  std::vector<Ellipse> blobs;
};

/// Image and mask of sample `index` of a dataset generated with `seed`.
SyntheticSample synth_sample(int size, std::uint64_t seed, int index);

/// Writes n samples (images/, masks/, manifest.json) under out_dir with an
/// 80/10/10 train/val/test split and returns the manifest.
Manifest gen_synth(int n, int size, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---- Corruption -----------------------------------------------------------

struct CorruptionRecord {
  int sample_id;
  std::optional<NoiseKind> kind;
  double alpha_target;
  double alpha_achieved;
  bool corrupted;
  bool infeasible;
};

/// Replaces floor(beta * n_train) training masks with calibrated noisy ones
/// written to masks_noisy/. Always starts from the original masks, so a
/// manifest can be re-corrupted. Updates `manifest` in memory.
std::vector<CorruptionRecord> corrupt_dataset(Manifest& manifest, double beta, double alpha,
                                              const std::vector<NoiseKind>& kinds,
                                              std::uint64_t seed, double sigma_e = 4.0);

// ---- Loading --------------------------------------------------------------

/// Samples of one split. Training masks are the (possibly noisy) mask_path;
/// with `ground_truth` the original masks are loaded instead.
std::vector<Sample> load_samples(const Manifest& manifest, Split split, bool ground_truth = false);

}  // namespace rarunet
