#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rarunet/mask.hpp"

namespace rarunet {

enum class NoiseKind { kErosion, kDilation, kElastic };

std::string_view to_string(NoiseKind kind);
/// Accepts "erosion", "dilation", "elastic".
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kErosion;
  double alpha_target = 1.0;
  double tolerance = 0.03;
  std::uint64_t seed = 0;
  /// Elastic only: Gaussian smoothing of the displacement fields, in pixels.
  double sigma_e = 4.0;

  void validate() const;
};

/// Iterated erosion with a 3x3 square. Pixels outside the image count as
/// background.
BinaryMask erode(const BinaryMask& mask, int iterations);

/// Iterated dilation with a 3x3 square, clipped at the image border.
BinaryMask dilate(const BinaryMask& mask, int iterations);

/// Erosion or dilation with a real-valued amount. floor(amount) full
/// iterations are applied, then the fraction of the next iteration's ring
/// given by the remainder, taken in angular order around the centroid
/// starting from a seeded angle. Integer amounts equal erode / dilate.
BinaryMask morph_fractional(const BinaryMask& mask, NoiseKind kind, double amount,
                            std::uint64_t seed);

/// Displacement fields used by elastic_deform: uniform [-1, 1] draws (all dy
/// values row-major, then all dx values) convolved with a normalized Gaussian
/// of radius ceil(3 sigma). Values outside the image are treated as zero.
struct DisplacementField {
  int height = 0;
  int width = 0;
  std::vector<double> dy;
  std::vector<double> dx;
};

DisplacementField smooth_displacement(int height, int width, double sigma_e, std::uint64_t seed);

/// Resamples the mask at (y + m * dy, x + m * dx) with nearest-neighbour
/// lookup; out-of-bounds samples read background.
BinaryMask elastic_deform(const BinaryMask& mask, double sigma_e, double magnitude,
                          std::uint64_t seed);
BinaryMask apply_displacement(const BinaryMask& mask, const DisplacementField& field,
                              double magnitude);

/// Dice overlap of two masks; 1 when both are empty.
double overlap_alpha(const BinaryMask& gt, const BinaryMask& noisy);

struct Calibration {
  BinaryMask mask;
  double alpha_achieved = 1.0;
  /// Erosion/dilation amount or elastic magnitude that produced `mask`.
  double intensity = 0.0;
  /// No intensity reached the target within tolerance; `mask` is the
  /// closest result found.
  bool infeasible = false;
};

/// Searches the intensity of spec.kind so that overlap_alpha(gt, noisy) is
/// within spec.tolerance of spec.alpha_target.
Calibration calibrate(const BinaryMask& gt, const NoiseSpec& spec);

struct CorruptionChoice {
  int sample_id;
  std::size_t kind_index;
};

/// Picks floor(beta * n) of `candidate_ids` uniformly without replacement
/// and a kind index in [0, n_kinds) for each. Sorted by sample id.
std::vector<CorruptionChoice> select_corruptions(const std::vector<int>& candidate_ids,
                                                 double beta, std::size_t n_kinds,
                                                 std::uint64_t seed);

}  // namespace rarunet
