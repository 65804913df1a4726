#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rarunet/mask.hpp"

namespace rarunet {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

/// Pixel counts of prediction M against ground truth G.
Confusion confusion(const BinaryMask& pred, const BinaryMask& gt);

struct OverlapMetrics {
  double dice, iou, accuracy, precision, recall, specificity;
};

/// Ratios built from the confusion counts; any 0/0 is 1.
OverlapMetrics overlap_metrics(const Confusion& c);

using Pixel = std::pair<int, int>;  // (y, x)

/// Foreground pixels with a background or out-of-image 4-neighbour, row-major.
std::vector<Pixel> boundary(const BinaryMask& mask);

/// Symmetric Hausdorff distance between the boundaries of M and G in pixels.
/// Throws kUndefinedMetric when either boundary is empty.
double hausdorff(const BinaryMask& pred, const BinaryMask& gt);

/// Average symmetric surface distance between the boundaries of M and G.
double assd(const BinaryMask& pred, const BinaryMask& gt);

/// | |M| - |G| | / |G|. Throws kUndefinedMetric for an empty G.
double rvd(const BinaryMask& pred, const BinaryMask& gt);

/// Dice of M and G restricted to the von Neumann neighbourhood of (y, x),
/// clipped at the border; 1 when both restrictions are empty.
double local_dice(const BinaryMask& pred, const BinaryMask& gt, int y, int x);

/// Mean local Dice of `from` and `to` over the boundary of `from`. Throws
/// kUndefinedMetric when that boundary is empty.
double dbd(const BinaryMask& from, const BinaryMask& to);

/// Boundary-count weighted combination of the local Dice sums over both
/// boundaries.
double sbd(const BinaryMask& pred, const BinaryMask& gt);

/// The twelve evaluation fields. Distance and boundary fields are empty when
/// undefined for the inputs.
struct MetricReport {
  static constexpr std::array<std::string_view, 12> kFields{
      "dice", "iou", "accuracy", "precision", "recall", "specificity",
      "hd",   "assd", "rvd",     "dbd_g",     "dbd_m",  "sbd"};

  std::array<std::optional<double>, 12> values{};

  std::optional<double>& operator[](std::string_view field);
  const std::optional<double>& operator[](std::string_view field) const;

  /// Flat JSON object, fields in kFields order, 4 decimals, null when
  /// undefined.
  std::string to_json() const;
};

/// All twelve metrics of one prediction against its ground truth.
MetricReport evaluate(const BinaryMask& pred, const BinaryMask& gt);

/// Field-wise mean over the reports in which that field is defined.
MetricReport aggregate(const std::vector<MetricReport>& reports);

}  // namespace rarunet
