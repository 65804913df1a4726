#include "rarunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace rarunet {

namespace {

void check_pair(const BinaryMask& a, const BinaryMask& b, const char* op) {
  RARUNET_CHECK(a.same_shape(b), ErrorCode::kShapeMismatch,
                std::string(op) + ": mask sizes differ (" + std::to_string(a.height) + "x" +
                    std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                    std::to_string(b.width) + ")");
}

double ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return 1.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Squared Euclidean distance from every pixel to the nearest site, by the
/// separable lower-envelope transform (Felzenszwalb & Huttenlocher).
std::vector<double> squared_distance_to(const std::vector<Pixel>& sites, int h, int w) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(h) * w, inf);
  for (auto [y, x] : sites) grid[static_cast<std::size_t>(y) * w + x] = 0.0;

  const int n_max = std::max(h, w);
  std::vector<double> f(n_max), d(n_max), z(n_max + 1);
  std::vector<int> v(n_max);
  auto pass = [&](int n) {
    int k = 0;
    int first = 0;
    while (first < n && f[first] == inf) ++first;
    if (first == n) {
      std::fill(d.begin(), d.begin() + n, inf);
      return;
    }
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (int q = first + 1; q < n; ++q) {
      if (f[q] == inf) continue;
      double s;
      while (true) {
        const int p = v[k];
        s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
        if (s <= z[k] && k > 0) {
          --k;
          continue;
        }
        break;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
      while (z[k + 1] < q) ++k;
      const double dq = q - v[k];
      d[q] = dq * dq + f[v[k]];
    }
  };
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    pass(h);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    pass(w);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
  }
  return grid;
}

struct SurfaceDistances {
  std::vector<double> pred_to_gt;
  std::vector<double> gt_to_pred;
};

SurfaceDistances surface_distances(const BinaryMask& pred, const BinaryMask& gt, const char* op) {
  check_pair(pred, gt, op);
  const auto bm = boundary(pred);
  const auto bg = boundary(gt);
  RARUNET_CHECK(!bm.empty() && !bg.empty(), ErrorCode::kUndefinedMetric,
                std::string(op) + ": undefined for an empty boundary");
  const auto to_gt = squared_distance_to(bg, gt.height, gt.width);
  const auto to_pred = squared_distance_to(bm, gt.height, gt.width);
  SurfaceDistances out;
  for (auto [y, x] : bm) out.pred_to_gt.push_back(std::sqrt(to_gt[static_cast<std::size_t>(y) * gt.width + x]));
  for (auto [y, x] : bg) out.gt_to_pred.push_back(std::sqrt(to_pred[static_cast<std::size_t>(y) * gt.width + x]));
  return out;
}

double local_dice_sum(const std::vector<Pixel>& points, const BinaryMask& a, const BinaryMask& b) {
  double acc = 0.0;
  for (auto [y, x] : points) acc += local_dice(a, b, y, x);
  return acc;
}

std::size_t field_index(std::string_view field) {
  for (std::size_t i = 0; i < MetricReport::kFields.size(); ++i) {
    if (MetricReport::kFields[i] == field) return i;
  }
  fail(ErrorCode::kInvalidArgument, "unknown metric field '" + std::string(field) + "'");
}

}  // namespace

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
  check_pair(pred, gt, "confusion");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool m = pred.bits[i], g = gt.bits[i];
    if (m && g) ++c.tp;
    else if (m) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

OverlapMetrics overlap_metrics(const Confusion& c) {
  return OverlapMetrics{ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
                        ratio(c.tp, c.tp + c.fp + c.fn),
                        ratio(c.tp + c.tn, c.total()),
                        ratio(c.tp, c.tp + c.fp),
                        ratio(c.tp, c.tp + c.fn),
                        ratio(c.tn, c.tn + c.fp)};
}

std::vector<Pixel> boundary(const BinaryMask& mask) {
  std::vector<Pixel> out;
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int k = 0; k < 4; ++k) {
        const int ny = y + kDy[k], nx = x + kDx[k];
        if (!mask.inside(ny, nx) || !mask.at(ny, nx)) {
          out.emplace_back(y, x);
          break;
        }
      }
    }
  }
  return out;
}

double hausdorff(const BinaryMask& pred, const BinaryMask& gt) {
  const auto d = surface_distances(pred, gt, "hausdorff");
  return std::max(*std::max_element(d.pred_to_gt.begin(), d.pred_to_gt.end()),
                  *std::max_element(d.gt_to_pred.begin(), d.gt_to_pred.end()));
}

double assd(const BinaryMask& pred, const BinaryMask& gt) {
  const auto d = surface_distances(pred, gt, "assd");
  double total = 0.0;
  for (double v : d.pred_to_gt) total += v;
  for (double v : d.gt_to_pred) total += v;
  return total / static_cast<double>(d.pred_to_gt.size() + d.gt_to_pred.size());
}

double rvd(const BinaryMask& pred, const BinaryMask& gt) {
  check_pair(pred, gt, "rvd");
  const auto g = static_cast<double>(gt.area());
  RARUNET_CHECK(g > 0, ErrorCode::kUndefinedMetric, "rvd: undefined for an empty ground truth");
  return std::abs(static_cast<double>(pred.area()) - g) / g;
}

double local_dice(const BinaryMask& pred, const BinaryMask& gt, int y, int x) {
  check_pair(pred, gt, "local_dice");
  RARUNET_CHECK(pred.inside(y, x), ErrorCode::kInvalidArgument,
                "local_dice: pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                    ") outside the image");
  constexpr int kDy[5] = {0, -1, 1, 0, 0};
  constexpr int kDx[5] = {0, 0, 0, -1, 1};
  std::uint64_t m = 0, g = 0, both = 0;
  for (int k = 0; k < 5; ++k) {
    const int ny = y + kDy[k], nx = x + kDx[k];
    if (!pred.inside(ny, nx)) continue;
    const bool pm = pred.at(ny, nx), pg = gt.at(ny, nx);
    m += pm;
    g += pg;
    both += pm && pg;
  }
  return ratio(2 * both, m + g);
}

double dbd(const BinaryMask& from, const BinaryMask& to) {
  check_pair(from, to, "dbd");
  const auto edge = boundary(from);
  RARUNET_CHECK(!edge.empty(), ErrorCode::kUndefinedMetric, "dbd: undefined for an empty boundary");
  return local_dice_sum(edge, from, to) / static_cast<double>(edge.size());
}

double sbd(const BinaryMask& pred, const BinaryMask& gt) {
  check_pair(pred, gt, "sbd");
  const auto bm = boundary(pred);
  const auto bg = boundary(gt);
  RARUNET_CHECK(!bm.empty() && !bg.empty(), ErrorCode::kUndefinedMetric,
                "sbd: undefined for an empty boundary");
  return (local_dice_sum(bg, pred, gt) + local_dice_sum(bm, pred, gt)) /
         static_cast<double>(bg.size() + bm.size());
}

std::optional<double>& MetricReport::operator[](std::string_view field) {
  return values[field_index(field)];
}

const std::optional<double>& MetricReport::operator[](std::string_view field) const {
  return values[field_index(field)];
}

std::string MetricReport::to_json() const {
  std::string out = "{";
  for (std::size_t i = 0; i < kFields.size(); ++i) {
    if (i) out += ", ";
    out += '"';
    out += kFields[i];
    out += "\": ";
    if (values[i]) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", *values[i]);
      out += buf;
    } else {
      out += "null";
    }
  }
  out += "}";
  return out;
}

MetricReport evaluate(const BinaryMask& pred, const BinaryMask& gt) {
  check_pair(pred, gt, "evaluate");
  MetricReport r;
  const auto o = overlap_metrics(confusion(pred, gt));
  r["dice"] = o.dice;
  r["iou"] = o.iou;
  r["accuracy"] = o.accuracy;
  r["precision"] = o.precision;
  r["recall"] = o.recall;
  r["specificity"] = o.specificity;
  const bool pred_edge = !pred.empty();
  const bool gt_edge = !gt.empty();
  if (pred_edge && gt_edge) {
    const auto d = surface_distances(pred, gt, "evaluate");
    double hd = 0.0, total = 0.0;
    for (double v : d.pred_to_gt) hd = std::max(hd, v), total += v;
    for (double v : d.gt_to_pred) hd = std::max(hd, v), total += v;
    r["hd"] = hd;
    r["assd"] = total / static_cast<double>(d.pred_to_gt.size() + d.gt_to_pred.size());
    r["sbd"] = sbd(pred, gt);
  }
  if (gt_edge) {
    r["rvd"] = rvd(pred, gt);
    r["dbd_g"] = dbd(gt, pred);
  }
  if (pred_edge) r["dbd_m"] = dbd(pred, gt);
  return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  MetricReport out;
  for (std::size_t i = 0; i < MetricReport::kFields.size(); ++i) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : reports) {
      if (r.values[i]) {
        total += *r.values[i];
        ++n;
      }
    }
    if (n) out.values[i] = total / static_cast<double>(n);
  }
  return out;
}

}  // namespace rarunet
