#pragma once

// Brute-force references for mask operations and metrics. Each one follows
// the textbook definition pixel by pixel and shares nothing with the library
// beyond the BinaryMask container and the seeded Rng.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rarunet/mask.hpp"
#include "rarunet/rng.hpp"

namespace oracle {

using rarunet::BinaryMask;

/// Builds a mask from rows of '#' (foreground) and '.'.
inline BinaryMask mask_from(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.set(y, x, rows[y][x] == '#');
  return m;
}

inline BinaryMask random_mask(int h, int w, rarunet::Rng& rng, double density) {
  BinaryMask m(h, w);
  for (auto& b : m.bits) b = rng.uniform() < density;
  return m;
}

/// Random union of axis-aligned rectangles, which gives masks with real
/// interiors rather than salt-and-pepper noise.
inline BinaryMask random_blocky_mask(int h, int w, rarunet::Rng& rng) {
  BinaryMask m(h, w);
  const int n = static_cast<int>(rng.below(4));
  for (int k = 0; k < n; ++k) {
    const int y0 = static_cast<int>(rng.below(h)), x0 = static_cast<int>(rng.below(w));
    const int y1 = std::min(h, y0 + 1 + static_cast<int>(rng.below(h))),
              x1 = std::min(w, x0 + 1 + static_cast<int>(rng.below(w)));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m.set(y, x, true);
  }
  return m;
}

inline bool fg(const BinaryMask& m, int y, int x) {
  return y >= 0 && x >= 0 && y < m.height && x < m.width && m.at(y, x);
}

inline BinaryMask erode(const BinaryMask& m, int iterations) {
  BinaryMask cur = m;
  for (int it = 0; it < iterations; ++it) {
    BinaryMask next(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        next.set(y, x,
                 fg(cur, y - 1, x - 1) && fg(cur, y - 1, x) && fg(cur, y - 1, x + 1) &&
                     fg(cur, y, x - 1) && fg(cur, y, x) && fg(cur, y, x + 1) &&
                     fg(cur, y + 1, x - 1) && fg(cur, y + 1, x) && fg(cur, y + 1, x + 1));
    cur = next;
  }
  return cur;
}

inline BinaryMask dilate(const BinaryMask& m, int iterations) {
  BinaryMask cur = m;
  for (int it = 0; it < iterations; ++it) {
    BinaryMask next(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        next.set(y, x,
                 fg(cur, y - 1, x - 1) || fg(cur, y - 1, x) || fg(cur, y - 1, x + 1) ||
                     fg(cur, y, x - 1) || fg(cur, y, x) || fg(cur, y, x + 1) ||
                     fg(cur, y + 1, x - 1) || fg(cur, y + 1, x) || fg(cur, y + 1, x + 1));
    cur = next;
  }
  return cur;
}

/// Elastic deformation evaluated with a direct (non-separable) 2-D Gaussian
/// sum for every pixel.
inline BinaryMask elastic(const BinaryMask& m, double sigma, double magnitude, std::uint64_t seed) {
  const int h = m.height, w = m.width;
  rarunet::Rng rng(seed);
  std::vector<double> uy(h * w), ux(h * w);
  for (auto& v : uy) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ux) v = rng.uniform(-1.0, 1.0);
  const int r = static_cast<int>(std::ceil(3 * sigma));
  double norm = 0;
  for (int i = -r; i <= r; ++i) norm += std::exp(-i * i / (2 * sigma * sigma));
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dy = 0, dx = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const int yy = y + i, xx = x + j;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          const double k = std::exp(-i * i / (2 * sigma * sigma)) * std::exp(-j * j / (2 * sigma * sigma)) /
                           (norm * norm);
          dy += k * uy[yy * w + xx];
          dx += k * ux[yy * w + xx];
        }
      const int sy = static_cast<int>(std::round(y + magnitude * dy));
      const int sx = static_cast<int>(std::round(x + magnitude * dx));
      out.set(y, x, fg(m, sy, sx));
    }
  return out;
}

inline std::vector<std::pair<int, int>> boundary(const BinaryMask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x) && (!fg(m, y - 1, x) || !fg(m, y + 1, x) || !fg(m, y, x - 1) || !fg(m, y, x + 1)))
        out.emplace_back(y, x);
  return out;
}

inline double div_or_one(double num, double den) { return den == 0 ? 1.0 : num / den; }

inline double local_dice(const BinaryMask& a, const BinaryMask& b, int y, int x) {
  const int pts[5][2] = {{y, x}, {y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
  double sa = 0, sb = 0, both = 0;
  for (auto& p : pts) {
    sa += fg(a, p[0], p[1]);
    sb += fg(b, p[0], p[1]);
    both += fg(a, p[0], p[1]) && fg(b, p[0], p[1]);
  }
  return div_or_one(2 * both, sa + sb);
}

/// Twelve values in MetricReport field order; nullopt when undefined.
inline std::array<std::optional<double>, 12> metrics(const BinaryMask& pred, const BinaryMask& gt) {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      const bool m = pred.at(y, x), g = gt.at(y, x);
      tp += m && g;
      fp += m && !g;
      fn += !m && g;
      tn += !m && !g;
    }
  std::array<std::optional<double>, 12> r;
  r[0] = div_or_one(2 * tp, 2 * tp + fp + fn);
  r[1] = div_or_one(tp, tp + fp + fn);
  r[2] = div_or_one(tp + tn, tp + fp + fn + tn);
  r[3] = div_or_one(tp, tp + fp);
  r[4] = div_or_one(tp, tp + fn);
  r[5] = div_or_one(tn, tn + fp);
  const auto bm = oracle::boundary(pred), bg = oracle::boundary(gt);
  auto nearest = [](std::pair<int, int> p, const std::vector<std::pair<int, int>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (auto q : set) {
      const double dy = p.first - q.first, dx = p.second - q.second;
      best = std::min(best, std::sqrt(dy * dy + dx * dx));
    }
    return best;
  };
  if (!bm.empty() && !bg.empty()) {
    double hd = 0, total = 0;
    for (auto p : bm) hd = std::max(hd, nearest(p, bg)), total += nearest(p, bg);
    for (auto p : bg) hd = std::max(hd, nearest(p, bm)), total += nearest(p, bm);
    r[6] = hd;
    r[7] = total / static_cast<double>(bm.size() + bg.size());
  }
  const double area_g = tp + fn, area_m = tp + fp;
  if (area_g > 0) r[8] = std::abs(area_m - area_g) / area_g;
  double sum_g = 0, sum_m = 0;
  for (auto p : bg) sum_g += oracle::local_dice(pred, gt, p.first, p.second);
  for (auto p : bm) sum_m += oracle::local_dice(pred, gt, p.first, p.second);
  if (!bg.empty()) r[9] = sum_g / static_cast<double>(bg.size());
  if (!bm.empty()) r[10] = sum_m / static_cast<double>(bm.size());
  if (!bg.empty() && !bm.empty()) r[11] = (sum_g + sum_m) / static_cast<double>(bg.size() + bm.size());
  return r;
}

}  // namespace oracle
