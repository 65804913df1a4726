#include "rarunet/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rarunet/rng.hpp"

namespace rarunet {

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kErosion: return "erosion";
    case NoiseKind::kDilation: return "dilation";
    case NoiseKind::kElastic: return "elastic";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "erosion") return NoiseKind::kErosion;
  if (name == "dilation") return NoiseKind::kDilation;
  if (name == "elastic") return NoiseKind::kElastic;
  fail(ErrorCode::kInvalidArgument, "unknown noise kind '" + std::string(name) +
                                        "' (expected erosion, dilation or elastic)");
}

void NoiseSpec::validate() const {
  RARUNET_CHECK(alpha_target >= 0.0 && alpha_target <= 1.0, ErrorCode::kInvalidArgument,
                "alpha_target must lie in [0, 1], got " + std::to_string(alpha_target));
  RARUNET_CHECK(tolerance > 0.0, ErrorCode::kInvalidArgument, "tolerance must be positive");
  RARUNET_CHECK(sigma_e > 0.0, ErrorCode::kInvalidArgument, "sigma_e must be positive");
}

namespace {

BinaryMask morph_once(const BinaryMask& m, bool erosion) {
  BinaryMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool hit = erosion;
      for (int dy = -1; dy <= 1 && hit == erosion; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const bool v = m.inside(y + dy, x + dx) && m.at(y + dy, x + dx);
          if (erosion && !v) {
            hit = false;
            break;
          }
          if (!erosion && v) {
            hit = true;
            break;
          }
        }
      }
      out.set(y, x, hit);
    }
  }
  return out;
}

/// m_0 = mask, m_{i+1} = morph(m_i), stopping once the chain is stationary
/// or `limit` steps were taken.
std::vector<BinaryMask> morph_chain(const BinaryMask& mask, bool erosion, int limit) {
  std::vector<BinaryMask> chain{mask};
  for (int i = 0; i < limit; ++i) {
    BinaryMask next = morph_once(chain.back(), erosion);
    if (next == chain.back()) break;
    chain.push_back(std::move(next));
  }
  return chain;
}

BinaryMask partial_step(const std::vector<BinaryMask>& chain, double amount, std::uint64_t seed) {
  const double last = static_cast<double>(chain.size() - 1);
  if (amount >= last) return chain.back();
  const auto k = static_cast<std::size_t>(std::floor(amount));
  const double frac = amount - static_cast<double>(k);
  const BinaryMask& base = chain[k];
  const BinaryMask& next = chain[k + 1];
  if (frac <= 0.0) return base;

  double cy = 0.0, cx = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      if (base.at(y, x)) {
        cy += y;
        cx += x;
        ++count;
      }
    }
  }
  if (count > 0) {
    cy /= static_cast<double>(count);
    cx /= static_cast<double>(count);
  }

  Rng rng(seed);
  const double two_pi = 2.0 * std::numbers::pi;
  const double start = rng.uniform(0.0, two_pi);
  std::vector<std::pair<double, std::size_t>> ring;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base.bits[i] == next.bits[i]) continue;
    const double y = static_cast<double>(i / base.width);
    const double x = static_cast<double>(i % base.width);
    double angle = std::atan2(y - cy, x - cx) - start;
    angle = std::fmod(angle + 2.0 * two_pi, two_pi);
    ring.emplace_back(angle, i);
  }
  std::sort(ring.begin(), ring.end());
  const auto take = static_cast<std::size_t>(std::llround(frac * static_cast<double>(ring.size())));
  BinaryMask out = base;
  for (std::size_t j = 0; j < take; ++j) out.bits[ring[j].second] = next.bits[ring[j].second];
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

std::vector<double> smooth(const std::vector<double>& field, int h, int w,
                           const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(field.size(), 0.0), out(field.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = std::max(-r, -x); j <= std::min(r, w - 1 - x); ++j) {
        acc += kernel[j + r] * field[static_cast<std::size_t>(y) * w + x + j];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = std::max(-r, -y); i <= std::min(r, h - 1 - y); ++i) {
        acc += kernel[i + r] * tmp[static_cast<std::size_t>(y + i) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

struct Candidate {
  BinaryMask mask;
  double alpha = 1.0;
  double intensity = 0.0;
};

/// Bisection on a non-increasing alpha(intensity) over [0, hi], keeping the
/// candidate closest to the target.
template <typename Eval>
Calibration bisect(const BinaryMask& gt, const NoiseSpec& spec, double hi, Eval&& eval) {
  Candidate best{gt, 1.0, 0.0};
  auto consider = [&](double intensity) {
    BinaryMask m = eval(intensity);
    const double a = overlap_alpha(gt, m);
    if (std::abs(a - spec.alpha_target) < std::abs(best.alpha - spec.alpha_target)) {
      best = Candidate{std::move(m), a, intensity};
    }
    return a;
  };
  const double target = spec.alpha_target;
  if (std::abs(1.0 - target) > spec.tolerance / 4) {
    double lo = 0.0;
    if (consider(hi) < target) {
      for (int it = 0; it < 60 && hi - lo > 1e-9; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double a = consider(mid);
        if (std::abs(a - target) <= spec.tolerance / 4) break;
        (a > target ? lo : hi) = mid;
      }
    }
  }
  Calibration out;
  out.alpha_achieved = best.alpha;
  out.intensity = best.intensity;
  out.mask = std::move(best.mask);
  out.infeasible = std::abs(best.alpha - target) > spec.tolerance;
  return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int iterations) {
  RARUNET_CHECK(iterations >= 0, ErrorCode::kInvalidArgument, "iterations must be >= 0");
  BinaryMask out = mask;
  for (int i = 0; i < iterations; ++i) out = morph_once(out, true);
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int iterations) {
  RARUNET_CHECK(iterations >= 0, ErrorCode::kInvalidArgument, "iterations must be >= 0");
  BinaryMask out = mask;
  for (int i = 0; i < iterations; ++i) out = morph_once(out, false);
  return out;
}

BinaryMask morph_fractional(const BinaryMask& mask, NoiseKind kind, double amount,
                            std::uint64_t seed) {
  RARUNET_CHECK(kind != NoiseKind::kElastic, ErrorCode::kInvalidArgument,
                "morph_fractional takes erosion or dilation");
  RARUNET_CHECK(amount >= 0.0 && std::isfinite(amount), ErrorCode::kInvalidArgument,
                "amount must be a finite value >= 0");
  const int steps = static_cast<int>(std::floor(amount)) + 1;
  return partial_step(morph_chain(mask, kind == NoiseKind::kErosion, steps), amount, seed);
}

DisplacementField smooth_displacement(int height, int width, double sigma_e, std::uint64_t seed) {
  RARUNET_CHECK(sigma_e > 0.0, ErrorCode::kInvalidArgument, "sigma_e must be positive");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  Rng rng(seed);
  std::vector<double> dy(n), dx(n);
  for (double& v : dy) v = rng.uniform(-1.0, 1.0);
  for (double& v : dx) v = rng.uniform(-1.0, 1.0);
  const auto kernel = gaussian_kernel(sigma_e);
  return DisplacementField{height, width, smooth(dy, height, width, kernel),
                           smooth(dx, height, width, kernel)};
}

BinaryMask apply_displacement(const BinaryMask& mask, const DisplacementField& field,
                              double magnitude) {
  RARUNET_CHECK(field.height == mask.height && field.width == mask.width,
                ErrorCode::kShapeMismatch, "displacement field does not match mask size");
  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * mask.width + x;
      const double sy = std::round(y + magnitude * field.dy[i]);
      const double sx = std::round(x + magnitude * field.dx[i]);
      if (sy < 0 || sx < 0 || sy >= mask.height || sx >= mask.width) continue;
      out.set(y, x, mask.at(static_cast<int>(sy), static_cast<int>(sx)));
    }
  }
  return out;
}

BinaryMask elastic_deform(const BinaryMask& mask, double sigma_e, double magnitude,
                          std::uint64_t seed) {
  RARUNET_CHECK(magnitude >= 0.0, ErrorCode::kInvalidArgument, "magnitude must be >= 0");
  if (magnitude == 0.0) return mask;
  return apply_displacement(mask, smooth_displacement(mask.height, mask.width, sigma_e, seed),
                            magnitude);
}

double overlap_alpha(const BinaryMask& gt, const BinaryMask& noisy) {
  RARUNET_CHECK(gt.same_shape(noisy), ErrorCode::kShapeMismatch, "overlap_alpha: mask sizes differ");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    a += gt.bits[i];
    b += noisy.bits[i];
    inter += gt.bits[i] & noisy.bits[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

Calibration calibrate(const BinaryMask& gt, const NoiseSpec& spec) {
  spec.validate();
  RARUNET_CHECK(!gt.empty(), ErrorCode::kInvalidArgument, "calibrate: ground-truth mask is empty");
  const int extent = std::max(gt.height, gt.width);
  if (spec.kind == NoiseKind::kElastic) {
    const DisplacementField field = smooth_displacement(gt.height, gt.width, spec.sigma_e, spec.seed);
    return bisect(gt, spec, 4.0 * extent,
                  [&](double m) { return m == 0.0 ? gt : apply_displacement(gt, field, m); });
  }
  const auto chain = morph_chain(gt, spec.kind == NoiseKind::kErosion, extent);
  return bisect(gt, spec, static_cast<double>(chain.size() - 1),
                [&](double r) { return partial_step(chain, r, spec.seed); });
}

std::vector<CorruptionChoice> select_corruptions(const std::vector<int>& candidate_ids,
                                                 double beta, std::size_t n_kinds,
                                                 std::uint64_t seed) {
  RARUNET_CHECK(beta >= 0.0 && beta <= 1.0, ErrorCode::kInvalidArgument,
                "beta must lie in [0, 1], got " + std::to_string(beta));
  RARUNET_CHECK(n_kinds >= 1, ErrorCode::kInvalidArgument, "at least one noise kind is required");
  std::vector<int> ids = candidate_ids;
  std::sort(ids.begin(), ids.end());
  const auto count = static_cast<std::size_t>(std::floor(beta * static_cast<double>(ids.size()) + 1e-9));
  Rng rng(derive_seed(seed, "select"));
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
  }
  std::vector<CorruptionChoice> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({ids[i], static_cast<std::size_t>(rng.below(n_kinds))});
  }
  std::sort(out.begin(), out.end(),
            [](const CorruptionChoice& a, const CorruptionChoice& b) { return a.sample_id < b.sample_id; });
  return out;
}

}  // namespace rarunet
