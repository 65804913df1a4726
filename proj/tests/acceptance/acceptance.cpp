// Acceptance suite. Prints one line per criterion:
//   [PASS] C<n> <title> | <measurements>
// Usage: acceptance --cli <path to rarunet> [criterion numbers...]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rarunet/arch.hpp"
#include "rarunet/checkpoint.hpp"
#include "rarunet/dataset.hpp"
#include "rarunet/gradsuite.hpp"
#include "rarunet/metrics.hpp"
#include "rarunet/noise.hpp"
#include "rarunet/ops.hpp"
#include "rarunet/train.hpp"
#include "unit/mask_oracles.hpp"

using namespace rarunet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rarunet_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string cli_path;

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = Clock::now();
  const auto outcomes = run_gradient_suite(true);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& o : outcomes) {
    if (!(o.max_rel_error <= worst)) {
      worst = o.max_rel_error;
      worst_name = o.name;
    }
  }
  return {worst < 1e-4 && elapsed < 120.0,
          fmt("%zu checks, worst %.3e (%s), %.1f s", outcomes.size(), worst, worst_name.c_str(), elapsed)};
}

Outcome metric_oracle() {
  const auto start = Clock::now();
  Rng rng(20240601);
  double worst = 0.0;
  int definedness_mismatch = 0, counting_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(16)), w = 1 + static_cast<int>(rng.below(16));
    const auto draw = [&] {
      switch (rng.below(3)) {
        case 0: return oracle::random_mask(h, w, rng, rng.uniform());
        case 1: return oracle::random_blocky_mask(h, w, rng);
        default: return BinaryMask(h, w);
      }
    };
    const BinaryMask pred = draw(), gt = draw();
    const MetricReport r = evaluate(pred, gt);
    const auto ref = oracle::metrics(pred, gt);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (r.values[i].has_value() != ref[i].has_value()) {
        ++definedness_mismatch;
        continue;
      }
      if (!ref[i]) continue;
      const double diff = std::abs(*r.values[i] - *ref[i]);
      worst = std::max(worst, diff);
      const bool counting = i <= 5 || i == 8;
      if (counting && *r.values[i] != *ref[i]) ++counting_mismatch;
    }
  }
  const double elapsed = seconds_since(start);
  return {definedness_mismatch == 0 && counting_mismatch == 0 && worst <= 1e-9 && elapsed < 60.0,
          fmt("1000 pairs, max diff %.3e, inexact counting metrics %d, definedness mismatches %d, %.2f s", worst,
              counting_mismatch, definedness_mismatch, elapsed)};
}

// Direct evaluation of the piecewise schedule, written independently of the
// library in long double.
long double reference_raw(long double t, long double alpha, long double beta, int x, int y) {
  const long double h1 = 0.1L, h2 = 0.5L, k = (1 - alpha) * beta;
  if (t <= h1 * k * x) return h2 * k * y;
  if (t <= h2 * k * x) return -static_cast<long double>(y) / x * t + (h1 + h2) * k * y;
  return h1 * k * y;
}

int reference_n(int t, long double alpha, long double beta, int x, int y) {
  if ((1 - alpha) * beta == 0) return 0;
  const long double v = std::floor(reference_raw(t, alpha, beta, x, y) + 1e-9L);
  return static_cast<int>(std::clamp<long double>(v, 0, y - 1));
}

Outcome schedule() {
  int value_mismatch = 0, non_monotone = 0, joint_failures = 0, zero_failures = 0, checked = 0;
  double worst_joint = 0.0;
  if (schedule_n(1, 0.68, 0.75, 50, 900) != 108) ++value_mismatch;
  if (schedule_n(6, 0.68, 0.75, 50, 900) != 21) ++value_mismatch;
  for (double alpha : {0.55, 0.68, 0.77, 0.85}) {
    for (double beta : {0.25, 0.5, 0.75}) {
      for (int y : {100, 900}) {
        const int x = 50;
        int prev = y;
        for (int t = 1; t <= x; ++t) {
          const int n = schedule_n(t, alpha, beta, x, y);
          ++checked;
          if (n != reference_n(t, alpha, beta, x, y)) ++value_mismatch;
          if (n > prev) ++non_monotone;
          prev = n;
          if (schedule_n(t, 1.0, beta, x, y) != 0 || schedule_n(t, alpha, 0.0, x, y) != 0) ++zero_failures;
        }
        const double k = (1 - alpha) * beta;
        for (double joint : {0.1 * k * x, 0.5 * k * x}) {
          const auto b = schedule_branches(joint, alpha, beta, x, y, 0.1, 0.5);
          const double left = joint == 0.1 * k * x ? b[0] : b[1];
          const double right = joint == 0.1 * k * x ? b[1] : b[2];
          const double gap = std::abs(left - right);
          worst_joint = std::max(worst_joint, gap);
          if (gap > 1e-9 * y || std::floor(left + 1e-9) != std::floor(right + 1e-9)) ++joint_failures;
        }
      }
    }
  }
  return {value_mismatch == 0 && non_monotone == 0 && joint_failures == 0 && zero_failures == 0,
          fmt("%d grid values, mismatches %d, monotonicity violations %d, joint gap max %.2e (failures %d), "
              "zero-case failures %d",
              checked, value_mismatch, non_monotone, worst_joint, joint_failures, zero_failures)};
}

// Shared desk-scale protocol for the two training comparisons.
constexpr int kSamples = 200, kSize = 64, kEpochs = 30, kBase = 8;
constexpr std::uint64_t kDataSeed = 2024, kTrainSeed = 7;

MetricReport test_report(const Model<float>& model, const Manifest& m) {
  const auto test_set = load_samples(m, Split::kTest, true);
  const auto preds = predict_masks(model, test_set);
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < test_set.size(); ++i) reports.push_back(evaluate(preds[i], test_set[i].mask));
  return aggregate(reports);
}

TrainResult desk_train(const Manifest& m, ArchConfig arch, bool adl, double alpha, double beta) {
  arch.base_channels = kBase;
  TrainConfig cfg;
  cfg.epochs = kEpochs;
  cfg.learning_rate = 1e-3;
  cfg.seed = kTrainSeed;
  cfg.adl_enabled = adl;
  cfg.alpha = alpha;
  cfg.beta = beta;
  return train(cfg, arch, load_samples(m, Split::kTrain), load_samples(m, Split::kVal, true));
}

Outcome adl_benefit() {
  const auto start = Clock::now();
  Manifest m = gen_synth(kSamples, kSize, kDataSeed, workdir("adl"));
  corrupt_dataset(m, 0.5, 0.77, {NoiseKind::kErosion, NoiseKind::kDilation, NoiseKind::kElastic}, kDataSeed);
  const TrainResult with = desk_train(m, ArchConfig{}, true, 0.77, 0.5);
  const TrainResult without = desk_train(m, ArchConfig{}, false, 0.77, 0.5);
  const double dice_with = *test_report(with.best, m)["dice"];
  const double dice_without = *test_report(without.best, m)["dice"];
  std::size_t excluded = 0;
  for (const auto& e : with.epochs) excluded += e.excluded;
  const double elapsed = seconds_since(start);
  return {dice_with - dice_without >= 0.02 && elapsed < 45 * 60.0,
          fmt("test Dice ADL %.4f vs no ADL %.4f (gain %+.4f, need >= 0.02), %zu exclusions over %d epochs, "
              "%.0f s",
              dice_with, dice_without, dice_with - dice_without, excluded, kEpochs, elapsed)};
}

Outcome architecture_ablation() {
  const auto start = Clock::now();
  const Manifest m = gen_synth(kSamples, kSize, kDataSeed, workdir("ablation"));
  ArchConfig full, plain;
  plain.use_residual_encoders = plain.use_residual_skips = plain.use_attention_decoders = false;
  const double iou_full = *test_report(desk_train(m, full, false, 1.0, 0.0).best, m)["iou"];
  const double iou_plain = *test_report(desk_train(m, plain, false, 1.0, 0.0).best, m)["iou"];
  const double elapsed = seconds_since(start);
  return {iou_full - iou_plain > 0.005 && elapsed < 60 * 60.0,
          fmt("test IOU full %.4f vs baseline %.4f (margin %+.4f, need > 0.005), %.0f s", iou_full, iou_plain,
              iou_full - iou_plain, elapsed)};
}

Outcome parameter_accounting() {
  struct Row {
    bool enc, skip, att;
  };
  const std::array<Row, 7> rows{{{false, false, false},
                                 {false, false, true},
                                 {false, true, false},
                                 {true, false, false},
                                 {true, false, true},
                                 {true, true, false},
                                 {true, true, true}}};
  std::vector<std::size_t> counts;
  std::ostringstream detail;
  for (const auto& r : rows) {
    ArchConfig a;
    a.use_residual_encoders = r.enc;
    a.use_residual_skips = r.skip;
    a.use_attention_decoders = r.att;
    counts.push_back(param_count(a));
    if (!counts.empty() && counts.size() > 1) detail << " < ";
    detail << counts.back();
  }
  bool strict = true;
  for (std::size_t i = 1; i < counts.size(); ++i) strict = strict && counts[i - 1] < counts[i];
  detail << " | baseline " << counts.front() << " vs paper 7762465, full " << counts.back()
         << " vs paper 11794125";
  return {strict, detail.str()};
}

Outcome calibration() {
  const auto start = Clock::now();
  std::vector<BinaryMask> masks;
  for (int index = 0; masks.size() < 100; ++index) {
    BinaryMask mask = synth_sample(kSize, 99, index).mask;
    if (mask.area() >= 100) masks.push_back(std::move(mask));
  }
  const std::array<NoiseKind, 3> kinds{NoiseKind::kErosion, NoiseKind::kDilation, NoiseKind::kElastic};
  int feasible = 0, within = 0, flagged = 0, unflagged_misses = 0, wrong_flags = 0;
  std::map<double, std::pair<int, int>> per_target;
  for (double target : {0.55, 0.68, 0.77, 0.85}) {
    for (std::size_t i = 0; i < masks.size(); ++i) {
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        NoiseSpec spec;
        spec.kind = kinds[k];
        spec.alpha_target = target;
        spec.seed = derive_seed(i, static_cast<std::uint64_t>(k));
        const Calibration c = calibrate(masks[i], spec);
        const bool hit = std::abs(c.alpha_achieved - target) <= 0.03;
        if (c.infeasible) {
          ++flagged;
          wrong_flags += hit;  // a flagged case must actually miss
          continue;
        }
        ++feasible;
        within += hit;
        unflagged_misses += !hit;
        ++per_target[target].first;
        per_target[target].second += hit;
      }
    }
  }
  const double rate = feasible ? static_cast<double>(within) / feasible : 0.0;
  const double elapsed = seconds_since(start);
  std::string targets;
  for (const auto& [t, c] : per_target) targets += fmt(" %.2f:%d/%d", t, c.second, c.first);
  return {rate >= 0.95 && wrong_flags == 0 && elapsed < 120.0,
          fmt("%d/%d feasible within 0.03 (%.1f%%), %d flagged infeasible, %d inconsistent flags,%s, %.1f s",
              within, feasible, 100 * rate, flagged, wrong_flags, targets.c_str(), elapsed)};
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + cli_path + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  if (cli_path.empty()) return {false, "no --cli path given"};
  const fs::path root = workdir("pipeline");
  std::vector<std::string> failures;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    const std::string data = (dir / "data").string();
    const std::vector<std::string> steps{
        "gen-synth --n 40 --size 32 --seed 5 --out " + data,
        "corrupt --manifest " + data + "/manifest.json --beta 0.5 --alpha 0.77 --kinds erosion,dilation,elastic "
                                       "--seed 6",
        "train --manifest " + data + "/manifest.json --adl on --base-channels 4 --epochs 2 --seed 7 --lr 1e-3 "
                                     "--out " + (dir / "run").string(),
        "eval --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --manifest " + data +
            "/manifest.json --split test --report " + (dir / "report.json").string()};
    for (const auto& s : steps) {
      if (run_cli(s) != 0) failures.push_back(std::string(run) + ": " + s.substr(0, s.find(' ')));
    }
  }
  int identical = 0;
  for (const char* file : {"data/manifest.json", "run/ledger.csv", "run/checkpoint.bin", "report.json"}) {
    const fs::path a = root / "a" / file, b = root / "b" / file;
    if (fs::exists(a) && fs::exists(b) && read_file(a) == read_file(b)) {
      ++identical;
    } else {
      failures.push_back(std::string("differs: ") + file);
    }
  }

  bool forward_identical = false;
  if (fs::exists(root / "a" / "run" / "checkpoint.bin")) {
    const Checkpoint loaded = load_checkpoint(root / "a" / "run" / "checkpoint.bin");
    const fs::path resaved = root / "resaved.bin";
    save_checkpoint(resaved, loaded.model, loaded.meta);
    const Checkpoint again = load_checkpoint(resaved);
    Rng rng(3);
    Tensor<float> x = Tensor<float>::zeros({3, 1, 32, 32});
    for (float& v : x.data()) v = static_cast<float>(rng.uniform());
    const auto before = loaded.model.predict(x).to_vector();
    const auto after = again.model.predict(x).to_vector();
    forward_identical = std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0 &&
                        read_file(resaved) == read_file(root / "a" / "run" / "checkpoint.bin");
  }
  std::string detail = fmt("%d/4 artifacts byte-identical, checkpoint round-trip forward %s", identical,
                           forward_identical ? "bit-identical" : "DIFFERS");
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty() && forward_identical, detail};
}

Outcome attention_invariant() {
  Rng rng(31337);
  int magnitude = 0, sign = 0, weight_range = 0;
  double min_w = 1.0, max_w = 0.0;
  ArchConfig arch;
  arch.base_channels = 8;
  const ParamSet<double> learned = init_params<double>(arch, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 8;  // the "dec1.att" width at base 8
    const int h = 2 + static_cast<int>(rng.below(15)), w = 2 + static_cast<int>(rng.below(15));
    const double scale = std::pow(10.0, rng.uniform(-2, 1));
    Tensor<double> f = Tensor<double>::zeros({1 + static_cast<int>(rng.below(3)), c, h, w});
    for (double& v : f.data()) v = rng.uniform(-1, 1) * scale;
    Tape<double> tape(false);
    const std::array<Tensor<double>, 2> outs{blocks::attention_refine(tape, f),
                                             blocks::learned_attention_refine(tape, learned, "dec1.att", f)};
    for (const auto& out : outs) {
      for (std::size_t i = 0; i < f.numel(); ++i) {
        const double a = f.values()[i], b = out.values()[i];
        magnitude += std::abs(b) > std::abs(a);
        sign += (a > 0 && b <= 0) || (a < 0 && b >= 0) || (a == 0 && b != 0);
      }
    }
    const Tensor<double> refined = ops::mul(tape, f, blocks::spatial_attention(tape, f));
    for (const auto& weights :
         {blocks::spatial_attention(tape, f), blocks::channel_attention(tape, refined),
          blocks::learned_spatial_attention(tape, learned, "dec1.att", f),
          blocks::learned_channel_attention(
              tape, learned, "dec1.att",
              ops::mul(tape, f, blocks::learned_spatial_attention(tape, learned, "dec1.att", f)))}) {
      for (double v : weights.values()) {
        weight_range += !(v > 0.0 && v < 1.0);
        min_w = std::min(min_w, v);
        max_w = std::max(max_w, v);
      }
    }
  }
  return {magnitude == 0 && sign == 0 && weight_range == 0,
          fmt("100 tensors x {pooled, learned}: |out|>|in| %d, sign flips %d, weights outside (0,1) %d, "
              "weight range [%.4g, %.4g]",
              magnitude, sign, weight_range, min_w, max_w)};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      cli_path = argv[++i];
    } else {
      selected.push_back(std::atoi(arg.c_str()));
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"metric oracle equivalence", metric_oracle},
      {"schedule correctness", schedule},
      {"ADL benefit", adl_benefit},
      {"architecture ablation", architecture_ablation},
      {"parameter accounting", parameter_accounting},
      {"noise calibration", calibration},
      {"determinism and formats", determinism},
      {"attention invariant", attention_invariant},
  };
  if (selected.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  }
  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    const auto& [title, fn] = criteria[id - 1];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] C%d %s | %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
