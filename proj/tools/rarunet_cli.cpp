// rarunet command-line front end: dataset generation, label corruption,
// training, evaluation, parameter accounting and gradient checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rarunet/checkpoint.hpp"
#include "rarunet/config.hpp"
#include "rarunet/dataset.hpp"
#include "rarunet/gradsuite.hpp"
#include "rarunet/metrics.hpp"
#include "rarunet/train.hpp"

namespace fs = std::filesystem;
using namespace rarunet;
using nlohmann::json;

namespace {

bool parse_toggle(const std::string& flag, const std::string& value) {
  if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
  if (value == "off" || value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::kInvalidArgument, flag + " expects on/off or true/false, got '" + value + "'");
}

/// Architecture toggles shared by train and param-count.
struct ArchFlags {
  std::string config_path;
  std::string residual_encoders, residual_skips, attention, attention_mode;
  std::optional<int> base_channels;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--residual-encoders", residual_encoders, "on|off");
    cmd->add_option("--residual-skips", residual_skips, "on|off");
    cmd->add_option("--attention", attention, "on|off");
    cmd->add_option("--attention-mode", attention_mode, "learned|pooled");
    cmd->add_option("--base-channels", base_channels, "width of the first level");
  }

  RunConfig resolve() const {
    RunConfig run = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    ArchConfig& a = run.arch;
    if (!residual_encoders.empty()) a.use_residual_encoders = parse_toggle("--residual-encoders", residual_encoders);
    if (!residual_skips.empty()) a.use_residual_skips = parse_toggle("--residual-skips", residual_skips);
    if (!attention.empty()) a.use_attention_decoders = parse_toggle("--attention", attention);
    if (!attention_mode.empty()) a.attention_mode = parse_attention_mode(attention_mode);
    if (base_channels) a.base_channels = *base_channels;
    a.validate();
    return run;
  }
};

std::vector<NoiseKind> parse_kinds(const std::string& list) {
  std::vector<NoiseKind> kinds;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_noise_kind(item));
  }
  RARUNET_CHECK(!kinds.empty(), ErrorCode::kInvalidArgument, "--kinds names no noise kind");
  return kinds;
}

void cmd_gen_synth(int n, int size, std::uint64_t seed, const std::string& out) {
  const Manifest m = gen_synth(n, size, seed, out);
  std::cout << json{{"manifest", (fs::path(out) / "manifest.json").string()},
                    {"samples", m.records.size()}}
                   .dump()
            << "\n";
}

void cmd_corrupt(const std::string& manifest_path, double beta, double alpha, const std::string& kinds,
                 std::uint64_t seed, double sigma_e, const std::string& out) {
  Manifest m = load_manifest(manifest_path);
  const auto records = corrupt_dataset(m, beta, alpha, parse_kinds(kinds), seed, sigma_e);
  const fs::path target = out.empty() ? fs::path(manifest_path) : fs::path(out);
  if (!out.empty()) {
    // Keep the relative paths valid from the new location.
    RARUNET_CHECK(fs::absolute(target).parent_path() == fs::absolute(manifest_path).parent_path(),
                  ErrorCode::kInvalidArgument, "--out must be in the same directory as --manifest");
  }
  save_manifest(m, target);
  std::size_t corrupted = 0, infeasible = 0;
  for (const auto& r : records) {
    corrupted += r.corrupted;
    infeasible += r.infeasible;
  }
  std::cout << json{{"manifest", target.string()}, {"corrupted", corrupted}, {"infeasible", infeasible}}.dump()
            << "\n";
}

struct TrainFlags {
  std::string manifest, out, adl, augment;
  std::optional<int> epochs, batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  ArchFlags arch;
};

void cmd_train(const TrainFlags& f) {
  RunConfig run = f.arch.resolve();
  const Manifest m = load_manifest(f.manifest);
  TrainConfig cfg = run.train;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.seed) cfg.seed = *f.seed;
  if (f.lr) cfg.learning_rate = *f.lr;
  if (!f.adl.empty()) cfg.adl_enabled = parse_toggle("--adl", f.adl);
  if (!f.augment.empty()) cfg.augment = parse_toggle("--augment", f.augment);
  cfg.alpha = run.alpha.value_or(m.corruption ? m.corruption->alpha : 1.0);
  cfg.beta = run.beta.value_or(m.corruption ? m.corruption->beta : 0.0);
  cfg.validate();

  const auto train_set = load_samples(m, Split::kTrain);
  const auto val_set = load_samples(m, Split::kVal, true);
  const TrainResult result = train(cfg, run.arch, train_set, val_set, [](const EpochSummary& s) {
    std::fprintf(stderr, "epoch %d excluded %d train_loss %.6f val_dice %.6f\n", s.epoch, s.excluded,
                 s.mean_train_loss, s.val_dice);
  });

  const fs::path out(f.out);
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.bin", result.best,
                  CheckpointMeta{result.best_epoch, result.best_val_dice, cfg.seed});
  write_file(out / "ledger.csv", result.ledger.to_csv());
  json epochs = json::array();
  for (const auto& e : result.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"excluded", e.excluded},
                      {"mean_train_loss", e.mean_train_loss},
                      {"val_dice", e.val_dice}});
  }
  const json summary{{"best_epoch", result.best_epoch},
                     {"best_val_dice", result.best_val_dice},
                     {"param_count", result.best.param_count()},
                     {"epochs", epochs}};
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << json{{"checkpoint", (out / "checkpoint.bin").string()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_dice", result.best_val_dice}}
                   .dump()
            << "\n";
}

void cmd_eval(const std::string& checkpoint, const std::string& manifest_path, const std::string& split_name,
              const std::string& report_path, bool oracle_self) {
  const Manifest m = load_manifest(manifest_path);
  const Split split = parse_split(split_name);
  const auto samples = load_samples(m, split, true);
  RARUNET_CHECK(!samples.empty(), ErrorCode::kInvalidArgument, "split " + split_name + " has no samples");
  std::vector<BinaryMask> preds;
  if (oracle_self) {
    for (const auto& s : samples) preds.push_back(s.mask);
  } else {
    const Checkpoint ck = load_checkpoint(checkpoint);
    preds = predict_masks(ck.model, samples);
  }
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < samples.size(); ++i) reports.push_back(evaluate(preds[i], samples[i].mask));
  const std::string text = aggregate(reports).to_json();
  if (!report_path.empty()) write_file(report_path, text + "\n");
  std::cout << text << "\n";
}

void cmd_gradcheck(bool skip_model, double threshold) {
  const auto start = std::chrono::steady_clock::now();
  const auto outcomes = run_gradient_suite(!skip_model);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = true;
  for (const auto& o : outcomes) {
    const bool pass = o.max_rel_error < threshold;
    ok = ok && pass;
    std::cout << json{{"check", o.name}, {"max_rel_error", o.max_rel_error}, {"pass", pass}}.dump() << "\n";
  }
  std::cout << json{{"checks", outcomes.size()}, {"seconds", seconds}, {"pass", ok}}.dump() << "\n";
  RARUNET_CHECK(ok, ErrorCode::kGradient, "finite-difference check above threshold");
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAR-U-Net segmentation lab"};
  app.require_subcommand(1);

  int n = 0, size = 0;
  std::uint64_t seed = 0;
  std::string out;
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic blob dataset");
  gen->add_option("--n", n, "number of samples")->required();
  gen->add_option("--size", size, "image side, multiple of 16")->required();
  gen->add_option("--seed", seed, "generator seed")->required();
  gen->add_option("--out", out, "output directory")->required();

  std::string manifest, kinds = "erosion,dilation,elastic";
  double beta = 0.0, alpha = 1.0, sigma_e = 4.0;
  auto* corrupt = app.add_subcommand("corrupt", "replace a proportion of training masks with noisy ones");
  corrupt->add_option("--manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);
  corrupt->add_option("--beta", beta, "corrupted proportion")->required();
  corrupt->add_option("--alpha", alpha, "target Dice overlap of noisy masks")->required();
  corrupt->add_option("--kinds", kinds, "comma-separated erosion,dilation,elastic");
  corrupt->add_option("--seed", seed, "selection and noise seed")->required();
  corrupt->add_option("--sigma-e", sigma_e, "elastic smoothing in pixels");
  corrupt->add_option("--out", out, "manifest path to write (default: overwrite --manifest)");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, ledger, summary");
  train_cmd->add_option("--manifest", tf.manifest, "manifest.json")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tf.out, "output directory")->required();
  train_cmd->add_option("--adl", tf.adl, "on|off");
  train_cmd->add_option("--augment", tf.augment, "on|off");
  train_cmd->add_option("--epochs", tf.epochs, "number of epochs");
  train_cmd->add_option("--batch-size", tf.batch_size, "batch size");
  train_cmd->add_option("--seed", tf.seed, "init/shuffle seed");
  train_cmd->add_option("--lr", tf.lr, "learning rate");
  tf.arch.attach(train_cmd);

  std::string checkpoint, split = "test", report;
  bool oracle_self = false;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.bin");
  eval->add_option("--manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train|val|test");
  eval->add_option("--report", report, "MetricReport JSON output path");
  eval->add_flag("--oracle-self", oracle_self, "score ground truth against itself (debug)");

  ArchFlags pc;
  auto* param_count_cmd = app.add_subcommand("param-count", "print the trainable parameter count");
  pc.attach(param_count_cmd);

  bool skip_model = false;
  double threshold = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
  gradcheck->add_flag("--skip-model", skip_model, "only op- and block-level checks");
  gradcheck->add_option("--threshold", threshold, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) {
      cmd_gen_synth(n, size, seed, out);
    } else if (*corrupt) {
      cmd_corrupt(manifest, beta, alpha, kinds, seed, sigma_e, out);
    } else if (*train_cmd) {
      cmd_train(tf);
    } else if (*eval) {
      if (!oracle_self && checkpoint.empty()) {
        print_error("usage", "eval needs --checkpoint unless --oracle-self is given");
        return 2;
      }
      cmd_eval(checkpoint, manifest, split, report, oracle_self);
    } else if (*param_count_cmd) {
      std::cout << param_count(pc.resolve().arch) << "\n";
    } else if (*gradcheck) {
      cmd_gradcheck(skip_model, threshold);
    }
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
