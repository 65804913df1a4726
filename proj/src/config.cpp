#include "rarunet/config.hpp"

#include <set>

#include <json.hpp>

#include "rarunet/dataset.hpp"

namespace rarunet {

using nlohmann::json;

std::string_view to_string(AttentionMode mode) {
  return mode == AttentionMode::kLearned ? "learned" : "pooled";
}

AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "learned") return AttentionMode::kLearned;
  if (name == "pooled") return AttentionMode::kPooled;
  fail(ErrorCode::kConfig, "unknown attention_mode '" + std::string(name) + "' (expected learned or pooled)");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* section) {
  RARUNET_CHECK(j.is_object(), ErrorCode::kConfig, std::string("config: '") + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    RARUNET_CHECK(allowed.count(key), ErrorCode::kConfig,
                  std::string("config: unknown key '") + key + "' in " + section);
  }
}

template <typename T>
void read(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

json arch_json(const ArchConfig& a) {
  return json{{"in_channels", a.in_channels},
              {"out_channels", a.out_channels},
              {"base_channels", a.base_channels},
              {"depth", a.depth},
              {"skip_block_counts", a.skip_block_counts},
              {"residual_encoders", a.use_residual_encoders},
              {"residual_skips", a.use_residual_skips},
              {"attention", a.use_attention_decoders},
              {"attention_mode", std::string(to_string(a.attention_mode))},
              {"attention_reduction", a.attention_reduction},
              {"attention_kernel", a.attention_kernel}};
}

ArchConfig arch_from(const json& j) {
  reject_unknown(j,
                 {"in_channels", "out_channels", "base_channels", "depth", "skip_block_counts",
                  "residual_encoders", "residual_skips", "attention", "attention_mode",
                  "attention_reduction", "attention_kernel"},
                 "arch");
  ArchConfig a;
  read(j, "in_channels", a.in_channels);
  read(j, "out_channels", a.out_channels);
  read(j, "base_channels", a.base_channels);
  read(j, "depth", a.depth);
  read(j, "skip_block_counts", a.skip_block_counts);
  read(j, "residual_encoders", a.use_residual_encoders);
  read(j, "residual_skips", a.use_residual_skips);
  read(j, "attention", a.use_attention_decoders);
  if (j.contains("attention_mode")) a.attention_mode = parse_attention_mode(j.at("attention_mode").get<std::string>());
  read(j, "attention_reduction", a.attention_reduction);
  read(j, "attention_kernel", a.attention_kernel);
  a.validate();
  return a;
}

TrainConfig train_from(const json& j, RunConfig& run) {
  reject_unknown(j,
                 {"epochs", "batch_size", "learning_rate", "alpha", "beta", "h1", "h2", "adl",
                  "augment", "seed", "optimizer"},
                 "train");
  TrainConfig t;
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "learning_rate", t.learning_rate);
  read(j, "h1", t.h1);
  read(j, "h2", t.h2);
  read(j, "adl", t.adl_enabled);
  read(j, "augment", t.augment);
  read(j, "seed", t.seed);
  if (j.contains("alpha")) run.alpha = j.at("alpha").get<double>();
  if (j.contains("beta")) run.beta = j.at("beta").get<double>();
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    RARUNET_CHECK(name == "adam" || name == "sgd", ErrorCode::kConfig,
                  "config: optimizer must be adam or sgd, got '" + name + "'");
    t.optimizer.kind = name == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  }
  if (run.alpha) t.alpha = *run.alpha;
  if (run.beta) t.beta = *run.beta;
  t.validate();
  return t;
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig run;
  try {
    const json j = json::parse(text);
    reject_unknown(j, {"arch", "train"}, "top level");
    if (j.contains("arch")) run.arch = arch_from(j.at("arch"));
    if (j.contains("train")) run.train = train_from(j.at("train"), run);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string arch_to_json(const ArchConfig& arch) { return arch_json(arch).dump(); }

ArchConfig arch_from_json(std::string_view text) {
  try {
    return arch_from(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("arch config: ") + e.what());
  }
}

}  // namespace rarunet
