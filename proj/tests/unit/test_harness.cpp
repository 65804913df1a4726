#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "rarunet/checkpoint.hpp"
#include "rarunet/config.hpp"
#include "rarunet/dataset.hpp"
#include "unit/mask_oracles.hpp"

using namespace rarunet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rarunet_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("pgm encoding") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    GrayImage img(1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(40)));
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const std::string bytes = encode_pgm(img);
    const std::string header =
        "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    CHECK(bytes.size() == header.size() + img.pixels.size());
    CHECK(bytes.compare(0, header.size(), header) == 0);
    CHECK(decode_pgm(bytes) == img);
  }
  CHECK(decode_pgm("P5 # comment\n2 1\n255\nab").pixels == std::vector<std::uint8_t>{'a', 'b'});

  const std::string ascii = error_message([] { decode_pgm("P2\n1 1\n255\n7\n"); });
  const std::string magic = error_message([] { decode_pgm("P6\n1 1\n255\nabc"); });
  const std::string header = error_message([] { decode_pgm("P5\nx 1\n255\na"); });
  const std::string truncated = error_message([] { decode_pgm("P5\n4 4\n255\nabc"); });
  CHECK(ascii.find("unsupported format P2") != std::string::npos);
  CHECK(magic.find("wrong magic") != std::string::npos);
  CHECK(header.find("malformed header") != std::string::npos);
  CHECK(truncated.find("truncated payload") != std::string::npos);
  CHECK(error_message([] { decode_pgm("P5\n1 1\n65535\nab"); }).find("maxval") != std::string::npos);
}

TEST_CASE("pgm files and masks") {
  const fs::path dir = scratch("pgm");
  BinaryMask m(3, 4);
  m.set(1, 2, true);
  write_mask(dir / "m.pgm", m);
  CHECK(read_mask(dir / "m.pgm") == m);
  CHECK(fs::file_size(dir / "m.pgm") == std::string("P5\n4 3\n255\n").size() + 12);
  GrayImage grey(2, 2);
  grey.pixels = {0, 17, 255, 3};
  write_pgm(dir / "g.pgm", grey);
  CHECK_THROWS_AS(read_mask(dir / "g.pgm"), Error);
  try {
    read_pgm(dir / "missing.pgm");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("synthetic generator") {
  const fs::path dir = scratch("synth");
  const Manifest m = gen_synth(20, 32, 7, dir / "a");
  gen_synth(20, 32, 7, dir / "b");
  REQUIRE(m.records.size() == 20);
  int counts[3] = {0, 0, 0};
  for (const auto& r : m.records) {
    ++counts[static_cast<int>(r.split)];
    CHECK(read_file(dir / "a" / r.image_path) == read_file(dir / "b" / r.image_path));
    CHECK(read_file(dir / "a" / r.mask_path) == read_file(dir / "b" / r.mask_path));
    const BinaryMask mask = read_mask(dir / "a" / r.mask_path);
    CHECK(mask.area() * 100 >= mask.size());
  }
  CHECK(counts[0] == 16);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 2);
  CHECK(read_file(dir / "a" / "manifest.json") == read_file(dir / "b" / "manifest.json"));

  // Re-render each sample's blobs with an independent inside test.
  for (int id = 0; id < 20; ++id) {
    const SyntheticSample s = synth_sample(32, 7, id);
    CHECK(s.blobs.size() >= 1);
    CHECK(s.blobs.size() <= 3);
    BinaryMask ref(32, 32);
    for (const auto& e : s.blobs) {
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          // Point in rotated ellipse via the inverse rotation matrix.
          const double py = y - e.cy, px = x - e.cx;
          const double a = std::cos(-e.theta), b = std::sin(-e.theta);
          const double u = a * px - b * py, v = b * px + a * py;
          if (u * u / (e.rx * e.rx) + v * v / (e.ry * e.ry) <= 1.0) ref.set(y, x, true);
        }
    }
    CHECK(ref == s.mask);
    CHECK(read_mask(dir / "a" / m.records[id].mask_path) == s.mask);
  }
  CHECK_THROWS_AS(gen_synth(20, 30, 1, dir / "c"), Error);
  CHECK_THROWS_AS(gen_synth(9, 32, 1, dir / "c"), Error);
}

TEST_CASE("manifest round trip and corruption") {
  const fs::path dir = scratch("corrupt");
  Manifest m = gen_synth(40, 32, 3, dir);
  const Manifest loaded = load_manifest(dir / "manifest.json");
  CHECK(manifest_to_json(loaded) == manifest_to_json(m));

  const auto records = corrupt_dataset(m, 0.5, 0.77, {NoiseKind::kErosion, NoiseKind::kDilation, NoiseKind::kElastic}, 11);
  CHECK(records.size() == 32);
  std::size_t corrupted = 0;
  for (const auto& r : records) corrupted += r.corrupted;
  CHECK(corrupted == 16);
  for (const auto& r : m.records) {
    if (r.split == Split::kTest) CHECK_FALSE(r.corrupted);
    if (!r.corrupted) continue;
    REQUIRE(r.original_mask_path);
    const BinaryMask gt = read_mask(m.resolve(*r.original_mask_path));
    const BinaryMask noisy = read_mask(m.resolve(r.mask_path));
    CHECK(overlap_alpha(gt, noisy) == doctest::Approx(*r.alpha_achieved).epsilon(1e-12));
    if (!r.infeasible) CHECK(std::abs(*r.alpha_achieved - 0.77) <= 0.03);
  }
  save_manifest(m, dir / "manifest.json");
  const std::string first = read_file(dir / "manifest.json");
  Manifest again = load_manifest(dir / "manifest.json");
  corrupt_dataset(again, 0.5, 0.77, {NoiseKind::kErosion, NoiseKind::kDilation, NoiseKind::kElastic}, 11);
  CHECK(manifest_to_json(again) == first);

  Manifest none = load_manifest(dir / "manifest.json");
  for (const auto& r : corrupt_dataset(none, 0.0, 0.77, {NoiseKind::kErosion}, 1)) CHECK_FALSE(r.corrupted);
  CHECK_THROWS_AS(corrupt_dataset(none, 1.5, 0.77, {NoiseKind::kErosion}, 1), Error);

  const auto train = load_samples(again, Split::kTrain);
  const auto truth = load_samples(again, Split::kTrain, true);
  REQUIRE(train.size() == 32);
  int differing = 0;
  for (std::size_t i = 0; i < train.size(); ++i) differing += !(train[i].mask == truth[i].mask);
  CHECK(differing > 0);
  CHECK(train[0].image.size() == 32u * 32u);

  CHECK_THROWS_AS(manifest_from_json(R"({"version": 1, "image_size": 16, "records": [
      {"sample_id": 1, "split": "train", "image_path": "a", "mask_path": "b"},
      {"sample_id": 1, "split": "val", "image_path": "c", "mask_path": "d"}]})", dir),
                  Error);
  CHECK_THROWS_AS(manifest_from_json(R"({"version": 1, "image_size": 16, "records": [
      {"sample_id": 1, "split": "test", "image_path": "a", "mask_path": "b", "corrupted": true,
       "original_mask_path": "c"}]})", dir),
                  Error);
}

TEST_CASE("run config parsing") {
  const RunConfig empty = parse_run_config("{}");
  CHECK(empty.arch == ArchConfig{});
  CHECK_FALSE(empty.alpha);
  const RunConfig r = parse_run_config(R"({"arch": {"base_channels": 8, "attention": false,
      "attention_mode": "pooled"}, "train": {"epochs": 3, "adl": true, "alpha": 0.77,
      "optimizer": "sgd", "learning_rate": 0.001}})");
  CHECK(r.arch.base_channels == 8);
  CHECK_FALSE(r.arch.use_attention_decoders);
  CHECK(r.arch.attention_mode == AttentionMode::kPooled);
  CHECK(r.train.epochs == 3);
  CHECK(r.train.adl_enabled);
  CHECK(*r.alpha == 0.77);
  CHECK(r.train.optimizer.kind == OptimizerKind::kSgd);

  const std::string typo = error_message([] { parse_run_config(R"({"arch": {"base_chanels": 8}})"); });
  CHECK(typo.find("base_chanels") != std::string::npos);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {}})"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": 0}})"), Error);
  CHECK_THROWS_AS(parse_run_config("{not json"), Error);

  ArchConfig a;
  a.base_channels = 4;
  a.use_residual_skips = false;
  CHECK(arch_from_json(arch_to_json(a)) == a);
}

TEST_CASE("checkpoint format") {
  ArchConfig a;
  a.base_channels = 2;
  auto model = build_model<float>(a, 21);
  const CheckpointMeta meta{4, 0.8125, 21};
  const std::string bytes = encode_checkpoint(model, meta);

  // Closed-form size of the layout.
  const std::string config_json =
      std::string(bytes.data() + 12, *reinterpret_cast<const std::uint32_t*>(bytes.data() + 8));
  std::size_t expected = 4 + 4 + 4 + config_json.size() + 4;
  for (const auto& [name, entry] : model.params()) {
    expected += 2 + name.size() + 1 + 4 * entry.value.rank() + 4 * entry.value.numel();
  }
  CHECK(bytes.size() == expected);
  CHECK(bytes.compare(0, 4, "RARU") == 0);
  CHECK(config_json.find("\"meta\"") != std::string::npos);

  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.meta == meta);
  CHECK(back.model.config() == a);
  CHECK(back.model.params().bit_identical(model.params()));
  CHECK(encode_checkpoint(back.model, back.meta) == bytes);

  Rng rng(2);
  Tensor<float> x = Tensor<float>::zeros({2, 1, 16, 16});
  for (float& v : x.data()) v = static_cast<float>(rng.uniform());
  const auto before = model.predict(x).values();
  const auto after = back.model.predict(x).values();
  CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK(error_message([&] { decode_checkpoint(bad); }).find("magic") != std::string::npos);
  bad = bytes;
  bad[4] = 9;
  CHECK(error_message([&] { decode_checkpoint(bad); }).find("version") != std::string::npos);
  CHECK(error_message([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); }).find("truncated") !=
        std::string::npos);
  CHECK(error_message([&] { decode_checkpoint(bytes + "zz"); }).find("trailing") != std::string::npos);

  // A config that implies different wiring than the stored tensors.
  ArchConfig other = a;
  other.use_attention_decoders = false;
  const std::string other_bytes = encode_checkpoint(build_model<float>(other, 1), meta);
  const std::uint32_t other_len = *reinterpret_cast<const std::uint32_t*>(other_bytes.data() + 8);
  const std::uint32_t len = *reinterpret_cast<const std::uint32_t*>(bytes.data() + 8);
  const std::string spliced = other_bytes.substr(0, 12 + other_len) + bytes.substr(12 + len);
  try {
    decode_checkpoint(spliced);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }

  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "m.bin", model, meta);
  CHECK(read_file(dir / "m.bin") == bytes);
  CHECK(load_checkpoint(dir / "m.bin").model.params().bit_identical(model.params()));
}
