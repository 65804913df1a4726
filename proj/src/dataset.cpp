#include "rarunet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rarunet {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- files ----------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  RARUNET_CHECK(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  RARUNET_CHECK(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  RARUNET_CHECK(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

// ---- PGM ------------------------------------------------------------------

std::string encode_pgm(const GrayImage& image) {
  RARUNET_CHECK(image.height > 0 && image.width > 0 &&
                    image.pixels.size() == static_cast<std::size_t>(image.height) * image.width,
                ErrorCode::kInvalidArgument, "encode_pgm: image has inconsistent dimensions");
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

namespace {

/// Reads one whitespace/comment separated decimal header field.
int header_int(std::string_view bytes, std::size_t& pos, const char* what) {
  while (pos < bytes.size()) {
    const unsigned char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(c)) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  long value = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos] - '0');
    RARUNET_CHECK(value <= 1 << 20, ErrorCode::kFormat,
                  std::string("pgm: malformed header, ") + what + " too large");
    ++pos;
  }
  RARUNET_CHECK(pos > start, ErrorCode::kFormat, std::string("pgm: malformed header, missing ") + what);
  return static_cast<int>(value);
}

}  // namespace

GrayImage decode_pgm(std::string_view bytes) {
  RARUNET_CHECK(bytes.size() >= 2, ErrorCode::kFormat, "pgm: malformed header, file too short");
  const std::string_view magic = bytes.substr(0, 2);
  RARUNET_CHECK(magic != "P2", ErrorCode::kFormat, "pgm: unsupported format P2 (ASCII); expected binary P5");
  RARUNET_CHECK(magic == "P5", ErrorCode::kFormat, "pgm: wrong magic, expected P5");
  std::size_t pos = 2;
  RARUNET_CHECK(pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])),
                ErrorCode::kFormat, "pgm: malformed header after magic");
  const int width = header_int(bytes, pos, "width");
  const int height = header_int(bytes, pos, "height");
  const int maxval = header_int(bytes, pos, "maxval");
  RARUNET_CHECK(width > 0 && height > 0, ErrorCode::kFormat, "pgm: malformed header, zero dimension");
  RARUNET_CHECK(maxval == 255, ErrorCode::kFormat,
                "pgm: unsupported maxval " + std::to_string(maxval) + ", expected 255");
  RARUNET_CHECK(pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])),
                ErrorCode::kFormat, "pgm: malformed header, missing separator before payload");
  ++pos;
  const std::size_t expected = static_cast<std::size_t>(width) * height;
  RARUNET_CHECK(bytes.size() - pos >= expected, ErrorCode::kFormat,
                "pgm: truncated payload, expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(bytes.size() - pos));
  GrayImage img(height, width);
  std::copy_n(bytes.data() + pos, expected, reinterpret_cast<char*>(img.pixels.data()));
  return img;
}

void write_pgm(const fs::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }

GrayImage read_pgm(const fs::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFormat) throw;
    fail(ErrorCode::kFormat, std::string(e.what()) + " in " + path.string());
  }
}

GrayImage mask_to_image(const BinaryMask& mask) {
  GrayImage img(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  return img;
}

BinaryMask image_to_mask(const GrayImage& image) {
  BinaryMask m(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const auto v = image.pixels[i];
    RARUNET_CHECK(v == 0 || v == 255, ErrorCode::kFormat,
                  "mask pixel value " + std::to_string(v) + " is neither 0 nor 255");
    m.bits[i] = v == 255;
  }
  return m;
}

void write_mask(const fs::path& path, const BinaryMask& mask) { write_pgm(path, mask_to_image(mask)); }

BinaryMask read_mask(const fs::path& path) { return image_to_mask(read_pgm(path)); }

// ---- manifest -------------------------------------------------------------

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "' (expected train, val or test)");
}

void Manifest::validate() const {
  std::set<int> ids;
  for (const auto& r : records) {
    RARUNET_CHECK(ids.insert(r.sample_id).second, ErrorCode::kFormat,
                  "manifest: duplicate sample_id " + std::to_string(r.sample_id));
    RARUNET_CHECK(!(r.split == Split::kTest && r.corrupted), ErrorCode::kFormat,
                  "manifest: test sample " + std::to_string(r.sample_id) + " is marked corrupted");
    RARUNET_CHECK(!r.corrupted || r.original_mask_path, ErrorCode::kFormat,
                  "manifest: corrupted sample " + std::to_string(r.sample_id) + " lacks original_mask_path");
  }
}

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json record_to_json(const ManifestRecord& r) {
  return json{{"sample_id", r.sample_id},
              {"split", std::string(to_string(r.split))},
              {"image_path", r.image_path},
              {"mask_path", r.mask_path},
              {"original_mask_path", optional_json(r.original_mask_path)},
              {"corrupted", r.corrupted},
              {"noise_kind", r.noise_kind ? json(std::string(to_string(*r.noise_kind))) : json(nullptr)},
              {"alpha_target", optional_json(r.alpha_target)},
              {"alpha_achieved", optional_json(r.alpha_achieved)},
              {"infeasible", r.infeasible}};
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

ManifestRecord record_from_json(const json& j) {
  ManifestRecord r;
  r.sample_id = j.at("sample_id").get<int>();
  r.split = parse_split(j.at("split").get<std::string>());
  r.image_path = j.at("image_path").get<std::string>();
  r.mask_path = j.at("mask_path").get<std::string>();
  r.original_mask_path = optional_field<std::string>(j, "original_mask_path");
  r.corrupted = j.value("corrupted", false);
  if (auto kind = optional_field<std::string>(j, "noise_kind")) r.noise_kind = parse_noise_kind(*kind);
  r.alpha_target = optional_field<double>(j, "alpha_target");
  r.alpha_achieved = optional_field<double>(j, "alpha_achieved");
  r.infeasible = j.value("infeasible", false);
  return r;
}

std::string sample_file(const char* dir, int id) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%04d.pgm", dir, id);
  return buf;
}

}  // namespace

std::string manifest_to_json(const Manifest& manifest) {
  json records = json::array();
  for (const auto& r : manifest.records) records.push_back(record_to_json(r));
  json corruption = nullptr;
  if (const auto& c = manifest.corruption) {
    json kinds = json::array();
    for (auto k : c->kinds) kinds.push_back(std::string(to_string(k)));
    corruption = json{{"alpha", c->alpha}, {"beta", c->beta}, {"kinds", kinds},
                      {"seed", c->seed},   {"sigma_e", c->sigma_e}};
  }
  json j{{"version", 1}, {"image_size", manifest.image_size}, {"corruption", corruption},
         {"records", records}};
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text, const fs::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  try {
    const json j = json::parse(text);
    RARUNET_CHECK(j.value("version", 0) == 1, ErrorCode::kFormat, "manifest: unsupported version");
    m.image_size = j.at("image_size").get<int>();
    if (j.contains("corruption") && !j.at("corruption").is_null()) {
      const json& c = j.at("corruption");
      CorruptionSettings s;
      s.alpha = c.at("alpha").get<double>();
      s.beta = c.at("beta").get<double>();
      for (const auto& k : c.at("kinds")) s.kinds.push_back(parse_noise_kind(k.get<std::string>()));
      s.seed = c.at("seed").get<std::uint64_t>();
      s.sigma_e = c.value("sigma_e", 4.0);
      m.corruption = s;
    }
    for (const auto& r : j.at("records")) m.records.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  write_file(path, manifest_to_json(manifest));
}

Manifest load_manifest(const fs::path& path) {
  Manifest m = manifest_from_json(read_file(path), path.parent_path());
  for (const auto& r : m.records) {
    for (const std::string* p : {&r.image_path, &r.mask_path}) {
      RARUNET_CHECK(fs::exists(m.resolve(*p)), ErrorCode::kIo,
                    "manifest references missing file " + m.resolve(*p).string());
    }
    if (r.original_mask_path) {
      RARUNET_CHECK(fs::exists(m.resolve(*r.original_mask_path)), ErrorCode::kIo,
                    "manifest references missing file " + m.resolve(*r.original_mask_path).string());
    }
  }
  return m;
}

// ---- synthetic data -------------------------------------------------------

BinaryMask render_blobs(const std::vector<Ellipse>& blobs, int size) {
  BinaryMask m(size, size);
  for (const auto& e : blobs) {
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = y - e.cy, dx = x - e.cx;
        const double u = (dx * c + dy * s) / e.rx;
        const double v = (-dx * s + dy * c) / e.ry;
        if (u * u + v * v <= 1.0) m.set(y, x, true);
      }
    }
  }
  return m;
}

std::vector<Ellipse> draw_blobs(int size, Rng& rng) {
  const double lo = size / 12.0, hi = size / 4.0;
  while (true) {
    std::vector<Ellipse> blobs(1 + rng.below(3));
    for (auto& e : blobs) {
      e.cy = rng.uniform(size / 8.0, size * 7.0 / 8.0);
      e.cx = rng.uniform(size / 8.0, size * 7.0 / 8.0);
      e.ry = rng.uniform(lo, hi);
      e.rx = rng.uniform(lo, hi);
      e.theta = rng.uniform(0.0, std::numbers::pi);
    }
    if (render_blobs(blobs, size).area() * 100 >= static_cast<std::size_t>(size) * size) return blobs;
  }
}

SyntheticSample synth_sample(int size, std::uint64_t seed, int index) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  SyntheticSample s;
  s.blobs = draw_blobs(size, rng);
  s.mask = render_blobs(s.blobs, size);
  s.image = GrayImage(size, size);
  const double two_pi = 2.0 * std::numbers::pi;
  const double fy = rng.uniform(0.5, 2.0) / size, fx = rng.uniform(0.5, 2.0) / size;
  const double phase = rng.uniform(0.0, two_pi);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // Low contrast under heavy noise: per-pixel thresholding cannot
      // separate foreground from background.
      double v = 80.0 + 20.0 * std::sin(two_pi * (fy * y + fx * x) + phase) + rng.uniform(-40.0, 40.0);
      if (s.mask.at(y, x)) v += 45.0;
      s.image.pixels[static_cast<std::size_t>(y) * size + x] =
          static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return s;
}

Manifest gen_synth(int n, int size, std::uint64_t seed, const fs::path& out_dir) {
  RARUNET_CHECK(size >= 16 && size % 16 == 0, ErrorCode::kInvalidArgument,
                "size must be a positive multiple of 16, got " + std::to_string(size));
  RARUNET_CHECK(n >= 10, ErrorCode::kInvalidArgument, "n must be >= 10, got " + std::to_string(n));

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split"));
  for (int i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const int n_val = n / 10, n_test = n / 10;
  std::vector<Split> split(n, Split::kTrain);
  for (int i = 0; i < n_val; ++i) split[order[i]] = Split::kVal;
  for (int i = n_val; i < n_val + n_test; ++i) split[order[i]] = Split::kTest;

  Manifest m;
  m.image_size = size;
  m.base_dir = out_dir;
  for (int id = 0; id < n; ++id) {
    const SyntheticSample s = synth_sample(size, seed, id);
    ManifestRecord r;
    r.sample_id = id;
    r.split = split[id];
    r.image_path = sample_file("images", id);
    r.mask_path = sample_file("masks", id);
    write_pgm(out_dir / r.image_path, s.image);
    write_mask(out_dir / r.mask_path, s.mask);
    m.records.push_back(std::move(r));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

// ---- corruption -----------------------------------------------------------

std::vector<CorruptionRecord> corrupt_dataset(Manifest& manifest, double beta, double alpha,
                                              const std::vector<NoiseKind>& kinds,
                                              std::uint64_t seed, double sigma_e) {
  RARUNET_CHECK(beta >= 0.0 && beta <= 1.0, ErrorCode::kInvalidArgument,
                "beta must lie in [0, 1], got " + std::to_string(beta));
  RARUNET_CHECK(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument,
                "alpha must lie in [0, 1], got " + std::to_string(alpha));
  RARUNET_CHECK(!kinds.empty(), ErrorCode::kInvalidArgument, "at least one noise kind is required");

  std::vector<int> train_ids;
  for (auto& r : manifest.records) {
    if (r.split != Split::kTrain) continue;
    if (r.original_mask_path) r.mask_path = *r.original_mask_path;
    r.original_mask_path.reset();
    r.corrupted = false;
    r.noise_kind.reset();
    r.alpha_target.reset();
    r.alpha_achieved.reset();
    r.infeasible = false;
    train_ids.push_back(r.sample_id);
  }
  const auto choices = select_corruptions(train_ids, beta, kinds.size(), seed);

  std::vector<CorruptionRecord> out;
  std::size_t next = 0;
  for (auto& r : manifest.records) {
    if (r.split != Split::kTrain) continue;
    while (next < choices.size() && choices[next].sample_id < r.sample_id) ++next;
    if (next == choices.size() || choices[next].sample_id != r.sample_id) {
      out.push_back({r.sample_id, std::nullopt, 1.0, 1.0, false, false});
      continue;
    }
    NoiseSpec spec;
    spec.kind = kinds[choices[next].kind_index];
    spec.alpha_target = alpha;
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(r.sample_id));
    spec.sigma_e = sigma_e;
    const BinaryMask gt = read_mask(manifest.resolve(r.mask_path));
    const Calibration cal = calibrate(gt, spec);
    const std::string noisy = sample_file("masks_noisy", r.sample_id);
    write_mask(manifest.resolve(noisy), cal.mask);
    r.original_mask_path = r.mask_path;
    r.mask_path = noisy;
    r.corrupted = true;
    r.noise_kind = spec.kind;
    r.alpha_target = alpha;
    r.alpha_achieved = cal.alpha_achieved;
    r.infeasible = cal.infeasible;
    out.push_back({r.sample_id, spec.kind, alpha, cal.alpha_achieved, true, cal.infeasible});
  }
  manifest.corruption = CorruptionSettings{alpha, beta, kinds, seed, sigma_e};
  return out;
}

// ---- loading --------------------------------------------------------------

std::vector<Sample> load_samples(const Manifest& manifest, Split split, bool ground_truth) {
  std::vector<Sample> out;
  for (const auto& r : manifest.records) {
    if (r.split != split) continue;
    const GrayImage img = read_pgm(manifest.resolve(r.image_path));
    BinaryMask mask = read_mask(manifest.resolve(ground_truth ? manifest.ground_truth_mask(r)
                                                              : manifest.training_mask(r)));
    RARUNET_CHECK(img.height == img.width && mask.height == img.height && mask.width == img.width,
                  ErrorCode::kShapeMismatch,
                  "sample " + std::to_string(r.sample_id) + ": image and mask must be square and equal in size");
    Sample s;
    s.id = r.sample_id;
    s.size = img.width;
    s.image.resize(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) s.image[i] = img.pixels[i] / 255.0f;
    s.mask = std::move(mask);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rarunet
