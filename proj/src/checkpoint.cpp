#include "rarunet/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "rarunet/config.hpp"
#include "rarunet/dataset.hpp"

namespace rarunet {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U take(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    RARUNET_CHECK(remaining() >= n, ErrorCode::kFormat,
                  std::string("checkpoint: truncated while reading ") + what);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model<float>& model, const CheckpointMeta& meta) {
  const json config{{"arch", json::parse(arch_to_json(model.config()))},
                    {"meta", {{"epoch", meta.epoch}, {"seed", meta.seed}, {"val_dice", meta.val_dice}}}};
  const std::string text = config.dump();
  std::string out = "RARU";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, entry] : model.params()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    const Shape& shape = entry.value.shape();
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : entry.value.values()) put<float>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  RARUNET_CHECK(in.take_bytes(4, "magic") == "RARU", ErrorCode::kFormat, "checkpoint: bad magic, expected RARU");
  const auto version = in.take<std::uint32_t>("version");
  RARUNET_CHECK(version == kCheckpointVersion, ErrorCode::kFormat,
                "checkpoint: unsupported version " + std::to_string(version));
  const auto config_len = in.take<std::uint32_t>("config length");
  const std::string_view config_text = in.take_bytes(config_len, "config");

  ArchConfig arch;
  CheckpointMeta meta;
  try {
    const json config = json::parse(config_text);
    arch = arch_from_json(config.at("arch").dump());
    const json& m = config.at("meta");
    meta.epoch = m.at("epoch").get<int>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.val_dice = m.at("val_dice").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: bad config, ") + e.what());
  }

  // Allocates the expected wiring; stored values overwrite every entry.
  ParamSet<float> params = init_params<float>(arch, 0);
  const auto count = in.take<std::uint32_t>("parameter count");
  RARUNET_CHECK(count == params.size(), ErrorCode::kConfig,
                "checkpoint: " + std::to_string(count) + " parameters stored, config implies " +
                    std::to_string(params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.take<std::uint16_t>("name length");
    const std::string name(in.take_bytes(name_len, "name"));
    RARUNET_CHECK(params.contains(name), ErrorCode::kConfig,
                  "checkpoint: parameter " + name + " is not part of the stored config");
    Tensor<float>& t = params.get(name);
    const auto rank = in.take<std::uint8_t>("rank");
    Shape shape;
    for (int d = 0; d < rank; ++d) shape.push_back(static_cast<int>(in.take<std::uint32_t>("dims")));
    RARUNET_CHECK(shape == t.shape(), ErrorCode::kConfig,
                  "checkpoint: parameter " + name + " has shape " + shape_string(shape) +
                      ", config implies " + shape_string(t.shape()));
    for (float& v : t.data()) v = in.take<float>("values");
  }
  RARUNET_CHECK(in.remaining() == 0, ErrorCode::kFormat,
                "checkpoint: " + std::to_string(in.remaining()) + " unexpected trailing bytes");
  return Checkpoint{Model<float>(arch, std::move(params)), meta};
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const CheckpointMeta& meta) {
  write_file(path, encode_checkpoint(model, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    fail(e.code(), std::string(e.what()) + " (" + path.string() + ")");
  }
}

}  // namespace rarunet
