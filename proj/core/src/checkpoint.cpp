#include "segforge/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "segforge/error.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::kTruncatedRecord,
                            std::string("checkpoint truncated record while reading ") + what);
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_record(std::string& out, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw ContractError("parameter name too long: " + name);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  put<std::uint8_t>(out, kDoublePrecision ? 1 : 0);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape().dims()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (Real v : t.data()) put<Real>(out, v);
}

}  // namespace

std::string checkpoint_bytes(const Model& model, const std::map<std::string, double>& meta) {
  nlohmann::json blob;
  blob["meta"] = nlohmann::json::object();
  for (const auto& [k, v] : meta) blob["meta"][k] = v;
  blob["model"] = nlohmann::json::parse(model.config().to_json());
  const std::string json = blob.dump();

  std::string out;
  out += "SFCK";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  const auto& store = model.store();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.parameters().size() + store.buffers().size()));
  for (const auto& p : store.parameters()) put_record(out, p.name, p.value);
  for (const auto& b : store.buffers()) put_record(out, b.name, b.value);
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::map<std::string, double>& meta) {
  const std::string bytes = checkpoint_bytes(model, meta);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError(CheckpointErrorKind::kIo, "cannot write checkpoint " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError(CheckpointErrorKind::kIo, "failed writing checkpoint " + path.string());
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != "SFCK") {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a segforge checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersionMismatch,
                          "checkpoint version mismatch: expected " + std::to_string(kCheckpointVersion) +
                              ", found " + std::to_string(version));
  }
  const auto json_len = in.get<std::uint32_t>("config length");
  const std::string json = in.take(json_len, "config");

  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, std::string("checkpoint config is not JSON: ") + e.what());
  }
  if (!blob.is_object() || !blob.contains("model")) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint config lacks a model section");
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_json(blob["model"].dump());
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, std::string("checkpoint model config: ") + e.what());
  }

  Checkpoint ckpt{Model::build(config, 0), {}};
  if (blob.contains("meta") && blob["meta"].is_object()) {
    for (auto it = blob["meta"].begin(); it != blob["meta"].end(); ++it) {
      if (it.value().is_number()) ckpt.meta[it.key()] = it.value().get<double>();
    }
  }

  auto& store = ckpt.model.store();
  const std::size_t expected = store.parameters().size() + store.buffers().size();
  const auto count = in.get<std::uint32_t>("record count");
  if (count != expected) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint has " + std::to_string(count) +
                                                               " records, model expects " + std::to_string(expected));
  }

  std::vector<bool> seen(expected, false);
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto name_len = in.get<std::uint16_t>("record name length");
    const std::string name = in.take(name_len, "record name");
    const auto dtype = in.get<std::uint8_t>("record dtype");
    const auto rank = in.get<std::uint8_t>("record rank");
    if (dtype > 1) {
      throw CheckpointError(CheckpointErrorKind::kMalformed, "record " + name + " has unknown dtype " +
                                                                 std::to_string(dtype));
    }
    if (rank > Shape::kMaxRank) {
      throw CheckpointError(CheckpointErrorKind::kMalformed, "record " + name + " has rank " + std::to_string(rank));
    }
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = in.get<std::uint32_t>("record dims");

    Tensor target;
    std::size_t slot = 0;
    for (std::size_t i = 0; i < store.parameters().size(); ++i) {
      if (store.parameters()[i].name == name) {
        target = store.parameters()[i].value;
        slot = i;
      }
    }
    if (!target.defined()) {
      for (std::size_t i = 0; i < store.buffers().size(); ++i) {
        if (store.buffers()[i].name == name) {
          target = store.buffers()[i].value;
          slot = store.parameters().size() + i;
        }
      }
    }
    if (!target.defined()) {
      throw CheckpointError(CheckpointErrorKind::kUnknownParameter, "checkpoint names unknown parameter " + name);
    }
    if (!(Shape(std::span<const std::size_t>(dims)) == target.shape())) {
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "record " + name + " has shape " + Shape(std::span<const std::size_t>(dims)).str() +
                                ", model expects " + target.shape().str());
    }
    if (seen[slot]) throw CheckpointError(CheckpointErrorKind::kMalformed, "duplicate record " + name);
    seen[slot] = true;

    auto values = target.data();
    for (auto& v : values) {
      v = dtype == 0 ? static_cast<Real>(in.get<float>("record values"))
                     : static_cast<Real>(in.get<double>("record values"));
    }
  }
  if (!in.done()) throw CheckpointError(CheckpointErrorKind::kMalformed, "trailing bytes after last record");
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_checkpoint(ss.str());
}

SEGFORGE_NAMESPACE_END
