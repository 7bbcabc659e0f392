#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glyphnet/model.hpp"

namespace glyphnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; byte swapping is not implemented");

/// Checkpoint problems, one subclass per failure kind so callers can react
/// (and tests can assert) on the specific cause.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct BadVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct TruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CorruptError : CheckpointError {  // integrity (CRC) or unparseable header
  using CheckpointError::CheckpointError;
};
struct ManifestMismatchError : CheckpointError {
  using CheckpointError::CheckpointError;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::int64_t epochs = 0;
  bool augment = false;
};

namespace detail {

constexpr char kMagic[4] = {'G', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

inline std::uint32_t crc_of(const void* data, size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, nullptr, 0), static_cast<const Bytef*>(data),
              static_cast<uInt>(n)));
}

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct RawCheckpoint {
  nlohmann::json header;
  std::vector<char> payload;
};

/// Read and verify the container: magic, version, header CRC + JSON parse,
/// payload length and CRC. Model reconstruction happens later.
inline RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::vector<char> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr size_t kPreamble = 4 + 4 + 8 + 4;  // magic, version, header_len, header_crc
  if (file.size() < 4) throw TruncatedError("file shorter than its magic: " + path.string());
  if (std::memcmp(file.data(), kMagic, 4) != 0)
    throw BadMagicError("not a checkpoint (bad magic): " + path.string());
  if (file.size() < kPreamble)
    throw TruncatedError("file ends inside the fixed preamble: " + path.string());

  std::uint32_t version;
  std::memcpy(&version, file.data() + 4, 4);
  if (version != kVersion)
    throw BadVersionError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kVersion) + "): " + path.string());

  std::uint64_t header_len;
  std::memcpy(&header_len, file.data() + 8, 8);
  if (header_len > (1ull << 24))
    throw CorruptError("implausible header length " + std::to_string(header_len) + ": " +
                       path.string());
  std::uint32_t header_crc;
  std::memcpy(&header_crc, file.data() + 16, 4);
  if (file.size() < kPreamble + header_len)
    throw TruncatedError("file ends inside the header: " + path.string());

  const char* header_bytes = file.data() + kPreamble;
  if (crc_of(header_bytes, header_len) != header_crc)
    throw CorruptError("header failed integrity check: " + path.string());

  RawCheckpoint raw;
  try {
    raw.header = nlohmann::json::parse(header_bytes, header_bytes + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptError("header is not valid JSON (" + std::string(e.what()) + "): " +
                       path.string());
  }
  if (!raw.header.contains("payload_bytes") || !raw.header.contains("payload_crc") ||
      !raw.header.contains("tensors") || !raw.header.contains("arch"))
    throw CorruptError("header is missing required fields: " + path.string());

  const auto payload_bytes = raw.header["payload_bytes"].get<std::uint64_t>();
  if (file.size() != kPreamble + header_len + payload_bytes)
    throw TruncatedError("payload length mismatch (header says " +
                         std::to_string(payload_bytes) + " bytes): " + path.string());
  raw.payload.assign(file.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len),
                     file.end());
  if (crc_of(raw.payload.data(), raw.payload.size()) !=
      raw.header["payload_crc"].get<std::uint32_t>())
    throw CorruptError("payload failed integrity check: " + path.string());
  return raw;
}

}  // namespace detail

/// Serialize a trained model: `GNET` magic, u32 version, u64 header length,
/// u32 header CRC, a JSON header (architecture, provenance, tensor manifest,
/// payload CRC), then all parameter and running-stat tensors as little-endian
/// float32 in manifest order. The file is written to a temporary name and
/// renamed into place on success.
inline void save_checkpoint(const ModelGraph<float>& model, const Provenance& prov,
                            const std::filesystem::path& path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<const Tensor<float>*> tensors;
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Tensor<float>& t) {
    manifest.push_back({{"name", name},
                        {"shape", t.shape()},
                        {"offset", offset},
                        {"count", t.numel()}});
    tensors.push_back(&t);
    offset += static_cast<std::uint64_t>(t.numel());
  };
  for (const auto& p : model.store().params) add(p->name, p->value);
  for (const auto& [name, buf] : model.store().buffers) add(name, *buf);

  std::string payload;
  payload.reserve(offset * 4);
  for (const auto* t : tensors)
    payload.append(reinterpret_cast<const char*>(t->data()),
                   static_cast<size_t>(t->numel()) * 4);

  nlohmann::json header{
      {"arch",
       {{"kind", std::string(1, kind_letter(model.kind()))},
        {"classes", model.classes()},
        {"input_h", model.input_h()},
        {"input_w", model.input_w()}}},
      {"provenance",
       {{"seed", prov.seed}, {"epochs", prov.epochs}, {"augment", prov.augment}}},
      {"tensors", std::move(manifest)},
      {"payload_bytes", payload.size()},
      {"payload_crc", detail::crc_of(payload.data(), payload.size())}};
  const std::string header_str = header.dump();

  std::string out;
  out.append(detail::kMagic, 4);
  detail::put_le(out, detail::kVersion);
  detail::put_le(out, static_cast<std::uint64_t>(header_str.size()));
  detail::put_le(out, detail::crc_of(header_str.data(), header_str.size()));
  out += header_str;
  out += payload;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  ModelGraph<float> model;
  Provenance provenance;
};

/// Rebuild the model a checkpoint describes and restore every tensor. The
/// manifest must agree exactly — same names, order, shapes, and contiguous
/// offsets — with the registry of a freshly built model of that architecture.
inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto raw = detail::read_raw(path);
  ModelKind kind;
  int classes, in_h, in_w;
  Provenance prov;
  try {
    const auto& arch = raw.header.at("arch");
    kind = parse_kind(arch.at("kind").get<std::string>());
    classes = arch.at("classes").get<int>();
    in_h = arch.at("input_h").get<int>();
    in_w = arch.at("input_w").get<int>();
    const auto& p = raw.header.at("provenance");
    prov.seed = p.at("seed").get<std::uint64_t>();
    prov.epochs = p.at("epochs").get<std::int64_t>();
    prov.augment = p.at("augment").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptError("malformed header fields (" + std::string(e.what()) + "): " +
                       path.string());
  } catch (const std::invalid_argument& e) {
    throw CorruptError("header names an unknown architecture (" + std::string(e.what()) +
                       "): " + path.string());
  }

  LoadedCheckpoint out = [&] {
    try {
      return LoadedCheckpoint{ModelGraph<float>(kind, classes, in_h, in_w, prov.seed), prov};
    } catch (const std::invalid_argument& e) {
      throw CorruptError("header describes an unbuildable architecture (" +
                         std::string(e.what()) + "): " + path.string());
    }
  }();
  auto& store = out.model.store();

  std::vector<std::pair<std::string, Tensor<float>*>> expect;
  for (const auto& p : store.params) expect.emplace_back(p->name, &p->value);
  for (const auto& [name, buf] : store.buffers) expect.emplace_back(name, buf.get());

  const auto& manifest = raw.header.at("tensors");
  if (!manifest.is_array() || manifest.size() != expect.size())
    throw ManifestMismatchError("manifest lists " + std::to_string(manifest.size()) +
                                " tensors, architecture has " +
                                std::to_string(expect.size()) + ": " + path.string());
  std::uint64_t offset = 0;
  for (size_t i = 0; i < expect.size(); ++i) {
    const auto& entry = manifest[i];
    std::string name;
    Shape shape;
    std::uint64_t eoffset, count;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      eoffset = entry.at("offset").get<std::uint64_t>();
      count = entry.at("count").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CorruptError("malformed manifest entry (" + std::string(e.what()) + "): " +
                         path.string());
    }
    Tensor<float>* dst = expect[i].second;
    if (name != expect[i].first || shape != dst->shape() ||
        count != static_cast<std::uint64_t>(dst->numel()) || eoffset != offset)
      throw ManifestMismatchError("manifest entry '" + name + "' does not match tensor '" +
                                  expect[i].first + "' of the " +
                                  std::string(1, kind_letter(kind)) + " architecture: " +
                                  path.string());
    if ((offset + count) * 4 > raw.payload.size())
      throw ManifestMismatchError("manifest points past the payload: " + path.string());
    std::memcpy(dst->data(), raw.payload.data() + offset * 4, count * 4);
    offset += count;
  }
  if (offset * 4 != raw.payload.size())
    throw ManifestMismatchError("payload holds " + std::to_string(raw.payload.size() / 4) +
                                " values, manifest consumes " + std::to_string(offset) + ": " +
                                path.string());
  return out;
}

/// Verified header for `inspect`: all integrity checks run, nothing restored.
inline nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  return detail::read_raw(path).header;
}

}  // namespace glyphnet
