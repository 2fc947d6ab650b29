#include "crl/container.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "crl/prng.hpp"

namespace crl {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'L', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(in[off])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + 3])) << 24;
}

void put_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const std::string& in, std::size_t off) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  const fs::path tmp = dir / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path + ": " + ec.message());
}

void save_container(const std::string& path, const Container& c) {
  std::string payload;
  for (const auto& a : c.arrays) {
    if (numel(a.shape) != static_cast<std::int64_t>(a.data.size()))
      throw std::invalid_argument("array '" + a.name + "' shape " + shape_str(a.shape) +
                                  " does not match data length");
    for (double v : a.data) put_f64_le(payload, v);
  }

  nlohmann::json header;
  header["kind"] = c.kind;
  header["meta"] = c.meta;
  header["arrays"] = nlohmann::json::array();
  for (const auto& a : c.arrays)
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
  header["data_hash"] = hash_hex(fnv1a(payload.data(), payload.size()));
  const std::string header_str = header.dump();

  std::string blob;
  blob.append(kMagic, 4);
  put_u32(blob, kContainerVersion);
  put_u32(blob, static_cast<std::uint32_t>(header_str.size()));
  blob += header_str;
  blob += payload;
  atomic_write_text(path, blob);
}

Container load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < 12) throw ContainerCorruptError(path + ": truncated header");
  if (std::memcmp(blob.data(), kMagic, 4) != 0)
    throw ContainerFormatError(path + ": bad magic bytes");
  const std::uint32_t version = get_u32(blob, 4);
  if (version != kContainerVersion)
    throw ContainerVersionError(path + ": unsupported container version " +
                                std::to_string(version));
  const std::uint32_t header_len = get_u32(blob, 8);
  if (blob.size() < 12 + static_cast<std::size_t>(header_len))
    throw ContainerCorruptError(path + ": truncated JSON header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ContainerCorruptError(path + ": unreadable header: " + std::string(e.what()));
  }

  Container c;
  c.kind = header.value("kind", "");
  c.meta = header.value("meta", nlohmann::json::object());

  const std::string payload = blob.substr(12 + header_len);
  const std::string expect_hash = header.value("data_hash", "");
  if (hash_hex(fnv1a(payload.data(), payload.size())) != expect_hash)
    throw ContainerCorruptError(path + ": payload hash mismatch");

  std::size_t poff = 0;
  for (const auto& ja : header.at("arrays")) {
    NamedArray a;
    a.name = ja.at("name").get<std::string>();
    a.shape = ja.at("shape").get<Shape>();
    const std::size_t n = static_cast<std::size_t>(numel(a.shape));
    if (poff + 8 * n > payload.size())
      throw ContainerCorruptError(path + ": truncated payload for array '" + a.name + "'");
    a.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.data[i] = get_f64_le(payload, poff + 8 * i);
    poff += 8 * n;
    c.arrays.push_back(std::move(a));
  }
  if (poff != payload.size())
    throw ContainerCorruptError(path + ": trailing bytes after declared arrays");
  return c;
}

}  // namespace crl
