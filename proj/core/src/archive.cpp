#include "bpa/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bpa/error.hpp"

namespace bpa {
namespace {

constexpr char kMagic[8] = {'B', 'P', 'A', 'A', 'R', 'C', 'H', '1'};

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

void append_u64(std::string& out, uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

uint64_t read_u64(const std::string& in, size_t pos) {
  uint64_t v;
  std::memcpy(&v, in.data() + pos, 8);
  return v;
}

}  // namespace

void Archive::put(const std::string& name, const nn::Tensor& t) { blobs_[name] = t; }

const nn::Tensor& Archive::get(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) throw DataError("archive of kind '" + kind_ + "' has no blob '" + name + "'");
  return it->second;
}

std::string Archive::serialize() const {
  nlohmann::json header;
  header["kind"] = kind_;
  header["meta"] = meta_;
  header["blobs"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : blobs_) {
    header["blobs"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(double);
  }
  const std::string h = header.dump();
  std::string out(kMagic, 8);
  append_u64(out, h.size());
  out += h;
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : blobs_) {
    out.append(reinterpret_cast<const char*>(t.ptr()), static_cast<size_t>(t.numel()) * sizeof(double));
  }
  return out;
}

Archive Archive::deserialize(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw DataError("not a checkpoint archive");
  const uint64_t hlen = read_u64(bytes, 8);
  if (16 + hlen > bytes.size()) throw DataError("truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(bytes.substr(16, hlen));
  Archive ar(header.at("kind").get<std::string>());
  ar.meta_ = header.at("meta");
  const size_t payload = 16 + hlen;
  for (const auto& b : header.at("blobs")) {
    nn::Shape shape = b.at("shape").get<nn::Shape>();
    const uint64_t offset = b.at("offset").get<uint64_t>();
    const uint64_t count = b.at("count").get<uint64_t>();
    if (payload + offset + count * sizeof(double) > bytes.size()) throw DataError("truncated checkpoint payload");
    std::vector<double> data(count);
    std::memcpy(data.data(), bytes.data() + payload + offset, count * sizeof(double));
    ar.blobs_.emplace(b.at("name").get<std::string>(), nn::Tensor(std::move(shape), std::move(data)));
  }
  return ar;
}

void Archive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint " + tmp.string());
    const std::string bytes = serialize();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

Archive Archive::load(const std::filesystem::path& path, const std::string& expected_kind) {
  Archive ar = load(path);
  if (ar.kind() != expected_kind) {
    throw DataError("checkpoint " + path.string() + " has kind '" + ar.kind() + "', expected '" + expected_kind + "'");
  }
  return ar;
}

}  // namespace bpa
