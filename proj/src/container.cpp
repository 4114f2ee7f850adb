#include "soad/container.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cstring>
#include <fstream>
#include <sstream>

#include "soad/errors.hpp"

namespace soad {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("container: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string get_string(std::istream& in, std::uint64_t len) {
  if (len > (1ULL << 32)) throw FormatError("container: implausible string length");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len))) throw FormatError("container: truncated string");
  return s;
}

std::filesystem::path temporary_sibling(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

}  // namespace

std::uint64_t Tensor::elements() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("container: missing tensor '" + name + "'");
}

void write_container(const std::filesystem::path& path, const Container& container) {
  if (container.magic.size() != 8) throw FormatError("container: magic must be 8 bytes");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = temporary_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("container: cannot open " + tmp.string());
    out.write(container.magic.data(), 8);
    put<std::uint32_t>(out, container.version);
    const std::string header = container.header.dump();
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(container.tensors.size()));
    for (const auto& t : container.tensors) {
      if (t.data.size() != t.elements()) throw FormatError("container: tensor '" + t.name + "' shape/data mismatch");
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) put<std::uint64_t>(out, d);
      if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(4 * t.data.size()));
      } else {
        for (float v : t.data) put<float>(out, v);
      }
    }
    if (!out.flush()) throw FormatError("container: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("container: cannot open " + path.string());
  Container c;
  c.magic = get_string(in, 8);
  if (c.magic != expected_magic)
    throw FormatError("container: " + path.string() + " has magic '" + c.magic + "', expected '" + expected_magic + "'");
  c.version = get<std::uint32_t>(in);
  if (c.version != kContainerVersion) throw FormatError("container: unsupported version " + std::to_string(c.version));
  const auto header_len = get<std::uint64_t>(in);
  try {
    c.header = nlohmann::json::parse(get_string(in, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container: bad header JSON: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = get_string(in, get<std::uint32_t>(in));
    const auto rank = get<std::uint32_t>(in);
    if (rank > 16) throw FormatError("container: implausible tensor rank");
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint64_t>(in));
    const auto n = t.elements();
    if (n > (1ULL << 34)) throw FormatError("container: implausible tensor size");
    t.data.resize(n);
    if constexpr (std::endian::native == std::endian::little) {
      if (n && !in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(4 * n)))
        throw FormatError("container: truncated tensor '" + t.name + "'");
    } else {
      for (auto& v : t.data) v = get<float>(in);
    }
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = temporary_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string());
    out << text;
    if (!out.flush()) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace soad
