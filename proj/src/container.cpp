#include "scp/container.hpp"

#include <cstring>

#include "scp/error.hpp"

namespace scp {

namespace {

template <typename T>
void put(std::vector<std::byte>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return value;
  }

  std::span<const std::byte> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("container truncated");
  }
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NpyArray& Container::array(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return a;
  }
  throw FormatError("container lacks array '" + name + "'");
}

std::vector<std::byte> encode_container(const Magic& magic, std::uint32_t version, const Container& container) {
  std::vector<std::byte> out;
  for (char ch : magic) out.push_back(static_cast<std::byte>(ch));
  put<std::uint32_t>(out, version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(container.metadata.size()));
  for (char ch : container.metadata) out.push_back(static_cast<std::byte>(ch));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(container.arrays.size()));
  for (const auto& [name, array] : container.arrays) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    for (char ch : name) out.push_back(static_cast<std::byte>(ch));
    const auto blob = encode_npy(array);
    put<std::uint64_t>(out, blob.size());
    out.insert(out.end(), blob.begin(), blob.end());
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

Container decode_container(const Magic& magic, std::uint32_t version, std::span<const std::byte> bytes) {
  if (bytes.size() < magic.size() + 4 || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError("unrecognised container magic");
  }
  if (bytes.size() < 4) throw FormatError("container truncated");
  const auto body = bytes.first(bytes.size() - 4);
  Cursor trailer(bytes.last(4));
  if (trailer.get<std::uint32_t>() != crc32_of(body)) throw FormatError("container checksum mismatch (corrupted payload)");

  Cursor cur(body);
  cur.take(magic.size());
  const auto found = cur.get<std::uint32_t>();
  if (found != version) {
    throw FormatError("container version " + std::to_string(found) + " is not supported (expected " +
                      std::to_string(version) + ")");
  }
  Container out;
  const auto meta = cur.take(cur.get<std::uint32_t>());
  out.metadata.assign(reinterpret_cast<const char*>(meta.data()), meta.size());
  const auto n = cur.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_bytes = cur.take(cur.get<std::uint16_t>());
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
    const auto blob_len = cur.get<std::uint64_t>();
    out.add(std::move(name), decode_npy(cur.take(static_cast<std::size_t>(blob_len))));
  }
  if (cur.position() != body.size()) throw FormatError("container has trailing bytes");
  return out;
}

}  // namespace scp
