#include "scp/prior_bank.hpp"

#include <json.hpp>

#include <cstring>

#include "scp/container.hpp"
#include "scp/error.hpp"
#include "scp/npy.hpp"

namespace scp {

namespace {

constexpr Magic kBankMagic = {'S', 'C', 'P', 'B', 'A', 'N', 'K', '\n'};

template <typename T>
void expect_size(const std::vector<T>& v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw FormatError(std::string("bank array '") + name + "' has " + std::to_string(v.size()) +
                      " entries, expected " + std::to_string(n));
  }
}

std::vector<std::size_t> shape_of(std::initializer_list<int> dims) {
  std::vector<std::size_t> out;
  for (int d : dims) out.push_back(static_cast<std::size_t>(d));
  return out;
}

template <typename T>
std::vector<T> values_of(const NpyArray& a, DType dtype, const char* name) {
  if (a.dtype != dtype) throw FormatError(std::string("bank array '") + name + "' has unexpected dtype");
  std::vector<T> out(a.element_count());
  std::memcpy(out.data(), a.payload.data(), a.payload.size());
  return out;
}

}  // namespace

void PriorBank::validate() const {
  if (dims.height <= 0 || dims.width <= 0 || dims.channels <= 0 || dims.num_classes <= 0) {
    throw FormatError("bank dimensions must be positive");
  }
  const std::size_t spatial = dims.tokens() * dims.channels;
  const std::size_t classes = static_cast<std::size_t>(dims.num_classes);
  const std::size_t cells = dims.tokens() * classes;
  expect_size(spatial_mean, spatial, "spatial_mean");
  expect_size(spatial_var, spatial, "spatial_var");
  expect_size(cat_mean, classes * dims.channels, "cat_mean");
  expect_size(cat_var, classes * dims.channels, "cat_var");
  expect_size(cat_count, classes, "cat_count");
  expect_size(joint_mean, cells * dims.channels, "joint_mean");
  expect_size(joint_var, cells * dims.channels, "joint_var");
  expect_size(joint_count, cells, "joint_count");
  expect_size(fallback, cells, "fallback_flags");
  for (const auto* v : {&spatial_var, &cat_var, &joint_var}) {
    for (double x : *v) {
      if (!(x >= 0.0)) throw FormatError("bank holds a negative or non-finite variance");
    }
  }
}

std::vector<std::byte> encode_bank(const PriorBank& bank) {
  bank.validate();
  const auto& d = bank.dims;
  nlohmann::json meta = {
      {"format", "scp-prior-bank"},
      {"num_classes", d.num_classes},
      {"height", d.height},
      {"width", d.width},
      {"channels", d.channels},
      {"fallback_min_count", bank.fallback_min_count},
      {"num_records", bank.num_records},
      {"corpus_checksum", bank.corpus_checksum},
  };
  Container c;
  c.metadata = meta.dump();
  c.add("spatial_mean", NpyArray::from_values<double>(DType::f8, shape_of({d.height, d.width, d.channels}), bank.spatial_mean));
  c.add("spatial_var", NpyArray::from_values<double>(DType::f8, shape_of({d.height, d.width, d.channels}), bank.spatial_var));
  c.add("cat_mean", NpyArray::from_values<double>(DType::f8, shape_of({d.num_classes, d.channels}), bank.cat_mean));
  c.add("cat_var", NpyArray::from_values<double>(DType::f8, shape_of({d.num_classes, d.channels}), bank.cat_var));
  c.add("cat_count", NpyArray::from_values<std::uint64_t>(DType::u8, shape_of({d.num_classes}), bank.cat_count));
  const auto joint = shape_of({d.height, d.width, d.num_classes, d.channels});
  const auto cells = shape_of({d.height, d.width, d.num_classes});
  c.add("joint_mean", NpyArray::from_values<double>(DType::f8, joint, bank.joint_mean));
  c.add("joint_var", NpyArray::from_values<double>(DType::f8, joint, bank.joint_var));
  c.add("joint_count", NpyArray::from_values<std::uint64_t>(DType::u8, cells, bank.joint_count));
  c.add("fallback_flags", NpyArray::from_values<std::uint8_t>(DType::u1, cells, bank.fallback));
  return encode_container(kBankMagic, kBankFormatVersion, c);
}

PriorBank decode_bank(std::span<const std::byte> bytes) {
  const Container c = decode_container(kBankMagic, kBankFormatVersion, bytes);
  PriorBank bank;
  try {
    const auto meta = nlohmann::json::parse(c.metadata);
    bank.dims.num_classes = meta.at("num_classes").get<int>();
    bank.dims.height = meta.at("height").get<int>();
    bank.dims.width = meta.at("width").get<int>();
    bank.dims.channels = meta.at("channels").get<int>();
    bank.fallback_min_count = meta.at("fallback_min_count").get<int>();
    bank.num_records = meta.at("num_records").get<std::uint64_t>();
    bank.corpus_checksum = meta.at("corpus_checksum").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bank metadata invalid: ") + e.what());
  }
  bank.spatial_mean = values_of<double>(c.array("spatial_mean"), DType::f8, "spatial_mean");
  bank.spatial_var = values_of<double>(c.array("spatial_var"), DType::f8, "spatial_var");
  bank.cat_mean = values_of<double>(c.array("cat_mean"), DType::f8, "cat_mean");
  bank.cat_var = values_of<double>(c.array("cat_var"), DType::f8, "cat_var");
  bank.cat_count = values_of<std::uint64_t>(c.array("cat_count"), DType::u8, "cat_count");
  bank.joint_mean = values_of<double>(c.array("joint_mean"), DType::f8, "joint_mean");
  bank.joint_var = values_of<double>(c.array("joint_var"), DType::f8, "joint_var");
  bank.joint_count = values_of<std::uint64_t>(c.array("joint_count"), DType::u8, "joint_count");
  bank.fallback = values_of<std::uint8_t>(c.array("fallback_flags"), DType::u1, "fallback_flags");
  bank.validate();
  return bank;
}

void save_bank(const PriorBank& bank, const std::filesystem::path& path) {
  write_file_bytes(path, encode_bank(bank));
}

PriorBank load_bank(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_bank(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace scp
