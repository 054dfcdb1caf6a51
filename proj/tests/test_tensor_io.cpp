#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "scp/container.hpp"
#include "scp/corpus.hpp"
#include "scp/error.hpp"
#include "scp/npy.hpp"
#include "scp/tensor.hpp"
#include "test_util.hpp"

using namespace scp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SCP_TEST_DATA;

std::map<std::string, std::uint32_t> read_checksums(const fs::path& path) {
  std::map<std::string, std::uint32_t> out;
  std::ifstream in(path);
  std::string name;
  std::uint32_t crc = 0;
  while (in >> name >> crc) out[name] = crc;
  return out;
}

std::vector<std::byte> as_bytes(const std::string& s) {
  std::vector<std::byte> out(s.size());
  std::memcpy(out.data(), s.data(), s.size());
  return out;
}

NpyArray random_array(DType dtype, std::vector<std::size_t> shape, std::mt19937_64& rng) {
  NpyArray a;
  a.dtype = dtype;
  a.shape = std::move(shape);
  a.payload.resize(a.element_count() * dtype_size(dtype));
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& b : a.payload) b = static_cast<std::byte>(byte(rng));
  if (dtype == DType::b1)
    for (auto& b : a.payload) b = static_cast<std::byte>(static_cast<int>(b) & 1);
  return a;
}

}  // namespace

TEST_CASE("npy: 2x3 float32 round-trips bit for bit") {
  const std::vector<float> values{0.0f, -1.5f, 3.25f, 1e-30f, -0.0f, 7.0f};
  const auto a = NpyArray::from_values<float>(DType::f4, {2, 3}, values);
  testutil::TempDir dir("npy");
  write_array(dir / "a.npy", a);
  const auto b = read_array(dir / "a.npy");
  CHECK(b == a);
  CHECK(b.shape == std::vector<std::size_t>{2, 3});
  CHECK(encode_npy(b) == read_file_bytes(dir / "a.npy"));
}

TEST_CASE("npy: scalar and empty arrays round-trip") {
  const std::vector<double> one{3.5};
  const auto scalar = NpyArray::from_values<double>(DType::f8, {}, one);
  CHECK(decode_npy(encode_npy(scalar)) == scalar);
  CHECK(decode_npy(encode_npy(scalar)).element_count() == 1);

  const auto empty = NpyArray::from_values<std::int32_t>(DType::i4, {0, 5}, std::vector<std::int32_t>{});
  CHECK(decode_npy(encode_npy(empty)) == empty);
}

TEST_CASE("property: encode/decode are mutual inverses for every dtype and random shapes") {
  std::mt19937_64 rng(8);
  const DType dtypes[] = {DType::f4, DType::f8, DType::i1, DType::i2, DType::i4, DType::i8,
                          DType::u1, DType::u2, DType::u4, DType::u8, DType::b1};
  std::uniform_int_distribution<int> rank(0, 4), extent(0, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const DType dt = dtypes[trial % 11];
    std::vector<std::size_t> shape(static_cast<std::size_t>(rank(rng)));
    for (auto& s : shape) s = static_cast<std::size_t>(extent(rng));
    const auto a = random_array(dt, shape, rng);
    const auto bytes = encode_npy(a);
    const auto b = decode_npy(bytes);
    REQUIRE(b == a);
    REQUIRE(encode_npy(b) == bytes);
    // Header block is padded to a multiple of 64 bytes.
    const std::size_t header_len = static_cast<std::size_t>(bytes[8]) | (static_cast<std::size_t>(bytes[9]) << 8);
    REQUIRE((10 + header_len) % 64 == 0);
  }
}

TEST_CASE("npy: numpy-written fixtures decode and re-encode identically") {
  const auto sums = read_checksums(kData / "npy" / "checksums.tsv");
  REQUIRE(sums.size() == 7);
  for (const auto& [name, crc] : sums) {
    CAPTURE(name);
    const auto bytes = read_file_bytes(kData / "npy" / name);
    CHECK(crc32_of(bytes) == crc);
    CHECK(encode_npy(decode_npy(bytes)) == bytes);
  }

  const auto f4 = read_array(kData / "npy" / "f4_2x3.npy");
  CHECK(f4.dtype == DType::f4);
  CHECK(f4.to_doubles() == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0, 1.25});
  const auto f8 = read_array(kData / "npy" / "f8_vec.npy");
  CHECK(f8.to_doubles() == std::vector<double>{0.1, -2.5, 1e300, -0.0});
  const auto i4 = read_array(kData / "npy" / "i4_3d.npy");
  CHECK(i4.shape == std::vector<std::size_t>{2, 3, 4});
  CHECK(i4.to_integers().front() == -12);
  CHECK(i4.to_integers().back() == 11);
  const auto scalar = read_array(kData / "npy" / "i8_scalar.npy");
  CHECK(scalar.shape.empty());
  CHECK(scalar.to_integers() == std::vector<std::int64_t>{42});
  CHECK(read_array(kData / "npy" / "b1_flags.npy").to_integers() == std::vector<std::int64_t>{1, 0, 1});
  CHECK(read_array(kData / "npy" / "u8_empty.npy").shape == std::vector<std::size_t>{0, 4});

  const auto mask = read_mask(kData / "npy" / "u1_mask.npy");
  CHECK(mask.at(0, 2) == 255);
  CHECK(mask.ignored(0, 2));
  CHECK(mask.at(1, 2) == 4);
}

TEST_CASE("npy: version 2.0 header is accepted") {
  const auto a = read_array(kData / "npy" / "f8_v2.npy");
  CHECK(a.shape == std::vector<std::size_t>{1, 2});
  CHECK(a.to_doubles() == std::vector<double>{1.5, 2.5});
}

TEST_CASE("npy: malformed inputs are format errors") {
  const auto good = encode_npy(NpyArray::from_values<float>(DType::f4, {2, 2}, std::vector<float>{1, 2, 3, 4}));
  auto truncated = good;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_npy(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(std::byte{0});
  CHECK_THROWS_AS(decode_npy(trailing), FormatError);
  auto bad_magic = good;
  bad_magic[1] = std::byte{'X'};
  CHECK_THROWS_AS(decode_npy(bad_magic), FormatError);
  CHECK_THROWS_AS(decode_npy(std::span<const std::byte>(good.data(), 9)), FormatError);

  auto header_text = [](const std::string& dict) {
    std::string h = dict;
    while ((10 + h.size() + 1) % 64 != 0) h += ' ';
    h += '\n';
    std::string out = "\x93NUMPY";
    out += '\x01';
    out += '\x00';
    out += static_cast<char>(h.size() & 0xff);
    out += static_cast<char>(h.size() >> 8);
    return out + h;
  };
  CHECK_THROWS_AS(decode_npy(as_bytes(header_text("{'descr': '>f4', 'fortran_order': False, 'shape': (1,), }") +
                                      std::string(4, '\0'))),
                  FormatError);
  CHECK_THROWS_AS(decode_npy(as_bytes(header_text("{'descr': '<f4', 'fortran_order': True, 'shape': (1,), }") +
                                      std::string(4, '\0'))),
                  FormatError);
  CHECK_THROWS_AS(decode_npy(as_bytes(header_text("{'descr': '<c16', 'fortran_order': False, 'shape': (1,), }") +
                                      std::string(16, '\0'))),
                  FormatError);
  CHECK_THROWS_AS(decode_npy(as_bytes(header_text("{'descr': '<f4', 'fortran_order': False, }"))), FormatError);
  CHECK_THROWS_AS(read_array("/nonexistent/a.npy"), IoError);
}

TEST_CASE("latents and masks through npy") {
  std::mt19937_64 rng(9);
  testutil::TempDir dir("lat");
  auto latent = testutil::random_latent(3, 5, 4, rng);
  for (auto& v : latent.data()) v = static_cast<float>(v);  // exact at float32
  write_latent(dir / "l.npy", latent);
  CHECK(read_latent(dir / "l.npy") == latent);
  CHECK(read_array(dir / "l.npy").dtype == DType::f4);

  LabelMask small(4, 4, 3);
  small.at(0, 0) = 255;
  write_mask(dir / "m.npy", small);
  CHECK(read_array(dir / "m.npy").dtype == DType::u1);
  CHECK(read_mask(dir / "m.npy") == small);

  LabelMask wide(2, 2, 1000);
  write_mask(dir / "w.npy", wide);
  CHECK(read_array(dir / "w.npy").dtype == DType::i4);
  CHECK(read_mask(dir / "w.npy") == wide);

  const auto bad = NpyArray::from_values<double>(DType::f8, {1, 1, 1}, std::vector<double>{std::nan("")});
  CHECK_THROWS_AS(latent_from_array(bad), DataError);
  const auto flat = NpyArray::from_values<double>(DType::f8, {4}, std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS_AS(latent_from_array(flat), ShapeError);
  const auto negative = NpyArray::from_values<std::int32_t>(DType::i4, {1, 2}, std::vector<std::int32_t>{0, -1});
  CHECK_THROWS_AS(mask_from_array(negative), DataError);
}

TEST_CASE("downsample_mask: identity, 2x2 rule and errors") {
  std::mt19937_64 rng(10);
  const auto m = testutil::random_mask(6, 4, 5, rng);
  CHECK(downsample_mask(m, 6, 4) == m);

  // Center-aligned nearest pixel at factor 2 picks source index 1 on each axis.
  const LabelMask abcd(2, 2, std::vector<std::int32_t>{10, 11, 12, 13});
  CHECK(downsample_mask(abcd, 1, 1).at(0, 0) == 13);

  const LabelMask three(3, 3, std::vector<std::int32_t>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(downsample_mask(three, 1, 1).at(0, 0) == 4);

  CHECK_THROWS_AS(downsample_mask(m, 4, 4), ParameterError);
  CHECK_THROWS_AS(downsample_mask(m, 4, 3), ParameterError);
  CHECK_THROWS_AS(downsample_factor(6, 4, 3, 1), ParameterError);
  CHECK(downsample_factor(64, 32, 16, 8) == 4);
}

TEST_CASE("downsample_mask matches the index-arithmetic oracle on 512x512") {
  std::mt19937_64 rng(12);
  const auto m = testutil::random_mask(512, 512, 151, rng);
  const auto d = downsample_mask(m, 64, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      REQUIRE(d.at(y, x) == m.at(oracle::nearest_source(y, 8), oracle::nearest_source(x, 8)));
    }
  }
}

TEST_CASE("property: downsampling invents no classes and keeps the ignore id") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int f = 1 + trial % 5;
    auto m = testutil::random_mask(4 * f, 3 * f, 4, rng);
    m.at(0, 0) = 255;
    std::set<int> in(m.ids().begin(), m.ids().end());
    const auto d = downsample_mask(m, 4, 3);
    CHECK(d.ignore_id() == m.ignore_id());
    for (int id : d.ids()) REQUIRE(in.count(id) == 1);
  }
}

TEST_CASE("manifest and corpus loading") {
  std::mt19937_64 rng(14);
  testutil::TempDir dir("corpus");

  SUBCASE("empty manifest gives an empty corpus") {
    std::ofstream(dir / "empty.tsv") << "\n";
    CHECK(load_corpus(dir / "empty.tsv").empty());
  }
  SUBCASE("round trip through write_corpus") {
    auto records = testutil::random_corpus(3, 2, 3, 4, 2, 3, 15);
    for (auto& r : records)
      for (auto& v : r.latent.data()) v = static_cast<float>(v);
    write_corpus(dir.path(), "m.tsv", records);
    const auto back = load_corpus(dir / "m.tsv");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].id == records[i].id);
      CHECK(back[i].latent == records[i].latent);
      CHECK(back[i].mask == records[i].mask);
    }
    CorpusReader reader(dir / "m.tsv");
    CHECK(reader.size() == 3);
    std::size_t n = 0;
    while (reader.next()) ++n;
    CHECK(n == 3);
    CHECK(reader.checksum() != 0);
  }
  SUBCASE("a record whose mask is not a multiple of its latent is rejected by id") {
    write_latent(dir / "l.npy", LatentImage(4, 4, 2, 0.5));
    write_mask(dir / "m.npy", LabelMask(10, 10, 0));
    std::ofstream(dir / "bad.tsv") << "l.npy\tm.npy\tbroken_one\n";
    try {
      load_corpus(dir / "bad.tsv");
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("broken_one") != std::string::npos);
    }
  }
  SUBCASE("mismatched factors across axes are rejected") {
    write_latent(dir / "l.npy", LatentImage(4, 4, 2, 0.5));
    write_mask(dir / "m.npy", LabelMask(8, 16, 0));
    std::ofstream(dir / "bad.tsv") << "l.npy\tm.npy\taniso\n";
    CHECK_THROWS_AS(load_corpus(dir / "bad.tsv"), DataError);
  }
  SUBCASE("missing files are I/O errors") {
    std::ofstream(dir / "missing.tsv") << "nope.npy\tnope_mask.npy\tghost\n";
    CHECK_THROWS_AS(load_corpus(dir / "missing.tsv"), IoError);
    CHECK_THROWS_AS(load_corpus(dir / "no_such_manifest.tsv"), IoError);
  }
  SUBCASE("lines need three tab-separated fields") {
    std::ofstream(dir / "short.tsv") << "a.npy\tb.npy\n";
    CHECK_THROWS_AS(read_manifest(dir / "short.tsv"), FormatError);
  }
}

TEST_CASE("adapter-style fixture corpus loads with matching checksums") {
  const auto sums = read_checksums(kData / "corpus" / "checksums.tsv");
  const auto entries = read_manifest(kData / "corpus" / "manifest.tsv");
  REQUIRE(entries.size() == 3);
  for (const auto& e : entries) {
    CHECK(crc32_of(read_file_bytes(e.latent_path)) == sums.at("latents/" + e.id + ".npy"));
    CHECK(crc32_of(read_file_bytes(e.mask_path)) == sums.at("masks/" + e.id + ".npy"));
  }
  const auto records = load_corpus(kData / "corpus" / "manifest.tsv");
  REQUIRE(records.size() == 3);
  CHECK(records[0].latent.channels() == 2);
  CHECK(records[0].mask.ignored(0, 0));
}

TEST_CASE("SCP_DATA_DIR resolves manifests that are not found relative to the working directory") {
  ::setenv("SCP_DATA_DIR", (kData / "corpus").c_str(), 1);
  CHECK(resolve_data_path("manifest.tsv") == kData / "corpus" / "manifest.tsv");
  CHECK(load_corpus(resolve_data_path("manifest.tsv")).size() == 3);
  ::unsetenv("SCP_DATA_DIR");
}

TEST_CASE("container: round trip, corruption and version checks") {
  const Magic magic = {'T', 'E', 'S', 'T', 'C', 'O', 'N', '\n'};
  Container c;
  c.metadata = R"({"k": 1})";
  c.add("x", NpyArray::from_values<double>(DType::f8, {2}, std::vector<double>{1.0, 2.0}));
  c.add("y", NpyArray::from_values<std::uint8_t>(DType::u1, {3}, std::vector<std::uint8_t>{1, 0, 1}));
  const auto bytes = encode_container(magic, 3, c);
  const auto back = decode_container(magic, 3, bytes);
  CHECK(back.metadata == c.metadata);
  CHECK(back.array("x") == c.array("x"));
  CHECK(back.array("y") == c.array("y"));
  CHECK(encode_container(magic, 3, back) == bytes);
  CHECK_THROWS_AS(back.array("z"), FormatError);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= std::byte{0x40};
  CHECK_THROWS_AS(decode_container(magic, 3, flipped), FormatError);
  CHECK_THROWS_AS(decode_container(magic, 4, bytes), FormatError);
  const Magic other = {'O', 'T', 'H', 'E', 'R', 'M', 'A', 'G'};
  CHECK_THROWS_AS(decode_container(other, 3, bytes), FormatError);
  CHECK_THROWS_AS(decode_container(magic, 3, std::span<const std::byte>(bytes.data(), bytes.size() - 5)),
                  FormatError);
}
