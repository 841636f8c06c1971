#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "maskscope/io.h"
#include "maskscope/rng.h"

using namespace maskscope;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("io");

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("maskscope-io-test-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("tensor round trip is byte identical") {
  TempDir tmp;
  const Tensor t({2, 2}, {1.5, -2.25, 0.0, 1e300});
  const std::string a = tmp.file("a.mt"), b = tmp.file("b.mt");
  save_tensor(a, t);
  const Tensor back = load_tensor(a);
  CHECK(back == t);
  save_tensor(b, back);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("zero-dimensional scalars are valid containers") {
  TempDir tmp;
  const std::string path = tmp.file("scalar.mt");
  Tensor scalar;
  scalar.shape = {};
  scalar.data = {3.75};
  save_tensor(path, scalar);
  const Tensor back = load_tensor(path);
  CHECK(back.rank() == 0);
  CHECK(back.numel() == 1);
  CHECK(back.data[0] == 3.75);
}

TEST_CASE("f32 narrowing only happens on request") {
  TempDir tmp;
  const Tensor t({1, 2}, {0.5, 0.25});
  save_tensor(tmp.file("w.mt"), t, /*as_f32=*/true);
  const Mt01 c = load_mt01(tmp.file("w.mt"));
  CHECK(c.dtype == Mt01Dtype::F32);
  CHECK(load_tensor(tmp.file("w.mt")) == t);  // exact in f32
}

TEST_CASE("truncated payloads name the expected and actual byte counts") {
  TempDir tmp;
  const std::string path = tmp.file("trunc.mt");
  save_tensor(path, Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  auto bytes = slurp(path);
  bytes.resize(bytes.size() - 5);
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  try {
    load_tensor(path);
    FAIL("expected TruncatedPayloadError");
  } catch (const TruncatedPayloadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("32") != std::string::npos);
    CHECK(msg.find("27") != std::string::npos);
  }
}

TEST_CASE("bad magic and dtype mismatches raise typed errors") {
  TempDir tmp;
  const std::string path = tmp.file("junk.mt");
  std::ofstream(path, std::ios::binary) << "NOTAMAGIC___";
  CHECK_THROWS_AS(load_tensor(path), BadMagicError);

  const std::string u8_path = tmp.file("bytes.mt");
  save_u8(u8_path, {1, 0, 1}, {1, 3});
  CHECK_THROWS_AS(load_tensor(u8_path), DtypeMismatchError);
  std::vector<std::size_t> dims;
  CHECK_THROWS_AS(load_u32(u8_path, &dims), DtypeMismatchError);
}

TEST_CASE("random tensors round trip byte exactly") {
  TempDir tmp;
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> shape;
    const std::size_t rank = rng.index(3) + 1;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + rng.index(6));
    Tensor t(shape);
    for (double& v : t.data) v = rng.normal() * 1e3;
    const std::string a = tmp.file("ra.mt"), b = tmp.file("rb.mt");
    save_tensor(a, t);
    save_tensor(b, load_tensor(a));
    CHECK(slurp(a) == slurp(b));
  }
}

TEST_CASE("integer containers round trip across widths") {
  TempDir tmp;
  const std::vector<std::uint16_t> labels = {0, 7, kVoidLabel, 300};
  save_u16(tmp.file("u16.mt"), labels, {2, 2});
  std::vector<std::size_t> dims;
  CHECK(load_u16(tmp.file("u16.mt"), &dims) == labels);
  CHECK(dims == std::vector<std::size_t>{2, 2});

  const std::vector<std::uint32_t> packed = {0, 65535000, 1000, 1};
  save_u32(tmp.file("u32.mt"), packed, {4});
  CHECK(load_u32(tmp.file("u32.mt"), &dims) == packed);
}

TEST_CASE("label maps round trip through 16-bit PNG with void intact") {
  TempDir tmp;
  Rng rng(405);
  LabelMap map(5, 7);
  for (auto& v : map.labels) {
    v = rng.uniform() < 0.2 ? kVoidLabel : static_cast<std::uint16_t>(rng.index(300));
  }
  const std::string path = tmp.file("labels.png");
  save_labelmap(path, map);
  CHECK(load_labelmap(path) == map);
}

TEST_CASE("label loader rejects 8-bit and colour PNGs") {
  TempDir tmp;
  ImageRgb8 img(3, 3);
  const std::string rgb = tmp.file("rgb.png");
  save_image(rgb, img);
  CHECK_THROWS_AS(load_labelmap(rgb), FormatError);

  const std::string gray = tmp.file("gray16.png");
  save_labelmap(gray, LabelMap(2, 2, 5));
  CHECK_THROWS_AS(load_image(gray), FormatError);
}

TEST_CASE("rgb images round trip") {
  TempDir tmp;
  Rng rng(406);
  ImageRgb8 img(4, 6);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.index(256));
  const std::string path = tmp.file("img.png");
  save_image(path, img);
  CHECK(load_image(path) == img);
}

TEST_CASE("panoptic packing validates instance range and round trips") {
  TempDir tmp;
  PanopticMap map(2, 2);
  map.class_ids = {0, 1, 2, kVoidLabel};
  map.instance_ids = {1, 2, 0, 0};
  const std::string path = tmp.file("pan.mt");
  save_panoptic(path, map);
  CHECK(load_panoptic(path) == map);

  PanopticMap bad(1, 1);
  bad.class_ids = {0};
  bad.instance_ids = {1000};
  CHECK_THROWS_AS(save_panoptic(tmp.file("bad.mt"), bad), ValidationError);
}

TEST_SUITE_END();
