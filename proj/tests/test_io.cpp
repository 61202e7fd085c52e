#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "volrec/io.hpp"

using namespace volrec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("volrec_io_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SliceStack stack_of(std::vector<Image2D> slices) {
  SliceStack s;
  s.slices = std::move(slices);
  return s;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

VolumeGrid masked_grid() {
  VolumeGrid g(Vec3i(3, 4, 5), 0.0f, Vec3i(1, 2, 3));
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.set(i, u(rng));
  for (int i : {0, 5, 11, 17, 29, 41, 59}) g.set_missing(i);
  return g;
}

}  // namespace

TEST_CASE("normalize_stack rescales the global range") {
  Image2D a(1, 256);
  for (int i = 0; i < 256; ++i) a(0, i) = static_cast<float>(i);
  const SliceStack n = normalize_stack(stack_of({a, a}));
  CHECK(n.slices[0](0, 0) == 0.0f);
  CHECK(n.slices[0](0, 255) == 1.0f);
  CHECK(n.slices[1](0, 128) == doctest::Approx(128.0 / 255.0));

  const SliceStack c = normalize_stack(stack_of({Image2D::Constant(3, 3, 7.0f), Image2D::Constant(3, 3, 7.0f)}));
  for (const auto& s : c.slices) CHECK((s.array() == 0.0f).all());

  const SliceStack two = normalize_stack(stack_of({Image2D::Constant(2, 2, 0.0f), Image2D::Constant(2, 2, 100.0f)}));
  CHECK((two.slices[0].array() == 0.0f).all());
  CHECK((two.slices[1].array() == 1.0f).all());
}

TEST_CASE("normalize_stack rejects empty and ragged stacks") {
  try {
    normalize_stack(SliceStack{});
    FAIL("expected EmptyStack");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyStack);
  }
  try {
    normalize_stack(stack_of({Image2D::Zero(2, 2), Image2D::Zero(3, 2)}));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("fixed-range normalization clamps") {
  const SliceStack s =
      normalize_stack(stack_of({Image2D::Constant(1, 1, -1.0f), Image2D::Constant(1, 1, 0.25f)}), 0.0, 0.5);
  CHECK(s.slices[0](0, 0) == 0.0f);
  CHECK(s.slices[1](0, 0) == doctest::Approx(0.5));
}

TEST_CASE("missing_planes_per_gap") {
  CHECK(missing_planes_per_gap(5.0, 1.0) == 4);
  CHECK(missing_planes_per_gap(1.0, 1.0) == 0);
  CHECK(missing_planes_per_gap(3.0, 1.0) == 2);
  CHECK(full_depth(25, 1) == 49);
  try {
    missing_planes_per_gap(0.0, 1.0);
    FAIL("expected NonPositiveSpacing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveSpacing);
  }
}

TEST_CASE("missing voxels carry the NaN sentinel and the mask") {
  VolumeGrid g = VolumeGrid::missing(Vec3i(2, 2, 2));
  CHECK(g.missing_count() == 8);
  CHECK(std::isnan(g(1, 1, 1)));
  g.set(1, 1, 1, 0.5f);
  CHECK_FALSE(g.is_missing(1, 1, 1));
  CHECK(g.missing_count() == 7);
  g.set_missing(1, 1, 1);
  CHECK(std::isnan(g(1, 1, 1)));
  CHECK_THROWS_AS(VolumeGrid(Vec3i(-1, 2, 2), 0.0f), Error);
}

TEST_CASE("volume save/load round trip is bit-exact") {
  TempDir dir("roundtrip");
  const VolumeGrid g = masked_grid();
  save_volume(g, dir.path / "g.vol");
  const VolumeGrid r = load_volume(dir.path / "g.vol");
  CHECK(r == g);
  CHECK(r.missing_count() == 7);
  CHECK(r.origin() == Vec3i(1, 2, 3));
  CHECK(volume_checksum(r) == volume_checksum(g));
}

TEST_CASE("volume loader rejects damaged files") {
  TempDir dir("damaged");
  const VolumeGrid g = masked_grid();
  auto bytes = serialize_volume(g);

  SUBCASE("truncated header") {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + 10);
    write_bytes(dir.path / "t.vol", t);
    try {
      load_volume(dir.path / "t.vol");
      FAIL("expected CorruptHeader");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CorruptHeader);
    }
  }
  SUBCASE("flipped payload bit") {
    bytes[40] ^= 0x01;
    try {
      deserialize_volume(bytes);
      FAIL("expected ChecksumMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ChecksumMismatch);
    }
  }
  SUBCASE("unknown version") {
    bytes[8] = 9;
    try {
      deserialize_volume(bytes);
      FAIL("expected UnsupportedVersion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedVersion);
    }
  }
  SUBCASE("empty grid at save") {
    try {
      save_volume(VolumeGrid(Vec3i(0, 3, 3), 0.0f), dir.path / "e.vol");
      FAIL("expected InvalidGrid");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidGrid);
    }
  }
}

TEST_CASE("manifest loading") {
  TempDir dir("manifest");
  Image2D img(4, 4);
  for (int i = 0; i < 16; ++i) img(i / 4, i % 4) = static_cast<float>(i) / 15.0f;
  for (int i = 0; i < 3; ++i) write_png(dir.path / ("s" + std::to_string(i) + ".png"), img);

  SUBCASE("three identical slices at 1 mm") {
    std::ofstream(dir.path / "m.txt") << "# test\npixel_spacing = 1 1\nslice_gap = 1\naxis = axial\n"
                                      << "slice = s0.png\nslice = s1.png\nslice = s2.png\n";
    const SliceStack s = load_stack(dir.path / "m.txt");
    CHECK(s.count() == 3);
    CHECK(missing_planes_per_gap(s.slice_gap_mm, s.pixel_spacing.x()) == 0);
    CHECK(s.slices[0](0, 0) == 0.0f);
    CHECK(s.slices[2](3, 3) == 1.0f);
  }
  SUBCASE("missing slice file") {
    std::ofstream(dir.path / "m.txt") << "slice_gap = 1\nslice = s0.png\nslice = nope.png\n";
    try {
      load_stack(dir.path / "m.txt");
      FAIL("expected ImageDecode");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ImageDecode);
    }
  }
  SUBCASE("slices of different sizes") {
    write_png(dir.path / "big.png", Image2D::Zero(5, 5));
    std::ofstream(dir.path / "m.txt") << "slice_gap = 1\nslice = s0.png\nslice = big.png\n";
    try {
      load_stack(dir.path / "m.txt");
      FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
  }
  SUBCASE("malformed line") {
    std::ofstream(dir.path / "m.txt") << "slice_gap = 1\nthis is not a key value pair\n";
    try {
      parse_manifest(dir.path / "m.txt");
      FAIL("expected ManifestParse");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ManifestParse);
    }
  }
  SUBCASE("write_manifest round trip") {
    StackManifest m;
    m.slice_files = {dir.path / "s0.png", dir.path / "s1.png"};
    m.pixel_spacing_mm = {0.5, 0.5};
    m.slice_gap_mm = 2.5;
    m.value_range = std::array<double, 2>{0.0, 1.0};
    write_manifest(dir.path / "w.txt", m);
    const StackManifest r = parse_manifest(dir.path / "w.txt");
    CHECK(r.slice_files.size() == 2);
    CHECK(fs::equivalent(r.slice_files[1], m.slice_files[1]));
    CHECK(r.pixel_spacing_mm.x() == 0.5);
    CHECK(r.slice_gap_mm == 2.5);
    REQUIRE(r.value_range);
    CHECK((*r.value_range)[1] == 1.0);
  }
}

TEST_CASE("8- and 16-bit PNG round trips") {
  TempDir dir("png");
  Image2D img(3, 5);
  for (int i = 0; i < 15; ++i) img(i / 5, i % 5) = static_cast<float>(i) / 14.0f;
  write_png(dir.path / "a.png", img);
  const Image2D a = read_image(dir.path / "a.png");
  CHECK((a - img).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-7f);
  write_png16(dir.path / "b.png", img);
  const Image2D b = read_image(dir.path / "b.png");
  CHECK((b - img).cwiseAbs().maxCoeff() <= 0.5f / 65535.0f + 1e-7f);
  const auto enc = encode_png(img);
  CHECK(enc == read_bytes(dir.path / "a.png"));
}

TEST_CASE("mesh export") {
  TempDir dir("mesh");
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  m.normals = {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}};

  export_mesh(m, MeshFormat::obj, dir.path / "t.obj");
  std::ifstream obj(dir.path / "t.obj");
  int v = 0, f = 0;
  for (std::string line; std::getline(obj, line);) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
  }
  CHECK(v == 3);
  CHECK(f == 1);
  const TriangleMesh back = read_obj(dir.path / "t.obj");
  CHECK(back.triangle_count() == 1);
  CHECK(back.vertices[1].isApprox(m.vertices[1]));

  export_mesh(m, MeshFormat::stl_binary, dir.path / "t.stl");
  const auto stl = read_bytes(dir.path / "t.stl");
  REQUIRE(stl.size() == 84 + 50);
  std::uint32_t count = 0;
  std::memcpy(&count, stl.data() + 80, 4);
  CHECK(count == 1);

  export_mesh(TriangleMesh{}, MeshFormat::stl_binary, dir.path / "e.stl");
  CHECK(read_bytes(dir.path / "e.stl").size() == 84);
  export_mesh(TriangleMesh{}, MeshFormat::obj, dir.path / "e.obj");
  CHECK(read_obj(dir.path / "e.obj").triangle_count() == 0);

  TriangleMesh bad = m;
  bad.triangles = {{0, 1, 7}};
  CHECK_THROWS_AS(export_mesh(bad, MeshFormat::obj, dir.path / "bad.obj"), Error);
}
