#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "volrec/cli.hpp"
#include "volrec/io.hpp"
#include "volrec/phantom.hpp"
#include "volrec/slicer.hpp"

using namespace volrec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("volrec_cli_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "volrec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// 8-bit slices spanning the full 0..255 range so normalization is the identity on decoded values.
fs::path write_stack(const fs::path& dir, int w, int h, int n, double gap) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> u(0, 255);
  StackManifest m;
  m.slice_gap_mm = gap;
  for (int i = 0; i < n; ++i) {
    Image2D img(h, w);
    for (Eigen::Index j = 0; j < img.size(); ++j) img.data()[j] = static_cast<float>(u(rng)) / 255.0f;
    img(0, 0) = 0.0f;
    img(0, 1) = 1.0f;
    const fs::path p = dir / ("s" + std::to_string(i) + ".png");
    write_png(p, img);
    m.slice_files.push_back(p);
  }
  write_manifest(dir / "stack.manifest", m);
  return dir / "stack.manifest";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("usage and exit codes") {
  const Run help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("reconstruct") != std::string::npos);
  CHECK(run({"reconstruct", "--help"}).code == 0);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"reconstruct", "only-one-arg"}).code == 2);
  CHECK(run({"reconstruct", "a", "b", "--workers", "0"}).code == 2);

  const Run missing = run({"reconstruct", "/nonexistent/stack.manifest", "/tmp/x.vol"});
  CHECK(missing.code == static_cast<int>(ErrorCode::ManifestParse));
  CHECK(missing.err.find("ManifestParse") != std::string::npos);
  CHECK(missing.out.empty());
}

TEST_CASE("reconstruct honors the dimension contract and is worker-invariant") {
  TempDir dir("reconstruct");
  const fs::path manifest = write_stack(dir.path, 16, 12, 8, 3.0);
  const Run one = run({"reconstruct", manifest.string(), (dir.path / "w1.vol").string(), "--workers", "1"});
  REQUIRE(one.code == 0);
  const Run eight = run({"reconstruct", manifest.string(), (dir.path / "w8.vol").string(), "--workers", "8"});
  REQUIRE(eight.code == 0);
  for (const char* key : {"split_s", "transfer_s", "join_s", "overhead_s", "checksum"})
    CHECK(one.out.find(key) != std::string::npos);

  const VolumeGrid v = load_volume(dir.path / "w1.vol");
  CHECK(v.dims() == Vec3i(16, 12, 8 + 7 * 2));
  CHECK(v.fully_known());
  CHECK(slurp(dir.path / "w1.vol") == slurp(dir.path / "w8.vol"));

  SUBCASE("slice at an original slice position equals the input slice") {
    for (int i : {0, 3, 7}) {
      const fs::path out = dir.path / ("slice" + std::to_string(i) + ".png");
      const Run r = run({"slice", (dir.path / "w1.vol").string(), out.string(), "--normal", "0,0,1", "--depth",
                         std::to_string(i * 3)});
      REQUIRE(r.code == 0);
      const Image2D got = read_image(out), want = read_image(dir.path / ("s" + std::to_string(i) + ".png"));
      CHECK(got == want);
      CHECK(slurp(out) == slurp(dir.path / ("s" + std::to_string(i) + ".png")));
    }
  }
  SUBCASE("--mu and --direction forms") {
    const fs::path a = dir.path / "a.png", b = dir.path / "b.png";
    REQUIRE(run({"slice", (dir.path / "w1.vol").string(), a.string(), "--normal", "0,0,1", "--mu", "-6"}).code == 0);
    REQUIRE(run({"slice", (dir.path / "w1.vol").string(), b.string(), "--direction", "0,0,1", "--depth", "-5"}).code ==
            0);
    // Center z = 11, depth -5 -> z = 6.
    CHECK(slurp(a) == slurp(b));
    CHECK(run({"slice", (dir.path / "w1.vol").string(), a.string(), "--normal", "0,0,0"}).code ==
          static_cast<int>(ErrorCode::ZeroDirection));
    CHECK(run({"slice", (dir.path / "w1.vol").string(), a.string(), "--normal", "0,0,1", "--mu", "-500"}).code ==
          static_cast<int>(ErrorCode::EmptyIntersection));
    CHECK(run({"slice", (dir.path / "w1.vol").string(), a.string()}).code == static_cast<int>(ErrorCode::InvalidArgument));
  }
  SUBCASE("crop") {
    const fs::path c = dir.path / "c.vol";
    REQUIRE(run({"crop", (dir.path / "w1.vol").string(), c.string(), "--box", "0,0,0,16,12,22"}).code == 0);
    CHECK(volume_checksum(load_volume(c)) == volume_checksum(v));
    const Run cut = run({"crop", (dir.path / "w1.vol").string(), c.string(), "--box", "2,2,2,10,10,10", "--plane",
                         "0,0,1,-5,ge"});
    REQUIRE(cut.code == 0);
    const VolumeGrid cv = load_volume(c);
    CHECK(cv.dims() == Vec3i(8, 8, 5));
    CHECK(cv.origin() == Vec3i(2, 2, 5));
    CHECK(cv(3, 3, 0) == v(5, 5, 5));
    CHECK(run({"crop", (dir.path / "w1.vol").string(), c.string(), "--plane", "0,0,1,x,ge"}).code ==
          static_cast<int>(ErrorCode::InvalidArgument));
    CHECK(run({"crop", (dir.path / "w1.vol").string(), c.string(), "--box", "5,5,5,5,5,5"}).code ==
          static_cast<int>(ErrorCode::EmptyRegion));
  }
}

TEST_CASE("mesh of the sphere phantom") {
  TempDir dir("mesh");
  save_volume(sphere_volume(32, 10.0), dir.path / "sphere.vol");
  const Run r = run({"mesh", (dir.path / "sphere.vol").string(), (dir.path / "s.stl").string(), "--iso", "0.5",
                     "--smooth-iters", "2"});
  REQUIRE(r.code == 0);
  const std::string stl = slurp(dir.path / "s.stl");
  REQUIRE(stl.size() >= 84);
  std::uint32_t count = 0;
  std::memcpy(&count, stl.data() + 80, 4);
  CHECK(count > 0);
  CHECK(stl.size() == 84 + 50 * std::size_t{count});
  REQUIRE(run({"mesh", (dir.path / "sphere.vol").string(), (dir.path / "s.obj").string()}).code == 0);
  CHECK(read_obj(dir.path / "s.obj").triangle_count() == count);
  CHECK(run({"mesh", (dir.path / "sphere.vol").string(), (dir.path / "s.stl").string(), "--iso", "1.5"}).code ==
        static_cast<int>(ErrorCode::InvalidArgument));
}

TEST_CASE("metrics and phantom commands") {
  TempDir dir("metrics");
  const Run ph = run({"phantom", (dir.path / "ph").string(), "--width", "32", "--height", "32", "--slices", "5",
                      "--gap", "1"});
  REQUIRE(ph.code == 0);
  const fs::path ground_manifest = dir.path / "ph" / "ground.manifest";
  const fs::path ground_volume = dir.path / "ph" / "ground.vol";
  CHECK(load_volume(ground_volume).dims() == Vec3i(32, 32, 9));
  CHECK(load_stack(dir.path / "ph" / "stack.manifest").count() == 5);

  SUBCASE("ground against itself scores 100") {
    const Run r = run({"metrics", ground_manifest.string(), ground_volume.string(),
                       (dir.path / "rep.json").string(), "--gap", "1"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(dir.path / "rep.json"));
    CHECK(j["A"].get<double>() == doctest::Approx(100.0));
    CHECK(j["slices"].size() == 4);
    REQUIRE(run({"metrics", ground_manifest.string(), ground_volume.string(), (dir.path / "rep.txt").string()})
                .code == 0);
    CHECK(slurp(dir.path / "rep.txt").find("A% = 100") != std::string::npos);
  }
  SUBCASE("reconstruction scores below 100 but high") {
    REQUIRE(run({"reconstruct", (dir.path / "ph" / "stack.manifest").string(), (dir.path / "r.vol").string(), "--k",
                 "1"})
                .code == 0);
    const AccuracyReport rep =
        cmd_metrics(load_stack(ground_manifest), load_volume(dir.path / "r.vol"), 1);
    CHECK(rep.slices.size() == 4);
    CHECK(rep.a_total < 100.0);
    CHECK(rep.a_ssim > 90.0);
  }
  SUBCASE("size mismatch") {
    save_volume(VolumeGrid(Vec3i(8, 8, 9), 0.0f), dir.path / "small.vol");
    CHECK(run({"metrics", ground_manifest.string(), (dir.path / "small.vol").string(),
               (dir.path / "x.txt").string()})
              .code == static_cast<int>(ErrorCode::AlignmentMismatch));
  }
}

TEST_CASE("bench") {
  TempDir dir("bench");
  const fs::path manifest = write_stack(dir.path, 16, 16, 6, 2.0);
  const Run single = run({"bench", manifest.string(), (dir.path / "b1.txt").string(), "--workers-list", "1"});
  REQUIRE(single.code == 0);
  const std::string t1 = slurp(dir.path / "b1.txt");
  CHECK(std::count(t1.begin(), t1.end(), '\n') == 2);  // header plus one row

  const SliceStack s = load_stack(manifest);
  const BenchReport r = cmd_bench(s, {1, 2, 4}, ReconstructionConfig{});
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].checksum == r.rows[2].checksum);
  CHECK(r.speedup(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cmd_bench(s, {}, ReconstructionConfig{}), Error);
}
