#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "volrec/cli.hpp"
#include "volrec/io.hpp"
#include "volrec/phantom.hpp"
#include "volrec/service.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro clashes with Eigen internals.
#include <httplib.h>
#include <json.hpp>

using namespace volrec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("volrec_svc_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Service plus HTTP server on an ephemeral local port.
struct Harness {
  ReconService service;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Harness(ServiceConfig cfg) : service(std::move(cfg)) {
    service.register_routes(server);
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Harness() {
    server.stop();
    thread.join();
    service.shutdown();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "volrec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace

TEST_CASE("reconstruction job, slicing parity and crops") {
  TempDir dir("job");
  const fs::path manifest = write_phantom_dataset(dir.path / "ph", 32, 32, 5, 1);
  ServiceConfig cfg;
  cfg.data_dir = dir.path / "data";
  Harness h(cfg);
  auto c = h.client();

  auto post = c.Post("/jobs", json{{"manifest", manifest.string()}, {"k", 1}, {"workers", 2}}.dump(),
                     "application/json");
  REQUIRE(post);
  REQUIRE(post->status == 202);
  const std::string id = json::parse(post->body)["job_id"];

  const JobRecord done = h.service.wait_job(id);
  REQUIRE(done.state == JobState::done);
  CHECK(done.progress == 1.0);
  auto job = c.Get("/jobs/" + id);
  REQUIRE(job);
  CHECK(json::parse(job->body)["state"] == "done");
  CHECK(fs::exists(json::parse(job->body)["volume_ref"].get<std::string>()));

  auto meta = c.Get("/volumes/" + id + "/meta");
  REQUIRE(meta);
  REQUIRE(meta->status == 200);
  const json m = json::parse(meta->body);
  CHECK(m["dims"] == json::array({32, 32, 9}));
  CHECK(m["missing"] == 0);
  CHECK(m["spacing"][2].get<double>() == doctest::Approx(1.0));

  const fs::path vol = done.volume_ref;
  SUBCASE("slice PNGs equal the CLI output byte for byte") {
    const std::vector<std::pair<std::string, std::vector<std::string>>> cases = {
        {"a=0&b=0&c=1&mu=0", {"--normal", "0,0,1", "--mu", "0"}},
        {"a=0&b=0&c=1&mu=-4", {"--normal", "0,0,1", "--mu", "-4"}},
        {"a=0&b=0&c=1&mu=-7", {"--normal", "0,0,1", "--mu", "-7"}},
        {"a=1&b=0&c=0&mu=-16", {"--normal", "1,0,0", "--mu", "-16"}},
        {"a=0&b=1&c=0&mu=-3", {"--normal", "0,1,0", "--mu", "-3"}},
        {"a=1&b=1&c=0&mu=-30", {"--normal", "1,1,0", "--mu", "-30"}},
        {"a=1&b=2&c=2&mu=-40", {"--normal", "1,2,2", "--mu", "-40"}},
        {"a=2&b=-1&c=3&mu=-20", {"--normal", "2,-1,3", "--mu", "-20"}},
        {"dx=0&dy=0&dz=1&depth=2", {"--direction", "0,0,1", "--depth", "2"}},
        {"dx=0.3&dy=0.5&dz=0.8&depth=-1.5", {"--direction", "0.3,0.5,0.8", "--depth", "-1.5"}},
    };
    int i = 0;
    for (const auto& [query, flags] : cases) {
      CAPTURE(query);
      auto res = c.Get("/volumes/" + id + "/slice?" + query);
      REQUIRE(res);
      REQUIRE(res->status == 200);
      CHECK(res->get_header_value("Content-Type") == "image/png");
      const fs::path out = dir.path / ("cli" + std::to_string(i++) + ".png");
      std::vector<std::string> args = {"slice", vol.string(), out.string()};
      args.insert(args.end(), flags.begin(), flags.end());
      REQUIRE(cli(args) == 0);
      CHECK(res->body == slurp(out));
      auto again = c.Get("/volumes/" + id + "/slice?" + query);
      CHECK(again->body == res->body);
    }
  }
  SUBCASE("axis-aligned slice at an acquired plane equals the ingested slice") {
    const SliceStack s = load_stack(manifest);
    auto res = c.Get("/volumes/" + id + "/slice?a=0&b=0&c=1&mu=-4");
    REQUIRE(res->status == 200);
    const auto expected = encode_png(s.slices[2]);
    CHECK(res->body == std::string(expected.begin(), expected.end()));
  }
  SUBCASE("full-box crop keeps the checksum") {
    auto res = c.Post("/volumes/" + id + "/crop", json{{"box", {0, 0, 0, 32, 32, 9}}}.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    const std::string cid = json::parse(res->body)["volume_id"];
    CHECK(cid != id);
    const json cm = json::parse(c.Get("/volumes/" + cid + "/meta")->body);
    CHECK(cm["checksum"] == m["checksum"]);
    CHECK(cm["dims"] == m["dims"]);
    CHECK(cm["spacing"] == m["spacing"]);

    auto cut = c.Post("/volumes/" + id + "/crop",
                      json{{"box", {4, 4, 0, 20, 20, 9}}, {"planes", {{{"a", 0}, {"b", 0}, {"c", 1}, {"mu", -3}, {"keep", "lt"}}}}}
                          .dump(),
                      "application/json");
    REQUIRE(cut->status == 201);
    const json cutm = json::parse(c.Get("/volumes/" + json::parse(cut->body)["volume_id"].get<std::string>() +
                                        "/meta")
                                      ->body);
    CHECK(cutm["dims"] == json::array({16, 16, 3}));
    CHECK(cutm["origin"] == json::array({4, 4, 0}));

    const json list = json::parse(c.Get("/volumes")->body);
    REQUIRE(list["volumes"].size() == 3);
    CHECK(list["volumes"][0]["volume_id"] == id);
  }
  SUBCASE("mesh endpoint streams binary STL") {
    auto res = c.Get("/volumes/" + id + "/mesh?iso=0.3&smooth=1");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    REQUIRE(res->body.size() >= 84);
    std::uint32_t count = 0;
    std::memcpy(&count, res->body.data() + 80, 4);
    CHECK(count > 0);
    CHECK(res->body.size() == 84 + 50 * std::size_t{count});
    CHECK(c.Get("/volumes/" + id + "/mesh?iso=0.3&smooth=1")->body == res->body);
  }
  SUBCASE("error contract") {
    CHECK(c.Get("/volumes/999/meta")->status == 404);
    CHECK(c.Get("/volumes/999/slice?a=0&b=0&c=1")->status == 404);
    CHECK(c.Get("/jobs/999")->status == 404);
    CHECK(c.Get("/volumes/" + id + "/slice")->status == 400);
    CHECK(c.Get("/volumes/" + id + "/slice?a=0&b=0&c=0")->status == 400);
    CHECK(c.Get("/volumes/" + id + "/slice?a=x&b=0&c=1")->status == 400);
    CHECK(c.Get("/volumes/" + id + "/slice?a=0&b=0&c=1&mu=-100")->status == 400);
    CHECK(c.Get("/volumes/" + id + "/mesh?iso=2")->status == 400);
    CHECK(c.Post("/volumes/" + id + "/crop", "{not json", "application/json")->status == 400);
    CHECK(c.Post("/volumes/" + id + "/crop", json{{"box", {1, 2, 3}}}.dump(), "application/json")->status == 400);
    CHECK(c.Post("/volumes/" + id + "/crop", json{{"box", {3, 3, 3, 3, 3, 3}}}.dump(), "application/json")->status ==
          400);
    CHECK(c.Post("/jobs", json{{"k", 1}}.dump(), "application/json")->status == 400);
    CHECK(c.Post("/jobs", json{{"manifest", manifest.string()}, {"k", 0}}.dump(), "application/json")->status ==
          400);
    CHECK(c.Post("/volumes", json{{"path", (dir.path / "missing.vol").string()}}.dump(), "application/json")
              ->status == 500);
  }
}

TEST_CASE("jobs that are not done answer 409") {
  TempDir dir("conflict");
  ServiceConfig cfg;
  cfg.data_dir = dir.path / "data";
  Harness h(cfg);
  auto c = h.client();
  auto post = c.Post("/jobs", json{{"manifest", (dir.path / "none.manifest").string()}}.dump(), "application/json");
  REQUIRE(post->status == 202);
  const std::string id = json::parse(post->body)["job_id"];
  const JobRecord j = h.service.wait_job(id);
  CHECK(j.state == JobState::failed);
  REQUIRE(j.error);
  CHECK(j.error->find("ManifestParse") != std::string::npos);
  CHECK(c.Get("/volumes/" + id + "/meta")->status == 409);
  CHECK(c.Get("/volumes/" + id + "/slice?a=0&b=0&c=1")->status == 409);
  const json rec = json::parse(c.Get("/jobs/" + id)->body);
  CHECK(rec["state"] == "failed");
  CHECK(rec["error"].get<std::string>().find("ManifestParse") != std::string::npos);
}

TEST_CASE("jobs run in submission order with monotone progress") {
  TempDir dir("order");
  const fs::path manifest = write_phantom_dataset(dir.path / "ph", 24, 24, 4, 1);
  ServiceConfig cfg;
  cfg.data_dir = dir.path / "data";
  ReconService service(cfg);
  ReconstructionConfig rc;
  rc.k = 1;
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) ids.push_back(service.submit_job(manifest, rc));
  // Poll the last job: while it is queued, the earlier ones may not be queued behind it.
  double last_progress = 0.0;
  for (;;) {
    const auto j = service.job(ids[2]);
    REQUIRE(j);
    CHECK(j->progress >= last_progress);
    last_progress = j->progress;
    if (j->state == JobState::running) CHECK(service.job(ids[0])->state == JobState::done);
    if (j->state == JobState::done || j->state == JobState::failed) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  for (const auto& id : ids) CHECK(service.wait_job(id).state == JobState::done);
  // Identical inputs give identical stored volumes.
  CHECK(slurp(service.wait_job(ids[0]).volume_ref) == slurp(service.wait_job(ids[2]).volume_ref));
  service.shutdown();
}

TEST_CASE("registered volumes and static files") {
  TempDir dir("static");
  fs::create_directories(dir.path / "www");
  std::ofstream(dir.path / "www" / "index.html") << "<html>viewer</html>";
  save_volume(sphere_volume(16, 5.0), dir.path / "s.vol");
  ServiceConfig cfg;
  cfg.data_dir = dir.path / "data";
  cfg.static_dir = dir.path / "www";
  Harness h(cfg);
  auto c = h.client();

  auto idx = c.Get("/index.html");
  REQUIRE(idx);
  CHECK(idx->status == 200);
  CHECK(idx->body == "<html>viewer</html>");

  auto reg = c.Post("/volumes", json{{"path", (dir.path / "s.vol").string()}, {"spacing", {0.5, 0.5, 2.0}}}.dump(),
                    "application/json");
  REQUIRE(reg->status == 201);
  const std::string id = json::parse(reg->body)["volume_id"];
  const json m = json::parse(c.Get("/volumes/" + id + "/meta")->body);
  CHECK(m["dims"] == json::array({16, 16, 16}));
  CHECK(m["spacing"] == json::array({0.5, 0.5, 2.0}));
  CHECK(m["value_range"][1].get<double>() == doctest::Approx(1.0));
  CHECK(c.Get("/volumes/" + id + "/meta")->body == c.Get("/volumes/" + id + "/meta")->body);
}
