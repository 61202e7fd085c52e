#include "volrec/service.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include <httplib.h>
#include <json.hpp>

#include "volrec/io.hpp"
#include "volrec/surface.hpp"

namespace volrec {

using nlohmann::json;

std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

namespace {

json job_json(const JobRecord& j) {
  json o = {{"job_id", j.job_id},
            {"state", std::string(to_string(j.state))},
            {"progress", j.progress},
            {"volume_ref", j.volume_ref}};
  o["error"] = j.error ? json(*j.error) : json(nullptr);
  return o;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, json{{"error", message}}, status);
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ZeroDirection:
    case ErrorCode::EmptyIntersection:
    case ErrorCode::EmptyRegion:
    case ErrorCode::UpscaleRequested:
      return 400;
    default:
      return 500;
  }
}

template <typename T>
T param(const httplib::Request& req, const std::string& key) {
  if (!req.has_param(key)) throw Error(ErrorCode::InvalidArgument, "missing parameter " + key);
  const std::string v = req.get_param_value(key);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw Error(ErrorCode::InvalidArgument, "bad value for parameter " + key);
  return out;
}

template <typename T>
T param_or(const httplib::Request& req, const std::string& key, T fallback) {
  return req.has_param(key) ? param<T>(req, key) : fallback;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Runs a handler, mapping library and JSON errors to HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, http_status(e.code()), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("bad request document: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

ReconService::ReconService(ServiceConfig config) : config_(std::move(config)) {
  if (config_.job_workers < 1) throw Error(ErrorCode::InvalidArgument, "job_workers must be >= 1");
  std::filesystem::create_directories(config_.data_dir);
  for (int i = 0; i < config_.job_workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ReconService::~ReconService() { shutdown(); }

void ReconService::shutdown() {
  {
    std::lock_guard lock(jobs_mu_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
    for (const auto& p : queue_) {
      auto& j = jobs_[p.id];
      j.state = JobState::failed;
      j.error = "service stopped before the job ran";
    }
    queue_.clear();
  }
  jobs_cv_.notify_all();
  for (auto& t : workers_)
    if (t.joinable()) t.join();
  workers_.clear();
}

std::string ReconService::next_id() {
  std::lock_guard lock(jobs_mu_);
  return std::to_string(++counter_);
}

std::string ReconService::add_volume(VolumeGrid volume, std::optional<Eigen::Vector3d> spacing) {
  const std::string id = next_id();
  std::unique_lock lock(store_mu_);
  volumes_.emplace(id, StoredVolume{std::make_shared<const VolumeGrid>(std::move(volume)), spacing});
  return id;
}

std::string ReconService::submit_job(const std::filesystem::path& manifest, const ReconstructionConfig& config) {
  const std::string id = next_id();
  {
    std::lock_guard lock(jobs_mu_);
    if (stopping_) throw Error(ErrorCode::InvalidArgument, "service is stopping");
    jobs_[id] = JobRecord{id, JobState::queued, 0.0, "", std::nullopt};
    queue_.push_back({id, manifest, config});
  }
  jobs_cv_.notify_all();
  return id;
}

std::optional<JobRecord> ReconService::job(const std::string& id) const {
  std::lock_guard lock(jobs_mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

JobRecord ReconService::wait_job(const std::string& id) const {
  std::unique_lock lock(jobs_mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorCode::InvalidArgument, "unknown job " + id);
  jobs_cv_.wait(lock, [&] { return it->second.state == JobState::done || it->second.state == JobState::failed; });
  return it->second;
}

void ReconService::update_job(const std::string& id, const std::function<void(JobRecord&)>& fn) {
  {
    std::lock_guard lock(jobs_mu_);
    fn(jobs_.at(id));
  }
  jobs_cv_.notify_all();
}

void ReconService::worker_loop() {
  for (;;) {
    PendingJob p;
    {
      std::unique_lock lock(jobs_mu_);
      jobs_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      p = std::move(queue_.front());
      queue_.pop_front();
      jobs_[p.id].state = JobState::running;
    }
    jobs_cv_.notify_all();
    try {
      const SliceStack stack = load_stack(p.manifest);
      auto progress = [&](int done, int total) {
        update_job(p.id, [&](JobRecord& j) {
          j.progress = std::max(j.progress, static_cast<double>(done) / std::max(1, total));
        });
      };
      ReconstructionResult r = reconstruct(stack, p.config, progress);
      const std::filesystem::path out = config_.data_dir / (p.id + ".vol");
      save_volume(r.volume, out);
      const double dz = stack.slice_gap_mm / (r.g + 1);
      {
        std::unique_lock lock(store_mu_);
        volumes_.emplace(p.id, StoredVolume{std::make_shared<const VolumeGrid>(std::move(r.volume)),
                                            Eigen::Vector3d(stack.pixel_spacing.x(), stack.pixel_spacing.y(), dz)});
      }
      update_job(p.id, [&](JobRecord& j) {
        j.state = JobState::done;
        j.progress = 1.0;
        j.volume_ref = out.string();
      });
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      update_job(p.id, [&](JobRecord& j) {
        j.state = JobState::failed;
        j.error = msg;
      });
    }
  }
}

std::optional<ReconService::StoredVolume> ReconService::lookup(const std::string& id, int& status,
                                                               std::string& message) const {
  {
    std::shared_lock lock(store_mu_);
    if (const auto it = volumes_.find(id); it != volumes_.end()) return it->second;
  }
  if (const auto j = job(id)) {
    status = 409;
    message = "job " + id + " is " + std::string(to_string(j->state));
  } else {
    status = 404;
    message = "unknown volume " + id;
  }
  return std::nullopt;
}

void ReconService::register_routes(httplib::Server& server) {
  server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.contains("manifest") || !body["manifest"].is_string())
        throw Error(ErrorCode::InvalidArgument, "body needs a \"manifest\" path");
      ReconstructionConfig cfg;
      cfg.k = body.value("k", cfg.k);
      cfg.workers = body.value("workers", cfg.workers);
      cfg.halo_width = body.value("halo", cfg.halo_width);
      cfg.edge_preserve = body.value("edge_preserve", cfg.edge_preserve);
      cfg.denoise_mult = body.value("denoise_mult", cfg.denoise_mult);
      if (cfg.k < 1 || cfg.workers < 1 || cfg.halo_width < 0 || cfg.denoise_mult < 0)
        throw Error(ErrorCode::InvalidArgument, "k and workers must be >= 1, halo and denoise_mult >= 0");
      const std::string id = submit_job(body["manifest"].get<std::string>(), cfg);
      send_json(res, job_json(*job(id)), 202);
    });
  });

  server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto j = job(req.matches[1]);
    if (!j) return send_error(res, 404, "unknown job " + std::string(req.matches[1]));
    send_json(res, job_json(*j));
  });

  server.Post("/volumes", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.contains("path") || !body["path"].is_string())
        throw Error(ErrorCode::InvalidArgument, "body needs a \"path\"");
      std::optional<Eigen::Vector3d> spacing;
      if (body.contains("spacing")) {
        const auto s = body["spacing"].get<std::vector<double>>();
        if (s.size() != 3) throw Error(ErrorCode::InvalidArgument, "spacing needs 3 values");
        spacing = Eigen::Vector3d(s[0], s[1], s[2]);
      }
      const std::string id = add_volume(load_volume(body["path"].get<std::string>()), spacing);
      send_json(res, json{{"volume_id", id}}, 201);
    });
  });

  server.Get("/volumes", [this](const httplib::Request&, httplib::Response& res) {
    std::vector<std::pair<std::string, Vec3i>> items;
    {
      std::shared_lock lock(store_mu_);
      for (const auto& [id, v] : volumes_) items.emplace_back(id, v.grid->dims());
    }
    // Ids are decimal counters; order by creation.
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      return std::pair(a.first.size(), a.first) < std::pair(b.first.size(), b.first);
    });
    json list = json::array();
    for (const auto& [id, d] : items) list.push_back({{"volume_id", id}, {"dims", {d.x(), d.y(), d.z()}}});
    send_json(res, json{{"volumes", list}});
  });

  server.Get(R"(/volumes/([^/]+)/meta)",[this](const httplib::Request& req, httplib::Response& res) {
    int status = 0;
    std::string msg;
    const auto v = lookup(req.matches[1], status, msg);
    if (!v) return send_error(res, status, msg);
    const VolumeGrid& g = *v->grid;
    const auto range = g.known_range();
    json o = {{"volume_id", std::string(req.matches[1])},
              {"dims", {g.nx(), g.ny(), g.nz()}},
              {"origin", {g.origin().x(), g.origin().y(), g.origin().z()}},
              {"missing", g.missing_count()},
              {"checksum", hex64(volume_checksum(g))}};
    o["value_range"] = g.missing_count() == static_cast<std::size_t>(g.size()) ? json(nullptr)
                                                                               : json{range[0], range[1]};
    o["spacing"] = v->spacing ? json{v->spacing->x(), v->spacing->y(), v->spacing->z()} : json(nullptr);
    send_json(res, o);
  });

  server.Get(R"(/volumes/([^/]+)/slice)", [this](const httplib::Request& req, httplib::Response& res) {
    int status = 0;
    std::string msg;
    const auto v = lookup(req.matches[1], status, msg);
    if (!v) return send_error(res, status, msg);
    guarded(res, [&] {
      DigitalPlane plane;
      if (req.has_param("a") || req.has_param("b") || req.has_param("c")) {
        const Vec3i n(param_or<int>(req, "a", 0), param_or<int>(req, "b", 0), param_or<int>(req, "c", 0));
        plane = plane_from_normal(n, param_or<long long>(req, "mu", 0));
      } else if (req.has_param("dx") || req.has_param("dy") || req.has_param("dz")) {
        const Vec3d d(param_or<double>(req, "dx", 0), param_or<double>(req, "dy", 0), param_or<double>(req, "dz", 0));
        plane = make_plane(d, param_or<double>(req, "depth", 0), v->grid->dims());
      } else {
        throw Error(ErrorCode::InvalidArgument, "slice needs a,b,c[,mu] or dx,dy,dz[,depth]");
      }
      const auto png = encode_png(extract_slice(*v->grid, plane));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });

  server.Post(R"(/volumes/([^/]+)/crop)", [this](const httplib::Request& req, httplib::Response& res) {
    int status = 0;
    std::string msg;
    const auto v = lookup(req.matches[1], status, msg);
    if (!v) return send_error(res, status, msg);
    guarded(res, [&] {
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      CropRequest cr;
      if (body.contains("box")) {
        const auto b = body["box"].get<std::vector<int>>();
        if (b.size() != 6) throw Error(ErrorCode::InvalidArgument, "box needs 6 integers");
        cr.box = std::array<Vec3i, 2>{Vec3i(b[0], b[1], b[2]), Vec3i(b[3], b[4], b[5])};
      }
      if (body.contains("planes"))
        for (const auto& p : body["planes"]) {
          CutPlane cut;
          cut.plane = plane_from_normal(Vec3i(p.value("a", 0), p.value("b", 0), p.value("c", 0)),
                                        p.value("mu", 0LL));
          const std::string keep = p.value("keep", std::string("ge"));
          if (keep != "ge" && keep != "lt") throw Error(ErrorCode::InvalidArgument, "keep must be ge or lt");
          cut.keep = keep == "ge" ? KeepSide::at_or_above : KeepSide::below;
          cr.cuts.push_back(cut);
        }
      Vec3i budget = kDefaultRenderBudget;
      if (body.contains("budget")) {
        const auto b = body["budget"].get<std::vector<int>>();
        if (b.size() != 3) throw Error(ErrorCode::InvalidArgument, "budget needs 3 integers");
        budget = Vec3i(b[0], b[1], b[2]);
      }
      VolumeGrid out = crop_region(*v->grid, cr, budget);
      const std::string id = add_volume(std::move(out), v->spacing);
      send_json(res, json{{"volume_id", id}}, 201);
    });
  });

  server.Get(R"(/volumes/([^/]+)/mesh)", [this](const httplib::Request& req, httplib::Response& res) {
    int status = 0;
    std::string msg;
    const auto v = lookup(req.matches[1], status, msg);
    if (!v) return send_error(res, status, msg);
    guarded(res, [&] {
      const double iso = param_or<double>(req, "iso", 0.5);
      const int smooth = param_or<int>(req, "smooth", 0);
      if (!(iso > 0.0 && iso < 1.0)) throw Error(ErrorCode::InvalidArgument, "iso must lie in (0,1)");
      TriangleMesh mesh = marching_cubes(*v->grid, iso);
      if (smooth > 0) mesh = smooth_mesh(mesh, smooth, 0.5);
      const auto stl = encode_stl(mesh);
      res.set_content(std::string(stl.begin(), stl.end()), "model/stl");
    });
  });

  if (config_.static_dir) server.set_mount_point("/", config_.static_dir->string());
}

}  // namespace volrec
