#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "volrec/pipeline.hpp"
#include "volrec/slicer.hpp"

namespace httplib {
class Server;
}

namespace volrec {

enum class JobState { queued, running, done, failed };
std::string_view to_string(JobState s) noexcept;

struct JobRecord {
  std::string job_id;
  JobState state = JobState::queued;
  double progress = 0.0;   // fraction of blocks completed
  std::string volume_ref;  // path of the stored result once done
  std::optional<std::string> error;
};

struct ServiceConfig {
  std::filesystem::path data_dir = "volrec-data";
  std::optional<std::filesystem::path> static_dir;  // served at "/" when set
  int job_workers = 1;                               // concurrent reconstruction jobs
};

/// HTTP facade: reconstruction jobs, slicing, cropping, meshing and metadata
/// over an append-only volume store. Volume ids of finished jobs equal their
/// job ids; crops and registered files get fresh ids.
///
///   POST /jobs                       {"manifest": path, "k", "workers", "halo",
///                                     "edge_preserve", "denoise_mult"} -> JobRecord
///   GET  /jobs/{id}                  -> JobRecord
///   GET  /volumes                    -> {"volumes": [{"volume_id", "dims"}]}
///   POST /volumes                    {"path": volume file} -> {"volume_id"}
///   GET  /volumes/{id}/meta          -> dims, origin, value range, source spacing
///   GET  /volumes/{id}/slice?a=&b=&c=&mu=  or  ?dx=&dy=&dz=&depth=  -> PNG
///   POST /volumes/{id}/crop          {"box": [x0,y0,z0,x1,y1,z1],
///                                     "planes": [{"a","b","c","mu","keep": "ge"|"lt"}]}
///                                    -> {"volume_id"}
///   GET  /volumes/{id}/mesh?iso=&smooth=  -> binary STL
///
/// Errors: 404 unknown id, 400 bad parameters, 409 job not done, 500 internal.
class ReconService {
 public:
  explicit ReconService(ServiceConfig config);
  ~ReconService();
  ReconService(const ReconService&) = delete;
  ReconService& operator=(const ReconService&) = delete;

  void register_routes(httplib::Server& server);

  /// Adds a volume to the store and returns its id.
  std::string add_volume(VolumeGrid volume, std::optional<Eigen::Vector3d> spacing = std::nullopt);
  std::string submit_job(const std::filesystem::path& manifest, const ReconstructionConfig& config);
  std::optional<JobRecord> job(const std::string& id) const;
  /// Blocks until the job leaves the queued/running states.
  JobRecord wait_job(const std::string& id) const;

  /// Stops the job worker after the running job finishes; queued jobs fail.
  void shutdown();

 private:
  struct StoredVolume {
    std::shared_ptr<const VolumeGrid> grid;
    std::optional<Eigen::Vector3d> spacing;  // mm per voxel along x, y, z
  };
  struct PendingJob {
    std::string id;
    std::filesystem::path manifest;
    ReconstructionConfig config;
  };

  std::string next_id();
  void worker_loop();
  void update_job(const std::string& id, const std::function<void(JobRecord&)>& fn);
  /// Looks a volume up; sets the HTTP status and returns null when unavailable.
  std::optional<StoredVolume> lookup(const std::string& id, int& status, std::string& message) const;

  ServiceConfig config_;
  mutable std::shared_mutex store_mu_;
  std::map<std::string, StoredVolume> volumes_;
  mutable std::mutex jobs_mu_;
  mutable std::condition_variable jobs_cv_;
  std::map<std::string, JobRecord> jobs_;
  std::deque<PendingJob> queue_;
  bool stopping_ = false;
  long counter_ = 0;
  std::vector<std::thread> workers_;
};

}  // namespace volrec
