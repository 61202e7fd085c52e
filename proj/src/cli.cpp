#include "volrec/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "volrec/io.hpp"
#include "volrec/phantom.hpp"
#include "volrec/service.hpp"
#include "volrec/slicer.hpp"
#include "volrec/surface.hpp"

namespace volrec {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void print_timings(std::ostream& log, const StageTimings& t) {
  log << std::fixed << std::setprecision(4) << "denoise_s = " << t.denoise_s << "\n"
      << "split_s = " << t.split_s << "\n"
      << "transfer_s = " << t.dispatch_s << "\n"
      << "reconstruct_s = " << t.reconstruct_s << "\n"
      << "join_s = " << t.merge_s << "\n"
      << "overhead_s = " << t.overhead_s() << "\n"
      << "total_s = " << t.total_s << "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::Io, "short write to " + path.string());
}

bool has_extension(const std::filesystem::path& p, const std::string& ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

// "a,b,c,mu,ge|lt"
CutPlane parse_cut(const std::string& text) {
  std::stringstream ss(text);
  std::string tok;
  std::vector<std::string> parts;
  while (std::getline(ss, tok, ',')) parts.push_back(tok);
  if (parts.size() != 5 || (parts[4] != "ge" && parts[4] != "lt"))
    throw Error(ErrorCode::InvalidArgument, "--plane expects a,b,c,mu,ge|lt, got " + text);
  try {
    CutPlane cut;
    cut.plane = plane_from_normal(Vec3i(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2])),
                                  std::stoll(parts[3]));
    cut.keep = parts[4] == "ge" ? KeepSide::at_or_above : KeepSide::below;
    return cut;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "--plane expects integers, got " + text);
  }
}

}  // namespace

ReconstructionResult cmd_reconstruct(const std::filesystem::path& manifest, const std::filesystem::path& out_volume,
                                     const ReconstructionConfig& config, std::ostream& log) {
  const SliceStack stack = load_stack(manifest);
  ReconstructionResult r = reconstruct(stack, config);
  save_volume(r.volume, out_volume);
  log << "dims = " << r.volume.nx() << " " << r.volume.ny() << " " << r.volume.nz() << "\n"
      << "g = " << r.g << "\n"
      << "blocks = " << r.blocks << "\n"
      << "workers = " << config.workers << "\n";
  print_timings(log, r.timings);
  log << "checksum = " << hex64(volume_checksum(r.volume)) << "\n";
  return r;
}

double BenchReport::speedup(std::size_t row) const {
  if (rows.empty() || row >= rows.size() || rows[row].timings.reconstruct_s <= 0) return 0.0;
  return rows.front().timings.reconstruct_s / rows[row].timings.reconstruct_s;
}

std::string BenchReport::to_text() const {
  std::ostringstream o;
  o << "workers  reconstruct_s  overhead_s  total_s  speedup  checksum\n";
  o << std::fixed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    o << std::setw(7) << r.workers << "  " << std::setprecision(4) << std::setw(13) << r.timings.reconstruct_s << "  "
      << std::setw(10) << r.timings.overhead_s() << "  " << std::setw(7) << r.timings.total_s << "  "
      << std::setprecision(2) << std::setw(7) << speedup(i) << "  " << hex64(r.checksum) << "\n";
  }
  return o.str();
}

BenchReport cmd_bench(const SliceStack& stack, const std::vector<int>& workers_list, ReconstructionConfig config) {
  if (workers_list.empty()) throw Error(ErrorCode::InvalidArgument, "empty worker list");
  BenchReport report;
  for (int w : workers_list) {
    config.workers = w;
    const ReconstructionResult r = reconstruct(stack, config);
    report.rows.push_back({w, r.timings, volume_checksum(r.volume)});
    if (report.rows.back().checksum != report.rows.front().checksum)
      throw Error(ErrorCode::DeterminismViolation, "volume checksum with " + std::to_string(w) +
                                                       " workers differs from " +
                                                       std::to_string(report.rows.front().workers));
  }
  return report;
}

AccuracyReport cmd_metrics(const SliceStack& ground, const VolumeGrid& recon, int g, int bins) {
  if (g < 0) throw Error(ErrorCode::InvalidArgument, "g must be >= 0");
  if (ground.width() != recon.nx() || ground.height() != recon.ny())
    throw Error(ErrorCode::AlignmentMismatch, "ground slices and volume planes differ in size");
  const double step = ground.slice_gap_mm / ground.pixel_spacing.x();
  std::vector<Image2D> gs, rs;
  for (int i = 0; i < ground.count(); ++i) {
    const int z = static_cast<int>(std::lround(i * step));
    if (z < 0 || z >= recon.nz())
      throw Error(ErrorCode::AlignmentMismatch, "ground slice " + std::to_string(i) + " lies outside the volume");
    if (g > 0 && z % (g + 1) == 0) continue;
    gs.push_back(ground.slices[static_cast<std::size_t>(i)]);
    rs.push_back(recon.plane_z(z));
  }
  if (gs.empty()) throw Error(ErrorCode::AlignmentMismatch, "no ground slice falls on a compared plane");
  return accuracy_percent({gs}, {rs}, {}, bins);
}

std::filesystem::path write_phantom_dataset(const std::filesystem::path& dir, int width, int height, int slices,
                                            int g) {
  PhantomOptions o;
  o.dims = phantom_dims(width, height, slices, g);
  VolumeGrid truth = make_phantom(o);
  // Snap to the 16-bit PNG grid so the files and ground.vol hold the same values.
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double v = std::clamp(static_cast<double>(truth.data()[i]), 0.0, 1.0);
    truth.set(i, static_cast<float>(std::lround(v * 65535.0) / 65535.0));
  }
  const SliceStack stack = stack_from_volume(truth, g);
  std::filesystem::create_directories(dir / "slices");
  StackManifest m;
  m.pixel_spacing_mm = stack.pixel_spacing;
  m.slice_gap_mm = stack.slice_gap_mm;
  m.value_range = std::array<double, 2>{0.0, 1.0};
  for (int i = 0; i < stack.count(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slices/%03d.png", i);
    write_png16(dir / name, stack.slices[static_cast<std::size_t>(i)]);
    m.slice_files.push_back(dir / name);
  }
  const auto manifest = dir / "stack.manifest";
  write_manifest(manifest, m);
  StackManifest gm = m;
  gm.slice_gap_mm = stack.pixel_spacing.x();
  gm.slice_files.clear();
  std::filesystem::create_directories(dir / "ground");
  for (int z = 0; z < truth.nz(); ++z) {
    char name[32];
    std::snprintf(name, sizeof name, "ground/%03d.png", z);
    write_png16(dir / name, truth.plane_z(z));
    gm.slice_files.push_back(dir / name);
  }
  write_manifest(dir / "ground.manifest", gm);
  save_volume(truth, dir / "ground.vol");
  return manifest;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Volume reconstruction from sparse slice stacks"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", "volrec 1.0");

  // reconstruct
  std::string rc_manifest, rc_out;
  ReconstructionConfig rc;
  bool rc_no_edges = false;
  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Reconstruct a dense volume from a slice manifest");
  reconstruct_cmd->add_option("manifest", rc_manifest, "Stack manifest")->required();
  reconstruct_cmd->add_option("out_volume", rc_out, "Output volume file")->required();
  reconstruct_cmd->add_option("--k", rc.k, "Chunks per quadrant")->check(CLI::PositiveNumber);
  reconstruct_cmd->add_option("--workers", rc.workers, "Worker threads")->check(CLI::PositiveNumber);
  reconstruct_cmd->add_option("--halo", rc.halo_width, "Halo width (voxels in-plane, slices along z)")
      ->check(CLI::NonNegativeNumber);
  reconstruct_cmd->add_flag("--no-edge-preserve", rc_no_edges, "Skip edge preservation");
  reconstruct_cmd->add_option("--denoise-mult", rc.denoise_mult, "Shearlet denoise threshold multiplier (0 = off)")
      ->check(CLI::NonNegativeNumber);

  // slice
  std::string sl_volume, sl_out;
  std::vector<int> sl_normal;
  std::vector<double> sl_direction;
  long long sl_mu = 0;
  double sl_depth = 0.0;
  auto* slice_cmd = app.add_subcommand("slice", "Extract a plane as an 8-bit PNG");
  slice_cmd->add_option("volume", sl_volume, "Volume file")->required();
  slice_cmd->add_option("out_image", sl_out, "Output PNG")->required();
  auto* normal_opt = slice_cmd->add_option("--normal", sl_normal, "Integer plane normal a,b,c")
                         ->delimiter(',')
                         ->expected(3);
  auto* direction_opt = slice_cmd->add_option("--direction", sl_direction, "View direction x,y,z")
                            ->delimiter(',')
                            ->expected(3);
  auto* mu_opt = slice_cmd->add_option("--mu", sl_mu, "Plane intercept (with --normal)");
  auto* depth_opt = slice_cmd->add_option("--depth", sl_depth,
                                          "With --normal: plane a*x+b*y+c*z = depth; with --direction: distance "
                                          "from the volume center");
  normal_opt->excludes(direction_opt);
  mu_opt->needs(normal_opt);
  mu_opt->excludes(depth_opt);

  // crop
  std::string cr_volume, cr_out;
  std::vector<int> cr_box, cr_budget{kDefaultRenderBudget.x(), kDefaultRenderBudget.y(), kDefaultRenderBudget.z()};
  std::vector<std::string> cr_planes;
  auto* crop_cmd = app.add_subcommand("crop", "Cut a region out of a volume");
  crop_cmd->add_option("volume", cr_volume, "Volume file")->required();
  crop_cmd->add_option("out_volume", cr_out, "Output volume file")->required();
  crop_cmd->add_option("--box", cr_box, "Half-open box x0,y0,z0,x1,y1,z1")->delimiter(',')->expected(6);
  crop_cmd->add_option("--plane", cr_planes, "Cut plane a,b,c,mu,ge|lt (repeatable)");
  crop_cmd->add_option("--budget", cr_budget, "Maximum output dims x,y,z")->delimiter(',')->expected(3);

  // mesh
  std::string me_volume, me_out;
  double me_iso = 0.5, me_lambda = 0.5;
  int me_iters = 0;
  auto* mesh_cmd = app.add_subcommand("mesh", "Marching-cubes iso-surface (STL, or OBJ by extension)");
  mesh_cmd->add_option("volume", me_volume, "Volume file")->required();
  mesh_cmd->add_option("out_mesh", me_out, "Output .stl or .obj")->required();
  mesh_cmd->add_option("--iso", me_iso, "Iso level in (0,1)");
  mesh_cmd->add_option("--smooth-iters", me_iters, "Laplacian smoothing passes")->check(CLI::NonNegativeNumber);
  mesh_cmd->add_option("--lambda", me_lambda, "Smoothing step in (0,1)");

  // metrics
  std::string mt_ground, mt_volume, mt_out;
  int mt_g = 0, mt_bins = 256;
  auto* metrics_cmd = app.add_subcommand("metrics", "Accuracy report of a volume against ground-truth slices");
  metrics_cmd->add_option("ground_manifest", mt_ground, "Manifest of ground-truth slices")->required();
  metrics_cmd->add_option("recon_volume", mt_volume, "Reconstructed volume")->required();
  metrics_cmd->add_option("out_report", mt_out, "Report file (.json for JSON, text otherwise)")->required();
  metrics_cmd->add_option("--gap", mt_g, "Skip acquired planes z % (g+1) == 0")->check(CLI::NonNegativeNumber);
  metrics_cmd->add_option("--bins", mt_bins, "Histogram bins")->check(CLI::Range(2, 65536));

  // bench
  std::string be_manifest, be_out;
  std::vector<int> be_workers{1, 4, 8, 16};
  ReconstructionConfig be;
  bool be_no_edges = false;
  auto* bench_cmd = app.add_subcommand("bench", "Time reconstruction across worker counts");
  bench_cmd->add_option("manifest", be_manifest, "Stack manifest")->required();
  bench_cmd->add_option("out_report", be_out, "Report file")->required();
  bench_cmd->add_option("--workers-list", be_workers, "Comma-separated worker counts")->delimiter(',');
  bench_cmd->add_option("--k", be.k, "Chunks per quadrant")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--halo", be.halo_width, "Halo width")->check(CLI::NonNegativeNumber);
  bench_cmd->add_flag("--no-edge-preserve", be_no_edges, "Skip edge preservation");

  // serve
  std::string sv_host = "127.0.0.1", sv_data = "volrec-data", sv_static;
  int sv_port = 8080, sv_jobs = 1;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--host", sv_host, "Bind address")->envname("VOLREC_HOST");
  serve_cmd->add_option("--port", sv_port, "Port")->envname("VOLREC_PORT")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--data-dir", sv_data, "Directory for job results")->envname("VOLREC_DATA_DIR");
  serve_cmd->add_option("--static-dir", sv_static, "Viewer bundle served at /")->envname("VOLREC_STATIC_DIR");
  serve_cmd->add_option("--job-workers", sv_jobs, "Concurrent reconstruction jobs")->check(CLI::PositiveNumber);

  // phantom
  std::string ph_dir;
  int ph_w = 128, ph_h = 128, ph_n = 25, ph_g = 1;
  auto* phantom_cmd = app.add_subcommand("phantom", "Write an analytic phantom slice stack and its ground truth");
  phantom_cmd->add_option("out_dir", ph_dir, "Output directory")->required();
  phantom_cmd->add_option("--width", ph_w, "Slice width")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--height", ph_h, "Slice height")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--slices", ph_n, "Number of acquired slices")->check(CLI::Range(2, 100000));
  phantom_cmd->add_option("--gap", ph_g, "Missing planes per gap")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "volrec 1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  try {
    if (*reconstruct_cmd) {
      rc.edge_preserve = !rc_no_edges;
      cmd_reconstruct(rc_manifest, rc_out, rc, out);
    } else if (*slice_cmd) {
      const VolumeGrid vol = load_volume(sl_volume);
      DigitalPlane plane;
      if (!sl_normal.empty()) {
        const long long mu = mu_opt->count() ? sl_mu : -std::llround(sl_depth);
        plane = plane_from_normal(Vec3i(sl_normal[0], sl_normal[1], sl_normal[2]), mu);
      } else if (!sl_direction.empty()) {
        plane = make_plane(Vec3d(sl_direction[0], sl_direction[1], sl_direction[2]), sl_depth, vol.dims());
      } else {
        throw Error(ErrorCode::InvalidArgument, "slice needs --normal or --direction");
      }
      const Image2D img = extract_slice(vol, plane);
      write_png(sl_out, img);
      out << "plane = " << plane.normal.x() << " " << plane.normal.y() << " " << plane.normal.z() << " mu " << plane.mu
          << " omega " << plane.omega << "\n"
          << "image = " << img.cols() << " x " << img.rows() << "\n";
    } else if (*crop_cmd) {
      const VolumeGrid vol = load_volume(cr_volume);
      CropRequest req;
      if (!cr_box.empty())
        req.box = std::array<Vec3i, 2>{Vec3i(cr_box[0], cr_box[1], cr_box[2]), Vec3i(cr_box[3], cr_box[4], cr_box[5])};
      for (const auto& p : cr_planes) req.cuts.push_back(parse_cut(p));
      const VolumeGrid c = crop_region(vol, req, Vec3i(cr_budget[0], cr_budget[1], cr_budget[2]));
      save_volume(c, cr_out);
      out << "dims = " << c.nx() << " " << c.ny() << " " << c.nz() << "\n"
          << "origin = " << c.origin().x() << " " << c.origin().y() << " " << c.origin().z() << "\n";
    } else if (*mesh_cmd) {
      if (!(me_iso > 0.0 && me_iso < 1.0)) throw Error(ErrorCode::InvalidArgument, "--iso must lie in (0,1)");
      TriangleMesh mesh = marching_cubes(load_volume(me_volume), me_iso);
      if (me_iters > 0) mesh = smooth_mesh(mesh, me_iters, me_lambda);
      export_mesh(mesh, has_extension(me_out, ".obj") ? MeshFormat::obj : MeshFormat::stl_binary, me_out);
      out << "vertices = " << mesh.vertex_count() << "\n" << "triangles = " << mesh.triangle_count() << "\n";
    } else if (*metrics_cmd) {
      const AccuracyReport r = cmd_metrics(load_stack(mt_ground), load_volume(mt_volume), mt_g, mt_bins);
      write_text(mt_out, has_extension(mt_out, ".json") ? r.to_json() : r.to_text());
      out << r.to_text();
    } else if (*bench_cmd) {
      be.edge_preserve = !be_no_edges;
      const BenchReport r = cmd_bench(load_stack(be_manifest), be_workers, be);
      write_text(be_out, r.to_text());
      out << r.to_text();
    } else if (*serve_cmd) {
      ServiceConfig cfg;
      cfg.data_dir = sv_data;
      cfg.job_workers = sv_jobs;
      if (!sv_static.empty()) cfg.static_dir = sv_static;
      ReconService service(cfg);
      httplib::Server server;
      service.register_routes(server);
      out << "listening on http://" << sv_host << ":" << sv_port << std::endl;
      if (!server.listen(sv_host, sv_port)) throw Error(ErrorCode::Io, "cannot listen on " + sv_host);
    } else if (*phantom_cmd) {
      const auto manifest = write_phantom_dataset(ph_dir, ph_w, ph_h, ph_n, ph_g);
      out << "manifest = " << manifest.string() << "\n"
          << "ground_manifest = " << (std::filesystem::path(ph_dir) / "ground.manifest").string() << "\n"
          << "ground_volume = " << (std::filesystem::path(ph_dir) / "ground.vol").string() << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace volrec
