#include "volrec/kriging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <unordered_map>

#include <Eigen/LU>

namespace volrec {

double VariogramModel::gamma(double h) const {
  if (h <= 0.0) return 0.0;
  const double psill = sill - nugget;
  double shape = 0.0;
  switch (kind) {
    case VariogramKind::exponential:
      shape = 1.0 - std::exp(-3.0 * h / range_len);
      break;
    case VariogramKind::gaussian:
      shape = 1.0 - std::exp(-3.0 * (h * h) / (range_len * range_len));
      break;
    case VariogramKind::spherical: {
      const double r = h / range_len;
      shape = r >= 1.0 ? 1.0 : 1.5 * r - 0.5 * r * r * r;
      break;
    }
  }
  return nugget + psill * shape;
}

double evaluate(DriftTerm term, const Vec3d& p) {
  switch (term) {
    case DriftTerm::constant: return 1.0;
    case DriftTerm::x: return p.x();
    case DriftTerm::y: return p.y();
    case DriftTerm::z: return p.z();
  }
  return 0.0;
}

// ---- variogram ------------------------------------------------------------

EmpiricalVariogram empirical_variogram(std::span<const VariogramSample> samples, int bins) {
  double max_dist = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j)
      max_dist = std::max(max_dist, (samples[i].coord - samples[j].coord).norm());
  if (!(max_dist > 0.0)) throw Error(ErrorCode::DegenerateLags, "all samples are co-located");

  const double max_lag = 0.5 * max_dist;
  const double width = max_lag / bins;
  std::vector<double> lag_sum(bins, 0.0), sq_sum(bins, 0.0);
  std::vector<long> count(bins, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double h = (samples[i].coord - samples[j].coord).norm();
      if (h <= 0.0 || h > max_lag) continue;
      const int b = std::min(bins - 1, static_cast<int>(h / width));
      const double d = samples[i].value - samples[j].value;
      lag_sum[b] += h;
      sq_sum[b] += d * d;
      ++count[b];
    }
  }
  EmpiricalVariogram ev;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    ev.lag.push_back(lag_sum[b] / count[b]);
    ev.gamma.push_back(0.5 * sq_sum[b] / count[b]);
    ev.pairs.push_back(count[b]);
  }
  return ev;
}

namespace {

struct FitResult {
  double nugget = 0.0;
  double psill = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

// Per-bin weight N_h / h^2: short lags dominate, as they matter most to kriging.
double bin_weight(const EmpiricalVariogram& ev, std::size_t i) {
  return static_cast<double>(ev.pairs[i]) / (ev.lag[i] * ev.lag[i]);
}

// Non-negative weighted least squares of gamma ~ nugget + psill * shape(h).
FitResult fit_linear_part(const EmpiricalVariogram& ev, const VariogramModel& shape_model) {
  double sw = 0, sf = 0, sff = 0, sg = 0, sfg = 0;
  std::vector<double> f(ev.lag.size());
  for (std::size_t i = 0; i < ev.lag.size(); ++i) {
    f[i] = shape_model.gamma(ev.lag[i]);
    const double w = bin_weight(ev, i);
    sw += w;
    sf += w * f[i];
    sff += w * f[i] * f[i];
    sg += w * ev.gamma[i];
    sfg += w * f[i] * ev.gamma[i];
  }
  auto sse = [&](double a, double b) {
    double s = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double r = ev.gamma[i] - a - b * f[i];
      s += bin_weight(ev, i) * r * r;
    }
    return s;
  };
  FitResult best;
  auto consider = [&](double a, double b) {
    if (a < 0 || b < 0) return;
    const double s = sse(a, b);
    if (s < best.sse) best = {a, b, s};
  };
  const double det = sw * sff - sf * sf;
  if (std::abs(det) > 1e-12 * std::max(1.0, sw * sff)) consider((sff * sg - sf * sfg) / det, (sw * sfg - sf * sg) / det);
  consider(sg / sw, 0.0);
  if (sff > 0) consider(0.0, sfg / sff);
  return best;
}

}  // namespace

VariogramModel fit_variogram(std::span<const VariogramSample> samples, VariogramKind kind) {
  if (samples.size() < 30) throw Error(ErrorCode::InsufficientSamples, "need at least 30 samples");
  const EmpiricalVariogram ev = empirical_variogram(samples, 15);
  if (ev.lag.empty()) throw Error(ErrorCode::DegenerateLags, "no pairs within the lag limit");

  const double h_min = ev.lag.front();
  const double h_max = ev.lag.back();
  VariogramModel model{kind, 0.0, 0.0, h_max};
  const double gmax = *std::max_element(ev.gamma.begin(), ev.gamma.end());
  if (!(gmax > 0.0)) return model;  // zero-variance field

  auto evaluate_range = [&](double r) {
    VariogramModel shape{kind, 0.0, 1.0, r};
    return fit_linear_part(ev, shape);
  };

  // Coarse log-spaced scan followed by golden-section refinement in log(range).
  const double lo = std::log(h_min / 4.0), hi = std::log(h_max * 4.0);
  constexpr int kSteps = 64;
  int best_i = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kSteps; ++i) {
    const double s = evaluate_range(std::exp(lo + (hi - lo) * i / kSteps)).sse;
    if (s < best_sse) {
      best_sse = s;
      best_i = i;
    }
  }
  double a = lo + (hi - lo) * std::max(0, best_i - 1) / kSteps;
  double b = lo + (hi - lo) * std::min(kSteps, best_i + 1) / kSteps;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = evaluate_range(std::exp(c)).sse, fd = evaluate_range(std::exp(d)).sse;
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = evaluate_range(std::exp(c)).sse;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = evaluate_range(std::exp(d)).sse;
    }
  }
  double r = std::exp(0.5 * (a + b));
  FitResult fit = evaluate_range(r);
  if (best_sse < fit.sse) {
    r = std::exp(lo + (hi - lo) * best_i / kSteps);
    fit = evaluate_range(r);
  }
  model.nugget = fit.nugget;
  model.sill = fit.nugget + fit.psill;
  model.range_len = r;
  return model;
}

std::vector<VariogramSample> sample_known_voxels(const VolumeGrid& grid, std::size_t max_samples) {
  std::vector<Eigen::Index> known;
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    if (!grid.is_missing(i)) known.push_back(i);
  if (known.size() > max_samples) {
    // Partial Fisher-Yates with a fixed seed; raw engine output keeps it portable.
    std::mt19937_64 rng(0x5eed5eedULL);
    for (std::size_t i = 0; i < max_samples; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (known.size() - i));
      std::swap(known[i], known[j]);
    }
    known.resize(max_samples);
    std::sort(known.begin(), known.end());
  }
  std::vector<VariogramSample> out;
  out.reserve(known.size());
  const auto nx = grid.nx(), ny = grid.ny();
  for (auto i : known) {
    const int x = static_cast<int>(i % nx);
    const int y = static_cast<int>((i / nx) % ny);
    const int z = static_cast<int>(i / (static_cast<Eigen::Index>(nx) * ny));
    out.push_back({Vec3d(x, y, z), static_cast<double>(grid.data()[i])});
  }
  return out;
}

// ---- KED system -----------------------------------------------------------

KrigingSystem assemble_ked(const Eigen::Matrix3Xd& coords, const Eigen::VectorXd& values, const Vec3d& target,
                           const VariogramModel& model, const DriftBasis& drift) {
  if (coords.cols() != values.size())
    throw Error(ErrorCode::DimensionMismatch, "coordinate and value counts differ");
  KrigingSystem sys;
  sys.neighbor_coords = coords;
  sys.neighbor_values = values;
  sys.target = target;
  sys.drift = drift;
  sys.prior_variance = model.covariance(0.0);

  const Eigen::Index n = coords.cols();
  const auto p = static_cast<Eigen::Index>(drift.size());
  sys.extended_matrix = Eigen::MatrixXd::Zero(n + p, n + p);
  sys.rhs = Eigen::VectorXd::Zero(n + p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double c = model.covariance((coords.col(i) - coords.col(j)).norm());
      sys.extended_matrix(i, j) = c;
      sys.extended_matrix(j, i) = c;
    }
    for (Eigen::Index k = 0; k < p; ++k) {
      const double q = evaluate(drift[static_cast<std::size_t>(k)], coords.col(i));
      sys.extended_matrix(i, n + k) = q;
      sys.extended_matrix(n + k, i) = q;
    }
    sys.rhs[i] = model.covariance((coords.col(i) - target).norm());
  }
  for (Eigen::Index k = 0; k < p; ++k) sys.rhs[n + k] = evaluate(drift[static_cast<std::size_t>(k)], target);
  return sys;
}

namespace {

bool try_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& x) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) return false;
  x = lu.solve(b);
  x += lu.solve(b - a * x);  // one step of iterative refinement
  return x.allFinite();
}

}  // namespace

KrigingSystem solve_ked(KrigingSystem sys) {
  const Eigen::Index n = sys.neighbor_count();
  const auto p = static_cast<Eigen::Index>(sys.drift.size());
  if (n == 0) throw Error(ErrorCode::NoKnownNeighbors, "empty kriging system");
  Eigen::VectorXd sol;
  if (!try_solve(sys.extended_matrix, sys.rhs, sol)) {
    Eigen::MatrixXd ridged = sys.extended_matrix;
    const double trace = sys.extended_matrix.topLeftCorner(n, n).trace();
    ridged.topLeftCorner(n, n).diagonal().array() += 1e-10 * trace / static_cast<double>(n);
    if (!try_solve(ridged, sys.rhs, sol))
      throw Error(ErrorCode::SingularSystem, "extended kriging matrix is singular after ridge");
    sys.extended_matrix = std::move(ridged);
    sys.ridge_applied = true;
  }
  sys.weights = sol.head(n);
  sys.lagrange = sol.tail(p);
  sys.estimate = sys.weights.dot(sys.neighbor_values);
  sys.variance = sys.prior_variance - sys.weights.dot(sys.rhs.head(n)) - sys.lagrange.dot(sys.rhs.tail(p));
  return sys;
}

double unbiasedness_residual(const KrigingSystem& sys) {
  double worst = 0.0;
  for (std::size_t k = 0; k < sys.drift.size(); ++k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < sys.neighbor_count(); ++i)
      s += sys.weights[i] * evaluate(sys.drift[k], sys.neighbor_coords.col(i));
    worst = std::max(worst, std::abs(s - evaluate(sys.drift[k], sys.target)));
  }
  return worst;
}

// ---- gridded interpolation ------------------------------------------------

namespace {

struct Window {
  Vec3i lo, hi;  // inclusive, clipped to the grid
};

// Window of edge lengths w whose central cell holds the target: [t - (w/2 - 1), t + w/2] per axis.
Window window_around(const Vec3i& dims, const Vec3i& t, const Vec3i& w) {
  Window win;
  for (int a = 0; a < 3; ++a) {
    win.lo[a] = std::max(0, t[a] - (w[a] / 2 - 1));
    win.hi[a] = std::min(dims[a] - 1, t[a] + w[a] / 2);
  }
  return win;
}

// Identifies the known-neighbor geometry relative to the target; the solved
// weights depend on nothing else, so equal keys share one solution.
struct GeometryKey {
  std::array<int, 9> header{};
  std::vector<std::uint64_t> bits;
  bool operator==(const GeometryKey&) const = default;
};

struct GeometryKeyHash {
  std::size_t operator()(const GeometryKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ull;
    };
    for (int v : k.header) mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
    for (auto b : k.bits) mix(b);
    return static_cast<std::size_t>(h);
  }
};

struct Neighborhood {
  GeometryKey key;
  std::vector<Eigen::Index> indices;  // linear indices of known voxels, raster order
  Eigen::Matrix3Xd offsets;           // coordinates relative to the target
};

void gather(const VolumeGrid& grid, const Vec3i& t, const Vec3i& w, Neighborhood& nb) {
  const Window win = window_around(grid.dims(), t, w);
  nb.key.header = {w.x(), w.y(), w.z(), win.lo.x() - t.x(), win.lo.y() - t.y(), win.lo.z() - t.z(),
                   win.hi.x() - t.x(), win.hi.y() - t.y(), win.hi.z() - t.z()};
  const Vec3i ext = win.hi - win.lo + Vec3i::Ones();
  const std::size_t cells = static_cast<std::size_t>(ext.x()) * ext.y() * ext.z();
  nb.key.bits.assign((cells + 63) / 64, 0);
  nb.indices.clear();
  std::size_t bit = 0;
  for (int z = win.lo.z(); z <= win.hi.z(); ++z)
    for (int y = win.lo.y(); y <= win.hi.y(); ++y) {
      const Eigen::Index row = grid.index(0, y, z);
      for (int x = win.lo.x(); x <= win.hi.x(); ++x, ++bit) {
        if (grid.is_missing(row + x)) continue;
        nb.key.bits[bit / 64] |= std::uint64_t{1} << (bit % 64);
        nb.indices.push_back(row + x);
      }
    }
  nb.offsets.resize(3, static_cast<Eigen::Index>(nb.indices.size()));
  const auto nx = grid.nx(), ny = grid.ny();
  for (std::size_t i = 0; i < nb.indices.size(); ++i) {
    const Eigen::Index li = nb.indices[i];
    nb.offsets.col(static_cast<Eigen::Index>(i)) =
        Vec3d(static_cast<double>(li % nx - t.x()), static_cast<double>((li / nx) % ny - t.y()),
              static_cast<double>(li / (static_cast<Eigen::Index>(nx) * ny) - t.z()));
  }
}

enum class SolveStatus { ok, empty, rank_deficient };

struct Solution {
  SolveStatus status = SolveStatus::empty;
  Eigen::VectorXd weights;
  double variance = 0.0;
};

Eigen::Index drift_rank(const Eigen::Matrix3Xd& offsets, const DriftBasis& drift) {
  Eigen::MatrixXd f(offsets.cols(), static_cast<Eigen::Index>(drift.size()));
  for (Eigen::Index i = 0; i < offsets.cols(); ++i)
    for (std::size_t k = 0; k < drift.size(); ++k)
      f(i, static_cast<Eigen::Index>(k)) = evaluate(drift[k], offsets.col(i));
  return Eigen::FullPivLU<Eigen::MatrixXd>(f).rank();
}

// Kriging weights are invariant to scaling the covariance, so a zero-sill
// (constant) field borrows a unit sill to keep the system well posed.
VariogramModel effective_model(const VariogramModel& model) {
  if (model.sill > 0.0) return model;
  return {model.kind, 0.0, 1.0, model.range_len > 0 ? model.range_len : 1.0};
}

Solution solve_geometry(const Eigen::Matrix3Xd& offsets, const VariogramModel& model, const DriftBasis& drift,
                        bool reduce_drift) {
  Solution sol;
  if (offsets.cols() == 0) return sol;
  DriftBasis basis = drift;
  if (drift_rank(offsets, basis) < static_cast<Eigen::Index>(basis.size())) {
    if (!reduce_drift) {
      sol.status = SolveStatus::rank_deficient;
      return sol;
    }
    // Keep, in order, only the drift terms the neighbors can resolve.
    basis.clear();
    for (auto term : drift) {
      DriftBasis trial = basis;
      trial.push_back(term);
      if (drift_rank(offsets, trial) == static_cast<Eigen::Index>(trial.size())) basis = std::move(trial);
    }
  }
  const KrigingSystem solved =
      solve_ked(assemble_ked(offsets, Eigen::VectorXd::Zero(offsets.cols()), Vec3d::Zero(), effective_model(model), basis));
  sol.status = SolveStatus::ok;
  sol.weights = solved.weights;
  sol.variance = std::max(0.0, solved.variance);
  return sol;
}

double apply_weights(const VolumeGrid& grid, const Neighborhood& nb, const Eigen::VectorXd& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < nb.indices.size(); ++i)
    s += w[static_cast<Eigen::Index>(i)] * static_cast<double>(grid.data()[nb.indices[i]]);
  return s;
}

// Doubles the window along axes where the known neighbors have no spread,
// or along every axis when there are none (or none is degenerate).
Vec3i widen(const Neighborhood& nb, const Vec3i& w, int max_window) {
  Vec3i next = w;
  bool any = false;
  if (nb.offsets.cols() > 0)
    for (int a = 0; a < 3; ++a)
      if (nb.offsets.row(a).minCoeff() == nb.offsets.row(a).maxCoeff() && w[a] < max_window) {
        next[a] = std::min(2 * w[a], max_window);
        any = true;
      }
  if (!any)
    for (int a = 0; a < 3; ++a) next[a] = std::min(2 * w[a], std::max(w[a], max_window));
  return next;
}

}  // namespace

float interpolate_voxel(const VolumeGrid& grid, const Vec3i& target, const VariogramModel& model,
                        const KrigingOptions& options) {
  if (!grid.contains(target.x(), target.y(), target.z()))
    throw Error(ErrorCode::InvalidArgument, "target outside grid");
  if (!grid.is_missing(target.x(), target.y(), target.z()))
    throw Error(ErrorCode::InvalidArgument, "target voxel is already known");
  Neighborhood nb;
  gather(grid, target, Vec3i::Constant(options.window), nb);
  const Solution sol = solve_geometry(nb.offsets, model, options.drift, false);
  if (sol.status == SolveStatus::empty) throw Error(ErrorCode::NoKnownNeighbors, "no known voxel in window");
  if (sol.status == SolveStatus::rank_deficient)
    throw Error(ErrorCode::NoKnownNeighbors, "known voxels in window do not resolve the drift basis");
  double v = apply_weights(grid, nb, sol.weights);
  if (options.clamp) {
    const auto range = grid.known_range();
    v = std::clamp(v, static_cast<double>(range[0]), static_cast<double>(range[1]));
  }
  return static_cast<float>(v);
}

VolumeGrid fill_missing(const VolumeGrid& grid, const VariogramModel& model, const KrigingOptions& options,
                        VolumeGrid* variance) {
  VolumeGrid out = grid;
  if (variance) *variance = VolumeGrid(grid.dims(), 0.0f, grid.origin());
  if (grid.fully_known()) return out;
  if (grid.missing_count() == static_cast<std::size_t>(grid.size()))
    throw Error(ErrorCode::NoKnownNeighbors, "grid has no known voxels");

  const auto range = grid.known_range();
  std::unordered_map<GeometryKey, Solution, GeometryKeyHash> cache;
  Neighborhood nb;
  for (int z = 0; z < grid.nz(); ++z)
    for (int y = 0; y < grid.ny(); ++y)
      for (int x = 0; x < grid.nx(); ++x) {
        const Eigen::Index li = grid.index(x, y, z);
        if (!grid.is_missing(li)) continue;
        const Vec3i t(x, y, z);
        for (Vec3i w = Vec3i::Constant(options.window);;) {
          gather(grid, t, w, nb);
          const Vec3i next = widen(nb, w, options.max_window);
          const bool last = next == w;
          auto it = cache.find(nb.key);
          if (it == cache.end())
            it = cache.emplace(nb.key, solve_geometry(nb.offsets, model, options.drift, last)).first;
          const Solution& sol = it->second;
          if (sol.status == SolveStatus::ok) {
            double v = apply_weights(grid, nb, sol.weights);
            if (options.clamp) v = std::clamp(v, static_cast<double>(range[0]), static_cast<double>(range[1]));
            out.set(li, static_cast<float>(v));
            if (variance) variance->set(li, static_cast<float>(sol.variance));
            break;
          }
          if (last)
            throw Error(ErrorCode::NoKnownNeighbors,
                        "no known voxel within " + std::to_string(w.x()) + "x" + std::to_string(w.y()) + "x" +
                            std::to_string(w.z()) + " of (" + std::to_string(x) + "," + std::to_string(y) + "," +
                            std::to_string(z) + ")");
          w = next;
        }
      }
  return out;
}

}  // namespace volrec
