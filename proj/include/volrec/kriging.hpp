#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "volrec/volume.hpp"

namespace volrec {

enum class VariogramKind { exponential, gaussian, spherical };

/// Variogram gamma(h) with a nugget discontinuity at the origin and practical
/// range `range_len` (the lag where ~95% of the sill is reached).
struct VariogramModel {
  VariogramKind kind = VariogramKind::exponential;
  double nugget = 0.0;
  double sill = 1.0;
  double range_len = 1.0;

  double gamma(double h) const;
  /// Covariance of residuals, sill - gamma(h); sill at h == 0.
  double covariance(double h) const { return sill - gamma(h); }
  bool valid() const { return nugget >= 0 && sill >= nugget && range_len > 0; }
};

struct VariogramSample {
  Vec3d coord;
  double value = 0.0;
};

struct EmpiricalVariogram {
  std::vector<double> lag;    // mean pair distance per bin
  std::vector<double> gamma;  // semivariance per bin
  std::vector<long> pairs;    // pair count per bin
};

EmpiricalVariogram empirical_variogram(std::span<const VariogramSample> samples, int bins = 15);

/// Weighted least-squares fit (weights = pair counts) of the chosen model to
/// the empirical semivariances. A zero-variance field yields nugget = sill = 0.
VariogramModel fit_variogram(std::span<const VariogramSample> samples,
                             VariogramKind kind = VariogramKind::exponential);

/// Deterministic subsample of the grid's known voxels for variogram fitting.
std::vector<VariogramSample> sample_known_voxels(const VolumeGrid& grid, std::size_t max_samples);

enum class DriftTerm { constant, x, y, z };
using DriftBasis = std::vector<DriftTerm>;

inline DriftBasis constant_drift() { return {DriftTerm::constant}; }
inline DriftBasis linear_drift() { return {DriftTerm::constant, DriftTerm::x, DriftTerm::y, DriftTerm::z}; }
double evaluate(DriftTerm term, const Vec3d& p);

/// Kriging-with-external-drift system. Before solve_ked only the inputs and the
/// assembled matrices are populated.
struct KrigingSystem {
  Eigen::Matrix3Xd neighbor_coords;
  Eigen::VectorXd neighbor_values;
  Vec3d target = Vec3d::Zero();
  DriftBasis drift;

  Eigen::MatrixXd extended_matrix;  // [C F; F^T 0]
  Eigen::VectorXd rhs;              // [c0; q(s0)]
  double prior_variance = 0.0;      // C(0)

  Eigen::VectorXd weights;
  Eigen::VectorXd lagrange;
  double estimate = 0.0;
  double variance = 0.0;
  bool ridge_applied = false;

  Eigen::Index neighbor_count() const { return neighbor_coords.cols(); }
};

KrigingSystem assemble_ked(const Eigen::Matrix3Xd& coords, const Eigen::VectorXd& values,
                           const Vec3d& target, const VariogramModel& model, const DriftBasis& drift);

/// Solves the extended system for weights and Lagrange multipliers. On a
/// singular matrix a ridge of 1e-10 * trace(C) / n is added to the covariance
/// block once; a second failure throws SingularSystem.
KrigingSystem solve_ked(KrigingSystem system);

/// Largest |sum_i w_i q_k(s_i) - q_k(s0)| over the drift terms.
double unbiasedness_residual(const KrigingSystem& system);

struct KrigingOptions {
  DriftBasis drift = linear_drift();
  int window = 4;       // initial neighborhood edge length
  int max_window = 16;  // fill_missing widens the window up to this edge length
  bool clamp = true;    // clamp predictions to the grid's known range
};

/// Prediction at a missing voxel from the known voxels of the window x window x
/// window neighborhood around it (clipped at the grid border). Throws
/// NoKnownNeighbors when the window holds no known voxel or its known voxels
/// cannot resolve the drift basis.
float interpolate_voxel(const VolumeGrid& grid, const Vec3i& target, const VariogramModel& model,
                        const KrigingOptions& options = {});

/// Fills every missing voxel. Known voxels are copied bit-exactly and only
/// originally-known voxels are used as neighbors, so the result does not depend
/// on visit order. Optionally writes the kriging variance of each filled voxel
/// (zero at known voxels). When a window has no known voxel or cannot resolve
/// the drift, it is doubled along the axes where its known voxels have no
/// spread (all axes if it is empty), up to max_window; at that size the drift
/// is reduced to the terms the neighbors resolve.
VolumeGrid fill_missing(const VolumeGrid& grid, const VariogramModel& model, const KrigingOptions& options = {},
                        VolumeGrid* variance = nullptr);

}  // namespace volrec
