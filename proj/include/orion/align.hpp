#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "orion/dataset.hpp"
#include "orion/geometry.hpp"
#include "orion/orientation.hpp"

namespace orion::align {

/// Point counts over S radial shells x B azimuth sectors around the vertical
/// axis through the centroid, each shell normalized to sum 1 (empty shells stay
/// zero). Radii are divided by the largest radius, so the descriptor ignores
/// isotropic scale and translation. Rotating the cloud by 360/B degrees shifts
/// every row by one column.
struct AzimuthDescriptor {
  std::size_t bins = 0;    // B, azimuth sectors
  std::size_t shells = 0;  // S
  std::vector<double> values;  // shells x bins, row-major

  double at(std::size_t shell, std::size_t bin) const { return values[shell * bins + bin]; }
  double bin_width_deg() const { return 360.0 / double(bins); }
  friend bool operator==(const AzimuthDescriptor&, const AzimuthDescriptor&) = default;
};

inline constexpr std::size_t kDescriptorBins = 32;
inline constexpr std::size_t kDescriptorShells = 8;

/// Throws std::invalid_argument on an empty cloud or B not divisible by 4.
AzimuthDescriptor azimuth_descriptor(const PointCloud& cloud, std::size_t bins = kDescriptorBins,
                                     std::size_t shells = kDescriptorShells);

/// Descriptor of the cloud rotated by `steps` sectors.
AzimuthDescriptor shift_descriptor(const AzimuthDescriptor& d, long steps);

/// Sum of squared differences between shift_descriptor(a, steps) and b.
double shifted_residual(const AzimuthDescriptor& a, const AzimuthDescriptor& b, long steps);

struct PairAlignment {
  double shift_deg = 0.0;  // rotation of a that best matches b, within [0, period)
  std::size_t steps = 0;
  double error = 0.0;
};

/// Exhaustive search over the shifts inside the period; the smallest shift wins
/// ties. Throws std::invalid_argument on mismatched descriptor sizes or a
/// period that is not a whole number of sectors.
PairAlignment align_pair(const AzimuthDescriptor& a, const AzimuthDescriptor& b, double period_deg);

/// Best residual divided by the best residual at least a quarter period away
/// (both offset by 1e-12). Near 0 for a unique alignment, near 1 when the
/// object looks the same at distinct rotations within the period.
double alignment_contrast(const AzimuthDescriptor& a, const AzimuthDescriptor& b, double period_deg);

struct ReferenceOptions {
  std::size_t initial_size = 100;
  double prune_fraction = 0.1;  // largest share removed per round
  std::size_t floor_size = 20;
  double outlier_factor = 3.0;  // residual above factor * median (+1e-12) marks an outlier
  std::uint64_t seed = 0;
};

struct ReferenceSet {
  double period_deg = 360.0;
  std::vector<std::size_t> members;           // indices into the input
  std::size_t medoid = 0;                     // input index
  std::vector<AzimuthDescriptor> aligned;     // member descriptors rotated into the medoid frame
  std::vector<double> residuals;              // per member, against the medoid
  std::vector<std::size_t> pruned;            // input indices, in removal order
  double total_error = 0.0;                   // mean residual over the final members
  double contrast = 0.0;                      // mean alignment_contrast against the medoid
};

/// Seeds with a random subset, aligns members to the current medoid, removes
/// outliers (worst first, at most prune_fraction per round, never below
/// floor_size) until none remain. Throws std::invalid_argument with fewer than
/// two objects.
ReferenceSet build_reference_set(std::span<const AzimuthDescriptor> objects, double period_deg,
                                 const ReferenceOptions& opts = {});

struct AlignmentResult {
  std::vector<double> rotation_deg;  // per object, [0, period)
  std::vector<double> residual;      // mean error against the reference members
  std::vector<std::size_t> reference_ids;
  std::size_t levels = 1;            // K
  double period_deg = 360.0;
};

/// Each object gets the shift minimizing its mean residual against the aligned
/// reference descriptors.
AlignmentResult align_class(std::span<const AzimuthDescriptor> objects, const ReferenceSet& ref);

/// Largest K in {12, 6, 3} whose error is within the threshold, else 1.
std::size_t assign_orientation_levels(double e360, double e180, double e90, double threshold);

inline constexpr double kDefaultLevelThreshold = 0.5;

struct ClassAlignment {
  AlignmentResult result;
  double e360 = 0.0, e180 = 0.0, e90 = 0.0;  // reference-set contrasts
  model::Period period = model::Period::none;
};

/// Full per-class procedure: reference sets for 360/180/90 degree searches,
/// level assignment from their contrasts, then alignment with the chosen
/// period. Single-level classes get zero rotations.
ClassAlignment auto_align(std::span<const PointCloud> clouds, const ReferenceOptions& opts = {},
                          double threshold = kDefaultLevelThreshold, std::size_t bins = kDescriptorBins,
                          std::size_t shells = kDescriptorShells);

struct ManifestRow {
  std::string id;
  std::string class_name;
  double rotation_deg = 0.0;
  double residual = 0.0;
  std::size_t levels = 1;
};

/// "id,class,rotation_deg,residual,K"
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

/// Uses an alignment manifest as orientation annotation: each class takes the
/// period matching its K, and each sample's azimuth becomes the inverse of its
/// canonicalizing rotation. Samples absent from the manifest are rejected.
data::Dataset apply_alignment(const data::Dataset& ds, std::span<const ManifestRow> rows);

}  // namespace orion::align
