#include "orion/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "orion/io.hpp"
#include "orion/parallel.hpp"

namespace orion::align {

namespace {

constexpr double kEps = 1e-12;

std::size_t period_steps(const AzimuthDescriptor& d, double period_deg) {
  const double steps = period_deg / d.bin_width_deg();
  if (!(period_deg > 0.0) || period_deg > 360.0 || std::abs(steps - std::round(steps)) > 1e-9)
    throw std::invalid_argument("period must be a whole number of descriptor sectors within 360 degrees");
  return static_cast<std::size_t>(std::llround(steps));
}

void check_compatible(const AzimuthDescriptor& a, const AzimuthDescriptor& b) {
  if (a.bins != b.bins || a.shells != b.shells || a.values.size() != b.values.size())
    throw std::invalid_argument("descriptor dimensions differ");
}

std::vector<double> residual_profile(const AzimuthDescriptor& a, const AzimuthDescriptor& b, std::size_t n) {
  std::vector<double> r(n);
  for (std::size_t s = 0; s < n; ++s) r[s] = shifted_residual(a, b, long(s));
  return r;
}

double period_of_levels(std::size_t k) {
  switch (k) {
    case 12: return 360.0;
    case 6: return 180.0;
    case 3: return 90.0;
    default: return 0.0;
  }
}

}  // namespace

AzimuthDescriptor azimuth_descriptor(const PointCloud& cloud, std::size_t bins, std::size_t shells) {
  if (cloud.empty()) throw std::invalid_argument("descriptor of an empty cloud");
  if (bins == 0 || bins % 4 != 0) throw std::invalid_argument("azimuth sector count must be a positive multiple of 4");
  if (shells == 0) throw std::invalid_argument("shell count must be positive");
  const Vec3 c = centroid(cloud);
  double rmax = 0.0;
  for (const auto& p : cloud.points) rmax = std::max(rmax, std::hypot(p.x - c.x, p.y - c.y));
  AzimuthDescriptor d{bins, shells, std::vector<double>(bins * shells, 0.0)};
  const double two_pi = 2.0 * std::numbers::pi;
  for (const auto& p : cloud.points) {
    const double dx = p.x - c.x, dy = p.y - c.y;
    const double r = rmax > 0.0 ? std::hypot(dx, dy) / rmax : 0.0;
    const auto s = std::min(shells - 1, static_cast<std::size_t>(r * double(shells)));
    double a = std::atan2(dy, dx);
    if (a < 0.0) a += two_pi;
    const auto b = std::min(bins - 1, static_cast<std::size_t>(a / two_pi * double(bins)));
    d.values[s * bins + b] += 1.0;
  }
  for (std::size_t s = 0; s < shells; ++s) {
    double sum = 0.0;
    for (std::size_t b = 0; b < bins; ++b) sum += d.values[s * bins + b];
    if (sum > 0.0)
      for (std::size_t b = 0; b < bins; ++b) d.values[s * bins + b] /= sum;
  }
  return d;
}

AzimuthDescriptor shift_descriptor(const AzimuthDescriptor& d, long steps) {
  AzimuthDescriptor out = d;
  const long B = long(d.bins);
  for (std::size_t s = 0; s < d.shells; ++s)
    for (long j = 0; j < B; ++j) out.values[s * d.bins + std::size_t(((j + steps) % B + B) % B)] = d.values[s * d.bins + std::size_t(j)];
  return out;
}

double shifted_residual(const AzimuthDescriptor& a, const AzimuthDescriptor& b, long steps) {
  check_compatible(a, b);
  const long B = long(a.bins);
  double e = 0.0;
  for (std::size_t s = 0; s < a.shells; ++s)
    for (long j = 0; j < B; ++j) {
      const double diff = a.values[s * a.bins + std::size_t(((j - steps) % B + B) % B)] - b.values[s * a.bins + std::size_t(j)];
      e += diff * diff;
    }
  return e;
}

PairAlignment align_pair(const AzimuthDescriptor& a, const AzimuthDescriptor& b, double period_deg) {
  check_compatible(a, b);
  const std::size_t n = period_steps(a, period_deg);
  PairAlignment best;
  best.error = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n; ++s) {
    const double e = shifted_residual(a, b, long(s));
    if (e < best.error) {
      best.error = e;
      best.steps = s;
    }
  }
  best.shift_deg = double(best.steps) * a.bin_width_deg();
  return best;
}

double alignment_contrast(const AzimuthDescriptor& a, const AzimuthDescriptor& b, double period_deg) {
  check_compatible(a, b);
  const std::size_t n = period_steps(a, period_deg);
  const auto r = residual_profile(a, b, n);
  const std::size_t best = std::size_t(std::min_element(r.begin(), r.end()) - r.begin());
  const std::size_t guard = std::max<std::size_t>(1, n / 4);
  double alt = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t d = s > best ? s - best : best - s;
    if (std::min(d, n - d) >= guard) alt = std::min(alt, r[s]);
  }
  if (!std::isfinite(alt)) return 1.0;  // period too short to tell rotations apart
  return (r[best] + kEps) / (alt + kEps);
}

ReferenceSet build_reference_set(std::span<const AzimuthDescriptor> objects, double period_deg,
                                 const ReferenceOptions& opts) {
  if (objects.size() < 2) throw std::invalid_argument("a reference set needs at least two objects");
  if (!(opts.prune_fraction >= 0.0 && opts.prune_fraction < 1.0))
    throw std::invalid_argument("prune fraction must lie in [0, 1)");
  for (const auto& o : objects) check_compatible(objects[0], o);
  period_steps(objects[0], period_deg);

  ReferenceSet ref;
  ref.period_deg = period_deg;
  std::vector<std::size_t> idx(objects.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(opts.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(std::max<std::size_t>(opts.initial_size, 2), objects.size()));
  std::sort(idx.begin(), idx.end());
  const std::size_t floor_size = std::max<std::size_t>(2, opts.floor_size);

  while (true) {
    const std::size_t m = idx.size();
    // Pairwise best-shift errors; symmetric because the residual is.
    std::vector<double> err(m * m, 0.0);
    parallel_for(m, [&](std::size_t lo, std::size_t hi, std::size_t) {
      for (std::size_t i = lo; i < hi; ++i)
        for (std::size_t j = 0; j < m; ++j)
          if (i != j) err[i * m + j] = align_pair(objects[idx[i]], objects[idx[j]], period_deg).error;
    });
    std::size_t med = 0;
    double med_sum = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const double s = std::accumulate(err.begin() + long(i * m), err.begin() + long((i + 1) * m), 0.0);
      if (s < med_sum) {
        med_sum = s;
        med = i;
      }
    }
    std::vector<double> res(m);
    for (std::size_t i = 0; i < m; ++i) res[i] = err[i * m + med];

    std::vector<double> sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + long(m / 2), sorted.end());
    const double median = sorted[m / 2];
    std::vector<std::size_t> outliers;
    for (std::size_t i = 0; i < m; ++i)
      if (i != med && res[i] > opts.outlier_factor * median + kEps) outliers.push_back(i);
    std::stable_sort(outliers.begin(), outliers.end(), [&](auto a, auto b) { return res[a] > res[b]; });
    const std::size_t budget = std::min(m > floor_size ? m - floor_size : 0,
                                        std::max<std::size_t>(1, std::size_t(opts.prune_fraction * double(m))));
    if (outliers.empty() || budget == 0) {
      ref.members = idx;
      ref.medoid = idx[med];
      ref.residuals = res;
      break;
    }
    outliers.resize(std::min(outliers.size(), budget));
    std::vector<char> drop(m, 0);
    for (auto o : outliers) {
      drop[o] = 1;
      ref.pruned.push_back(idx[o]);
    }
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < m; ++i)
      if (!drop[i]) next.push_back(idx[i]);
    idx.swap(next);
  }

  const auto& medoid = objects[ref.medoid];
  for (std::size_t k = 0; k < ref.members.size(); ++k) {
    const auto& d = objects[ref.members[k]];
    ref.aligned.push_back(shift_descriptor(d, long(align_pair(d, medoid, period_deg).steps)));
    ref.contrast += alignment_contrast(d, medoid, period_deg);
  }
  ref.total_error = std::accumulate(ref.residuals.begin(), ref.residuals.end(), 0.0) / double(ref.residuals.size());
  ref.contrast /= double(ref.members.size());
  return ref;
}

AlignmentResult align_class(std::span<const AzimuthDescriptor> objects, const ReferenceSet& ref) {
  if (ref.aligned.empty()) throw std::invalid_argument("reference set is empty");
  AlignmentResult out;
  out.period_deg = ref.period_deg;
  out.reference_ids = ref.members;
  out.levels = ref.period_deg == 360.0 ? 12 : ref.period_deg == 180.0 ? 6 : ref.period_deg == 90.0 ? 3 : 1;
  out.rotation_deg.resize(objects.size());
  out.residual.resize(objects.size());
  const std::size_t n = period_steps(ref.aligned.front(), ref.period_deg);
  parallel_for(objects.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_s = 0;
      for (std::size_t s = 0; s < n; ++s) {
        double e = 0.0;
        for (const auto& r : ref.aligned) e += shifted_residual(objects[i], r, long(s));
        e /= double(ref.aligned.size());
        if (e < best) {
          best = e;
          best_s = s;
        }
      }
      out.rotation_deg[i] = double(best_s) * ref.aligned.front().bin_width_deg();
      out.residual[i] = best;
    }
  });
  return out;
}

std::size_t assign_orientation_levels(double e360, double e180, double e90, double threshold) {
  if (e360 <= threshold) return 12;
  if (e180 <= threshold) return 6;
  if (e90 <= threshold) return 3;
  return 1;
}

ClassAlignment auto_align(std::span<const PointCloud> clouds, const ReferenceOptions& opts, double threshold,
                          std::size_t bins, std::size_t shells) {
  std::vector<AzimuthDescriptor> desc(clouds.size());
  parallel_for(clouds.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) desc[i] = azimuth_descriptor(clouds[i], bins, shells);
  });
  ClassAlignment ca;
  const ReferenceSet r360 = build_reference_set(desc, 360.0, opts);
  const ReferenceSet r180 = build_reference_set(desc, 180.0, opts);
  const ReferenceSet r90 = build_reference_set(desc, 90.0, opts);
  ca.e360 = r360.contrast;
  ca.e180 = r180.contrast;
  ca.e90 = r90.contrast;
  const std::size_t k = assign_orientation_levels(ca.e360, ca.e180, ca.e90, threshold);
  if (k == 1) {
    ca.period = model::Period::none;
    ca.result.levels = 1;
    ca.result.period_deg = 0.0;
    ca.result.reference_ids = r360.members;
    ca.result.rotation_deg.assign(clouds.size(), 0.0);
    ca.result.residual.assign(clouds.size(), 0.0);
    return ca;
  }
  const ReferenceSet& chosen = k == 12 ? r360 : k == 6 ? r180 : r90;
  ca.period = model::period_from_degrees(int(period_of_levels(k)));
  ca.result = align_class(desc, chosen);
  return ca;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
  std::ofstream out(path);
  if (!out) throw io::IoError(path.string() + ": cannot open for writing");
  out << "id,class,rotation_deg,residual,K\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.id << ',' << r.class_name << ',' << r.rotation_deg << ',' << r.residual << ',' << r.levels << '\n';
  if (!out) throw io::IoError(path.string() + ": write failed");
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::IoError(path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    const auto f = io::split_csv(line);
    if (f.size() != 5) throw io::IoError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stoul(f[4])});
    } catch (const std::exception&) {
      throw io::IoError(path.string() + ":" + std::to_string(lineno) + ": malformed numeric field");
    }
  }
  return rows;
}

data::Dataset apply_alignment(const data::Dataset& ds, std::span<const ManifestRow> rows) {
  std::map<std::string, const ManifestRow*> by_id;
  std::map<std::string, std::size_t> levels;
  for (const auto& r : rows) {
    by_id[r.id] = &r;
    auto [it, inserted] = levels.emplace(r.class_name, r.levels);
    if (!inserted && it->second != r.levels)
      throw std::invalid_argument("manifest gives class '" + r.class_name + "' two different level counts");
  }
  std::vector<model::ClassOrientation> classes;
  for (const auto& c : ds.scheme.classes()) {
    auto it = levels.find(c.name);
    if (it == levels.end()) {
      classes.push_back(c);
      continue;
    }
    const double p = period_of_levels(it->second);
    if (it->second != 1 && p == 0.0)
      throw std::invalid_argument("unsupported level count " + std::to_string(it->second));
    classes.push_back(model::ClassOrientation::with_period(
        c.name, it->second == 1 ? model::Period::none : model::period_from_degrees(int(p))));
  }
  data::Dataset out;
  out.scheme = model::OrientationScheme(std::move(classes));
  out.samples = ds.samples;
  for (auto& s : out.samples) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw std::invalid_argument("sample '" + s.id + "' is missing from the alignment manifest");
    s.azimuth_deg = std::fmod(360.0 - it->second->rotation_deg, 360.0);
  }
  out.validate();
  return out;
}

}  // namespace orion::align
