#include "lesionprior/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lesionprior {

const char* region_name(Region r) {
  switch (r) {
    case Region::ET: return "ET";
    case Region::WT: return "WT";
    case Region::TC: return "TC";
  }
  return "?";
}

std::array<LabelVolume, 3> region_masks(const LabelVolume& labels) {
  std::array<LabelVolume, 3> m{LabelVolume(labels.geometry()), LabelVolume(labels.geometry()),
                               LabelVolume(labels.geometry())};
  auto& et = m[static_cast<int>(Region::ET)];
  auto& wt = m[static_cast<int>(Region::WT)];
  auto& tc = m[static_cast<int>(Region::TC)];
  for (std::size_t n = 0; n < labels.size(); ++n) {
    switch (labels[n]) {
      case 0: break;
      case 1: wt[n] = tc[n] = 1; break;
      case 2: wt[n] = 1; break;
      case 4: wt[n] = tc[n] = et[n] = 1; break;
      default: throw Error("region_masks: label " + std::to_string(labels[n]) + " is not 0/1/2/4");
    }
  }
  return m;
}

double dice(const LabelVolume& g, const LabelVolume& p) {
  if (g.dims() != p.dims()) throw Error("dice: shape mismatch");
  std::size_t ng = 0, np = 0, both = 0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const bool a = g[n] != 0, b = p[n] != 0;
    ng += a;
    np += b;
    both += a && b;
  }
  if (ng + np == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(ng + np);
}

LabelVolume boundary(const LabelVolume& mask) {
  LabelVolume out(mask.geometry());
  const Dims& d = mask.dims();
  for (std::size_t k = 0; k < d[2]; ++k) {
    for (std::size_t j = 0; j < d[1]; ++j) {
      for (std::size_t i = 0; i < d[0]; ++i) {
        if (!mask(i, j, k)) continue;
        const bool edge = i == 0 || j == 0 || k == 0 || i + 1 == d[0] || j + 1 == d[1] ||
                          k + 1 == d[2] || !mask(i - 1, j, k) || !mask(i + 1, j, k) ||
                          !mask(i, j - 1, k) || !mask(i, j + 1, k) || !mask(i, j, k - 1) ||
                          !mask(i, j, k + 1);
        if (edge) out(i, j, k) = 1;
      }
    }
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One pass of the lower-envelope transform along a line of n samples, stride
// `stride` starting at `f`. f holds squared distances (or inf) and is updated
// in place: f(p) <- min_q f(q) + (s (p - q))^2.
void envelope_1d(double* f, std::size_t n, std::size_t stride, double s,
                 std::vector<double>& line, std::vector<std::size_t>& v, std::vector<double>& z) {
  line.resize(n);
  for (std::size_t i = 0; i < n; ++i) line[i] = f[i * stride];
  v.resize(n);
  z.resize(n + 1);
  const double s2 = s * s;

  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (line[q] == kInf) continue;
    if (!any) {
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      any = true;
      continue;
    }
    const double fq = line[q] + s2 * static_cast<double>(q) * static_cast<double>(q);
    double inter;
    while (true) {
      const std::size_t r = v[k];
      const double fr = line[r] + s2 * static_cast<double>(r) * static_cast<double>(r);
      inter = (fq - fr) / (2.0 * s2 * static_cast<double>(q - r));
      if (inter <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (inter <= z[k]) {  // k == 0: q dominates the whole line
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = inter;
    z[k + 1] = kInf;
  }
  if (!any) return;

  std::size_t j = 0;
  for (std::size_t p = 0; p < n; ++p) {
    while (z[j + 1] < static_cast<double>(p)) ++j;
    const double dp = s * (static_cast<double>(p) - static_cast<double>(v[j]));
    f[p * stride] = line[v[j]] + dp * dp;
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const LabelVolume& features, const Spacing& spacing) {
  const Dims& d = features.dims();
  std::vector<double> f(features.size(), kInf);
  for (std::size_t n = 0; n < features.size(); ++n) {
    if (features[n]) f[n] = 0.0;
  }
  std::vector<double> line, z;
  std::vector<std::size_t> v;
  for (std::size_t k = 0; k < d[2]; ++k) {
    for (std::size_t j = 0; j < d[1]; ++j) {
      envelope_1d(f.data() + features.index(0, j, k), d[0], 1, spacing[0], line, v, z);
    }
  }
  for (std::size_t k = 0; k < d[2]; ++k) {
    for (std::size_t i = 0; i < d[0]; ++i) {
      envelope_1d(f.data() + features.index(i, 0, k), d[1], d[0], spacing[1], line, v, z);
    }
  }
  for (std::size_t j = 0; j < d[1]; ++j) {
    for (std::size_t i = 0; i < d[0]; ++i) {
      envelope_1d(f.data() + features.index(i, j, 0), d[2], d[0] * d[1], spacing[2], line, v, z);
    }
  }
  return f;
}

std::vector<double> directed_surface_distances(const LabelVolume& from, const LabelVolume& to,
                                               const Spacing& spacing) {
  if (from.dims() != to.dims()) throw Error("surface distance: shape mismatch");
  const LabelVolume bf = boundary(from);
  const std::vector<double> dt = squared_distance_transform(boundary(to), spacing);
  std::vector<double> out;
  for (std::size_t n = 0; n < bf.size(); ++n) {
    if (bf[n]) out.push_back(std::sqrt(dt[n]));
  }
  return out;
}

namespace {

bool is_empty(const LabelVolume& m) {
  return std::none_of(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v != 0; });
}

template <typename Reduce>
double symmetric_distance(const LabelVolume& x, const LabelVolume& y, const Spacing& spacing,
                          Reduce reduce) {
  const bool ex = is_empty(x), ey = is_empty(y);
  if (ex && ey) return 0.0;
  if (ex || ey) return kNoDistance;
  auto a = directed_surface_distances(x, y, spacing);
  auto b = directed_surface_distances(y, x, spacing);
  return std::max(reduce(a), reduce(b));
}

}  // namespace

double hausdorff(const LabelVolume& x, const LabelVolume& y, const Spacing& spacing) {
  return symmetric_distance(x, y, spacing, [](std::vector<double>& d) {
    return *std::max_element(d.begin(), d.end());
  });
}

double hausdorff95(const LabelVolume& x, const LabelVolume& y, const Spacing& spacing) {
  return symmetric_distance(x, y, spacing, [](std::vector<double>& d) {
    std::sort(d.begin(), d.end());
    return nearest_rank(d, 95.0);
  });
}

CaseReport evaluate_case(const LabelVolume& gt, const LabelVolume& pred, std::string case_id) {
  require_same_grid(gt, pred, "evaluate_case");
  const auto g = region_masks(gt);
  const auto p = region_masks(pred);
  const Spacing& sp = gt.geometry().spacing;
  CaseReport r;
  r.case_id = std::move(case_id);
  for (Region reg : kRegions) {
    const int i = static_cast<int>(reg);
    r.regions[i].dice = dice(g[i], p[i]);
    r.regions[i].h95 = hausdorff95(g[i], p[i], sp);
    r.regions[i].hausdorff = hausdorff(g[i], p[i], sp);
  }
  return r;
}

namespace {

void put(std::ostream& out, double v) {
  if (std::isinf(v)) {
    out << "inf";
  } else {
    out << v;
  }
}

}  // namespace

std::string report_csv(const std::vector<CaseReport>& reports) {
  std::ostringstream out;
  out.precision(8);
  out << "case_id,dsc_et,dsc_wt,dsc_tc,h95_et,h95_wt,h95_tc\n";
  std::array<double, 6> sum{};
  for (const auto& r : reports) {
    out << r.case_id;
    for (std::size_t i = 0; i < 3; ++i) {
      out << ',';
      put(out, r.regions[i].dice);
      sum[i] += r.regions[i].dice;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      out << ',';
      put(out, r.regions[i].h95);
      sum[3 + i] += r.regions[i].h95;
    }
    out << '\n';
  }
  if (!reports.empty()) {
    out << "mean";
    for (double s : sum) {
      out << ',';
      put(out, s / static_cast<double>(reports.size()));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace lesionprior
