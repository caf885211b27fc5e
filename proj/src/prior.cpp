#include "lesionprior/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lesionprior {

const char* lesion_name(Lesion t) {
  switch (t) {
    case Lesion::Ed: return "ed";
    case Lesion::Ncr: return "ncr";
    case Lesion::Et: return "et";
  }
  return "?";
}

const CountVolume& Heatmaps::operator[](Lesion t) const {
  switch (t) {
    case Lesion::Ed: return ed;
    case Lesion::Ncr: return ncr;
    case Lesion::Et: return et;
  }
  return ed;
}

void Percentiles::validate() const {
  if (!(alpha > 0.0 && alpha <= beta && beta <= gamma && gamma <= 100.0)) {
    throw Error("percentiles must satisfy 0 < alpha <= beta <= gamma <= 100");
  }
}

LesionMasks split_lesion_mask(const LabelVolume& gt) {
  LesionMasks m{LabelVolume(gt.geometry()), LabelVolume(gt.geometry()), LabelVolume(gt.geometry())};
  for (std::size_t n = 0; n < gt.size(); ++n) {
    switch (gt[n]) {
      case 0: break;
      case kLabelNcr: m.ncr[n] = 1; break;
      case kLabelEd: m.ed[n] = 1; break;
      case kLabelEt: m.et[n] = 1; break;
      default:
        throw Error("unexpected lesion label " + std::to_string(gt[n]) +
                    " (expected 0, 1, 2 or 4)");
    }
  }
  return m;
}

Heatmaps accumulate_heatmaps(const std::vector<LesionMasks>& subjects) {
  if (subjects.empty()) throw Error("accumulate_heatmaps: no subjects");
  const Geometry& g = subjects.front().ed.geometry();
  Heatmaps h{CountVolume(g), CountVolume(g), CountVolume(g), 0};
  for (const auto& s : subjects) {
    require_same_grid(h.ed, s.ed, "accumulate_heatmaps");
    require_same_grid(h.ed, s.ncr, "accumulate_heatmaps");
    require_same_grid(h.ed, s.et, "accumulate_heatmaps");
    for (std::size_t n = 0; n < h.ed.size(); ++n) {
      h.ed[n] += s.ed[n] != 0;
      h.ncr[n] += s.ncr[n] != 0;
      h.et[n] += s.et[n] != 0;
    }
    ++h.subjects;
  }
  return h;
}

ThresholdTriple compute_thresholds(const CountVolume& heatmap, const Percentiles& p) {
  p.validate();
  std::vector<double> sorted;
  for (std::int32_t c : heatmap.data()) {
    if (c > 0) sorted.push_back(c);
  }
  if (sorted.empty()) throw Error("empty heatmap: no non-zero voxels");
  std::sort(sorted.begin(), sorted.end());
  return {nearest_rank(sorted, p.alpha), nearest_rank(sorted, p.beta),
          nearest_rank(sorted, p.gamma)};
}

VoiThresholds voi_thresholds(const Heatmaps& h, const VoiOptions& options) {
  auto one = [&](const CountVolume& v) -> std::optional<ThresholdTriple> {
    if (options.skip_empty) {
      bool any = false;
      for (std::int32_t c : v.data()) any = any || c > 0;
      if (!any) return std::nullopt;
    }
    return compute_thresholds(v, options.percentiles);
  };
  return {one(h.ed), one(h.ncr), one(h.et)};
}

LabelVolume build_voi(const Heatmaps& h, const VoiOptions& options) {
  return build_voi(h, voi_thresholds(h, options));
}

LabelVolume build_voi(const Heatmaps& h, const VoiThresholds& t) {
  require_same_grid(h.ed, h.ncr, "build_voi");
  require_same_grid(h.ed, h.et, "build_voi");

  // Rules in priority order; an absent triple never fires.
  struct Rule {
    const CountVolume* map;
    std::optional<double> threshold;
    std::uint8_t label;
  };
  auto level = [](const std::optional<ThresholdTriple>& tt, int i) -> std::optional<double> {
    if (!tt) return std::nullopt;
    return i == 3 ? tt->h3 : i == 2 ? tt->h2 : tt->h1;
  };
  std::vector<Rule> rules;
  std::uint8_t label = 9;
  for (int i = 3; i >= 1; --i) {
    rules.push_back({&h.et, level(t.et, i), label--});
    rules.push_back({&h.ncr, level(t.ncr, i), label--});
    rules.push_back({&h.ed, level(t.ed, i), label--});
  }

  LabelVolume voi(h.ed.geometry());
  for (std::size_t n = 0; n < voi.size(); ++n) {
    for (const Rule& r : rules) {
      if (r.threshold && static_cast<double>((*r.map)[n]) >= *r.threshold) {
        voi[n] = r.label;
        break;
      }
    }
  }
  return voi;
}

std::array<LabelVolume, 9> split_voi_channels(const LabelVolume& voi) {
  std::array<LabelVolume, 9> ch;
  for (auto& c : ch) c = LabelVolume(voi.geometry());
  for (std::size_t n = 0; n < voi.size(); ++n) {
    const std::uint8_t v = voi[n];
    if (v > 9) throw Error("VOI label " + std::to_string(v) + " outside 0..9");
    if (v > 0) ch[v - 1][n] = 1;
  }
  return ch;
}

LabelDistribution label_distribution(const LabelVolume& voi, const Heatmaps& h, int n_subjects) {
  if (n_subjects < 1) throw Error("label_distribution: n_subjects must be >= 1");
  require_same_grid(voi, h.ed, "label_distribution");
  require_same_grid(voi, h.ncr, "label_distribution");
  require_same_grid(voi, h.et, "label_distribution");

  std::array<std::array<std::int64_t, 3>, 10> sums{};
  LabelDistribution d;
  for (std::size_t n = 0; n < voi.size(); ++n) {
    const std::uint8_t l = voi[n];
    if (l > 9) throw Error("VOI label outside 0..9");
    ++d.voxels[l];
    sums[l][0] += h.ed[n];
    sums[l][1] += h.ncr[n];
    sums[l][2] += h.et[n];
  }
  for (std::size_t l = 0; l < 10; ++l) {
    for (std::size_t t = 0; t < 3; ++t) {
      d.probability[l][t] =
          d.voxels[l] == 0
              ? std::numeric_limits<double>::quiet_NaN()
              : static_cast<double>(sums[l][t]) /
                    (static_cast<double>(n_subjects) * static_cast<double>(d.voxels[l]));
    }
  }
  return d;
}

std::string distribution_csv(const LabelDistribution& d) {
  std::ostringstream out;
  out.precision(10);
  out << "label,ed,ncr,et,voxels\n";
  for (std::size_t l = 0; l < 10; ++l) {
    out << l;
    for (double p : d.probability[l]) {
      out << ',';
      if (std::isnan(p)) {
        out << "nan";
      } else {
        out << p;
      }
    }
    out << ',' << d.voxels[l] << '\n';
  }
  return out.str();
}

}  // namespace lesionprior
