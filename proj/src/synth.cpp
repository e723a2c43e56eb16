#include "sigmap/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sigmap/rng.hpp"

namespace sigmap {

void GroundTruth::validate() const {
  if (stations.empty()) throw Error("ground truth: no stations");
  if (pleField.empty()) throw Error("ground truth: no PLE seeds");
  for (const auto& p : pleField)
    if (p.exponent < 2.0 || p.exponent > 6.0)
      throw Error("ground truth: PLE outside [2,6]");
  if (shadowSigmaDb < 0.0) throw Error("ground truth: negative shadowing sigma");
  if (!(d0M > 0.0)) throw Error("ground truth: d0 must be positive");
}

double GroundTruth::ple_at(const LatLng& l) const {
  XY q = to_local(frame, l);
  double best = std::numeric_limits<double>::infinity();
  double n = pleField.front().exponent;
  for (const auto& seed : pleField) {
    double d = planar_dist(q, to_local(frame, seed.location));
    if (d < best) {
      best = d;
      n = seed.exponent;
    }
  }
  return n;
}

double true_rsrp(const GroundTruth& gt, const CellId& cell, const LatLng& l,
                 bool* clamped) {
  const Station* st = nullptr;
  for (const auto& s : gt.stations)
    if (s.cell == cell) st = &s;
  if (!st) throw Error("true_rsrp: unknown cell");
  double dist = planar_dist(to_local(gt.frame, st->location), to_local(gt.frame, l));
  bool didClamp = dist < gt.d0M;
  if (didClamp) dist = gt.d0M;
  if (clamped) *clamped = didClamp;
  return st->p0Dbm - 10.0 * gt.ple_at(l) * std::log10(dist / gt.d0M);
}

const Station& serving_station(const GroundTruth& gt, const LatLng& l) {
  const Station* best = nullptr;
  double bestRsrp = -std::numeric_limits<double>::infinity();
  for (const auto& s : gt.stations) {
    double r = true_rsrp(gt, s.cell, l);
    if (r > bestRsrp) {
      bestRsrp = r;
      best = &s;
    }
  }
  return *best;
}

namespace {

LatLng uniform_in_bbox(Rng& rng, const LatLng& lo, const LatLng& hi) {
  return LatLng{rng.uniform(lo.lat, hi.lat), rng.uniform(lo.lng, hi.lng)};
}

LatLng draw_location(Rng& rng, const SamplingProcess& proc, const LocalFrame& frame) {
  if (const auto* u = std::get_if<UniformSampling>(&proc))
    return uniform_in_bbox(rng, u->minCorner, u->maxCorner);

  if (const auto* r = std::get_if<RoadBiasedSampling>(&proc)) {
    if (rng.next_double() >= r->massFraction || r->polylines.empty())
      return uniform_in_bbox(rng, r->minCorner, r->maxCorner);
    // pick a segment weighted by length, uniform position along it,
    // gaussian offset across it
    struct Seg { XY a, b; double len; };
    std::vector<Seg> segs;
    double total = 0.0;
    for (const auto& line : r->polylines)
      for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        Seg s{to_local(frame, line[i]), to_local(frame, line[i + 1]), 0.0};
        s.len = planar_dist(s.a, s.b);
        total += s.len;
        segs.push_back(s);
      }
    if (segs.empty() || total <= 0.0)
      return uniform_in_bbox(rng, r->minCorner, r->maxCorner);
    double pick = rng.next_double() * total;
    std::size_t k = 0;
    while (k + 1 < segs.size() && pick > segs[k].len) pick -= segs[k++].len;
    const Seg& s = segs[k];
    double t = s.len > 0.0 ? pick / s.len : 0.0;
    double dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
    double nx = -dy / std::max(s.len, 1e-9), ny = dx / std::max(s.len, 1e-9);
    double off = rng.next_normal() * r->crossSectionSigmaM;
    XY p{s.a.x + t * dx + off * nx, s.a.y + t * dy + off * ny};
    return from_local(frame, p);
  }

  const auto& h = std::get<HotspotSampling>(proc);
  double u = rng.next_double();
  for (const auto& spot : h.hotspots) {
    if (u < spot.massFraction) {
      XY c = to_local(frame, spot.center);
      XY p{c.x + rng.next_normal() * spot.sigmaM,
           c.y + rng.next_normal() * spot.sigmaM};
      return from_local(frame, p);
    }
    u -= spot.massFraction;
  }
  return uniform_in_bbox(rng, h.minCorner, h.maxCorner);
}

}  // namespace

Dataset sample_measurements(const GroundTruth& gt, const SamplingProcess& proc,
                            std::size_t n, const TimeModel& timeModel,
                            std::uint64_t seed, FeatureSelector fs) {
  gt.validate();
  if (n == 0) throw Error("sample_measurements: n must be positive");
  if (timeModel.weekdays.empty() || timeModel.hours.empty())
    throw Error("sample_measurements: empty time model");
  std::vector<Measurement> recs;
  recs.reserve(n);
  // base day aligned to a Monday so generated dayOfWeek matches the weekday draw
  std::int64_t baseDay = timeModel.baseUtc / 86400;
  baseDay -= ((baseDay % 7) + 3) % 7;  // 1970-01-01 was Thursday
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    Measurement m;
    m.location = draw_location(rng, proc, gt.frame);
    const Station& st = serving_station(gt, m.location);
    m.cell = st.cell;
    m.rsrp = true_rsrp(gt, st.cell, m.location) +
             (gt.shadowSigmaDb > 0.0 ? rng.next_normal() * gt.shadowSigmaDb : 0.0);
    m.rsrp = std::clamp(m.rsrp, kRsrpMinDbm, kRsrpMaxDbm);
    int wd = timeModel.weekdays[rng.next_below(timeModel.weekdays.size())];
    int hr = timeModel.hours[rng.next_below(timeModel.hours.size())];
    m.dayOfWeek = wd;
    m.hourOfDay = hr;
    m.timestampUtc = (baseDay + wd) * 86400 + hr * 3600 +
                     static_cast<std::int64_t>(rng.next_below(3600));
    m.deviceModel = "synth-device";
    m.outdoor = true;
    m.bsDistanceM = distance_m(st.location, m.location);
    m.dlFreq = 9820;
    recs.push_back(std::move(m));
  }
  return Dataset(std::move(recs), KpiKind::Rsrp, fs);
}

Dataset inject_label_corruption(const Dataset& d, double fraction,
                                double magnitudeDb, std::uint64_t seed,
                                std::vector<std::size_t>* corruptedIndices) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw Error("inject_label_corruption: fraction must be in [0,1)");
  std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(d.size())));
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  std::vector<Measurement> recs = d.records();
  for (std::size_t i : idx) {
    double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
    recs[i].rsrp = std::clamp(recs[i].rsrp + sign * magnitudeDb,
                              kRsrpMinDbm, kRsrpMaxDbm);
  }
  if (corruptedIndices) *corruptedIndices = idx;
  return Dataset(std::move(recs), d.label_kpi(), d.feature_set());
}

}  // namespace sigmap
