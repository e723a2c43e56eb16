#ifndef SIGMAP_SYNTH_HPP
#define SIGMAP_SYNTH_HPP

#include <variant>
#include <vector>

#include "sigmap/datamodel.hpp"

namespace sigmap {

struct Station {
  CellId cell;
  LatLng location;
  double p0Dbm = -30.0;  // received power at the reference distance
};

// Path-loss exponent region seed: the exponent applies over the Voronoi cell
// of its seed point, so points equidistant from a station inside one region
// share the same noise-free mean.
struct PleSeed {
  LatLng location;
  double exponent = 2.0;  // typical range [2, 6]
};

struct GroundTruth {
  std::vector<Station> stations;
  std::vector<PleSeed> pleField;  // at least one
  double shadowSigmaDb = 0.0;
  double d0M = 1.0;
  LocalFrame frame;

  void validate() const;
  double ple_at(const LatLng& l) const;  // nearest PLE seed (local-frame metric)
};

struct UniformSampling {
  LatLng minCorner;
  LatLng maxCorner;
};

struct RoadBiasedSampling {
  std::vector<std::vector<LatLng>> polylines;
  double crossSectionSigmaM = 20.0;
  double massFraction = 0.8;  // remainder drawn uniformly over the bbox
  LatLng minCorner;
  LatLng maxCorner;
};

struct Hotspot {
  LatLng center;
  double sigmaM = 100.0;
  double massFraction = 0.0;
};

struct HotspotSampling {
  std::vector<Hotspot> hotspots;  // mass fractions sum <= 1, remainder uniform
  LatLng minCorner;
  LatLng maxCorner;
};

using SamplingProcess =
    std::variant<UniformSampling, RoadBiasedSampling, HotspotSampling>;

// Uniform draw over the configured weekday and hour sets.
struct TimeModel {
  std::vector<int> weekdays = {0, 1, 2, 3, 4, 5, 6};
  std::vector<int> hours = {0,  1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11,
                            12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23};
  std::int64_t baseUtc = 1600000000;  // anchors generated timestamps
};

// Noise-free LDPL mean: p0 - 10 * n(l) * log10(dist / d0). Distances below d0
// are clamped to d0 (antenna near-field); *clamped reports it when non-null.
double true_rsrp(const GroundTruth& gt, const CellId& cell, const LatLng& l,
                 bool* clamped = nullptr);

// Serving cell at a location: strongest noise-free mean.
const Station& serving_station(const GroundTruth& gt, const LatLng& l);

Dataset sample_measurements(const GroundTruth& gt, const SamplingProcess& proc,
                            std::size_t n, const TimeModel& timeModel,
                            std::uint64_t seed,
                            FeatureSelector fs = FeatureSelector::XY);

// Shifts ceil(fraction*N) labels by +-magnitudeDb (sign seeded per record).
Dataset inject_label_corruption(const Dataset& d, double fraction,
                                double magnitudeDb, std::uint64_t seed,
                                std::vector<std::size_t>* corruptedIndices);

}  // namespace sigmap

#endif
