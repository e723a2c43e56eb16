#ifndef SIGMAP_INGEST_HPP
#define SIGMAP_INGEST_HPP

#include <optional>
#include <string>
#include <vector>

#include "sigmap/datamodel.hpp"

namespace sigmap {

// Regular census-density grid. Nearest-cell lookup; queries outside the grid
// return nullopt, never a silent zero (densities are areal, so no
// interpolation).
class PopulationGrid {
 public:
  PopulationGrid(LatLng origin, double dLatDeg, double dLngDeg,
                 std::vector<std::vector<double>> densities);

  std::optional<double> density(const LatLng& p) const;
  std::size_t rows() const { return densities_.size(); }
  std::size_t cols() const { return densities_.empty() ? 0 : densities_[0].size(); }

 private:
  LatLng origin_;  // grid point (0,0)
  double dLat_, dLng_;
  std::vector<std::vector<double>> densities_;
};

struct SplitSpec {
  std::vector<double> fractions;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ParseStats {
  std::size_t parsed = 0;
  std::size_t skipped = 0;  // records missing rsrp or geometry
  std::vector<std::string> skipReasons;
};

// Parses a GeoJSON FeatureCollection (or newline-delimited Features) of LTE
// measurements. Field paths: properties.lteMeasurement.{rsrp,rsrq,cqi,earfcn},
// properties.cell.{ci,mnc,mcc,tac}, properties.device.model,
// properties.timestamp, geometry.coordinates = [lng, lat].
// GeoJSON cannot signal swapped coordinate order; [lng, lat] is assumed.
Dataset parse_geojson(const std::string& bytes, KpiKind labelKpi,
                      FeatureSelector fs, ParseStats* stats = nullptr);

// Inverse of parse_geojson for the mapped fields; one Feature per record.
std::string to_geojson(const Dataset& d);

// Timestamps are ISO-8601; a fixed table of US zone abbreviations (EST, EDT,
// CST, CDT, MST, MDT, PST, PDT) plus UTC/GMT/Z is accepted, otherwise an
// explicit +hh:mm offset is required. dayOfWeek/hourOfDay are derived from
// the UTC instant.
std::int64_t parse_timestamp(const std::string& iso);
std::string format_timestamp(std::int64_t utcSeconds);

// CSV with header lat,lng,density; rows must form a regular grid (spacing
// uniform within 1%).
PopulationGrid load_population_grid(const std::string& csvBytes);

struct SplitResult {
  std::vector<Dataset> parts;
  std::vector<std::vector<std::size_t>> indexMaps;  // part -> parent indices
};

// Seeded Fisher-Yates shuffle (SplitMix64 generator, see rng.hpp), then
// contiguous slices of size round(fraction*N), remainder to the last part.
SplitResult split(const Dataset& d, const SplitSpec& spec);

}  // namespace sigmap

#endif
