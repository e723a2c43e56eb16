#ifndef SIGMAP_DATAMODEL_HPP
#define SIGMAP_DATAMODEL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "sigmap/geo.hpp"

namespace sigmap {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class KpiKind { Rsrp, Rsrq, Cqi };

std::string kpi_name(KpiKind k);

// Sanity envelope for RSRP labels; records outside it are rejected at ingest.
inline constexpr double kRsrpMinDbm = -150.0;
inline constexpr double kRsrpMaxDbm = -30.0;

struct CellId {
  int mcc = 0;
  int mnc = 0;
  int tac = 0;
  int ci = 0;

  auto operator<=>(const CellId&) const = default;
};

// (mcc, mnc, tac) identifies an LTE tracking area.
struct TaKey {
  int mcc = 0;
  int mnc = 0;
  int tac = 0;

  auto operator<=>(const TaKey&) const = default;
  static TaKey of(const CellId& c) { return TaKey{c.mcc, c.mnc, c.tac}; }
};

// One crowdsourced KPI observation.
struct Measurement {
  LatLng location;
  std::int64_t timestampUtc = 0;  // seconds since epoch
  int dayOfWeek = 0;              // 0 = Monday
  int hourOfDay = 0;
  CellId cell;
  std::string deviceModel;
  std::optional<bool> outdoor;
  std::optional<double> bsDistanceM;
  std::optional<int> dlFreq;  // EARFCN
  double rsrp = 0.0;          // dBm
  std::optional<double> rsrq;
  std::optional<int> cqi;
  // Unmapped metadata (e.g. locationMetaData.accuracy) carried through
  // ingest verbatim, unused by any model.
  std::vector<std::pair<std::string, std::string>> extras;

  void validate() const;  // throws Error on invariant violation
  double label(KpiKind k) const;
};

enum class FeatureSelector { XY, XYT, All, AllMinusCid };

std::string selector_name(FeatureSelector s);

// Stable integer codes for categorical fields, built once per dataset and
// serialized with any fitted model so prediction-time encoding matches
// training-time encoding. Codes are assigned in sorted key order.
struct EncodingDictionary {
  std::map<CellId, int> cellCodes;
  std::map<std::string, int> deviceCodes;

  int cell_code(const CellId& c) const;      // -1 when unseen
  int device_code(const std::string& d) const;  // -1 when unseen
};

struct FeatureVector {
  std::vector<double> values;
};

// Names and categorical flags for the encoded tuple of a selector, in the
// fixed documented order.
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<bool> categorical;

  static FeatureSchema for_selector(FeatureSelector s);
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Measurement> records, KpiKind labelKpi,
          FeatureSelector featureSet);

  const std::vector<Measurement>& records() const { return records_; }
  KpiKind label_kpi() const { return labelKpi_; }
  FeatureSelector feature_set() const { return featureSet_; }
  const EncodingDictionary& dictionary() const { return dict_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  double label(std::size_t i) const {
    return labelOverride_.empty() ? records_[i].label(labelKpi_)
                                  : labelOverride_[i];
  }
  std::vector<double> labels() const;

  // Replaces labels with externally transformed values (quality module).
  // Transformed labels override the per-record KPI value.
  void set_label_override(std::vector<double> labels, bool classification);
  bool has_label_override() const { return !labelOverride_.empty(); }
  bool classification_labels() const { return classification_; }

  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Measurement> records_;
  KpiKind labelKpi_ = KpiKind::Rsrp;
  FeatureSelector featureSet_ = FeatureSelector::XY;
  EncodingDictionary dict_;
  std::vector<double> labelOverride_;
  bool classification_ = false;
};

struct WeightVector {
  std::vector<double> weights;

  // Throws on length mismatch, negative weights, or all-zero weight.
  void validate(std::size_t datasetSize) const;
  static WeightVector ones(std::size_t n);
};

// Encodes exactly the fields the selector names, in fixed order:
//   XY          -> (lat, lng)
//   XYT         -> (lat, lng, dayOfWeek, hourOfDay)
//   All         -> (lat, lng, dayOfWeek, hourOfDay, cellCode, deviceCode,
//                   outdoor, bsDistanceM, dlFreq)
//   AllMinusCid -> All without cellCode
// Missing optional fields required by the selector raise an Error naming the
// field.
FeatureVector encode_features(const Measurement& m, FeatureSelector fs,
                              const EncodingDictionary& dict);

std::vector<std::pair<CellId, Dataset>> group_by_cell(const Dataset& d);
std::vector<std::pair<TaKey, Dataset>> group_by_ta(const Dataset& d);

}  // namespace sigmap

#endif
