#include "sigmap/datamodel.hpp"

#include <algorithm>
#include <cmath>

namespace sigmap {

std::string kpi_name(KpiKind k) {
  switch (k) {
    case KpiKind::Rsrp: return "rsrp";
    case KpiKind::Rsrq: return "rsrq";
    case KpiKind::Cqi: return "cqi";
  }
  return "?";
}

std::string selector_name(FeatureSelector s) {
  switch (s) {
    case FeatureSelector::XY: return "xy";
    case FeatureSelector::XYT: return "xyt";
    case FeatureSelector::All: return "all";
    case FeatureSelector::AllMinusCid: return "all_minus_cid";
  }
  return "?";
}

void Measurement::validate() const {
  if (location.lat < -90.0 || location.lat > 90.0)
    throw Error("measurement: lat out of range: " + std::to_string(location.lat));
  if (location.lng < -180.0 || location.lng > 180.0)
    throw Error("measurement: lng out of range: " + std::to_string(location.lng));
  if (dayOfWeek < 0 || dayOfWeek > 6)
    throw Error("measurement: dayOfWeek out of range");
  if (hourOfDay < 0 || hourOfDay > 23)
    throw Error("measurement: hourOfDay out of range");
  if (cell.mcc < 0 || cell.mnc < 0 || cell.tac < 0 || cell.ci < 0)
    throw Error("measurement: negative cell id component");
  if (rsrp < kRsrpMinDbm || rsrp > kRsrpMaxDbm)
    throw Error("measurement: rsrp outside sanity envelope: " + std::to_string(rsrp));
  if (cqi && (*cqi < 0 || *cqi > 15))
    throw Error("measurement: cqi outside {0..15}");
}

double Measurement::label(KpiKind k) const {
  switch (k) {
    case KpiKind::Rsrp: return rsrp;
    case KpiKind::Rsrq:
      if (!rsrq) throw Error("measurement: missing rsrq label");
      return *rsrq;
    case KpiKind::Cqi:
      if (!cqi) throw Error("measurement: missing cqi label");
      return static_cast<double>(*cqi);
  }
  throw Error("unknown kpi");
}

int EncodingDictionary::cell_code(const CellId& c) const {
  auto it = cellCodes.find(c);
  return it == cellCodes.end() ? -1 : it->second;
}

int EncodingDictionary::device_code(const std::string& d) const {
  auto it = deviceCodes.find(d);
  return it == deviceCodes.end() ? -1 : it->second;
}

FeatureSchema FeatureSchema::for_selector(FeatureSelector s) {
  FeatureSchema fs;
  auto add = [&](const std::string& n, bool cat) {
    fs.names.push_back(n);
    fs.categorical.push_back(cat);
  };
  add("lat", false);
  add("lng", false);
  if (s == FeatureSelector::XY) return fs;
  add("dayOfWeek", false);
  add("hourOfDay", false);
  if (s == FeatureSelector::XYT) return fs;
  if (s == FeatureSelector::All) add("cellCode", true);
  add("deviceCode", true);
  add("outdoor", false);
  add("bsDistanceM", false);
  add("dlFreq", false);
  return fs;
}

Dataset::Dataset(std::vector<Measurement> records, KpiKind labelKpi,
                 FeatureSelector featureSet)
    : records_(std::move(records)), labelKpi_(labelKpi), featureSet_(featureSet) {
  for (const auto& m : records_) {
    m.validate();
    m.label(labelKpi_);  // every record must carry the label KPI
    dict_.cellCodes.emplace(m.cell, 0);
    dict_.deviceCodes.emplace(m.deviceModel, 0);
  }
  int code = 0;
  for (auto& [k, v] : dict_.cellCodes) v = code++;
  code = 0;
  for (auto& [k, v] : dict_.deviceCodes) v = code++;
}

std::vector<double> Dataset::labels() const {
  if (!labelOverride_.empty()) return labelOverride_;
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& m : records_) out.push_back(m.label(labelKpi_));
  return out;
}

void Dataset::set_label_override(std::vector<double> labels, bool classification) {
  if (labels.size() != records_.size())
    throw Error("label override length mismatch");
  labelOverride_ = std::move(labels);
  classification_ = classification;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Measurement> recs;
  recs.reserve(indices.size());
  for (auto i : indices) {
    if (i >= records_.size()) throw Error("subset index out of range");
    recs.push_back(records_[i]);
  }
  Dataset out(std::move(recs), labelKpi_, featureSet_);
  // keep the parent dictionary so codes stay stable across subsets
  out.dict_ = dict_;
  if (!labelOverride_.empty()) {
    std::vector<double> lab;
    lab.reserve(indices.size());
    for (auto i : indices) lab.push_back(labelOverride_[i]);
    out.labelOverride_ = std::move(lab);
    out.classification_ = classification_;
  }
  return out;
}

void WeightVector::validate(std::size_t datasetSize) const {
  if (weights.size() != datasetSize)
    throw Error("weight vector length " + std::to_string(weights.size()) +
                " != dataset size " + std::to_string(datasetSize));
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0))
      throw Error("negative or NaN weight at index " + std::to_string(i));
    total += weights[i];
  }
  if (total <= 0.0) throw Error("all weights are zero");
}

WeightVector WeightVector::ones(std::size_t n) {
  return WeightVector{std::vector<double>(n, 1.0)};
}

FeatureVector encode_features(const Measurement& m, FeatureSelector fs,
                              const EncodingDictionary& dict) {
  FeatureVector out;
  out.values.push_back(m.location.lat);
  out.values.push_back(m.location.lng);
  if (fs == FeatureSelector::XY) return out;
  out.values.push_back(static_cast<double>(m.dayOfWeek));
  out.values.push_back(static_cast<double>(m.hourOfDay));
  if (fs == FeatureSelector::XYT) return out;
  if (fs == FeatureSelector::All)
    out.values.push_back(static_cast<double>(dict.cell_code(m.cell)));
  out.values.push_back(static_cast<double>(dict.device_code(m.deviceModel)));
  if (!m.outdoor) throw Error("missing feature: outdoor");
  out.values.push_back(*m.outdoor ? 1.0 : 0.0);
  if (!m.bsDistanceM) throw Error("missing feature: bsDistanceM");
  out.values.push_back(*m.bsDistanceM);
  if (!m.dlFreq) throw Error("missing feature: dlFreq");
  out.values.push_back(static_cast<double>(*m.dlFreq));
  return out;
}

namespace {
template <typename Key, typename KeyOf>
auto group_by(const Dataset& d, KeyOf keyOf) {
  std::vector<std::pair<Key, std::vector<std::size_t>>> groups;
  std::map<Key, std::size_t> pos;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Key k = keyOf(d.records()[i]);
    auto it = pos.find(k);
    if (it == pos.end()) {
      pos.emplace(k, groups.size());
      groups.push_back({k, {i}});
    } else {
      groups[it->second].second.push_back(i);
    }
  }
  std::vector<std::pair<Key, Dataset>> out;
  out.reserve(groups.size());
  for (auto& [k, idx] : groups) out.emplace_back(k, d.subset(idx));
  return out;
}
}  // namespace

std::vector<std::pair<CellId, Dataset>> group_by_cell(const Dataset& d) {
  return group_by<CellId>(d, [](const Measurement& m) { return m.cell; });
}

std::vector<std::pair<TaKey, Dataset>> group_by_ta(const Dataset& d) {
  return group_by<TaKey>(d, [](const Measurement& m) { return TaKey::of(m.cell); });
}

}  // namespace sigmap
