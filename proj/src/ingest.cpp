#include "sigmap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "sigmap/rng.hpp"

namespace sigmap {

using nlohmann::json;

// ---------------------------------------------------------------- timestamps

namespace {

// Days since 1970-01-01 (Howard Hinnant's civil-date algorithm).
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

struct ZoneAbbrev {
  const char* name;
  int offsetMinutes;
};

constexpr ZoneAbbrev kZones[] = {
    {"UTC", 0},    {"GMT", 0},    {"EST", -300}, {"EDT", -240},
    {"CST", -360}, {"CDT", -300}, {"MST", -420}, {"MDT", -360},
    {"PST", -480}, {"PDT", -420},
};

}  // namespace

std::int64_t parse_timestamp(const std::string& iso) {
  int y, mo, d, h, mi, s;
  int consumed = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &s,
                  &consumed) != 6)
    throw Error("timestamp: cannot parse '" + iso + "'");
  std::string rest = iso.substr(static_cast<std::size_t>(consumed));
  // drop fractional seconds
  if (!rest.empty() && rest[0] == '.') {
    std::size_t i = 1;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
    rest = rest.substr(i);
  }
  int offsetMin = 0;
  if (rest.empty() || rest == "Z") {
    offsetMin = 0;
  } else if (rest[0] == '+' || rest[0] == '-') {
    int oh = 0, om = 0;
    if (std::sscanf(rest.c_str() + 1, "%d:%d", &oh, &om) < 1)
      throw Error("timestamp: bad offset in '" + iso + "'");
    if (rest.find(':') == std::string::npos && rest.size() >= 5) {
      // +hhmm form
      oh = (rest[1] - '0') * 10 + (rest[2] - '0');
      om = (rest[3] - '0') * 10 + (rest[4] - '0');
    }
    offsetMin = oh * 60 + om;
    if (rest[0] == '-') offsetMin = -offsetMin;
  } else {
    bool found = false;
    for (const auto& z : kZones) {
      if (rest == z.name) {
        offsetMin = z.offsetMinutes;
        found = true;
        break;
      }
    }
    if (!found)
      throw Error("timestamp: unknown zone abbreviation '" + rest +
                  "' (use a known US abbreviation or an explicit offset)");
  }
  std::int64_t days = days_from_civil(y, mo, d);
  return days * 86400 + h * 3600 + mi * 60 + s - offsetMin * 60;
}

std::string format_timestamp(std::int64_t t) {
  std::int64_t days = t >= 0 ? t / 86400 : (t - 86399) / 86400;
  std::int64_t sod = t - days * 86400;
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(sod / 3600), static_cast<int>(sod / 60 % 60),
                static_cast<int>(sod % 60));
  return buf;
}

// ------------------------------------------------------------------ GeoJSON

namespace {

Measurement feature_to_measurement(const json& f, std::size_t index) {
  Measurement m;
  const auto path = [index](const std::string& p) {
    return "record " + std::to_string(index) + ": " + p;
  };
  if (!f.contains("geometry") || f["geometry"].is_null())
    throw Error(path("geometry") + " missing");
  const json& geom = f["geometry"];
  const json* coords = nullptr;
  if (geom.contains("coordinates"))
    coords = &geom["coordinates"];
  else if (geom.contains("coords"))
    coords = &geom["coords"];
  else
    throw Error(path("geometry.coordinates") + " missing");
  if (!coords->is_array() || coords->size() < 2)
    throw Error(path("geometry.coordinates") + " malformed");
  m.location.lng = (*coords)[0].get<double>();  // GeoJSON axis order
  m.location.lat = (*coords)[1].get<double>();

  if (!f.contains("properties"))
    throw Error(path("properties") + " missing");
  const json& props = f["properties"];
  if (!props.contains("lteMeasurement") || !props["lteMeasurement"].contains("rsrp"))
    throw Error(path("properties.lteMeasurement.rsrp") + " missing");
  const json& lte = props["lteMeasurement"];
  m.rsrp = lte["rsrp"].get<double>();
  if (lte.contains("rsrq")) m.rsrq = lte["rsrq"].get<double>();
  if (lte.contains("cqi")) m.cqi = lte["cqi"].get<int>();
  if (lte.contains("earfcn")) m.dlFreq = lte["earfcn"].get<int>();

  if (props.contains("cell")) {
    const json& c = props["cell"];
    if (c.contains("ci")) m.cell.ci = c["ci"].get<int>();
    if (c.contains("mnc")) m.cell.mnc = c["mnc"].get<int>();
    if (c.contains("mcc")) m.cell.mcc = c["mcc"].get<int>();
    if (c.contains("tac")) m.cell.tac = c["tac"].get<int>();
  }
  if (props.contains("device") && props["device"].contains("model"))
    m.deviceModel = props["device"]["model"].get<std::string>();
  if (props.contains("timestamp")) {
    m.timestampUtc = parse_timestamp(props["timestamp"].get<std::string>());
    std::int64_t days =
        m.timestampUtc >= 0 ? m.timestampUtc / 86400 : (m.timestampUtc - 86399) / 86400;
    m.dayOfWeek = static_cast<int>(((days % 7) + 10) % 7);  // 1970-01-01 = Thursday, 0 = Monday
    m.hourOfDay = static_cast<int>((m.timestampUtc - days * 86400) / 3600);
  }
  if (props.contains("outdoor")) m.outdoor = props["outdoor"].get<bool>();
  if (props.contains("bsDistanceM")) m.bsDistanceM = props["bsDistanceM"].get<double>();
  if (props.contains("locationMetaData")) {
    for (const auto& [k, v] : props["locationMetaData"].items())
      m.extras.emplace_back("locationMetaData." + k,
                            v.is_string() ? v.get<std::string>() : v.dump());
  }
  return m;
}

}  // namespace

Dataset parse_geojson(const std::string& bytes, KpiKind labelKpi,
                      FeatureSelector fs, ParseStats* stats) {
  std::vector<json> features;
  std::string trimmed = bytes;
  auto first = trimmed.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw Error("geojson: empty input");
  json root;
  try {
    root = json::parse(bytes);
    if (root.is_object() && root.contains("features")) {
      for (auto& f : root["features"]) features.push_back(f);
    } else if (root.is_object() && root.value("type", "") == "Feature") {
      features.push_back(root);
    } else {
      throw Error("geojson: not a FeatureCollection or Feature");
    }
  } catch (const json::parse_error& first_err) {
    // newline-delimited Features
    features.clear();
    std::istringstream in(bytes);
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
      std::size_t lineStart = offset;
      offset += line.size() + 1;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        features.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw Error("geojson: parse error at byte " +
                    std::to_string(lineStart + e.byte) + ": " + e.what());
      }
    }
    if (features.empty())
      throw Error("geojson: parse error at byte " + std::to_string(first_err.byte) +
                  ": " + first_err.what());
  }

  std::vector<Measurement> records;
  ParseStats local;
  for (std::size_t i = 0; i < features.size(); ++i) {
    try {
      records.push_back(feature_to_measurement(features[i], i));
      ++local.parsed;
    } catch (const Error& e) {
      ++local.skipped;
      local.skipReasons.push_back(e.what());
    }
  }
  if (stats) *stats = local;
  return Dataset(std::move(records), labelKpi, fs);
}

std::string to_geojson(const Dataset& d) {
  json features = json::array();
  for (const auto& m : d.records()) {
    json lte;
    lte["rsrp"] = m.rsrp;
    if (m.rsrq) lte["rsrq"] = *m.rsrq;
    if (m.cqi) lte["cqi"] = *m.cqi;
    if (m.dlFreq) lte["earfcn"] = *m.dlFreq;
    json props;
    props["timestamp"] = format_timestamp(m.timestampUtc);
    props["lteMeasurement"] = lte;
    props["cell"] = {{"ci", m.cell.ci}, {"mnc", m.cell.mnc},
                     {"mcc", m.cell.mcc}, {"tac", m.cell.tac}};
    props["device"] = {{"model", m.deviceModel}};
    if (m.outdoor) props["outdoor"] = *m.outdoor;
    if (m.bsDistanceM) props["bsDistanceM"] = *m.bsDistanceM;
    json f;
    f["type"] = "Feature";
    f["properties"] = props;
    f["geometry"] = {{"type", "Point"},
                     {"coordinates", {m.location.lng, m.location.lat}}};
    features.push_back(f);
  }
  json root;
  root["type"] = "FeatureCollection";
  root["features"] = features;
  return root.dump();
}

// ----------------------------------------------------------- population grid

PopulationGrid::PopulationGrid(LatLng origin, double dLatDeg, double dLngDeg,
                               std::vector<std::vector<double>> densities)
    : origin_(origin), dLat_(dLatDeg), dLng_(dLngDeg), densities_(std::move(densities)) {
  for (const auto& row : densities_)
    for (double v : row)
      if (!(v >= 0.0)) throw Error("population grid: negative density");
}

std::optional<double> PopulationGrid::density(const LatLng& p) const {
  double ri = (p.lat - origin_.lat) / dLat_;
  double ci = (p.lng - origin_.lng) / dLng_;
  long r = std::lround(ri);
  long c = std::lround(ci);
  if (r < 0 || c < 0 || r >= static_cast<long>(rows()) ||
      c >= static_cast<long>(cols()))
    return std::nullopt;
  return densities_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
}

PopulationGrid load_population_grid(const std::string& csvBytes) {
  std::istringstream in(csvBytes);
  std::string line;
  if (!std::getline(in, line)) throw Error("population csv: empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "lat,lng,density")
    throw Error("population csv: expected header 'lat,lng,density', got '" + line + "'");
  struct Row { double lat, lng, density; };
  std::vector<Row> rows;
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Row r;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &r.lat, &r.lng, &r.density) != 3)
      throw Error("population csv: bad row at line " + std::to_string(lineNo));
    rows.push_back(r);
  }
  if (rows.empty()) throw Error("population csv: no data rows");

  std::vector<double> lats, lngs;
  for (const auto& r : rows) {
    lats.push_back(r.lat);
    lngs.push_back(r.lng);
  }
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(lats);
  uniq(lngs);
  if (lats.size() < 2 || lngs.size() < 2)
    throw Error("population csv: cannot infer grid spacing from a single row/column");
  auto check_spacing = [](const std::vector<double>& v, const char* axis) {
    double d0 = v[1] - v[0];
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      double d = v[i + 1] - v[i];
      if (std::fabs(d - d0) > 0.01 * std::fabs(d0))
        throw Error(std::string("population csv: irregular ") + axis + " spacing");
    }
    return d0;
  };
  double dLat = check_spacing(lats, "lat");
  double dLng = check_spacing(lngs, "lng");
  if (rows.size() != lats.size() * lngs.size())
    throw Error("population csv: rows do not form a complete grid");

  std::vector<std::vector<double>> grid(lats.size(),
                                        std::vector<double>(lngs.size(), -1.0));
  auto index_of = [](const std::vector<double>& v, double x) {
    auto it = std::lower_bound(v.begin(), v.end(), x - 1e-12);
    return static_cast<std::size_t>(it - v.begin());
  };
  for (const auto& r : rows)
    grid[index_of(lats, r.lat)][index_of(lngs, r.lng)] = r.density;
  for (const auto& row : grid)
    for (double v : row)
      if (v < 0.0) throw Error("population csv: missing grid cell");
  return PopulationGrid(LatLng{lats[0], lngs[0]}, dLat, dLng, std::move(grid));
}

// -------------------------------------------------------------------- splits

void SplitSpec::validate() const {
  if (fractions.empty()) throw Error("split: no fractions");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw Error("split: fractions must be positive");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw Error("split: fractions must sum to 1, got " + std::to_string(sum));
}

SplitResult split(const Dataset& d, const SplitSpec& spec) {
  spec.validate();
  if (d.empty()) throw Error("split: empty dataset");
  const std::size_t n = d.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(perm);

  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (std::size_t p = 0; p < spec.fractions.size(); ++p) {
    std::size_t s = (p + 1 == spec.fractions.size())
                        ? n - used
                        : static_cast<std::size_t>(std::llround(spec.fractions[p] * n));
    if (s == 0 || used + s > n)
      throw Error("split: part " + std::to_string(p) + " empty after rounding");
    sizes.push_back(s);
    used += s;
  }

  SplitResult out;
  std::size_t pos = 0;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> idx(perm.begin() + pos, perm.begin() + pos + s);
    pos += s;
    out.parts.push_back(d.subset(idx));
    out.indexMaps.push_back(std::move(idx));
  }
  return out;
}

}  // namespace sigmap
