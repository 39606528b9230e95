#include "geodurbin/ingest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "geodurbin/csv.hpp"
#include "geodurbin/error.hpp"
#include "geodurbin/stats.hpp"

namespace geodurbin {

namespace {

using nlohmann::json;

bool valid_coordinate(LonLat p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lon >= -180.0 &&
         p.lon <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<LonLat> parse_ring(const json& ring) {
  std::vector<LonLat> out;
  for (const auto& pos : ring) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      throw Error(ErrorCode::ParseError, "geometry", "bad position");
    }
    out.push_back({pos[0].get<double>(), pos[1].get<double>()});
  }
  return out;
}

Polygon parse_polygon(const json& coords) {
  Polygon poly;
  for (const auto& ring : coords) poly.push_back(parse_ring(ring));
  return poly;
}

// Area-weighted planar centroid of the outer rings.
std::optional<LonLat> polygon_centroid(const MultiPolygon& geometry) {
  double area = 0.0, cx = 0.0, cy = 0.0;
  for (const auto& poly : geometry) {
    if (poly.empty()) continue;
    const auto& ring = poly.front();
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const auto& a = ring[i];
      const auto& b = ring[(i + 1) % ring.size()];
      const double cross = a.lon * b.lat - b.lon * a.lat;
      area += cross;
      cx += (a.lon + b.lon) * cross;
      cy += (a.lat + b.lat) * cross;
    }
  }
  if (std::abs(area) < 1e-15) return std::nullopt;
  return LonLat{cx / (3.0 * area), cy / (3.0 * area)};
}

std::optional<double> json_number(const json& props, const char* key) {
  auto it = props.find(key);
  if (it == props.end() || it->is_null()) return std::nullopt;
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) return csv::parse_double(it->get<std::string>());
  return std::nullopt;
}

}  // namespace

RegionSet::RegionSet(std::vector<Region> regions) : regions_(std::move(regions)) {
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    const auto& r = regions_[i];
    if (r.id.empty()) {
      throw Error(ErrorCode::InvalidArgument, "row " + std::to_string(i + 1),
                  "empty region_id");
    }
    if (!valid_coordinate(r.centroid)) {
      throw Error(ErrorCode::BadCoordinate, "row " + std::to_string(i + 1),
                  "region " + r.id);
    }
    if (!index_.emplace(r.id, i).second) throw Error(ErrorCode::DuplicateRegion, r.id);
  }
}

std::optional<std::size_t> RegionSet::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> RegionSet::first_without_geometry() const {
  for (const auto& r : regions_) {
    if (!r.geometry || r.geometry->empty()) return r.id;
  }
  return std::nullopt;
}

RegionSet load_regions(const std::filesystem::path& path, RegionFormat format) {
  if (format == RegionFormat::GeoJson) return parse_regions_geojson(read_file(path));

  const auto table = csv::read(path);
  if (table.header.empty() || table.rows.empty()) {
    throw Error(ErrorCode::EmptyInput, path.string());
  }
  const auto id_col = table.column("region_id");
  const auto name_col = table.column("name");
  const auto lon_col = table.column("lon");
  const auto lat_col = table.column("lat");
  if (!id_col || !lon_col || !lat_col) {
    throw Error(ErrorCode::ParseError, path.string(),
                "header must contain region_id,name,lon,lat");
  }
  std::vector<Region> regions;
  regions.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto lon = csv::parse_double(row[*lon_col]);
    const auto lat = csv::parse_double(row[*lat_col]);
    const std::string where = "row " + std::to_string(r + 1);
    if (!lon || !lat || !valid_coordinate({*lon, *lat})) {
      throw Error(ErrorCode::BadCoordinate, where, "region " + row[*id_col]);
    }
    regions.push_back({row[*id_col], name_col ? row[*name_col] : row[*id_col],
                       {*lon, *lat}, std::nullopt});
  }
  return RegionSet(std::move(regions));
}

RegionSet load_regions(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return load_regions(path, ext == ".geojson" || ext == ".json" ? RegionFormat::GeoJson
                                                                : RegionFormat::Csv);
}

RegionSet parse_regions_geojson(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "geojson", e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw Error(ErrorCode::ParseError, "geojson", "expected a FeatureCollection");
  }
  const auto& features = doc["features"];
  if (features.empty()) throw Error(ErrorCode::EmptyInput, "geojson");

  std::vector<Region> regions;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& feature = features[f];
    const std::string where = "row " + std::to_string(f + 1);
    const json props = feature.contains("properties") && feature["properties"].is_object()
                           ? feature["properties"]
                           : json::object();
    Region region;
    if (auto it = props.find("region_id"); it != props.end() && !it->is_null()) {
      region.id = it->is_string() ? it->get<std::string>() : it->dump();
    } else {
      throw Error(ErrorCode::ParseError, where, "feature lacks properties.region_id");
    }
    region.name = props.contains("name") && props["name"].is_string()
                      ? props["name"].get<std::string>()
                      : region.id;

    std::optional<LonLat> point;
    if (feature.contains("geometry") && feature["geometry"].is_object()) {
      const auto& geom = feature["geometry"];
      const auto type = geom.value("type", "");
      const auto& coords = geom.contains("coordinates") ? geom["coordinates"] : json();
      try {
        if (type == "Point") {
          point = parse_ring(json::array({coords})).front();
        } else if (type == "Polygon") {
          region.geometry = MultiPolygon{parse_polygon(coords)};
        } else if (type == "MultiPolygon") {
          MultiPolygon mp;
          for (const auto& poly : coords) mp.push_back(parse_polygon(poly));
          region.geometry = std::move(mp);
        }
      } catch (const json::exception&) {
        throw Error(ErrorCode::ParseError, where, "malformed geometry");
      } catch (const Error&) {
        throw Error(ErrorCode::ParseError, where, "malformed geometry");
      }
    }

    const auto lon = json_number(props, "lon");
    const auto lat = json_number(props, "lat");
    if (props.contains("lon") || props.contains("lat")) {
      if (!lon || !lat) throw Error(ErrorCode::BadCoordinate, where, "region " + region.id);
      region.centroid = {*lon, *lat};
    } else if (point) {
      region.centroid = *point;
    } else if (region.geometry) {
      auto c = polygon_centroid(*region.geometry);
      if (!c) throw Error(ErrorCode::BadCoordinate, where, "degenerate polygon");
      region.centroid = *c;
    } else {
      throw Error(ErrorCode::BadCoordinate, where, "no coordinates for " + region.id);
    }
    if (!valid_coordinate(region.centroid)) {
      throw Error(ErrorCode::BadCoordinate, where, "region " + region.id);
    }
    regions.push_back(std::move(region));
  }
  return RegionSet(std::move(regions));
}

void write_regions_csv(const std::filesystem::path& path, const RegionSet& regions) {
  csv::Writer w({"region_id", "name", "lon", "lat"});
  for (const auto& r : regions) {
    w.row({r.id, r.name, csv::format_double(r.centroid.lon),
           csv::format_double(r.centroid.lat)});
  }
  w.save(path);
}

void write_regions_geojson(const std::filesystem::path& path, const RegionSet& regions) {
  using nlohmann::ordered_json;
  ordered_json features = ordered_json::array();
  for (const auto& r : regions) {
    ordered_json geometry;
    if (r.geometry && !r.geometry->empty()) {
      ordered_json polys = ordered_json::array();
      for (const auto& poly : *r.geometry) {
        ordered_json rings = ordered_json::array();
        for (const auto& ring : poly) {
          ordered_json coords = ordered_json::array();
          for (const auto& pt : ring) coords.push_back({pt.lon, pt.lat});
          rings.push_back(std::move(coords));
        }
        polys.push_back(std::move(rings));
      }
      geometry = {{"type", "MultiPolygon"}, {"coordinates", std::move(polys)}};
    } else {
      geometry = {{"type", "Point"}, {"coordinates", {r.centroid.lon, r.centroid.lat}}};
    }
    ordered_json props = {{"region_id", r.id},
                          {"name", r.name},
                          {"lon", r.centroid.lon},
                          {"lat", r.centroid.lat}};
    features.push_back({{"type", "Feature"},
                        {"properties", std::move(props)},
                        {"geometry", std::move(geometry)}});
  }
  ordered_json doc = {{"type", "FeatureCollection"}, {"features", std::move(features)}};
  csv::write_text(path, doc.dump(1) + "\n");
}

ChapterCounts load_counts(const std::filesystem::path& path, const RegionSet& regions) {
  const auto table = csv::read(path);
  if (table.rows.empty()) throw Error(ErrorCode::EmptyInput, path.string());
  const auto id_col = table.column("region_id");
  const auto ch_col = table.column("chapter");
  const auto count_col = table.column("count");
  const auto total_col = table.column("total");
  if (!id_col || !ch_col || !count_col || !total_col) {
    throw Error(ErrorCode::ParseError, path.string(),
                "header must be region_id,chapter,count,total");
  }

  ChapterCounts out;
  const std::size_t n = regions.size();
  std::unordered_map<std::string, std::size_t> chapter_index;
  std::vector<std::vector<std::optional<std::int64_t>>> counts(n);
  std::vector<std::optional<std::int64_t>> totals(n);

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "row " + std::to_string(r + 1);
    const auto idx = regions.index_of(row[*id_col]);
    if (!idx) throw Error(ErrorCode::UnknownRegion, row[*id_col], where);
    const auto count = csv::parse_int(row[*count_col]);
    const auto total = csv::parse_int(row[*total_col]);
    if (!count || !total) throw Error(ErrorCode::MissingValue, where, "count/total");
    if (*count < 0 || *total < 0) throw Error(ErrorCode::InvalidCount, where, "negative");

    auto [it, inserted] = chapter_index.emplace(row[*ch_col], out.chapters.size());
    if (inserted) {
      out.chapters.push_back(row[*ch_col]);
      for (auto& c : counts) c.resize(out.chapters.size());
    }
    auto& slot = counts[*idx][it->second];
    if (slot) {
      throw Error(ErrorCode::DuplicateRegion, row[*id_col],
                  "repeated chapter " + row[*ch_col]);
    }
    slot = *count;
    if (totals[*idx] && *totals[*idx] != *total) {
      throw Error(ErrorCode::InvalidCount, row[*id_col], "inconsistent totals");
    }
    totals[*idx] = *total;
  }

  out.region_ids.reserve(n);
  out.counts.assign(n, std::vector<std::int64_t>(out.chapters.size()));
  out.totals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.region_ids.push_back(regions[i].id);
    if (!totals[i]) throw Error(ErrorCode::MissingValue, regions[i].id, "no counts");
    out.totals[i] = *totals[i];
    for (std::size_t j = 0; j < out.chapters.size(); ++j) {
      if (!counts[i][j]) {
        throw Error(ErrorCode::MissingValue, regions[i].id,
                    "missing chapter " + out.chapters[j]);
      }
      out.counts[i][j] = *counts[i][j];
    }
  }
  validate(out);
  return out;
}

void validate(const ChapterCounts& counts) {
  const std::size_t n = counts.region_ids.size();
  if (counts.totals.size() != n || counts.counts.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "counts");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (counts.counts[i].size() != counts.chapters.size()) {
      throw Error(ErrorCode::DimensionMismatch, counts.region_ids[i]);
    }
    for (auto c : counts.counts[i]) {
      if (c < 0 || c > counts.totals[i]) {
        throw Error(ErrorCode::InvalidCount, counts.region_ids[i],
                    "count must lie in [0, total]");
      }
    }
  }
}

std::string_view to_string(ColumnKind kind) noexcept {
  switch (kind) {
    case ColumnKind::Raw: return "raw";
    case ColumnKind::Ratio: return "ratio";
    case ColumnKind::ZScored: return "zscored";
  }
  return "raw";
}

void AttributeTable::add(Column column) {
  if (column.values.size() != rows_) {
    throw Error(ErrorCode::DimensionMismatch, column.name,
                "expected " + std::to_string(rows_) + " values");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    if (!std::isfinite(column.values[i])) {
      throw Error(ErrorCode::MissingValue, column.name, "row " + std::to_string(i + 1));
    }
  }
  if (find(column.name)) throw Error(ErrorCode::NameClash, column.name);
  columns_.push_back(std::move(column));
}

const Column* AttributeTable::find(std::string_view name) const {
  for (const auto& c : columns_) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const Column& AttributeTable::at(std::string_view name) const {
  if (const auto* c = find(name)) return *c;
  throw Error(ErrorCode::ValidationError, std::string(name), "no such column");
}

std::vector<std::string> AttributeTable::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

AttributeTable load_attributes(const std::filesystem::path& path, const RegionSet& regions) {
  const auto table = csv::read(path);
  if (table.header.empty() || table.rows.empty()) {
    throw Error(ErrorCode::EmptyInput, path.string());
  }
  const auto id_col = table.column("region_id");
  if (!id_col) throw Error(ErrorCode::ParseError, path.string(), "missing region_id column");

  const std::size_t n = regions.size();
  std::vector<std::optional<std::size_t>> row_of(n);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& id = table.rows[r][*id_col];
    const auto idx = regions.index_of(id);
    if (!idx) throw Error(ErrorCode::UnknownRegion, id, path.string());
    if (row_of[*idx]) throw Error(ErrorCode::DuplicateRegion, id, path.string());
    row_of[*idx] = r;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!row_of[i]) throw Error(ErrorCode::MissingValue, regions[i].id, "no attribute row");
  }

  AttributeTable out(n);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == *id_col) continue;
    Column column{table.header[c], std::vector<double>(n), ColumnKind::Raw};
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = csv::parse_double(table.rows[*row_of[i]][c]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MissingValue, column.name, "region " + regions[i].id);
      }
      column.values[i] = *v;
    }
    out.add(std::move(column));
  }
  return out;
}

void write_attributes(const std::filesystem::path& path, const RegionSet& regions,
                      const AttributeTable& table) {
  if (table.rows() != regions.size()) throw Error(ErrorCode::DimensionMismatch, path.string());
  std::vector<std::string> header{"region_id"};
  for (const auto& c : table.columns()) header.push_back(c.name);
  csv::Writer w(header);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    std::vector<std::string> row{regions[i].id};
    for (const auto& c : table.columns()) row.push_back(csv::format_double(c.values[i]));
    w.row(row);
  }
  w.save(path);
}

AttributeTable compute_ratios(const ChapterCounts& counts) {
  validate(counts);
  const std::size_t n = counts.region_ids.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (counts.totals[i] <= 0) throw Error(ErrorCode::ZeroDenominator, counts.region_ids[i]);
  }
  AttributeTable out(n);
  for (std::size_t j = 0; j < counts.chapters.size(); ++j) {
    Column column{counts.chapters[j], std::vector<double>(n), ColumnKind::Ratio};
    for (std::size_t i = 0; i < n; ++i) {
      column.values[i] = static_cast<double>(counts.counts[i][j]) /
                         static_cast<double>(counts.totals[i]);
    }
    out.add(std::move(column));
  }
  return out;
}

std::vector<std::pair<std::string, double>> national_ratios(const ChapterCounts& counts) {
  validate(counts);
  double total = 0.0;
  for (auto m : counts.totals) total += static_cast<double>(m);
  if (total <= 0.0) throw Error(ErrorCode::ZeroDenominator, "all regions");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < counts.chapters.size(); ++j) {
    double c = 0.0;
    for (const auto& row : counts.counts) c += static_cast<double>(row[j]);
    out.emplace_back(counts.chapters[j], c / total);
  }
  return out;
}

std::vector<double> zscore(std::span<const double> x) {
  if (x.size() < 2) throw Error(ErrorCode::TooFewObservations, std::to_string(x.size()));
  auto d = stats::centered(x);
  const double ss = stats::sum_squares(d);
  if (stats::is_degenerate(x, ss)) throw Error(ErrorCode::ZeroVariance, "zscore");
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  for (double& v : d) v /= sd;
  return d;
}

AttributeTable zscore_columns(const AttributeTable& table, std::span<const std::string> names) {
  AttributeTable out(table.rows());
  for (const auto& c : table.columns()) {
    const bool selected =
        names.empty() || std::find(names.begin(), names.end(), c.name) != names.end();
    if (!selected) {
      out.add(c);
      continue;
    }
    try {
      out.add({c.name, zscore(c.values), ColumnKind::ZScored});
    } catch (const Error& e) {
      throw Error(e.code(), c.name, "cannot standardize");
    }
  }
  return out;
}

}  // namespace geodurbin
