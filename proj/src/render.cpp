#include "geodurbin/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "geodurbin/csv.hpp"
#include "geodurbin/error.hpp"

namespace geodurbin {

namespace {

constexpr double kMargin = 10.0;
constexpr double kSwatch = 14.0;
constexpr double kLegendRow = 20.0;

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return csv::format_fixed(v, 2); }

struct Projection {
  double min_lon, max_lat, scale, map_height;

  double x(double lon) const { return kMargin + (lon - min_lon) * scale; }
  double y(double lat) const { return kMargin + (max_lat - lat) * scale; }
};

Projection project(const RegionSet& regions, double width) {
  if (auto missing = regions.first_without_geometry()) {
    throw Error(ErrorCode::NoGeometry, *missing);
  }
  double min_lon = std::numeric_limits<double>::infinity(), max_lon = -min_lon;
  double min_lat = min_lon, max_lat = -min_lon;
  for (const auto& r : regions) {
    for (const auto& poly : *r.geometry) {
      for (const auto& ring : poly) {
        for (const auto& pt : ring) {
          min_lon = std::min(min_lon, pt.lon);
          max_lon = std::max(max_lon, pt.lon);
          min_lat = std::min(min_lat, pt.lat);
          max_lat = std::max(max_lat, pt.lat);
        }
      }
    }
  }
  const double span = std::max({max_lon - min_lon, max_lat - min_lat, 1e-9});
  const double scale = (width - 2.0 * kMargin) / span;
  return {min_lon, max_lat, scale, (max_lat - min_lat) * scale};
}

std::string path_data(const MultiPolygon& geometry, const Projection& proj) {
  std::string d;
  for (const auto& poly : geometry) {
    for (const auto& ring : poly) {
      if (ring.empty()) continue;
      for (std::size_t i = 0; i < ring.size(); ++i) {
        if (!d.empty()) d += ' ';
        d += i == 0 ? 'M' : 'L';
        d += num(proj.x(ring[i].lon)) + "," + num(proj.y(ring[i].lat));
      }
      d += " Z";
    }
  }
  return d;
}

struct LegendEntry {
  std::string color;
  std::string text;
};

template <typename FillFn>
std::string document(const RegionSet& regions, const RenderOptions& options, FillFn fill,
                     const std::vector<LegendEntry>& legend) {
  const Projection proj = project(regions, options.width);
  const double title_height = options.title.empty() ? 0.0 : 24.0;
  const double legend_top = title_height + proj.map_height + 2.0 * kMargin;
  const double height = legend_top + kLegendRow * static_cast<double>(legend.size()) + kMargin;

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         num(options.width) + "\" height=\"" + num(height) + "\" viewBox=\"0 0 " +
         num(options.width) + " " + num(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(options.width) + "\" height=\"" + num(height) +
         "\" fill=\"#ffffff\"/>\n";
  if (!options.title.empty()) {
    svg += "<text x=\"" + num(kMargin) + "\" y=\"18.00\" font-family=\"sans-serif\" "
           "font-size=\"14\">" + xml_escape(options.title) + "</text>\n";
  }
  svg += "<g id=\"regions\" transform=\"translate(0," + num(title_height) +
         ")\" stroke=\"#ffffff\" stroke-width=\"0.5\" fill-rule=\"evenodd\">\n";
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    svg += "<path data-region-id=\"" + xml_escape(r.id) + "\" fill=\"" + fill(i) + "\" d=\"" +
           path_data(*r.geometry, proj) + "\"><title>" + xml_escape(r.name) +
           "</title></path>\n";
  }
  svg += "</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t e = 0; e < legend.size(); ++e) {
    const double y = legend_top + kLegendRow * static_cast<double>(e);
    svg += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(y) + "\" width=\"" + num(kSwatch) +
           "\" height=\"" + num(kSwatch) + "\" fill=\"" + legend[e].color +
           "\" stroke=\"#555555\" stroke-width=\"0.5\"/>\n";
    svg += "<text x=\"" + num(kMargin + kSwatch + 6.0) + "\" y=\"" + num(y + 11.0) + "\">" +
           xml_escape(legend[e].text) + "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

int hex_channel(std::string_view hex, std::size_t offset) {
  return std::stoi(std::string(hex.substr(offset, 2)), nullptr, 16);
}

}  // namespace

std::string_view lisa_color(LisaLabel label) noexcept {
  switch (label) {
    case LisaLabel::HH: return "#d7191c";
    case LisaLabel::LL: return "#2c7bb6";
    case LisaLabel::HL: return "#fdae9a";
    case LisaLabel::LH: return "#abd9e9";
    case LisaLabel::Insignificant: return "#d9d9d9";
  }
  return "#d9d9d9";
}

std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * static_cast<double>(kValueRamp.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), kValueRamp.size() - 2);
  const double f = pos - static_cast<double>(lo);
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c) {
    const double a = hex_channel(kValueRamp[lo], 1 + 2 * static_cast<std::size_t>(c));
    const double b = hex_channel(kValueRamp[lo + 1], 1 + 2 * static_cast<std::size_t>(c));
    rgb[c] = static_cast<int>(std::lround(a + (b - a) * f));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string render_choropleth(const RegionSet& regions, std::span<const double> values,
                              const RenderOptions& options) {
  if (values.size() != regions.size()) throw Error(ErrorCode::DimensionMismatch, "values");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw Error(ErrorCode::ZeroVariance, "value map", "constant column");
  std::vector<LegendEntry> legend;
  for (std::size_t s = 0; s < kValueRamp.size(); ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(kValueRamp.size() - 1);
    legend.push_back({std::string(kValueRamp[s]), csv::format_fixed(lo + t * (hi - lo), 4)});
  }
  return document(
      regions, options, [&](std::size_t i) { return ramp_color((values[i] - lo) / (hi - lo)); },
      legend);
}

std::string render_choropleth(const RegionSet& regions, std::span<const LisaLabel> labels,
                              const RenderOptions& options) {
  if (labels.size() != regions.size()) throw Error(ErrorCode::DimensionMismatch, "labels");
  std::vector<LegendEntry> legend;
  for (auto label : kLisaLegendOrder) {
    legend.push_back({std::string(lisa_color(label)), std::string(to_string(label))});
  }
  return document(
      regions, options, [&](std::size_t i) { return std::string(lisa_color(labels[i])); },
      legend);
}

std::string lisa_geojson(const RegionSet& regions, const LocalMoranResult& lisa) {
  using nlohmann::ordered_json;
  if (lisa.statistic.size() != regions.size()) throw Error(ErrorCode::DimensionMismatch, "lisa");
  ordered_json features = ordered_json::array();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
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
                          {"local_I", lisa.statistic[i]},
                          {"p_value", lisa.p_value[i]},
                          {"z", lisa.z[i]},
                          {"z_lag", lisa.z_lag[i]},
                          {"label", std::string(to_string(lisa.labels[i]))}};
    features.push_back({{"type", "Feature"},
                        {"properties", std::move(props)},
                        {"geometry", std::move(geometry)}});
  }
  ordered_json doc = {{"type", "FeatureCollection"}, {"features", std::move(features)}};
  return doc.dump(1) + "\n";
}

}  // namespace geodurbin
