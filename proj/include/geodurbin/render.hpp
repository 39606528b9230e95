#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

#include "geodurbin/autocorr.hpp"
#include "geodurbin/ingest.hpp"

namespace geodurbin {

// Fixed LISA palette.
std::string_view lisa_color(LisaLabel label) noexcept;
inline constexpr std::array<LisaLabel, 5> kLisaLegendOrder{
    LisaLabel::HH, LisaLabel::LL, LisaLabel::HL, LisaLabel::LH, LisaLabel::Insignificant};

// Five-stop sequential ramp (light yellow to dark red) for value maps.
inline constexpr std::array<std::string_view, 5> kValueRamp{"#ffffb2", "#fecc5c", "#fd8d3c",
                                                            "#f03b20", "#bd0026"};
// Colour at t in [0, 1] on kValueRamp, linear in RGB.
std::string ramp_color(double t);

struct RenderOptions {
  double width = 800.0;  // px; height follows the data aspect ratio
  std::string title;
};

// Equirectangular choropleth, one <path data-region-id=...> per region and
// a legend built from <rect> swatches. Throws NoGeometry(region_id) when a
// region lacks polygons, DimensionMismatch on length mismatch.
// Value maps throw ZeroVariance for a constant column.
std::string render_choropleth(const RegionSet& regions, std::span<const double> values,
                              const RenderOptions& options = {});
std::string render_choropleth(const RegionSet& regions, std::span<const LisaLabel> labels,
                              const RenderOptions& options = {});

// FeatureCollection with the local statistics as properties; polygon
// geometry when present, the centroid Point otherwise.
std::string lisa_geojson(const RegionSet& regions, const LocalMoranResult& lisa);

}  // namespace geodurbin
