#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geodurbin {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

// Outer ring first, holes after. Rings are closed or open; renderers close them.
using Polygon = std::vector<std::vector<LonLat>>;
using MultiPolygon = std::vector<Polygon>;

struct Region {
  std::string id;
  std::string name;
  LonLat centroid;
  std::optional<MultiPolygon> geometry;  // rendering only
};

// Ordered, immutable region list. Position in the list is the row index used
// by every vector and matrix downstream.
class RegionSet {
 public:
  RegionSet() = default;
  // Validates ids (unique, non-empty) and coordinate ranges.
  explicit RegionSet(std::vector<Region> regions);

  std::size_t size() const noexcept { return regions_.size(); }
  bool empty() const noexcept { return regions_.empty(); }
  const Region& operator[](std::size_t i) const { return regions_[i]; }
  std::span<const Region> regions() const noexcept { return regions_; }
  auto begin() const noexcept { return regions_.begin(); }
  auto end() const noexcept { return regions_.end(); }

  std::optional<std::size_t> index_of(std::string_view id) const;
  // Id of the first region lacking polygon geometry, if any.
  std::optional<std::string> first_without_geometry() const;

 private:
  std::vector<Region> regions_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class RegionFormat { Csv, GeoJson };

RegionSet load_regions(const std::filesystem::path& path, RegionFormat format);
// Picks the format from the extension (.geojson/.json vs anything else).
RegionSet load_regions(const std::filesystem::path& path);
RegionSet parse_regions_geojson(std::string_view text);
void write_regions_csv(const std::filesystem::path& path, const RegionSet& regions);
// FeatureCollection with region_id, name, lon, lat properties; polygon
// geometry when present, the centroid Point otherwise.
void write_regions_geojson(const std::filesystem::path& path, const RegionSet& regions);

// Long-format case counts, re-ordered to a RegionSet.
struct ChapterCounts {
  std::vector<std::string> region_ids;
  std::vector<std::string> chapters;                // first-appearance order
  std::vector<std::vector<std::int64_t>> counts;    // [region][chapter]
  std::vector<std::int64_t> totals;                 // [region]
};

// counts.csv: region_id,chapter,count,total. Every region of `regions` must
// have one row per chapter; totals must agree across a region's rows.
ChapterCounts load_counts(const std::filesystem::path& path, const RegionSet& regions);
void validate(const ChapterCounts& counts);

enum class ColumnKind { Raw, Ratio, ZScored };
std::string_view to_string(ColumnKind kind) noexcept;

struct Column {
  std::string name;
  std::vector<double> values;
  ColumnKind kind = ColumnKind::Raw;
};

class AttributeTable {
 public:
  explicit AttributeTable(std::size_t rows = 0) : rows_(rows) {}

  // Rejects wrong length (DimensionMismatch), non-finite values
  // (MissingValue) and repeated names (NameClash).
  void add(Column column);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return columns_.size(); }
  std::span<const Column> columns() const noexcept { return columns_; }
  const Column* find(std::string_view name) const;
  // Throws ValidationError naming the column when absent.
  const Column& at(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::size_t rows_;
  std::vector<Column> columns_;
};

// attributes.csv: region_id,<col>,... in any row order; joined to `regions`.
AttributeTable load_attributes(const std::filesystem::path& path, const RegionSet& regions);
void write_attributes(const std::filesystem::path& path, const RegionSet& regions,
                      const AttributeTable& table);

// One ratio column per chapter: count / total.
AttributeTable compute_ratios(const ChapterCounts& counts);
// Per chapter: sum of counts over sum of totals.
std::vector<std::pair<std::string, double>> national_ratios(const ChapterCounts& counts);

// (x - mean) / sd with the n-1 divisor.
std::vector<double> zscore(std::span<const double> x);
// Copy of `table` with the named columns z-scored (all columns when empty).
AttributeTable zscore_columns(const AttributeTable& table,
                              std::span<const std::string> names = {});

}  // namespace geodurbin
