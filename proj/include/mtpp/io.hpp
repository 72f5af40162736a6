#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mtpp/geometry.hpp"
#include "mtpp/regions.hpp"

namespace mtpp::io {

/// Shortest round-trip-safe rendering with 17 significant digits, '.' as the
/// decimal separator regardless of locale.
std::string format_double(double v);

struct PointRecords {
    std::vector<Point> points;
    std::vector<int> marks;
    int max_mark = 0;
};

/// CSV with header `x,y,mark`; marks are 1-based integers.
PointRecords read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const std::vector<Point>& points, const std::vector<int>& marks);

/// GeoJSON FeatureCollection of Polygon/MultiPolygon features with `id` and
/// `population` (or `density`) properties; other numeric properties become
/// raw covariates.
std::vector<Region> read_regions_geojson(const std::filesystem::path& path);
void write_regions_geojson(const std::filesystem::path& path, const std::vector<Region>& regions);

/// Window from a GeoJSON Polygon, MultiPolygon, Feature or FeatureCollection
/// (all polygons are unioned).
Window read_window_geojson(const std::filesystem::path& path);

/// LF-terminated CSV writer; throws FileError if the file cannot be opened.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    CsvWriter& cell(double v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(const std::string& v);
    void end_row();

private:
    void sep();
    std::ofstream out_;
    bool row_started_ = false;
};

/// Header plus string cells of a comma-separated file (quotes stripped).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// Index of a header column; throws ParseError naming the file if absent.
    std::size_t column(const std::string& name) const;
    std::string source;
};
CsvTable read_csv_table(const std::filesystem::path& path);
double parse_number(const std::string& cell, const std::string& where);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mtpp::io
