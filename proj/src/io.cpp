#include "mtpp/io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mtpp/error.hpp"

namespace mtpp::io {

using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\"");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, where + ": '" + s + "' is not a finite number");
    }
    return v;
}

Ring parse_ring(const json& coords) {
    Ring ring;
    for (const auto& c : coords) ring.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    return ring;
}

Polygon parse_polygon(const json& rings) {
    Polygon poly;
    if (!rings.is_array() || rings.empty()) throw Error(ErrorCode::ParseError, "polygon without rings");
    poly.outer = parse_ring(rings[0]);
    for (std::size_t k = 1; k < rings.size(); ++k) poly.holes.push_back(parse_ring(rings[k]));
    return poly;
}

std::vector<Polygon> parse_geometry(const json& geom) {
    const std::string type = geom.at("type").get<std::string>();
    std::vector<Polygon> out;
    if (type == "Polygon") {
        out.push_back(parse_polygon(geom.at("coordinates")));
    } else if (type == "MultiPolygon") {
        for (const auto& p : geom.at("coordinates")) out.push_back(parse_polygon(p));
    } else {
        throw Error(ErrorCode::ParseError, "unsupported geometry type '" + type + "'");
    }
    return out;
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileError, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

json ring_json(const Ring& ring) {
    json out = json::array();
    for (const auto& p : ring) out.push_back({p.x, p.y});
    out.push_back({ring.front().x, ring.front().y});
    return out;
}

}  // namespace

PointRecords read_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileError, "cannot open points file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": empty file");
    const auto header = split_csv(line);
    int ix = -1, iy = -1, im = -1;
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == "x") ix = static_cast<int>(k);
        if (header[k] == "y") iy = static_cast<int>(k);
        if (header[k] == "mark") im = static_cast<int>(k);
    }
    if (ix < 0 || iy < 0 || im < 0) {
        throw Error(ErrorCode::ParseError, path.string() + ":1: header must contain x,y,mark");
    }
    PointRecords rec;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto need = static_cast<std::size_t>(std::max({ix, iy, im}));
        if (cells.size() <= need) throw Error(ErrorCode::ParseError, where + ": too few fields");
        const double x = parse_double(cells[ix], where + " field x");
        const double y = parse_double(cells[iy], where + " field y");
        int mark = 0;
        const auto& ms = cells[im];
        auto res = std::from_chars(ms.data(), ms.data() + ms.size(), mark);
        if (res.ec != std::errc() || res.ptr != ms.data() + ms.size() || mark < 1) {
            throw Error(ErrorCode::ParseError, where + " field mark: '" + ms + "' is not a positive integer");
        }
        rec.points.push_back({x, y});
        rec.marks.push_back(mark);
        rec.max_mark = std::max(rec.max_mark, mark);
    }
    return rec;
}

void write_points_csv(const std::filesystem::path& path, const std::vector<Point>& points, const std::vector<int>& marks) {
    CsvWriter w(path, {"x", "y", "mark"});
    for (std::size_t k = 0; k < points.size(); ++k) {
        w.cell(points[k].x).cell(points[k].y).cell(static_cast<long long>(marks[k]));
        w.end_row();
    }
}

std::vector<Region> read_regions_geojson(const std::filesystem::path& path) {
    const json doc = load_json(path);
    if (doc.value("type", "") != "FeatureCollection") {
        throw Error(ErrorCode::ParseError, path.string() + ": expected a FeatureCollection");
    }
    std::vector<Region> regions;
    std::size_t index = 0;
    for (const auto& f : doc.at("features")) {
        const std::string where = path.string() + ": feature " + std::to_string(index++);
        try {
            const json& props = f.at("properties");
            int id = 0;
            if (props.contains("id"))
                id = props.at("id").get<int>();
            else if (f.contains("id"))
                id = f.at("id").get<int>();
            else
                throw Error(ErrorCode::ParseError, "missing 'id'");
            Shape shape(parse_geometry(f.at("geometry")));
            std::map<std::string, double> covs;
            for (const auto& [key, value] : props.items()) {
                if (key == "id" || key == "population" || key == "density") continue;
                if (value.is_number()) covs[key] = value.get<double>();
            }
            if (props.contains("population") && props.at("population").is_number()) {
                regions.push_back(
                    Region::with_population(id, std::move(shape), props.at("population").get<double>(), std::move(covs)));
            } else if (props.contains("density") && props.at("density").is_number()) {
                regions.push_back(
                    Region::with_density(id, std::move(shape), props.at("density").get<double>(), std::move(covs)));
            } else {
                throw Error(ErrorCode::ParseError, "missing numeric 'population' or 'density'");
            }
        } catch (const Error& e) {
            throw Error(e.code(), where + ": " + e.what());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, where + ": " + e.what());
        }
    }
    return regions;
}

void write_regions_geojson(const std::filesystem::path& path, const std::vector<Region>& regions) {
    json doc = {{"type", "FeatureCollection"}, {"features", json::array()}};
    for (const auto& r : regions) {
        json props = {{"id", r.id}, {"population", r.population}};
        for (const auto& [k, v] : r.raw_covariates) props[k] = v;
        json coords = json::array();
        for (const auto& poly : r.boundary.polygons()) {
            json rings = json::array();
            rings.push_back(ring_json(poly.outer));
            for (const auto& h : poly.holes) rings.push_back(ring_json(h));
            coords.push_back(rings);
        }
        doc["features"].push_back(
            {{"type", "Feature"}, {"properties", props}, {"geometry", {{"type", "MultiPolygon"}, {"coordinates", coords}}}});
    }
    write_text_file(path, doc.dump(1) + "\n");
}

Window read_window_geojson(const std::filesystem::path& path) {
    const json doc = load_json(path);
    std::vector<Polygon> polys;
    try {
        const std::string type = doc.at("type").get<std::string>();
        if (type == "FeatureCollection") {
            for (const auto& f : doc.at("features")) {
                auto p = parse_geometry(f.at("geometry"));
                polys.insert(polys.end(), p.begin(), p.end());
            }
        } else if (type == "Feature") {
            polys = parse_geometry(doc.at("geometry"));
        } else {
            polys = parse_geometry(doc);
        }
        return Shape(std::move(polys));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::FileError, "cannot write '" + path.string() + "'");
    for (const auto& h : header) cell(h);
    end_row();
}

void CsvWriter::sep() {
    if (row_started_) out_ << ',';
    row_started_ = true;
}

CsvWriter& CsvWriter::cell(double v) {
    sep();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::cell(long long v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
    sep();
    if (v.find_first_of(",\"\n") != std::string::npos) {
        std::string q = "\"";
        for (char c : v) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
        out_ << q << '"';
    } else {
        out_ << v;
    }
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    row_started_ = false;
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
        if (header[k] == name) return k;
    throw Error(ErrorCode::ParseError, source + ":1: missing column '" + name + "'");
}

CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileError, "cannot open '" + path.string() + "'");
    CsvTable t;
    t.source = path.string();
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": empty file");
    t.header = split_csv(line);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != t.header.size()) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                   std::to_string(t.header.size()) + " fields, found " +
                                                   std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

double parse_number(const std::string& cell, const std::string& where) { return parse_double(cell, where); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileError, "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::FileError, "cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace mtpp::io
