#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flowcast::geo {

inline constexpr double kEarthRadiusM = 6371000.0;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  bool valid() const { return lon >= -180.0 && lon <= 180.0 && lat >= -90.0 && lat <= 90.0; }
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct BoundingBox {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;

  bool valid() const { return min_lon < max_lon && min_lat < max_lat; }
  bool contains(const GeoPoint& p) const {
    return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
  }
  GeoPoint centroid() const { return {0.5 * (min_lon + max_lon), 0.5 * (min_lat + max_lat)}; }
  void expand(const GeoPoint& p);
  static BoundingBox around(const std::vector<GeoPoint>& points);
};

/// Planar offset in meters from a projection origin.
struct LocalXY {
  double x_m = 0.0;
  double y_m = 0.0;
};

/// Equirectangular projection centered at `origin`.
LocalXY project_local(const GeoPoint& p, const GeoPoint& origin);
/// Inverse of project_local.
GeoPoint unproject_local(const LocalXY& xy, const GeoPoint& origin);

struct GridPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// One polygon of a tessellation. The ring is stored open: the closing edge
/// runs from the last vertex back to the first.
struct Tile {
  std::size_t id = 0;
  std::vector<GeoPoint> ring;
  std::optional<GridPos> grid_pos;
  BoundingBox bounds;
};

enum class TessellationKind { square, irregular };

struct SquareGridSpec {
  double side_m = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Finite, interior-disjoint polygon cover of a region. Immutable once built;
/// concurrent read-only queries are safe.
class Tessellation {
 public:
  static Tessellation square(const BoundingBox& bbox, double side_m);
  static Tessellation irregular(std::vector<std::vector<GeoPoint>> polygons,
                                std::vector<std::string> labels = {});

  TessellationKind kind() const { return kind_; }
  std::size_t size() const { return tiles_.size(); }
  const std::vector<Tile>& tiles() const { return tiles_; }
  const Tile& tile(std::size_t id) const { return tiles_.at(id); }
  const BoundingBox& bbox() const { return bbox_; }
  const GeoPoint& projection_origin() const { return origin_; }
  /// Only meaningful for square tessellations.
  const SquareGridSpec& grid() const { return grid_; }
  /// External labels for irregular tiles (GeoJSON "id" property); empty when none.
  const std::vector<std::string>& labels() const { return labels_; }

  /// Lowest id among tiles whose closed polygon contains p. Square grids
  /// also require p inside the bounding box (overhang is not covered).
  std::optional<std::size_t> locate(const GeoPoint& p) const;

  /// Polygon area in projected square meters (shoelace).
  double tile_area_m2(std::size_t id) const;
  GeoPoint tile_centroid(std::size_t id) const;

  /// Stable identifier used by downstream files ("square:<rows>x<cols>@<side>" etc.).
  std::string describe() const;

 private:
  Tessellation() = default;

  TessellationKind kind_ = TessellationKind::irregular;
  std::vector<Tile> tiles_;
  std::vector<std::string> labels_;
  BoundingBox bbox_;
  GeoPoint origin_;
  SquareGridSpec grid_;
};

inline Tessellation build_square_grid(const BoundingBox& bbox, double side_m) {
  return Tessellation::square(bbox, side_m);
}
inline Tessellation load_irregular(std::vector<std::vector<GeoPoint>> polygons) {
  return Tessellation::irregular(std::move(polygons));
}
inline std::optional<std::size_t> locate(const Tessellation& t, const GeoPoint& p) {
  return t.locate(p);
}

// Planar predicates on (lon, lat) treated as (x, y).

/// Even-odd ray casting with the boundary counted as inside.
bool ring_contains(const std::vector<GeoPoint>& ring, const GeoPoint& p);
bool on_ring_boundary(const std::vector<GeoPoint>& ring, const GeoPoint& p);
bool ring_is_simple(const std::vector<GeoPoint>& ring);
/// True when the two polygons share interior area (touching boundaries do not count).
bool interiors_overlap(const std::vector<GeoPoint>& a, const std::vector<GeoPoint>& b);

// GeoJSON FeatureCollection of Polygons.

Tessellation read_geojson(const std::string& path);
Tessellation parse_geojson(const std::string& text);
/// Serializes tiles; `properties` may attach per-tile numeric properties
/// (name -> one value per tile).
std::string to_geojson(const Tessellation& t,
                       const std::vector<std::pair<std::string, std::vector<double>>>& properties = {});

}  // namespace flowcast::geo
