#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdf {

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

using Point = std::array<double, 2>;

enum class CellType
{
  interval,
  triangle,
  quadrilateral
};

int num_vertices(CellType type);
int topological_dim(CellType type);
int num_facets(CellType type);
std::string_view to_string(CellType type);
CellType cell_type_from_string(std::string_view name);

/// Local vertex indices of facet `local_facet` of a reference cell. Interval
/// facets are single points; the second entry is then -1.
std::array<int, 2> facet_local_vertices(CellType type, int local_facet);

struct Cell
{
  CellType type;
  std::array<std::int32_t, 4> vertices{-1, -1, -1, -1};

  std::span<const std::int32_t> vertex_span() const
  {
    return {vertices.data(), static_cast<std::size_t>(num_vertices(type))};
  }
};

/// A codim-1 entity of a mesh, keyed by its sorted vertex tuple.
struct Facet
{
  std::array<std::int32_t, 2> vertices{-1, -1};
  std::vector<std::int32_t> cells;       // incident cells, ascending
  std::vector<std::int8_t> local_facets; // local facet index within each incident cell
};

enum class EntityKind
{
  cell,
  facet
};

/// Injective correspondence source entity -> target entity between two meshes.
struct EntityMap
{
  std::uint64_t source_mesh_id = 0;
  std::uint64_t target_mesh_id = 0;
  EntityKind source_kind = EntityKind::cell;
  EntityKind target_kind = EntityKind::cell;
  std::vector<std::int32_t> table;

  std::int32_t operator[](std::size_t e) const { return table[e]; }
  std::size_t size() const { return table.size(); }
  bool is_injective() const;
};

class Mesh;
using MeshPtr = std::shared_ptr<const Mesh>;

inline constexpr int kUnmarked = std::numeric_limits<int>::min();

/// Unstructured 1D/2D mesh embedded in the plane. Immutable after creation.
class Mesh
{
public:
  struct Data
  {
    int dim = 2;
    std::vector<Point> vertices;
    std::vector<Cell> cells;
    std::vector<int> cell_markers;                                 // one per cell (default 0)
    std::vector<std::pair<std::array<std::int32_t, 2>, int>> facet_markers; // vertex tuple -> marker
  };

  /// Builds facet topology. Throws on malformed input (bad vertex indices,
  /// cell type not matching `dim`).
  static MeshPtr create(Data data);

  std::uint64_t id() const { return id_; }
  int dim() const { return dim_; }
  int gdim() const { return 2; }

  std::span<const Point> vertices() const { return vertices_; }
  std::span<const Cell> cells() const { return cells_; }
  std::span<const Facet> facets() const { return facets_; }
  std::size_t num_cells() const { return cells_.size(); }
  std::size_t num_facets() const { return facets_.size(); }

  int cell_marker(std::size_t c) const { return cell_markers_[c]; }
  int facet_marker(std::size_t f) const { return facet_markers_[f]; }
  std::span<const int> cell_markers() const { return cell_markers_; }
  std::span<const int> facet_markers() const { return facet_markers_; }

  /// Global facet index of local facet `lf` of cell `c`.
  std::int32_t cell_facet(std::size_t c, int lf) const { return cell_facets_[c][lf]; }

  /// Facet lookup by (unordered) vertex tuple; -1 for dim-1 point facets in
  /// the second slot.
  std::optional<std::int32_t> find_facet(std::array<std::int32_t, 2> verts) const;

  /// Cell vertex coordinates in local order.
  std::vector<Point> cell_coordinates(std::size_t c) const;
  std::array<Point, 2> facet_coordinates(std::size_t f) const;

  double cell_volume(std::size_t c) const;
  Point cell_centroid(std::size_t c) const;

  /// Unit normal of facet `f` pointing out of incident cell `c`.
  Point outward_normal(std::size_t f, std::size_t c) const;

  /// Present only on codim-1 submeshes.
  bool has_cell_normals() const { return !cell_normals_.empty(); }
  const Point& cell_normal(std::size_t c) const { return cell_normals_.at(c); }

  // Submesh relation (null/empty on root meshes).
  const MeshPtr& parent() const { return parent_; }
  const EntityMap& cell_map() const { return cell_map_; }      // cell -> parent cell or parent facet
  const EntityMap& facet_map() const { return facet_map_; }    // facet -> parent facet (codim-0 only)
  std::span<const std::int32_t> vertex_map() const { return vertex_map_; }
  bool is_codim1() const { return parent_ && cell_map_.target_kind == EntityKind::facet; }

private:
  Mesh() = default;
  static std::shared_ptr<Mesh> build(Data data);

  friend std::pair<MeshPtr, EntityMap> extract_codim0_submesh(const MeshPtr&, int);
  friend std::pair<MeshPtr, EntityMap> extract_codim1_submesh(const MeshPtr&, int);

  std::uint64_t id_ = 0;
  int dim_ = 2;
  std::vector<Point> vertices_;
  std::vector<Cell> cells_;
  std::vector<int> cell_markers_;
  std::vector<Facet> facets_;
  std::vector<int> facet_markers_;
  std::vector<std::array<std::int32_t, 4>> cell_facets_;
  std::unordered_map<std::uint64_t, std::int32_t> facet_lookup_;
  std::vector<Point> cell_normals_;

  MeshPtr parent_;
  EntityMap cell_map_;
  EntityMap facet_map_;
  std::vector<std::int32_t> vertex_map_;
};

inline constexpr int kInterfaceMarker = 999;
inline constexpr int kBoundaryMarker = 1;

/// Unit square with spacing 0.10/2^n. Quadrilaterals (marker 1) for x < 0.5,
/// triangle pairs (marker 2) for x > 0.5. Facets on x = 0.5 carry marker 999,
/// outer boundary facets marker 1.
MeshPtr build_hybrid_unit_square(int n);

/// All-quadrilateral version of the above: left cells marker 1, right marker 2.
MeshPtr build_split_unit_square(int n);

/// Cells of `parent` carrying `marker`, with vertices renumbered in ascending
/// parent order. Cell and facet markers are inherited.
std::pair<MeshPtr, EntityMap> extract_codim0_submesh(const MeshPtr& parent, int marker);

/// Interval mesh made of the facets of `parent` carrying `facet_marker`. Each
/// cell stores the parent facet normal, oriented away from the lower-index
/// incident cell.
std::pair<MeshPtr, EntityMap> extract_codim1_submesh(const MeshPtr& parent, int facet_marker);

EntityMap identity_map(const Mesh& mesh, EntityKind kind);

/// (b o a)[e] = b[a[e]].
EntityMap compose_maps(const EntityMap& a, const EntityMap& b);

struct FacetClassification
{
  std::vector<std::int32_t> exterior;
  std::vector<std::int32_t> interior;
};

FacetClassification classify_facets(const Mesh& mesh);

/// Outermost ancestor of `mesh` (the mesh itself for roots).
const Mesh& root_of(const Mesh& mesh);

/// Entity map from `mesh` cells (or facets) to entities of its root mesh.
EntityMap map_to_root(const Mesh& mesh, EntityKind kind);

void write_mesh(std::ostream& os, const Mesh& mesh);
MeshPtr read_mesh(std::istream& is);

} // namespace mdf
