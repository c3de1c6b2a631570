#include "mdf/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace mdf {

namespace {

std::atomic<std::uint64_t> next_mesh_id{1};

std::uint64_t facet_key(std::array<std::int32_t, 2> v)
{
  if (v[1] >= 0 && v[1] < v[0])
    std::swap(v[0], v[1]);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[0])) << 32)
         | static_cast<std::uint32_t>(v[1] + 1);
}

std::array<std::int32_t, 2> sorted_pair(std::int32_t a, std::int32_t b)
{
  if (b >= 0 && b < a)
    std::swap(a, b);
  return {a, b};
}

} // namespace

int num_vertices(CellType type)
{
  switch (type)
  {
  case CellType::interval: return 2;
  case CellType::triangle: return 3;
  case CellType::quadrilateral: return 4;
  }
  return 0;
}

int topological_dim(CellType type) { return type == CellType::interval ? 1 : 2; }

int num_facets(CellType type) { return num_vertices(type); }

std::string_view to_string(CellType type)
{
  switch (type)
  {
  case CellType::interval: return "interval";
  case CellType::triangle: return "triangle";
  case CellType::quadrilateral: return "quadrilateral";
  }
  return "?";
}

CellType cell_type_from_string(std::string_view name)
{
  if (name == "interval")
    return CellType::interval;
  if (name == "triangle")
    return CellType::triangle;
  if (name == "quadrilateral")
    return CellType::quadrilateral;
  throw Error("unknown cell type '" + std::string(name) + "'");
}

std::array<int, 2> facet_local_vertices(CellType type, int lf)
{
  if (lf < 0 || lf >= num_facets(type))
    throw Error("local facet index out of range");
  switch (type)
  {
  case CellType::interval: return {lf, -1};
  case CellType::triangle:
  case CellType::quadrilateral: return {lf, (lf + 1) % num_vertices(type)};
  }
  return {-1, -1};
}

bool EntityMap::is_injective() const
{
  std::unordered_set<std::int32_t> seen;
  for (auto t : table)
  {
    if (t < 0 || !seen.insert(t).second)
      return false;
  }
  return true;
}

//-----------------------------------------------------------------------------
std::shared_ptr<Mesh> Mesh::build(Data data)
{
  std::shared_ptr<Mesh> mesh(new Mesh());
  mesh->id_ = next_mesh_id++;
  mesh->dim_ = data.dim;
  if (data.dim != 1 && data.dim != 2)
    throw Error("mesh dimension must be 1 or 2");
  if (data.vertices.empty())
    throw Error("mesh needs at least one vertex");
  const auto nv = static_cast<std::int32_t>(data.vertices.size());
  for (const auto& c : data.cells)
  {
    if (topological_dim(c.type) != data.dim)
      throw Error("cell type " + std::string(to_string(c.type)) + " does not match mesh dimension");
    for (auto v : c.vertex_span())
      if (v < 0 || v >= nv)
        throw Error("cell vertex index out of range");
  }
  if (data.cell_markers.empty())
    data.cell_markers.assign(data.cells.size(), 0);
  if (data.cell_markers.size() != data.cells.size())
    throw Error("one cell marker per cell required");

  mesh->vertices_ = std::move(data.vertices);
  mesh->cells_ = std::move(data.cells);
  mesh->cell_markers_ = std::move(data.cell_markers);

  // Facets numbered in lexicographic order of their sorted vertex tuples.
  std::vector<std::array<std::int32_t, 2>> keys;
  for (const auto& c : mesh->cells_)
  {
    for (int lf = 0; lf < mdf::num_facets(c.type); ++lf)
    {
      auto lv = facet_local_vertices(c.type, lf);
      keys.push_back(sorted_pair(c.vertices[lv[0]], lv[1] < 0 ? -1 : c.vertices[lv[1]]));
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  mesh->facets_.resize(keys.size());
  for (std::size_t f = 0; f < keys.size(); ++f)
  {
    mesh->facets_[f].vertices = keys[f];
    mesh->facet_lookup_.emplace(facet_key(keys[f]), static_cast<std::int32_t>(f));
  }
  mesh->cell_facets_.assign(mesh->cells_.size(), {-1, -1, -1, -1});
  for (std::size_t c = 0; c < mesh->cells_.size(); ++c)
  {
    const auto& cell = mesh->cells_[c];
    for (int lf = 0; lf < mdf::num_facets(cell.type); ++lf)
    {
      auto lv = facet_local_vertices(cell.type, lf);
      auto key = sorted_pair(cell.vertices[lv[0]], lv[1] < 0 ? -1 : cell.vertices[lv[1]]);
      auto f = mesh->facet_lookup_.at(facet_key(key));
      mesh->cell_facets_[c][lf] = f;
      mesh->facets_[f].cells.push_back(static_cast<std::int32_t>(c));
      mesh->facets_[f].local_facets.push_back(static_cast<std::int8_t>(lf));
    }
  }

  mesh->facet_markers_.assign(mesh->facets_.size(), kUnmarked);
  for (const auto& [verts, marker] : data.facet_markers)
  {
    auto f = mesh->find_facet(verts);
    if (!f)
      throw Error("facet marker refers to a non-existent facet");
    mesh->facet_markers_[*f] = marker;
  }
  return mesh;
}

MeshPtr Mesh::create(Data data) { return build(std::move(data)); }

std::optional<std::int32_t> Mesh::find_facet(std::array<std::int32_t, 2> verts) const
{
  auto it = facet_lookup_.find(facet_key(verts));
  if (it == facet_lookup_.end())
    return std::nullopt;
  return it->second;
}

std::vector<Point> Mesh::cell_coordinates(std::size_t c) const
{
  std::vector<Point> x;
  for (auto v : cells_[c].vertex_span())
    x.push_back(vertices_[v]);
  return x;
}

std::array<Point, 2> Mesh::facet_coordinates(std::size_t f) const
{
  const auto& v = facets_[f].vertices;
  return {vertices_[v[0]], v[1] < 0 ? vertices_[v[0]] : vertices_[v[1]]};
}

double Mesh::cell_volume(std::size_t c) const
{
  auto x = cell_coordinates(c);
  if (x.size() == 2)
    return std::hypot(x[1][0] - x[0][0], x[1][1] - x[0][1]);
  double twice = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    const auto& a = x[i];
    const auto& b = x[(i + 1) % x.size()];
    twice += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * std::abs(twice);
}

Point Mesh::cell_centroid(std::size_t c) const
{
  auto x = cell_coordinates(c);
  Point m{0.0, 0.0};
  for (const auto& p : x)
  {
    m[0] += p[0];
    m[1] += p[1];
  }
  return {m[0] / x.size(), m[1] / x.size()};
}

Point Mesh::outward_normal(std::size_t f, std::size_t c) const
{
  const auto& facet = facets_[f];
  if (std::find(facet.cells.begin(), facet.cells.end(), static_cast<std::int32_t>(c)) == facet.cells.end())
    throw Error("cell is not incident to facet");
  auto centroid = cell_centroid(c);
  if (dim_ == 1)
  {
    const auto& p = vertices_[facet.vertices[0]];
    Point d{p[0] - centroid[0], p[1] - centroid[1]};
    double len = std::hypot(d[0], d[1]);
    return {d[0] / len, d[1] / len};
  }
  auto [a, b] = facet_coordinates(f);
  Point t{b[0] - a[0], b[1] - a[1]};
  double len = std::hypot(t[0], t[1]);
  Point n{t[1] / len, -t[0] / len};
  Point mid{0.5 * (a[0] + b[0]) - centroid[0], 0.5 * (a[1] + b[1]) - centroid[1]};
  if (n[0] * mid[0] + n[1] * mid[1] < 0.0)
    n = {-n[0], -n[1]};
  return n;
}

//-----------------------------------------------------------------------------
namespace {

MeshPtr build_unit_square(int n, bool triangles_on_right)
{
  if (n < 0)
    throw Error("refinement level must be non-negative");
  const int N = 10 << n;
  Mesh::Data data;
  data.dim = 2;
  auto vid = [N](int i, int j) { return static_cast<std::int32_t>(j * (N + 1) + i); };
  for (int j = 0; j <= N; ++j)
    for (int i = 0; i <= N; ++i)
      data.vertices.push_back({static_cast<double>(i) / N, static_cast<double>(j) / N});

  for (int j = 0; j < N; ++j)
  {
    for (int i = 0; i < N; ++i)
    {
      const bool left = 2 * i < N;
      auto v00 = vid(i, j), v10 = vid(i + 1, j), v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      if (left || !triangles_on_right)
      {
        data.cells.push_back({CellType::quadrilateral, {v00, v10, v11, v01}});
        data.cell_markers.push_back(left ? 1 : 2);
      }
      else
      {
        data.cells.push_back({CellType::triangle, {v00, v10, v11, -1}});
        data.cells.push_back({CellType::triangle, {v00, v11, v01, -1}});
        data.cell_markers.push_back(2);
        data.cell_markers.push_back(2);
      }
    }
  }

  for (int k = 0; k < N; ++k)
  {
    data.facet_markers.push_back({{vid(k, 0), vid(k + 1, 0)}, kBoundaryMarker});
    data.facet_markers.push_back({{vid(k, N), vid(k + 1, N)}, kBoundaryMarker});
    data.facet_markers.push_back({{vid(0, k), vid(0, k + 1)}, kBoundaryMarker});
    data.facet_markers.push_back({{vid(N, k), vid(N, k + 1)}, kBoundaryMarker});
    data.facet_markers.push_back({{vid(N / 2, k), vid(N / 2, k + 1)}, kInterfaceMarker});
  }
  return Mesh::create(std::move(data));
}

} // namespace

MeshPtr build_hybrid_unit_square(int n) { return build_unit_square(n, true); }

MeshPtr build_split_unit_square(int n) { return build_unit_square(n, false); }

//-----------------------------------------------------------------------------
std::pair<MeshPtr, EntityMap> extract_codim0_submesh(const MeshPtr& parent, int marker)
{
  std::vector<std::int32_t> selected;
  for (std::size_t c = 0; c < parent->num_cells(); ++c)
    if (parent->cell_marker(c) == marker)
      selected.push_back(static_cast<std::int32_t>(c));
  if (selected.empty())
    throw Error("no entities matched marker " + std::to_string(marker));

  std::vector<std::int32_t> used;
  for (auto c : selected)
    for (auto v : parent->cells()[c].vertex_span())
      used.push_back(v);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::unordered_map<std::int32_t, std::int32_t> local;
  for (std::size_t i = 0; i < used.size(); ++i)
    local.emplace(used[i], static_cast<std::int32_t>(i));

  Mesh::Data data;
  data.dim = parent->dim();
  for (auto v : used)
    data.vertices.push_back(parent->vertices()[v]);
  for (auto c : selected)
  {
    Cell cell = parent->cells()[c];
    for (auto& v : cell.vertices)
      if (v >= 0)
        v = local.at(v);
    data.cells.push_back(cell);
    data.cell_markers.push_back(parent->cell_marker(c));
  }

  auto sub = Mesh::build(std::move(data));
  sub->parent_ = parent;
  sub->vertex_map_ = used;
  sub->cell_map_ = {sub->id(), parent->id(), EntityKind::cell, EntityKind::cell, selected};

  sub->facet_map_ = {sub->id(), parent->id(), EntityKind::facet, EntityKind::facet, {}};
  for (std::size_t f = 0; f < sub->num_facets(); ++f)
  {
    const auto& v = sub->facets_[f].vertices;
    auto pf = parent->find_facet({used[v[0]], v[1] < 0 ? -1 : used[v[1]]});
    sub->facet_map_.table.push_back(*pf);
    sub->facet_markers_[f] = parent->facet_marker(*pf);
  }
  return {sub, sub->cell_map_};
}

std::pair<MeshPtr, EntityMap> extract_codim1_submesh(const MeshPtr& parent, int facet_marker)
{
  if (parent->dim() != 2)
    throw Error("codim-1 extraction requires a 2D parent");
  std::vector<std::int32_t> selected;
  for (std::size_t f = 0; f < parent->num_facets(); ++f)
    if (parent->facet_marker(f) == facet_marker)
      selected.push_back(static_cast<std::int32_t>(f));
  if (selected.empty())
    throw Error("no entities matched marker " + std::to_string(facet_marker));

  std::vector<std::int32_t> used;
  for (auto f : selected)
    for (auto v : parent->facets()[f].vertices)
      used.push_back(v);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::unordered_map<std::int32_t, std::int32_t> local;
  for (std::size_t i = 0; i < used.size(); ++i)
    local.emplace(used[i], static_cast<std::int32_t>(i));

  Mesh::Data data;
  data.dim = 1;
  for (auto v : used)
    data.vertices.push_back(parent->vertices()[v]);
  std::vector<Point> normals;
  for (auto f : selected)
  {
    const auto& facet = parent->facets()[f];
    data.cells.push_back({CellType::interval, {local.at(facet.vertices[0]), local.at(facet.vertices[1]), -1, -1}});
    data.cell_markers.push_back(facet_marker);
    normals.push_back(parent->outward_normal(f, facet.cells.front()));
  }

  auto sub = Mesh::build(std::move(data));
  sub->parent_ = parent;
  sub->vertex_map_ = used;
  sub->cell_normals_ = std::move(normals);
  sub->cell_map_ = {sub->id(), parent->id(), EntityKind::cell, EntityKind::facet, selected};
  return {sub, sub->cell_map_};
}

EntityMap identity_map(const Mesh& mesh, EntityKind kind)
{
  EntityMap m{mesh.id(), mesh.id(), kind, kind, {}};
  std::size_t n = kind == EntityKind::cell ? mesh.num_cells() : mesh.num_facets();
  m.table.resize(n);
  std::iota(m.table.begin(), m.table.end(), 0);
  return m;
}

EntityMap compose_maps(const EntityMap& a, const EntityMap& b)
{
  if (a.target_mesh_id != b.source_mesh_id)
    throw Error("cannot compose entity maps: mesh id mismatch");
  if (a.target_kind != b.source_kind)
    throw Error("cannot compose entity maps: entity kind mismatch");
  EntityMap c{a.source_mesh_id, b.target_mesh_id, a.source_kind, b.target_kind, {}};
  c.table.reserve(a.size());
  for (auto e : a.table)
  {
    if (e < 0 || static_cast<std::size_t>(e) >= b.size())
      throw Error("cannot compose entity maps: index out of range");
    c.table.push_back(b.table[e]);
  }
  return c;
}

FacetClassification classify_facets(const Mesh& mesh)
{
  FacetClassification out;
  for (std::size_t f = 0; f < mesh.num_facets(); ++f)
  {
    auto n = mesh.facets()[f].cells.size();
    if (n == 1)
      out.exterior.push_back(static_cast<std::int32_t>(f));
    else if (n == 2)
      out.interior.push_back(static_cast<std::int32_t>(f));
    else
      throw Error("non-manifold facet " + std::to_string(f) + " with " + std::to_string(n) + " incident cells");
  }
  return out;
}

const Mesh& root_of(const Mesh& mesh)
{
  const Mesh* m = &mesh;
  while (m->parent())
    m = m->parent().get();
  return *m;
}

EntityMap map_to_root(const Mesh& mesh, EntityKind kind)
{
  if (!mesh.parent())
    return identity_map(mesh, kind);
  if (kind == EntityKind::cell)
    return compose_maps(mesh.cell_map(), map_to_root(*mesh.parent(), mesh.cell_map().target_kind));
  if (mesh.is_codim1())
    throw Error("facets of a codim-1 submesh have no parent entity");
  return compose_maps(mesh.facet_map(), map_to_root(*mesh.parent(), EntityKind::facet));
}

//-----------------------------------------------------------------------------
void write_mesh(std::ostream& os, const Mesh& mesh)
{
  auto prec = os.precision(std::numeric_limits<double>::max_digits10);
  os << "meshfmt 1\n";
  os << "dim " << mesh.dim() << " gdim " << mesh.gdim() << "\n";
  os << "vertices " << mesh.vertices().size() << "\n";
  for (const auto& p : mesh.vertices())
    os << p[0] << ' ' << p[1] << '\n';
  os << "cells " << mesh.num_cells() << "\n";
  for (std::size_t c = 0; c < mesh.num_cells(); ++c)
  {
    const auto& cell = mesh.cells()[c];
    os << to_string(cell.type);
    for (auto v : cell.vertex_span())
      os << ' ' << v;
    os << ' ' << mesh.cell_marker(c) << '\n';
  }
  std::size_t k = 0;
  for (auto m : mesh.facet_markers())
    k += (m != kUnmarked);
  os << "facet_markers " << k << "\n";
  for (std::size_t f = 0; f < mesh.num_facets(); ++f)
  {
    if (mesh.facet_marker(f) == kUnmarked)
      continue;
    const auto& v = mesh.facets()[f].vertices;
    os << v[0];
    if (v[1] >= 0)
      os << ' ' << v[1];
    os << ' ' << mesh.facet_marker(f) << '\n';
  }
  os.precision(prec);
}

namespace {

void expect(std::istream& is, std::string_view word)
{
  std::string tok;
  if (!(is >> tok) || tok != word)
    throw Error("mesh format: expected '" + std::string(word) + "', got '" + tok + "'");
}

template <typename T>
T read_value(std::istream& is, std::string_view what)
{
  T v{};
  if (!(is >> v))
    throw Error("mesh format: failed to read " + std::string(what));
  return v;
}

} // namespace

MeshPtr read_mesh(std::istream& is)
{
  expect(is, "meshfmt");
  if (read_value<int>(is, "version") != 1)
    throw Error("mesh format: unsupported version");
  Mesh::Data data;
  expect(is, "dim");
  data.dim = read_value<int>(is, "dim");
  expect(is, "gdim");
  if (read_value<int>(is, "gdim") != 2)
    throw Error("mesh format: only gdim 2 supported");
  expect(is, "vertices");
  auto nv = read_value<std::size_t>(is, "vertex count");
  for (std::size_t i = 0; i < nv; ++i)
  {
    double x = read_value<double>(is, "x");
    double y = read_value<double>(is, "y");
    data.vertices.push_back({x, y});
  }
  expect(is, "cells");
  auto nc = read_value<std::size_t>(is, "cell count");
  for (std::size_t i = 0; i < nc; ++i)
  {
    Cell cell{cell_type_from_string(read_value<std::string>(is, "cell type"))};
    for (int k = 0; k < num_vertices(cell.type); ++k)
      cell.vertices[k] = read_value<std::int32_t>(is, "cell vertex");
    data.cells.push_back(cell);
    data.cell_markers.push_back(read_value<int>(is, "cell marker"));
  }
  expect(is, "facet_markers");
  auto nf = read_value<std::size_t>(is, "facet marker count");
  for (std::size_t i = 0; i < nf; ++i)
  {
    std::array<std::int32_t, 2> v{read_value<std::int32_t>(is, "facet vertex"), -1};
    if (data.dim == 2)
      v[1] = read_value<std::int32_t>(is, "facet vertex");
    data.facet_markers.push_back({v, read_value<int>(is, "facet marker")});
  }
  return Mesh::create(std::move(data));
}

} // namespace mdf
