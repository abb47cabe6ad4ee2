#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dsffnet {

struct Mesh {
    // row-major N×3 coordinates, F×3 zero-based triangle indices
    std::vector<std::array<double, 3>> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
};

// undirected edges, each pair sorted ascending, list deduplicated and sorted
using EdgeList = std::vector<std::array<std::uint32_t, 2>>;

Mesh load_obj(const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);

// translate bbox center to the origin, divide by half the longest bbox edge;
// the longest axis then spans exactly [-1,1]
Mesh normalize_mesh(const Mesh& mesh);

EdgeList extract_edges(const Mesh& mesh);

struct ShuffleResult {
    Mesh mesh;
    // out.vertices[perm[i]] == in.vertices[i]
    std::vector<std::size_t> perm;
};
ShuffleResult shuffle_vertices(const Mesh& mesh, std::uint64_t seed);

Mesh add_vertex_noise(const Mesh& mesh, double sigma, std::uint64_t seed);

// flatten to the 3×N layout the network ops use (row d = coordinate d)
std::vector<double> mesh_to_columns(const Mesh& mesh);
Mesh columns_to_mesh(const std::vector<double>& columns, std::size_t n,
                     std::vector<std::array<std::uint32_t, 3>> faces);

} // namespace dsffnet
