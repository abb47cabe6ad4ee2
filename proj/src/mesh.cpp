#include "dsffnet/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dsffnet/errors.hpp"
#include "dsffnet/rng.hpp"

namespace dsffnet {

namespace {

// strips trailing "/vt/vn" qualifiers from an OBJ face token
long parse_face_index(const std::string& token, std::size_t line_no) {
    const std::size_t slash = token.find('/');
    const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
    try {
        std::size_t consumed = 0;
        const long idx = std::stol(head, &consumed);
        if (consumed != head.size()) throw std::invalid_argument(head);
        return idx;
    } catch (const std::exception&) {
        throw ParseError("bad face index '" + token + "'", line_no);
    }
}

} // namespace

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    Mesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            std::array<double, 3> v{};
            for (int d = 0; d < 3; ++d) {
                if (!(ls >> v[d]))
                    throw ParseError("vertex needs three numeric coordinates", line_no);
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string token;
            while (ls >> token) {
                long idx = parse_face_index(token, line_no);
                if (idx < 0) idx += static_cast<long>(mesh.vertices.size()) + 1;
                if (idx < 1 || idx > static_cast<long>(mesh.vertices.size()))
                    throw ParseError("face index " + token + " out of range", line_no);
                poly.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            if (poly.size() < 3) throw ParseError("face needs at least three vertices", line_no);
            for (std::size_t i = 1; i + 1 < poly.size(); ++i)
                mesh.faces.push_back({poly[0], poly[i], poly[i + 1]});
        }
        // everything else (vn, vt, comments, groups, ...) is ignored
    }
    return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary: exact "\n" separators
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    char buf[96];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v[0], v[1], v[2]);
        out << buf;
    }
    for (const auto& f : mesh.faces) {
        std::snprintf(buf, sizeof buf, "f %u %u %u\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out << buf;
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

Mesh normalize_mesh(const Mesh& mesh) {
    if (mesh.vertices.empty()) throw DegenerateMeshError("normalize: empty mesh");
    std::array<double, 3> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& v : mesh.vertices)
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], v[d]);
            hi[d] = std::max(hi[d], v[d]);
        }
    double longest = 0.0;
    std::array<double, 3> center{};
    for (int d = 0; d < 3; ++d) {
        center[d] = (lo[d] + hi[d]) * 0.5;
        longest = std::max(longest, hi[d] - lo[d]);
    }
    if (longest <= 0.0) throw DegenerateMeshError("normalize: bounding box has zero extent");
    const double inv = 2.0 / longest;
    Mesh out;
    out.faces = mesh.faces;
    out.vertices.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices)
        out.vertices.push_back({(v[0] - center[0]) * inv, (v[1] - center[1]) * inv,
                                (v[2] - center[2]) * inv});
    return out;
}

EdgeList extract_edges(const Mesh& mesh) {
    EdgeList edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            std::uint32_t a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            edges.push_back({a, b});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

ShuffleResult shuffle_vertices(const Mesh& mesh, std::uint64_t seed) {
    const std::size_t n = mesh.vertex_count();
    // Fisher–Yates gives p with out[k] = in[p[k]]; invert to the
    // "where did vertex i go" convention
    const auto p = random_permutation(n, seed);
    ShuffleResult res;
    res.perm.resize(n);
    res.mesh.vertices.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        res.mesh.vertices[k] = mesh.vertices[p[k]];
        res.perm[p[k]] = k;
    }
    res.mesh.faces.reserve(mesh.faces.size());
    for (const auto& f : mesh.faces)
        res.mesh.faces.push_back({static_cast<std::uint32_t>(res.perm[f[0]]),
                                  static_cast<std::uint32_t>(res.perm[f[1]]),
                                  static_cast<std::uint32_t>(res.perm[f[2]])});
    return res;
}

Mesh add_vertex_noise(const Mesh& mesh, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ContractError("add_vertex_noise: sigma must be non-negative");
    Mesh out = mesh;
    if (sigma == 0.0) return out;
    SplitMix64 rng(seed);
    for (auto& v : out.vertices)
        for (int d = 0; d < 3; ++d) v[d] += sigma * rng.gaussian();
    return out;
}

std::vector<double> mesh_to_columns(const Mesh& mesh) {
    const std::size_t n = mesh.vertex_count();
    std::vector<double> cols(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) cols[static_cast<std::size_t>(d) * n + i] = mesh.vertices[i][d];
    return cols;
}

Mesh columns_to_mesh(const std::vector<double>& columns, std::size_t n,
                     std::vector<std::array<std::uint32_t, 3>> faces) {
    if (columns.size() != 3 * n)
        throw DimensionError("columns_to_mesh: expected 3*" + std::to_string(n) + " values, got " +
                             std::to_string(columns.size()));
    Mesh out;
    out.faces = std::move(faces);
    out.vertices.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) out.vertices[i][d] = columns[static_cast<std::size_t>(d) * n + i];
    return out;
}

} // namespace dsffnet
