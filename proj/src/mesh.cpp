#include "glass/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace glass {

namespace {

std::string at_line(const std::filesystem::path& path, int line) {
    return path.string() + ":" + std::to_string(line);
}

// Cotangent of the angle at `apex` in triangle (apex, a, b).
double corner_cotangent(const Eigen::RowVector3d& apex, const Eigen::RowVector3d& a,
                        const Eigen::RowVector3d& b) {
    const Eigen::RowVector3d u = a - apex;
    const Eigen::RowVector3d v = b - apex;
    const double cross_norm = u.cross(v).norm();
    if (cross_norm < 1e-15) throw MeshError("zero-area face in cotangent computation");
    return u.dot(v) / cross_norm;
}

}  // namespace

void Mesh::validate() const {
    const int n = vertex_count();
    std::map<std::pair<int, int>, int> edge_faces;
    for (int f = 0; f < face_count(); ++f) {
        const int i = faces(f, 0), j = faces(f, 1), k = faces(f, 2);
        if (i < 0 || i >= n || j < 0 || j >= n || k < 0 || k >= n)
            throw MeshError("face " + std::to_string(f) + " has out-of-range vertex index");
        if (i == j || j == k || i == k)
            throw MeshError("face " + std::to_string(f) + " is degenerate (repeated vertex)");
        const std::pair<int, int> edges[3] = {
            {std::min(i, j), std::max(i, j)},
            {std::min(j, k), std::max(j, k)},
            {std::min(i, k), std::max(i, k)},
        };
        for (const auto& e : edges) {
            if (++edge_faces[e] > 2)
                throw MeshError("edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                                ") is shared by more than two faces");
        }
    }
}

double Mesh::bbox_diagonal() const {
    if (vertices.rows() == 0) return 0.0;
    const Eigen::RowVector3d lo = vertices.colwise().minCoeff();
    const Eigen::RowVector3d hi = vertices.colwise().maxCoeff();
    return (hi - lo).norm();
}

Eigen::RowVector3d Mesh::centroid() const {
    if (vertices.rows() == 0) return Eigen::RowVector3d::Zero();
    return vertices.colwise().mean();
}

bool Mesh::same_topology(const Mesh& other) const {
    return vertices.rows() == other.vertices.rows() && faces.rows() == other.faces.rows() &&
           faces == other.faces;
}

Mesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open OBJ file: " + path.string());

    std::vector<Eigen::RowVector3d> vertices;
    std::vector<Eigen::RowVector3i> faces;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw MeshError("malformed vertex at " + at_line(path, line_no));
            vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string token;
            while (ls >> token) {
                // Strip /vt/vn slots: only the leading vertex index matters.
                const auto slash = token.find('/');
                if (slash != std::string::npos) token.resize(slash);
                int v = 0;
                try {
                    size_t used = 0;
                    v = std::stoi(token, &used);
                    if (used != token.size()) throw std::invalid_argument(token);
                } catch (const std::exception&) {
                    throw MeshError("malformed face index '" + token + "' at " + at_line(path, line_no));
                }
                if (v < 1 || v > static_cast<int>(vertices.size()))
                    throw MeshError("face index " + std::to_string(v) + " out of range at " +
                                    at_line(path, line_no));
                idx.push_back(v - 1);
            }
            if (idx.size() != 3)
                throw MeshError("non-triangle face at " + at_line(path, line_no));
            faces.emplace_back(idx[0], idx[1], idx[2]);
        }
        // All other record types (vn, vt, o, g, s, usemtl, comments) are ignored.
    }

    Mesh mesh;
    mesh.vertices.resize(static_cast<int>(vertices.size()), 3);
    for (size_t i = 0; i < vertices.size(); ++i) mesh.vertices.row(static_cast<int>(i)) = vertices[i];
    mesh.faces.resize(static_cast<int>(faces.size()), 3);
    for (size_t i = 0; i < faces.size(); ++i) mesh.faces.row(static_cast<int>(i)) = faces[i];
    mesh.validate();
    return mesh;
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MeshError("cannot open for write: " + path.string());
    char buf[128];
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", mesh.vertices(i, 0),
                      mesh.vertices(i, 1), mesh.vertices(i, 2));
        out << buf;
    }
    for (int f = 0; f < mesh.face_count(); ++f) {
        out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
            << mesh.faces(f, 2) + 1 << '\n';
    }
    if (!out) throw MeshError("write failed: " + path.string());
}

CotanWeights cotangent_weights(const Mesh& rest) {
    const int n = rest.vertex_count();
    // Accumulate per-edge cotangent halves, then scatter into rings.
    std::map<std::pair<int, int>, double> edge_weight;
    for (int f = 0; f < rest.face_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int apex = rest.faces(f, c);
            const int i = rest.faces(f, (c + 1) % 3);
            const int j = rest.faces(f, (c + 2) % 3);
            const double cot = corner_cotangent(rest.vertices.row(apex), rest.vertices.row(i),
                                                rest.vertices.row(j));
            edge_weight[{std::min(i, j), std::max(i, j)}] += 0.5 * cot;
        }
    }

    CotanWeights w;
    w.rings.resize(n);
    for (const auto& [edge, weight] : edge_weight) {
        w.rings[edge.first].push_back({edge.second, weight});
        w.rings[edge.second].push_back({edge.first, weight});
    }
    return w;
}

Eigen::SparseMatrix<double> laplacian_matrix(const CotanWeights& weights) {
    const int n = weights.vertex_count();
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (const auto& nb : weights.rings[i]) {
            trips.emplace_back(i, nb.index, -nb.weight);
            diag += nb.weight;
        }
        trips.emplace_back(i, i, diag);
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(trips.begin(), trips.end());
    return L;
}

Eigen::VectorXd vertex_areas_barycentric(const Mesh& mesh) {
    Eigen::VectorXd areas = Eigen::VectorXd::Zero(mesh.vertex_count());
    for (int f = 0; f < mesh.face_count(); ++f) {
        const Eigen::RowVector3d a = mesh.vertices.row(mesh.faces(f, 0));
        const Eigen::RowVector3d b = mesh.vertices.row(mesh.faces(f, 1));
        const Eigen::RowVector3d c = mesh.vertices.row(mesh.faces(f, 2));
        const double area = 0.5 * (b - a).cross(c - a).norm();
        for (int k = 0; k < 3; ++k) areas[mesh.faces(f, k)] += area / 3.0;
    }
    return areas;
}

double mean_curvature_smoothness(const Mesh& mesh) {
    const CotanWeights weights = cotangent_weights(mesh);
    const Eigen::VectorXd areas = vertex_areas_barycentric(mesh);
    double total = 0.0;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        if (areas[i] < 1e-15) throw MeshError("zero vertex area at vertex " + std::to_string(i));
        Eigen::RowVector3d lap = Eigen::RowVector3d::Zero();
        for (const auto& nb : weights.rings[i])
            lap += nb.weight * (mesh.vertices.row(nb.index) - mesh.vertices.row(i));
        total += (lap / areas[i]).norm() / 2.0;
    }
    return total;
}

void VertexSubsetMap::validate(int n_high) const {
    std::vector<int> seen;
    seen.reserve(low_to_high.size());
    for (const int idx : low_to_high) {
        if (idx < 0 || idx >= n_high)
            throw MeshError("vertex map index " + std::to_string(idx) + " out of range");
        seen.push_back(idx);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw MeshError("vertex map indices are not distinct");
}

VertexSubsetMap load_vertex_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open vertex map: " + path.string());
    VertexSubsetMap map;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            size_t used = 0;
            const int v = std::stoi(line, &used);
            map.low_to_high.push_back(v);
        } catch (const std::exception&) {
            throw MeshError("malformed vertex map entry at " + at_line(path, line_no));
        }
    }
    return map;
}

void save_vertex_map(const VertexSubsetMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MeshError("cannot open for write: " + path.string());
    for (const int idx : map.low_to_high) out << idx << '\n';
    if (!out) throw MeshError("write failed: " + path.string());
}

}  // namespace glass
