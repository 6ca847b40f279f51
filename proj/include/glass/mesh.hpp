#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace glass {

struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed-topology triangle mesh: N x 3 vertex positions and T x 3 zero-based,
// counterclockwise face index triples. All meshes in one run share the same
// face array.
struct Mesh {
    Eigen::MatrixXd vertices;  // N x 3
    Eigen::MatrixXi faces;     // T x 3

    int vertex_count() const { return static_cast<int>(vertices.rows()); }
    int face_count() const { return static_cast<int>(faces.rows()); }

    // Throws MeshError on out-of-range indices, degenerate faces, or an edge
    // shared by more than two faces. Open (boundary) meshes are fine.
    void validate() const;

    double bbox_diagonal() const;
    Eigen::RowVector3d centroid() const;
    bool same_topology(const Mesh& other) const;
};

// Wavefront OBJ I/O. Only v/f records are honored; f entries may carry
// texture/normal slots (v/vt/vn), which are stripped. Faces must be
// triangles. Errors carry the offending line number.
Mesh load_obj(const std::filesystem::path& path);

// Writes v records with 6 decimal places, then f records (1-based).
// load_obj(save_obj(m)) reproduces vertices to 1e-6 and faces exactly.
void save_obj(const Mesh& mesh, const std::filesystem::path& path);

// Symmetric cotangent weights on the one-ring adjacency of a rest mesh.
// w_ij = 1/2 (cot a_ij + cot b_ij) over the one or two faces adjacent to
// edge ij; boundary edges use the single available cotangent. Negative
// weights are kept (the ARAP module clamps its own copy).
struct CotanWeights {
    struct Neighbor {
        int index;
        double weight;
    };
    // rings[i] lists the one-ring of vertex i; weights are symmetric.
    std::vector<std::vector<Neighbor>> rings;

    int vertex_count() const { return static_cast<int>(rings.size()); }
};

CotanWeights cotangent_weights(const Mesh& rest);

// diag-minus-weights matrix of the given weights; row sums are zero.
Eigen::SparseMatrix<double> laplacian_matrix(const CotanWeights& weights);

// Barycentric vertex areas: one third of the incident face areas.
Eigen::VectorXd vertex_areas_barycentric(const Mesh& mesh);

// Sum over vertices of ||Delta(V_i)|| / 2 with Delta the area-normalized
// cotangent Laplace-Beltrami operator of the mesh itself (barycentric
// vertex areas). For a unit sphere the per-vertex value approaches 1.
double mean_curvature_smoothness(const Mesh& mesh);

// Correspondence from a decimated mesh into the original: entry i is the
// high-res index of low-res vertex i. Stored as a plain text file, one
// integer per line.
struct VertexSubsetMap {
    std::vector<int> low_to_high;

    int low_count() const { return static_cast<int>(low_to_high.size()); }
    // Throws MeshError unless indices are distinct and within [0, n_high).
    void validate(int n_high) const;
};

VertexSubsetMap load_vertex_map(const std::filesystem::path& path);
void save_vertex_map(const VertexSubsetMap& map, const std::filesystem::path& path);

}  // namespace glass
