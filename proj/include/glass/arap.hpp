#pragma once

#include "glass/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <vector>

namespace glass {

struct EnergyReport {
    double energy = 0.0;          // per-vertex sum, normalized by vertex count
    Eigen::VectorXd per_vertex;   // length N, nonnegative, sums to energy
};

using RotationList = std::vector<Eigen::Matrix3d>;

// Rest pose, one-ring adjacency, and cotangent weights for the deformation
// energy f(W, rest). Weights are clamped at zero here (rotation fitting on
// poor triangles is unstable with negative weights); the unclamped operator
// lives in mesh.hpp. Immutable after construction: concurrent evaluations on
// one context are safe, rotation fits live in caller-owned buffers.
class ArapContext {
public:
    explicit ArapContext(Mesh rest);

    const Mesh& rest() const { return rest_; }
    const CotanWeights& weights() const { return weights_; }
    int vertex_count() const { return rest_.vertex_count(); }
    // Laplacian of the clamped weights (the global-step system matrix).
    const Eigen::SparseMatrix<double>& laplacian() const { return laplacian_; }

private:
    Mesh rest_;
    CotanWeights weights_;
    Eigen::SparseMatrix<double> laplacian_;
};

// Per-vertex best-fit rotations: R_i = argmin_{SO(3)} sum_j w_ij
// ||(W_i - W_j) - R (V_i - V_j)||^2, via SVD of the 3x3 covariance with
// determinant sign correction (smallest-singular-value column flip).
RotationList fit_rotations(const ArapContext& ctx, const Eigen::MatrixXd& deformed);

// E = (1/N) sum_i sum_{j in N(i)} w_ij ||(W_i - W_j) - R_i (V_i - V_j)||^2
// with R_i from fit_rotations. Zero iff the deformation is locally rigid.
EnergyReport arap_energy(const ArapContext& ctx, const Eigen::MatrixXd& deformed);
EnergyReport arap_energy(const ArapContext& ctx, const Eigen::MatrixXd& deformed,
                         const RotationList& rotations);

// Gradient with rotations held at their current fit (exact for the fitted
// energy by the envelope argument):
// dE/dW_i = (2/N) sum_j w_ij (2 (W_i - W_j) - (R_i + R_j)(V_i - V_j)).
Eigen::MatrixXd arap_gradient(const ArapContext& ctx, const Eigen::MatrixXd& deformed);
Eigen::MatrixXd arap_gradient(const ArapContext& ctx, const Eigen::MatrixXd& deformed,
                              const RotationList& rotations);

// Rotation-fixed (Gauss-Newton) Hessian of the energy: (4/N) L (x) I_3 with L
// the clamped-weight Laplacian. Constant over deformations, symmetric PSD,
// kernel contains the three translation modes exactly. DOF order is
// vertex-major: row 3 i + c is coordinate c of vertex i.
Eigen::SparseMatrix<double> arap_hessian_vertices(const ArapContext& ctx);

struct Constraint {
    int vertex;
    Eigen::RowVector3d position;
};

enum class ProjectionMode { LocalGlobal, GradientDescent };

struct ProjectionOptions {
    double threshold = 1e-5;
    int max_iters = 500;
    ProjectionMode mode = ProjectionMode::LocalGlobal;
    double armijo_c = 1e-4;  // gradient-descent sufficient-decrease constant
};

struct ProjectionResult {
    Eigen::MatrixXd positions;
    double final_energy = 0.0;
    int iterations = 0;
    bool converged = false;            // energy reached the threshold
    std::vector<double> energy_trace;  // [start, after iter 1, after iter 2, ...]
};

// Minimizes the energy from `start` until it drops to opts.threshold or the
// iteration budget runs out. Constrained vertices are pinned exactly at their
// targets. Energy is monotone non-increasing across iterations in both modes.
// Without constraints the translational null space is fixed by re-centering
// each iterate on the start centroid.
ProjectionResult project_arap(const ArapContext& ctx, const Eigen::MatrixXd& start,
                              const ProjectionOptions& opts,
                              const std::vector<Constraint>& constraints = {});

// Gradient descent with Armijo backtracking on f_a(W) + f_b(W), the blend
// projection used by the interpolation-with-energy baseline. Runs a fixed
// iteration budget; the trace never increases.
ProjectionResult project_pair_energy(const ArapContext& a, const ArapContext& b,
                                     const Eigen::MatrixXd& start, int max_iters);

// Lifts a deformation of a decimated mesh back to the original: mapped
// vertices become hard constraints, the rest minimize ARAP w.r.t. high_rest.
// Initialized with the best rigid alignment of the constrained subset.
Mesh highres_project(const Mesh& low_deformed, const VertexSubsetMap& map, const Mesh& high_rest,
                     const ProjectionOptions& opts = {});

}  // namespace glass
