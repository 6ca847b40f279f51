#include "glass/arap.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include <cmath>

namespace glass {

namespace {

CotanWeights clamp_negative(CotanWeights w) {
    for (auto& ring : w.rings)
        for (auto& nb : ring) nb.weight = std::max(nb.weight, 0.0);
    return w;
}

Eigen::Matrix3d polar_rotation(const Eigen::Matrix3d& covariance) {
    if (covariance.norm() < 1e-14) return Eigen::Matrix3d::Identity();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    const Eigen::Matrix3d& v = svd.matrixV();
    Eigen::Matrix3d r = v * u.transpose();
    if (r.determinant() < 0.0) {
        // Reflection case: flip the column paired with the smallest singular
        // value (JacobiSVD sorts descending, so the last one).
        u.col(2) *= -1.0;
        r = v * u.transpose();
    }
    return r;
}

}  // namespace

ArapContext::ArapContext(Mesh rest)
    : rest_(std::move(rest)), weights_(clamp_negative(cotangent_weights(rest_))) {
    laplacian_ = laplacian_matrix(weights_);
}

RotationList fit_rotations(const ArapContext& ctx, const Eigen::MatrixXd& deformed) {
    const int n = ctx.vertex_count();
    const Eigen::MatrixXd& rest = ctx.rest().vertices;
    RotationList rotations(n);
    for (int i = 0; i < n; ++i) {
        Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
        for (const auto& nb : ctx.weights().rings[i]) {
            const Eigen::Vector3d e = (rest.row(i) - rest.row(nb.index)).transpose();
            const Eigen::Vector3d d = (deformed.row(i) - deformed.row(nb.index)).transpose();
            s += nb.weight * e * d.transpose();
        }
        rotations[i] = polar_rotation(s);
    }
    return rotations;
}

EnergyReport arap_energy(const ArapContext& ctx, const Eigen::MatrixXd& deformed,
                         const RotationList& rotations) {
    const int n = ctx.vertex_count();
    const Eigen::MatrixXd& rest = ctx.rest().vertices;
    EnergyReport report;
    report.per_vertex = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        double cell = 0.0;
        for (const auto& nb : ctx.weights().rings[i]) {
            const Eigen::Vector3d e = (rest.row(i) - rest.row(nb.index)).transpose();
            const Eigen::Vector3d d = (deformed.row(i) - deformed.row(nb.index)).transpose();
            cell += nb.weight * (d - rotations[i] * e).squaredNorm();
        }
        report.per_vertex[i] = cell / n;
    }
    report.energy = report.per_vertex.sum();
    return report;
}

EnergyReport arap_energy(const ArapContext& ctx, const Eigen::MatrixXd& deformed) {
    return arap_energy(ctx, deformed, fit_rotations(ctx, deformed));
}

Eigen::MatrixXd arap_gradient(const ArapContext& ctx, const Eigen::MatrixXd& deformed,
                              const RotationList& rotations) {
    const int n = ctx.vertex_count();
    const Eigen::MatrixXd& rest = ctx.rest().vertices;
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 3);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        for (const auto& nb : ctx.weights().rings[i]) {
            const Eigen::Vector3d e = (rest.row(i) - rest.row(nb.index)).transpose();
            const Eigen::Vector3d d = (deformed.row(i) - deformed.row(nb.index)).transpose();
            g += nb.weight * (2.0 * d - (rotations[i] + rotations[nb.index]) * e);
        }
        grad.row(i) = (2.0 / n) * g.transpose();
    }
    return grad;
}

Eigen::MatrixXd arap_gradient(const ArapContext& ctx, const Eigen::MatrixXd& deformed) {
    return arap_gradient(ctx, deformed, fit_rotations(ctx, deformed));
}

Eigen::SparseMatrix<double> arap_hessian_vertices(const ArapContext& ctx) {
    const int n = ctx.vertex_count();
    const double scale = 4.0 / n;
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (const auto& nb : ctx.weights().rings[i]) {
            for (int c = 0; c < 3; ++c)
                trips.emplace_back(3 * i + c, 3 * nb.index + c, -scale * nb.weight);
            diag += nb.weight;
        }
        for (int c = 0; c < 3; ++c) trips.emplace_back(3 * i + c, 3 * i + c, scale * diag);
    }
    Eigen::SparseMatrix<double> h(3 * n, 3 * n);
    h.setFromTriplets(trips.begin(), trips.end());
    return h;
}

namespace {

// One global step: minimize the rotation-fixed energy over free vertices.
// Solves L_ff W_f = b_f - L_fc W_c with b_i = sum_j (w_ij/2)(R_i + R_j) e_ij.
class GlobalSolver {
public:
    GlobalSolver(const ArapContext& ctx, const std::vector<Constraint>& constraints)
        : ctx_(ctx), n_(ctx.vertex_count()) {
        free_index_.assign(n_, -1);
        constrained_.assign(n_, false);
        for (const auto& c : constraints) {
            if (c.vertex < 0 || c.vertex >= n_)
                throw MeshError("constraint vertex " + std::to_string(c.vertex) + " out of range");
            constrained_[c.vertex] = true;
        }
        // Without constraints, anchor vertex 0 to its current position each
        // solve; the translation gauge is restored by the caller.
        anchored_ = constraints.empty() && n_ > 0;
        if (anchored_) constrained_[0] = true;

        for (int i = 0; i < n_; ++i)
            if (!constrained_[i]) free_index_[i] = n_free_++;

        Eigen::SparseMatrix<double> lff(n_free_, n_free_);
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < n_; ++i) {
            if (constrained_[i]) continue;
            double diag = 0.0;
            for (const auto& nb : ctx_.weights().rings[i]) {
                diag += nb.weight;
                if (!constrained_[nb.index])
                    trips.emplace_back(free_index_[i], free_index_[nb.index], -nb.weight);
            }
            trips.emplace_back(free_index_[i], free_index_[i], diag);
        }
        lff.setFromTriplets(trips.begin(), trips.end());
        solver_.compute(lff);
        if (solver_.info() != Eigen::Success)
            throw MeshError("ARAP global step factorization failed (singular system)");
    }

    // `positions` holds current values for constrained vertices (already
    // pinned); free rows are overwritten with the minimizer.
    void solve(const RotationList& rotations, Eigen::MatrixXd& positions) const {
        const Eigen::MatrixXd& rest = ctx_.rest().vertices;
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_free_, 3);
        for (int i = 0; i < n_; ++i) {
            if (constrained_[i]) continue;
            Eigen::Vector3d b = Eigen::Vector3d::Zero();
            for (const auto& nb : ctx_.weights().rings[i]) {
                const Eigen::Vector3d e = (rest.row(i) - rest.row(nb.index)).transpose();
                b += 0.5 * nb.weight * (rotations[i] + rotations[nb.index]) * e;
                if (constrained_[nb.index])
                    b += nb.weight * positions.row(nb.index).transpose();
            }
            rhs.row(free_index_[i]) = b.transpose();
        }
        const Eigen::MatrixXd solution = solver_.solve(rhs);
        for (int i = 0; i < n_; ++i)
            if (!constrained_[i]) positions.row(i) = solution.row(free_index_[i]);
    }

    bool anchored() const { return anchored_; }

private:
    const ArapContext& ctx_;
    int n_ = 0;
    int n_free_ = 0;
    bool anchored_ = false;
    std::vector<int> free_index_;
    std::vector<bool> constrained_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

ProjectionResult project_local_global(const ArapContext& ctx, const Eigen::MatrixXd& start,
                                      const ProjectionOptions& opts,
                                      const std::vector<Constraint>& constraints) {
    GlobalSolver global(ctx, constraints);
    Eigen::MatrixXd w = start;
    for (const auto& c : constraints) w.row(c.vertex) = c.position;
    const Eigen::RowVector3d start_centroid = w.colwise().mean();

    ProjectionResult result;
    RotationList rotations = fit_rotations(ctx, w);
    double energy = arap_energy(ctx, w, rotations).energy;
    result.energy_trace.push_back(energy);

    int iter = 0;
    while (energy > opts.threshold && iter < opts.max_iters) {
        global.solve(rotations, w);
        if (global.anchored()) {
            // Translation does not change the energy; keep the iterate
            // centered where the projection started.
            w.rowwise() += start_centroid - w.colwise().mean();
        }
        rotations = fit_rotations(ctx, w);
        energy = arap_energy(ctx, w, rotations).energy;
        result.energy_trace.push_back(energy);
        ++iter;
    }

    result.positions = std::move(w);
    result.final_energy = energy;
    result.iterations = iter;
    result.converged = energy <= opts.threshold;
    return result;
}

ProjectionResult project_gradient_descent(const ArapContext& ctx, const Eigen::MatrixXd& start,
                                          const ProjectionOptions& opts,
                                          const std::vector<Constraint>& constraints) {
    Eigen::MatrixXd w = start;
    for (const auto& c : constraints) w.row(c.vertex) = c.position;

    ProjectionResult result;
    double energy = arap_energy(ctx, w).energy;
    result.energy_trace.push_back(energy);

    double step = 1.0;
    int iter = 0;
    while (energy > opts.threshold && iter < opts.max_iters) {
        Eigen::MatrixXd grad = arap_gradient(ctx, w);
        for (const auto& c : constraints) grad.row(c.vertex).setZero();
        const double grad_sq = grad.squaredNorm();
        if (grad_sq < 1e-30) break;

        double trial_energy = energy;
        Eigen::MatrixXd trial;
        double t = step;
        while (true) {
            trial = w - t * grad;
            trial_energy = arap_energy(ctx, trial).energy;
            if (trial_energy <= energy - opts.armijo_c * t * grad_sq) break;
            t *= 0.5;
            if (t < 1e-16) {
                trial = w;
                trial_energy = energy;
                break;
            }
        }
        w = std::move(trial);
        energy = trial_energy;
        result.energy_trace.push_back(energy);
        step = std::min(2.0 * t, 1e6);  // warm-start the next line search
        ++iter;
        if (t < 1e-16) break;
    }

    result.positions = std::move(w);
    result.final_energy = energy;
    result.iterations = iter;
    result.converged = energy <= opts.threshold;
    return result;
}

}  // namespace

ProjectionResult project_arap(const ArapContext& ctx, const Eigen::MatrixXd& start,
                              const ProjectionOptions& opts,
                              const std::vector<Constraint>& constraints) {
    if (opts.mode == ProjectionMode::GradientDescent)
        return project_gradient_descent(ctx, start, opts, constraints);
    return project_local_global(ctx, start, opts, constraints);
}

ProjectionResult project_pair_energy(const ArapContext& a, const ArapContext& b,
                                     const Eigen::MatrixXd& start, int max_iters) {
    Eigen::MatrixXd w = start;
    ProjectionResult result;
    double energy = arap_energy(a, w).energy + arap_energy(b, w).energy;
    result.energy_trace.push_back(energy);

    double step = 1.0;
    for (int iter = 0; iter < max_iters; ++iter) {
        const Eigen::MatrixXd grad = arap_gradient(a, w) + arap_gradient(b, w);
        const double grad_sq = grad.squaredNorm();
        if (grad_sq < 1e-30) break;

        double t = step;
        Eigen::MatrixXd trial;
        double trial_energy = energy;
        while (true) {
            trial = w - t * grad;
            trial_energy = arap_energy(a, trial).energy + arap_energy(b, trial).energy;
            if (trial_energy <= energy - 1e-4 * t * grad_sq) break;
            t *= 0.5;
            if (t < 1e-16) {
                trial = w;
                trial_energy = energy;
                break;
            }
        }
        w = std::move(trial);
        energy = trial_energy;
        result.energy_trace.push_back(energy);
        result.iterations = iter + 1;
        step = std::min(2.0 * t, 1e6);
        if (t < 1e-16) break;
    }

    result.positions = std::move(w);
    result.final_energy = energy;
    result.converged = true;  // fixed-budget descent has no threshold
    return result;
}

Mesh highres_project(const Mesh& low_deformed, const VertexSubsetMap& map, const Mesh& high_rest,
                     const ProjectionOptions& opts) {
    map.validate(high_rest.vertex_count());
    if (map.low_count() != low_deformed.vertex_count())
        throw MeshError("vertex map length does not match low-res mesh");

    const int m = map.low_count();
    // Best rigid alignment of the mapped rest subset onto the low-res
    // deformation seeds the solve near the right orientation.
    Eigen::MatrixXd src(m, 3), dst(m, 3);
    for (int i = 0; i < m; ++i) {
        src.row(i) = high_rest.vertices.row(map.low_to_high[i]);
        dst.row(i) = low_deformed.vertices.row(i);
    }
    const Eigen::RowVector3d src_c = src.colwise().mean();
    const Eigen::RowVector3d dst_c = dst.colwise().mean();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int i = 0; i < m; ++i)
        cov += (src.row(i) - src_c).transpose() * (dst.row(i) - dst_c);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d rot = svd.matrixV() * u.transpose();
    if (rot.determinant() < 0.0) {
        u.col(2) *= -1.0;
        rot = svd.matrixV() * u.transpose();
    }

    Eigen::MatrixXd start =
        (high_rest.vertices.rowwise() - src_c) * rot.transpose();
    start.rowwise() += dst_c;

    std::vector<Constraint> constraints;
    constraints.reserve(m);
    for (int i = 0; i < m; ++i)
        constraints.push_back({map.low_to_high[i], low_deformed.vertices.row(i)});

    ArapContext ctx(high_rest);
    ProjectionResult res = project_arap(ctx, start, opts, constraints);

    Mesh out;
    out.vertices = std::move(res.positions);
    out.faces = high_rest.faces;
    return out;
}

}  // namespace glass
