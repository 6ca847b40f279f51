#include "glass/explorer.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace glass {

namespace {

// Flattened, mean-centered displacement field of a shape against the rest
// pose, the similarity domain for MMR.
Eigen::VectorXd displacement_feature(const Eigen::MatrixXd& shape, const Eigen::MatrixXd& rest) {
    Eigen::MatrixXd disp = shape - rest;
    disp.rowwise() -= Eigen::RowVector3d(disp.colwise().mean());
    Eigen::VectorXd flat(disp.size());
    for (int i = 0; i < disp.rows(); ++i)
        for (int c = 0; c < 3; ++c) flat[3 * i + c] = disp(i, c);
    return flat;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double denom = a.norm() * b.norm();
    if (denom < 1e-30) return 0.0;
    return a.dot(b) / denom;
}

}  // namespace

Eigen::MatrixXd latent_hessian(const VaeModel& model, const ArapContext& ctx,
                               const Eigen::VectorXd& l) {
    const Eigen::MatrixXd jac = decoder_jacobian(model, l);
    const Eigen::SparseMatrix<double> h = arap_hessian_vertices(ctx);
    const Eigen::MatrixXd hbar = jac.transpose() * (h * jac);
    return 0.5 * (hbar + hbar.transpose());
}

LatentSpectrum spectrum(const Eigen::MatrixXd& hbar, int k, const Eigen::VectorXd& source_code) {
    if (hbar.rows() != hbar.cols()) throw std::invalid_argument("spectrum needs a square matrix");
    if (k < 1 || k > hbar.rows()) throw std::invalid_argument("spectrum: invalid eigen-count");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (hbar + hbar.transpose()));
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    LatentSpectrum spec;
    spec.eigenvalues = solver.eigenvalues().head(k);
    spec.eigenvectors = solver.eigenvectors().leftCols(k);
    spec.source_code = source_code;
    return spec;
}

double step_size(const LatentSpectrum& spec, const Eigen::VectorXd& beta_hat, double delta,
                 double alpha_cap) {
    double denom = 0.0;
    for (int i = 0; i < beta_hat.size(); ++i)
        denom += beta_hat[i] * beta_hat[i] * std::max(spec.eigenvalues[i], 0.0);
    if (denom <= 1e-12) return alpha_cap;
    return std::min(alpha_cap, std::sqrt(2.0 * delta / denom));
}

std::vector<Candidate> perturb(const VaeModel& model, const ArapContext& source_ctx,
                               const Eigen::VectorXd& l, const LatentSpectrum& spec,
                               const PerturbationParams& params, Rng& rng) {
    const int k = static_cast<int>(spec.eigenvalues.size());
    // Draw all randomness first; evaluation below is order-independent.
    Eigen::MatrixXd betas(params.s, k);
    for (int j = 0; j < params.s; ++j)
        for (int i = 0; i < k; ++i) betas(j, i) = rng.normal();

    std::vector<Candidate> candidates(params.s);
    for (int j = 0; j < params.s; ++j) {
        Eigen::VectorXd beta_hat = betas.row(j).transpose();
        const double norm = beta_hat.norm();
        if (norm < 1e-30)
            beta_hat = Eigen::VectorXd::Unit(k, 0);
        else
            beta_hat /= norm;

        Candidate& cand = candidates[j];
        cand.alpha = step_size(spec, beta_hat, params.delta, params.alpha_cap);
        cand.latent = l + cand.alpha * (spec.eigenvectors * beta_hat);
        cand.deformed = decode(model, cand.latent);
        cand.energy_wrt_source = arap_energy(source_ctx, cand.deformed).energy;
    }
    return candidates;
}

size_t mmr_select(const Eigen::MatrixXd& source_w, std::vector<Candidate>& candidates,
                  std::span<const Eigen::MatrixXd* const> registry_shapes,
                  const Eigen::MatrixXd& rest, double gamma, MmrMode mode,
                  const VaeModel* model) {
    if (candidates.empty()) throw std::invalid_argument("mmr_select: empty candidate list");

    std::vector<Eigen::VectorXd> registry_features;
    registry_features.reserve(registry_shapes.size());
    Eigen::VectorXd source_feature;
    if (mode == MmrMode::Latent) {
        if (!model) throw std::invalid_argument("mmr_select: latent mode needs a model");
        source_feature = encode_mean(*model, source_w);
        for (const auto* shape : registry_shapes)
            registry_features.push_back(encode_mean(*model, *shape));
    } else {
        source_feature = displacement_feature(source_w, rest);
        for (const auto* shape : registry_shapes)
            registry_features.push_back(displacement_feature(*shape, rest));
    }

    size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < candidates.size(); ++j) {
        const Eigen::VectorXd feature = (mode == MmrMode::Latent)
                                            ? candidates[j].latent
                                            : displacement_feature(candidates[j].deformed, rest);
        double max_sim = -std::numeric_limits<double>::infinity();
        for (const auto& rf : registry_features) max_sim = std::max(max_sim, cosine(feature, rf));
        if (registry_features.empty()) max_sim = 0.0;
        const double score = gamma * cosine(feature, source_feature) - (1.0 - gamma) * max_sim;
        candidates[j].mmr_score = score;
        if (score > best_score) {
            best_score = score;
            best = j;
        }
    }
    return best;
}

std::pair<Eigen::MatrixXd, AugmentReport> latent_augment(
    const VaeModel& model, const ArapContext& source_ctx, const Eigen::MatrixXd& w,
    std::span<const Eigen::MatrixXd* const> registry_shapes, const Eigen::MatrixXd& rest,
    const PerturbationParams& params, Rng& rng) {
    const Eigen::VectorXd l = encode_mean(model, w);

    const Eigen::MatrixXd hbar = latent_hessian(model, source_ctx, l);
    const LatentSpectrum spec = spectrum(hbar, std::min(params.k, model.latent_dim()), l);

    // Candidate energies are measured against the decoded anchor (the shape
    // actually at l); projection below targets the source itself.
    const ArapContext anchor_ctx(Mesh{decode(model, l), source_ctx.rest().faces});
    std::vector<Candidate> candidates = perturb(model, anchor_ctx, l, spec, params, rng);

    const size_t chosen =
        mmr_select(w, candidates, registry_shapes, rest, params.gamma, params.mmr_mode, &model);

    ProjectionOptions opts;
    opts.threshold = params.proj_threshold;
    opts.max_iters = params.proj_max_iters;
    const double pre = arap_energy(source_ctx, candidates[chosen].deformed).energy;
    ProjectionResult proj = project_arap(source_ctx, candidates[chosen].deformed, opts);

    AugmentReport report;
    report.alpha = candidates[chosen].alpha;
    report.eigenvalues = spec.eigenvalues;
    report.energy_pre = pre;
    report.energy_post = proj.final_energy;
    report.mmr_score = candidates[chosen].mmr_score;
    report.converged = proj.converged;
    report.projection_iters = proj.iterations;
    return {std::move(proj.positions), std::move(report)};
}

}  // namespace glass
