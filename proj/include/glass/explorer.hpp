#pragma once

#include "glass/arap.hpp"
#include "glass/random.hpp"
#include "glass/vae.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace glass {

// The k smallest eigenpairs of the latent energy Hessian at a code.
struct LatentSpectrum {
    Eigen::VectorXd eigenvalues;   // ascending, length k
    Eigen::MatrixXd eigenvectors;  // K x k, orthonormal columns
    Eigen::VectorXd source_code;   // the code the spectrum was computed at
};

enum class MmrMode { Displacement, Latent };

struct PerturbationParams {
    int k = 5;                    // retained eigen-count (k << K)
    int s = 16;                   // candidates per call
    double delta = 0.05;          // allowed energy increase (normalized units)
    double alpha_cap = 2.0;       // max step size
    double gamma = 0.5;           // MMR relevance/novelty trade-off
    double proj_threshold = 1e-5; // projection energy target
    int proj_max_iters = 500;
    MmrMode mmr_mode = MmrMode::Displacement;
};

struct Candidate {
    Eigen::VectorXd latent;
    Eigen::MatrixXd deformed;      // decode(latent)
    double alpha = 0.0;            // step size used for this draw
    double energy_wrt_source = 0.0;
    double mmr_score = 0.0;        // filled by mmr_select
};

// K x K curvature of the energy in latent space: J^T H J with J the decoder
// Jacobian at l and H the vertex-space energy Hessian. Symmetrized; PSD up
// to numerical tolerance.
Eigen::MatrixXd latent_hessian(const VaeModel& model, const ArapContext& ctx,
                               const Eigen::VectorXd& l);

// k smallest eigenpairs of a symmetric matrix, ascending.
LatentSpectrum spectrum(const Eigen::MatrixXd& hbar, int k,
                        const Eigen::VectorXd& source_code = Eigen::VectorXd());

// alpha = min(alpha_cap, sqrt(2 delta / sum beta_hat_i^2 lambda_i)), with
// negative eigenvalues clamped to zero; returns the cap when the denominator
// vanishes. beta_hat must satisfy sum beta_hat_i^2 = 1.
double step_size(const LatentSpectrum& spec, const Eigen::VectorXd& beta_hat, double delta,
                 double alpha_cap);

// Draws s tangent steps l + alpha * sum beta_hat_i U_i with beta ~ N(0, I)^k
// normalized to unit length. Candidate energies are measured against the
// passed context (the decoded source shape). All randomness is drawn up
// front, so candidate evaluation order never changes results.
std::vector<Candidate> perturb(const VaeModel& model, const ArapContext& source_ctx,
                               const Eigen::VectorXd& l, const LatentSpectrum& spec,
                               const PerturbationParams& params, Rng& rng);

// Maximal Marginal Relevance: argmax of
//   F(c) = gamma * M(c, source) - (1 - gamma) * max_{r in registry} M(c, r),
// where M is cosine similarity of mean-centered displacement fields
// (shape - rest), or of latent codes in Latent mode. Fills mmr_score on every
// candidate and returns the winning index; ties break to the lowest index.
size_t mmr_select(const Eigen::MatrixXd& source_w, std::vector<Candidate>& candidates,
                  std::span<const Eigen::MatrixXd* const> registry_shapes,
                  const Eigen::MatrixXd& rest, double gamma, MmrMode mode = MmrMode::Displacement,
                  const VaeModel* model = nullptr);

struct AugmentReport {
    double alpha = 0.0;
    Eigen::VectorXd eigenvalues;
    double energy_pre = 0.0;   // chosen candidate's energy w.r.t. the source
    double energy_post = 0.0;  // after projection
    double mmr_score = 0.0;
    bool converged = false;
    int projection_iters = 0;
};

// One LatentAugment call: encode the source to its mean code, analyze the
// latent Hessian, draw s perturbations, keep the MMR winner, and project it
// toward low energy with the source as rest pose. Returns the projected
// deformation; appending it to the registry is the caller's job.
std::pair<Eigen::MatrixXd, AugmentReport> latent_augment(
    const VaeModel& model, const ArapContext& source_ctx, const Eigen::MatrixXd& w,
    std::span<const Eigen::MatrixXd* const> registry_shapes, const Eigen::MatrixXd& rest,
    const PerturbationParams& params, Rng& rng);

}  // namespace glass
