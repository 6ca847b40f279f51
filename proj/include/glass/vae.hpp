#pragma once

#include "glass/arap.hpp"
#include "glass/mesh.hpp"
#include "glass/random.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace glass {

struct VaeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense encoder 3N -> hidden -> 2K (mean and raw variance) and decoder
// K -> hidden -> 3N, tanh hidden activations, linear outputs.
struct VaeArchitecture {
    int input_dim = 0;  // 3N
    std::vector<int> encoder_hidden{256, 128};
    std::vector<int> decoder_hidden{128, 256};
    int latent_dim = 8;
};

struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

// Value-semantic model. Training mutates a locally owned copy; encode/decode/
// jacobian on a snapshot are safe to call concurrently. The sampling RNG is
// owned here and advances only through sample_latent.
struct VaeModel {
    VaeArchitecture arch;
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
    // Inputs are centered on the rest pose's centroid and scaled by its
    // bounding-box diagonal before encoding; decode applies the inverse.
    Eigen::RowVector3d norm_center = Eigen::RowVector3d::Zero();
    double norm_scale = 1.0;
    uint64_t seed = 0;
    Rng rng;

    int latent_dim() const { return arch.latent_dim; }
    int vertex_count() const { return arch.input_dim / 3; }
    size_t parameter_count() const;
};

// Xavier-uniform weights, zero biases, from the given seed.
VaeModel make_vae(const VaeArchitecture& arch, uint64_t seed,
                  const Eigen::RowVector3d& norm_center = Eigen::RowVector3d::Zero(),
                  double norm_scale = 1.0);

// Predicted mean and diagonal variance (softplus + 1e-6 floor, so strictly
// positive). Throws VaeError on a vertex-count mismatch.
std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const VaeModel& model,
                                                   const Eigen::MatrixXd& w);
Eigen::VectorXd encode_mean(const VaeModel& model, const Eigen::MatrixXd& w);

// z = mean + sqrt(var) .* eps with eps from the model's seeded stream.
Eigen::VectorXd sample_latent(VaeModel& model, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& var);

// Deterministic decode to N x 3 vertex positions (original units).
Eigen::MatrixXd decode(const VaeModel& model, const Eigen::VectorXd& z);

// Exact Jacobian of decode, 3N x K in vertex-major order (row 3i+c), by K
// forward-mode passes.
Eigen::MatrixXd decoder_jacobian(const VaeModel& model, const Eigen::VectorXd& z);

struct LossBreakdown {
    double reconstruction = 0.0;
    double gaussian = 0.0;
    double deformation = 0.0;
    double total = 0.0;
    double sigma = 0.0;
};

// A mini-batch of deformations with the per-item energy contexts (each item's
// own base shape). Needs at least two items for the batch Gaussian loss.
struct TrainBatch {
    std::vector<const Eigen::MatrixXd*> items;
    std::vector<const ArapContext*> contexts;

    int size() const { return static_cast<int>(items.size()); }
};

// Gradients in model-parameter layout.
struct VaeGradients {
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
};

// L_rec  = (1/b) sum ||D(E(W)) - W||^2        (autoencode through sampling)
// L_gauss= (1/b) sum (||mu||^2 + ||var - 1||^2)
// L_def  = (1/b) sum f(D(E(W)))               (ARAP w.r.t. the item's base)
// total  = L_rec + L_gauss + sigma * L_def
// `noise` is the b x K matrix of standard-normal draws used for sampling;
// ARAP rotations are treated as constants per gradient evaluation.
std::pair<LossBreakdown, VaeGradients> vae_loss_gradients(const VaeModel& model,
                                                          const TrainBatch& batch, double sigma,
                                                          const Eigen::MatrixXd& noise);

// Same losses, drawing the noise from the model's stream (no gradients).
LossBreakdown vae_loss(VaeModel& model, const TrainBatch& batch, double sigma);

struct TrainOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double grad_clip = 10.0;  // global-norm clip
    double sigma = 1.0;
};

struct AdamState {
    std::vector<DenseLayer> m;
    std::vector<DenseLayer> v;
    long step = 0;
};

AdamState make_adam_state(const VaeModel& model);

// One Adam update on the Eq.-style total loss. Throws VaeError on a
// non-finite loss or gradient.
LossBreakdown train_step(VaeModel& model, const TrainBatch& batch, AdamState& adam,
                         const TrainOptions& opts);

// Flat views of all parameters (encoder layers then decoder layers, each
// weight row-major then bias). Used by finite-difference checks and tooling.
Eigen::VectorXd flatten_parameters(const VaeModel& model);
void set_parameters(VaeModel& model, const Eigen::VectorXd& params);

// Checkpoint container, JSON with base64 little-endian f64 payloads,
// format tag "glassvae-v1".
void save_checkpoint(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace glass
