#pragma once

#include "glass/mesh.hpp"
#include "glass/vae.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace glass {

// Average per-vertex Euclidean distance between two same-topology vertex
// arrays: D(a, b) = (1/N) sum_i ||a_i - b_i||.
double mean_vertex_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Mean over holdout shapes of the distance to their nearest generated shape.
// Zero when the generated set contains the holdout; monotone non-increasing
// as the generated set grows.
double coverage(const std::vector<Eigen::MatrixXd>& holdout,
                const std::vector<Eigen::MatrixXd>& generated);

// Same min-distance structure, restricted to a frame sequence: mean over
// ground-truth frames of the distance to the closest generated frame.
double sequence_l2(const std::vector<Eigen::MatrixXd>& generated,
                   const std::vector<Eigen::MatrixXd>& ground_truth);

// Decodes `samples` poses along the latent line between the encodings of a
// and b, snaps `keep` frames to equal arc-length quantiles, and returns the
// standard deviation of the adjacent-frame distances. Zero for a degenerate
// (zero-length) path.
double interpolation_smoothness(const VaeModel& model, const Mesh& a, const Mesh& b,
                                int samples = 1000, int keep = 30);

// Mean over shapes of D(decode(encode_mean(W)), W), in length units.
double reconstruction_error(const VaeModel& model, const std::vector<Eigen::MatrixXd>& shapes);

struct MetricReport {
    std::string method;
    double coverage = 0.0;
    double smoothness_mean = 0.0;   // mean mesh smoothness of evaluated shapes
    double interp_spacing_std = 0.0;
    std::optional<double> l2_to_holdout;
    std::optional<double> recon_error;
};

// CSV rows: method,coverage,smoothness,interp_std,l2_holdout,recon plus
// *_ratio columns when a reference row is given (ratios against it).
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricReport>& rows,
                       const MetricReport* reference = nullptr);

}  // namespace glass
