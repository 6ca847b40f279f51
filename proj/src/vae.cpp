#include "glass/vae.hpp"

#include "json.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace glass {

namespace {

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kVarianceFloor = 1e-6;

// acts[0] is the input; acts[l+1] the output of layer l (tanh on hidden
// layers, linear on the last).
struct ForwardCache {
    std::vector<Eigen::VectorXd> acts;
};

Eigen::VectorXd mlp_forward(const std::vector<DenseLayer>& layers, const Eigen::VectorXd& x,
                            ForwardCache* cache) {
    Eigen::VectorXd a = x;
    if (cache) cache->acts = {a};
    for (size_t l = 0; l < layers.size(); ++l) {
        Eigen::VectorXd pre = layers[l].weight * a + layers[l].bias;
        a = (l + 1 < layers.size()) ? pre.array().tanh().matrix() : pre;
        if (cache) cache->acts.push_back(a);
    }
    return a;
}

// Accumulates parameter gradients and returns dL/d input.
Eigen::VectorXd mlp_backward(const std::vector<DenseLayer>& layers, const ForwardCache& cache,
                             Eigen::VectorXd g, std::vector<DenseLayer>& grads) {
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        grads[l].weight.noalias() += g * cache.acts[l].transpose();
        grads[l].bias += g;
        g = layers[l].weight.transpose() * g;
        if (l > 0) {
            const auto& a = cache.acts[l];  // tanh output of layer l-1
            g.array() *= (1.0 - a.array().square());
        }
    }
    return g;
}

// Forward-mode directional derivative through the cached activations.
Eigen::VectorXd mlp_forward_tangent(const std::vector<DenseLayer>& layers,
                                    const ForwardCache& cache, Eigen::VectorXd t) {
    for (size_t l = 0; l < layers.size(); ++l) {
        t = layers[l].weight * t;
        if (l + 1 < layers.size()) {
            const auto& a = cache.acts[l + 1];
            t.array() *= (1.0 - a.array().square());
        }
    }
    return t;
}

Eigen::VectorXd flatten_normalized(const VaeModel& model, const Eigen::MatrixXd& w) {
    const int n = model.vertex_count();
    Eigen::VectorXd x(3 * n);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            x[3 * i + c] = (w(i, c) - model.norm_center[c]) / model.norm_scale;
    return x;
}

Eigen::MatrixXd unflatten_denormalized(const VaeModel& model, const Eigen::VectorXd& y) {
    const int n = model.vertex_count();
    Eigen::MatrixXd w(n, 3);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            w(i, c) = y[3 * i + c] * model.norm_scale + model.norm_center[c];
    return w;
}

std::vector<DenseLayer> zero_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> z;
    z.reserve(layers.size());
    for (const auto& l : layers)
        z.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                     Eigen::VectorXd::Zero(l.bias.size())});
    return z;
}

std::vector<DenseLayer> init_layers(const std::vector<int>& dims, Rng& rng) {
    std::vector<DenseLayer> layers;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const int rows = dims[l + 1], cols = dims[l];
        const double a = std::sqrt(6.0 / (rows + cols));
        DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd::Zero(rows)};
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) layer.weight(r, c) = a * (2.0 * rng.uniform() - 1.0);
        layers.push_back(std::move(layer));
    }
    return layers;
}

void check_topology(const VaeModel& model, const Eigen::MatrixXd& w) {
    if (static_cast<int>(w.rows()) * 3 != model.arch.input_dim || w.cols() != 3)
        throw VaeError("input shape " + std::to_string(w.rows()) +
                       "x3 does not match model vertex count " +
                       std::to_string(model.vertex_count()));
}

// --- base64 for parameter payloads -----------------------------------------

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const double* data, size_t count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    const size_t n = count * sizeof(double);
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (size_t i = 0; i < n; i += 3) {
        unsigned v = bytes[i] << 16;
        if (i + 1 < n) v |= bytes[i + 1] << 8;
        if (i + 2 < n) v |= bytes[i + 2];
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < n ? kB64Alphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? kB64Alphabet[v & 63] : '=');
    }
    return out;
}

std::vector<double> base64_decode(const std::string& text) {
    static int lut[256];
    static bool init = [] {
        std::fill(std::begin(lut), std::end(lut), -1);
        for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Alphabet[i])] = i;
        return true;
    }();
    (void)init;
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    unsigned buffer = 0;
    int bits = 0;
    for (const char ch : text) {
        if (ch == '=') break;
        const int v = lut[static_cast<unsigned char>(ch)];
        if (v < 0) throw VaeError("invalid base64 payload in checkpoint");
        buffer = (buffer << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((buffer >> bits) & 0xFF));
        }
    }
    if (bytes.size() % sizeof(double) != 0)
        throw VaeError("checkpoint payload is not a whole number of doubles");
    std::vector<double> values(bytes.size() / sizeof(double));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

}  // namespace

size_t VaeModel::parameter_count() const {
    size_t count = 0;
    for (const auto& l : encoder) count += l.weight.size() + l.bias.size();
    for (const auto& l : decoder) count += l.weight.size() + l.bias.size();
    return count;
}

VaeModel make_vae(const VaeArchitecture& arch, uint64_t seed,
                  const Eigen::RowVector3d& norm_center, double norm_scale) {
    if (arch.input_dim <= 0 || arch.input_dim % 3 != 0)
        throw VaeError("input_dim must be a positive multiple of 3");
    if (arch.latent_dim <= 0) throw VaeError("latent_dim must be positive");
    if (norm_scale <= 0.0) throw VaeError("normalization scale must be positive");

    VaeModel model;
    model.arch = arch;
    model.norm_center = norm_center;
    model.norm_scale = norm_scale;
    model.seed = seed;
    model.rng = Rng(seed);

    std::vector<int> enc_dims{arch.input_dim};
    enc_dims.insert(enc_dims.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
    enc_dims.push_back(2 * arch.latent_dim);
    model.encoder = init_layers(enc_dims, model.rng);

    std::vector<int> dec_dims{arch.latent_dim};
    dec_dims.insert(dec_dims.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
    dec_dims.push_back(arch.input_dim);
    model.decoder = init_layers(dec_dims, model.rng);
    return model;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const VaeModel& model,
                                                   const Eigen::MatrixXd& w) {
    check_topology(model, w);
    const Eigen::VectorXd out = mlp_forward(model.encoder, flatten_normalized(model, w), nullptr);
    const int k = model.latent_dim();
    Eigen::VectorXd mean = out.head(k);
    Eigen::VectorXd var(k);
    for (int i = 0; i < k; ++i) var[i] = softplus(out[k + i]) + kVarianceFloor;
    return {std::move(mean), std::move(var)};
}

Eigen::VectorXd encode_mean(const VaeModel& model, const Eigen::MatrixXd& w) {
    return encode(model, w).first;
}

Eigen::VectorXd sample_latent(VaeModel& model, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& var) {
    Eigen::VectorXd z(mean.size());
    for (int i = 0; i < mean.size(); ++i)
        z[i] = mean[i] + std::sqrt(var[i]) * model.rng.normal();
    return z;
}

Eigen::MatrixXd decode(const VaeModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.latent_dim()) throw VaeError("latent code has wrong dimension");
    return unflatten_denormalized(model, mlp_forward(model.decoder, z, nullptr));
}

Eigen::MatrixXd decoder_jacobian(const VaeModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.latent_dim()) throw VaeError("latent code has wrong dimension");
    ForwardCache cache;
    mlp_forward(model.decoder, z, &cache);
    const int k = model.latent_dim();
    Eigen::MatrixXd jac(model.arch.input_dim, k);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(k);
        t[i] = 1.0;
        jac.col(i) = mlp_forward_tangent(model.decoder, cache, std::move(t)) * model.norm_scale;
    }
    return jac;
}

std::pair<LossBreakdown, VaeGradients> vae_loss_gradients(const VaeModel& model,
                                                          const TrainBatch& batch, double sigma,
                                                          const Eigen::MatrixXd& noise) {
    const int b = batch.size();
    if (b < 2) throw VaeError("batch must contain at least 2 items");
    if (batch.contexts.size() != batch.items.size())
        throw VaeError("batch items and contexts disagree");
    if (noise.rows() != b || noise.cols() != model.latent_dim())
        throw VaeError("noise matrix has wrong shape");

    const int k = model.latent_dim();
    VaeGradients grads{zero_like(model.encoder), zero_like(model.decoder)};
    LossBreakdown loss;
    loss.sigma = sigma;

    for (int item = 0; item < b; ++item) {
        const Eigen::MatrixXd& w = *batch.items[item];
        check_topology(model, w);

        ForwardCache enc_cache;
        const Eigen::VectorXd enc_out =
            mlp_forward(model.encoder, flatten_normalized(model, w), &enc_cache);
        const Eigen::VectorXd mean = enc_out.head(k);
        const Eigen::VectorXd raw = enc_out.tail(k);
        Eigen::VectorXd var(k), dvar_draw(k);
        for (int i = 0; i < k; ++i) var[i] = softplus(raw[i]) + kVarianceFloor;

        const Eigen::VectorXd eps = noise.row(item).transpose();
        const Eigen::VectorXd z = mean + var.cwiseSqrt().cwiseProduct(eps);

        ForwardCache dec_cache;
        const Eigen::VectorXd y = mlp_forward(model.decoder, z, &dec_cache);
        const Eigen::MatrixXd decoded = unflatten_denormalized(model, y);

        const double rec = (decoded - w).squaredNorm();
        const RotationList rotations = fit_rotations(*batch.contexts[item], decoded);
        const double def = arap_energy(*batch.contexts[item], decoded, rotations).energy;
        const double gauss =
            mean.squaredNorm() + (var.array() - 1.0).matrix().squaredNorm();

        loss.reconstruction += rec / b;
        loss.deformation += def / b;
        loss.gaussian += gauss / b;

        // d total / d decoded, rotations held fixed.
        const Eigen::MatrixXd d_decoded =
            (2.0 / b) * (decoded - w) +
            (sigma / b) * arap_gradient(*batch.contexts[item], decoded, rotations);
        Eigen::VectorXd dy(model.arch.input_dim);
        for (int i = 0; i < model.vertex_count(); ++i)
            for (int c = 0; c < 3; ++c) dy[3 * i + c] = d_decoded(i, c) * model.norm_scale;

        const Eigen::VectorXd dz = mlp_backward(model.decoder, dec_cache, dy, grads.decoder);

        Eigen::VectorXd dmean = dz + (2.0 / b) * mean;
        Eigen::VectorXd dvar =
            dz.cwiseProduct(eps).cwiseQuotient(2.0 * var.cwiseSqrt()) +
            (2.0 / b) * (var.array() - 1.0).matrix();
        Eigen::VectorXd d_out(2 * k);
        d_out.head(k) = dmean;
        for (int i = 0; i < k; ++i) d_out[k + i] = dvar[i] * sigmoid(raw[i]);

        mlp_backward(model.encoder, enc_cache, d_out, grads.encoder);
    }

    loss.total = loss.reconstruction + loss.gaussian + sigma * loss.deformation;
    return {loss, std::move(grads)};
}

LossBreakdown vae_loss(VaeModel& model, const TrainBatch& batch, double sigma) {
    Eigen::MatrixXd noise(batch.size(), model.latent_dim());
    for (int i = 0; i < noise.rows(); ++i)
        for (int j = 0; j < noise.cols(); ++j) noise(i, j) = model.rng.normal();
    return vae_loss_gradients(model, batch, sigma, noise).first;
}

AdamState make_adam_state(const VaeModel& model) {
    AdamState st;
    st.m = zero_like(model.encoder);
    auto dec = zero_like(model.decoder);
    st.m.insert(st.m.end(), dec.begin(), dec.end());
    st.v = st.m;
    return st;
}

namespace {

void adam_update(DenseLayer& param, const DenseLayer& grad, DenseLayer& m, DenseLayer& v,
                 long step, const TrainOptions& o, double clip_scale) {
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
    auto update = [&](Eigen::Ref<Eigen::MatrixXd> p, const Eigen::MatrixXd& g,
                      Eigen::Ref<Eigen::MatrixXd> mm, Eigen::Ref<Eigen::MatrixXd> vv) {
        const Eigen::MatrixXd gc = g * clip_scale;
        mm = o.beta1 * mm + (1.0 - o.beta1) * gc;
        vv = o.beta2 * vv + (1.0 - o.beta2) * gc.cwiseProduct(gc);
        p -= (o.learning_rate * (mm / bc1).array() / ((vv / bc2).array().sqrt() + o.epsilon))
                 .matrix();
    };
    update(param.weight, grad.weight, m.weight, v.weight);
    update(param.bias, grad.bias, m.bias, v.bias);
}

}  // namespace

LossBreakdown train_step(VaeModel& model, const TrainBatch& batch, AdamState& adam,
                         const TrainOptions& opts) {
    Eigen::MatrixXd noise(batch.size(), model.latent_dim());
    for (int i = 0; i < noise.rows(); ++i)
        for (int j = 0; j < noise.cols(); ++j) noise(i, j) = model.rng.normal();

    auto [loss, grads] = vae_loss_gradients(model, batch, opts.sigma, noise);
    if (!std::isfinite(loss.total))
        throw VaeError("non-finite loss in train_step (total=" + std::to_string(loss.total) + ")");

    double grad_sq = 0.0;
    for (const auto& g : grads.encoder) grad_sq += g.weight.squaredNorm() + g.bias.squaredNorm();
    for (const auto& g : grads.decoder) grad_sq += g.weight.squaredNorm() + g.bias.squaredNorm();
    if (!std::isfinite(grad_sq)) throw VaeError("non-finite gradient in train_step");
    const double grad_norm = std::sqrt(grad_sq);
    const double clip_scale =
        (opts.grad_clip > 0.0 && grad_norm > opts.grad_clip) ? opts.grad_clip / grad_norm : 1.0;

    ++adam.step;
    const size_t n_enc = model.encoder.size();
    for (size_t l = 0; l < n_enc; ++l)
        adam_update(model.encoder[l], grads.encoder[l], adam.m[l], adam.v[l], adam.step, opts,
                    clip_scale);
    for (size_t l = 0; l < model.decoder.size(); ++l)
        adam_update(model.decoder[l], grads.decoder[l], adam.m[n_enc + l], adam.v[n_enc + l],
                    adam.step, opts, clip_scale);
    return loss;
}

Eigen::VectorXd flatten_parameters(const VaeModel& model) {
    Eigen::VectorXd params(model.parameter_count());
    Eigen::Index at = 0;
    auto pull = [&](const std::vector<DenseLayer>& layers) {
        for (const auto& l : layers) {
            for (int r = 0; r < l.weight.rows(); ++r)
                for (int c = 0; c < l.weight.cols(); ++c) params[at++] = l.weight(r, c);
            for (int r = 0; r < l.bias.size(); ++r) params[at++] = l.bias[r];
        }
    };
    pull(model.encoder);
    pull(model.decoder);
    return params;
}

void set_parameters(VaeModel& model, const Eigen::VectorXd& params) {
    if (params.size() != static_cast<Eigen::Index>(model.parameter_count()))
        throw VaeError("parameter vector has wrong length");
    Eigen::Index at = 0;
    auto push = [&](std::vector<DenseLayer>& layers) {
        for (auto& l : layers) {
            for (int r = 0; r < l.weight.rows(); ++r)
                for (int c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = params[at++];
            for (int r = 0; r < l.bias.size(); ++r) l.bias[r] = params[at++];
        }
    };
    push(model.encoder);
    push(model.decoder);
}

namespace {

nlohmann::json layer_to_json(const DenseLayer& layer) {
    // Eigen matrices are column-major; serialize row-major for readability of
    // the shape fields.
    std::vector<double> w(layer.weight.size());
    Eigen::Index at = 0;
    for (int r = 0; r < layer.weight.rows(); ++r)
        for (int c = 0; c < layer.weight.cols(); ++c) w[at++] = layer.weight(r, c);
    return {{"rows", layer.weight.rows()},
            {"cols", layer.weight.cols()},
            {"weight", base64_encode(w.data(), w.size())},
            {"bias", base64_encode(layer.bias.data(), static_cast<size_t>(layer.bias.size()))}};
}

DenseLayer layer_from_json(const nlohmann::json& j) {
    const int rows = j.at("rows").get<int>();
    const int cols = j.at("cols").get<int>();
    const std::vector<double> w = base64_decode(j.at("weight").get<std::string>());
    const std::vector<double> b = base64_decode(j.at("bias").get<std::string>());
    if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows)
        throw VaeError("checkpoint layer payload has wrong size");
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    size_t at = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) layer.weight(r, c) = w[at++];
    for (int r = 0; r < rows; ++r) layer.bias[r] = b[r];
    return layer;
}

}  // namespace

void save_checkpoint(const VaeModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "glassvae-v1";
    j["input_dim"] = model.arch.input_dim;
    j["latent_dim"] = model.arch.latent_dim;
    j["encoder_hidden"] = model.arch.encoder_hidden;
    j["decoder_hidden"] = model.arch.decoder_hidden;
    j["norm_center"] = {model.norm_center[0], model.norm_center[1], model.norm_center[2]};
    j["norm_scale"] = model.norm_scale;
    j["seed"] = model.seed;
    j["rng_state"] = model.rng.state();
    nlohmann::json enc = nlohmann::json::array(), dec = nlohmann::json::array();
    for (const auto& l : model.encoder) enc.push_back(layer_to_json(l));
    for (const auto& l : model.decoder) dec.push_back(layer_to_json(l));
    j["encoder"] = std::move(enc);
    j["decoder"] = std::move(dec);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw VaeError("cannot open checkpoint for write: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw VaeError("checkpoint write failed: " + path.string());
}

VaeModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw VaeError("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw VaeError("checkpoint parse failure: " + std::string(e.what()));
    }
    if (j.value("format", "") != std::string("glassvae-v1"))
        throw VaeError("unsupported checkpoint format tag");

    VaeModel model;
    model.arch.input_dim = j.at("input_dim").get<int>();
    model.arch.latent_dim = j.at("latent_dim").get<int>();
    model.arch.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    model.arch.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
    const auto center = j.at("norm_center").get<std::vector<double>>();
    if (center.size() != 3) throw VaeError("norm_center must have 3 entries");
    model.norm_center = Eigen::RowVector3d(center[0], center[1], center[2]);
    model.norm_scale = j.at("norm_scale").get<double>();
    model.seed = j.at("seed").get<uint64_t>();
    model.rng.set_state(j.at("rng_state").get<std::string>());
    for (const auto& l : j.at("encoder")) model.encoder.push_back(layer_from_json(l));
    for (const auto& l : j.at("decoder")) model.decoder.push_back(layer_from_json(l));
    return model;
}

}  // namespace glass
