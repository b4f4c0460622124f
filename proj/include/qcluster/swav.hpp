#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcluster/matrix.hpp"
#include "qcluster/parallel.hpp"
#include "qcluster/quantum.hpp"
#include "qcluster/rng.hpp"

namespace qcluster::swav {

// Learnable prototype matrix plus the scoring hyperparameters. Prototypes are
// trained jointly with the circuit parameters.
struct PrototypeBank {
    Matrix prototypes;         // num_prototypes x embedding_dim
    double temperature = 0.1;  // > 0
    double smoothing = 0.01;   // epsilon in [0, 1)

    std::size_t num_prototypes() const { return prototypes.rows; }
    std::size_t embedding_dim() const { return prototypes.cols; }

    void validate() const {
        if (num_prototypes() < 2) throw std::invalid_argument("PrototypeBank: need >= 2 prototypes");
        if (temperature <= 0.0) throw std::invalid_argument("PrototypeBank: temperature must be > 0");
        if (smoothing < 0.0 || smoothing >= 1.0)
            throw std::invalid_argument("PrototypeBank: smoothing must be in [0, 1)");
    }
};

inline PrototypeBank make_prototype_bank(std::size_t num_prototypes, std::size_t embedding_dim,
                                         double temperature, double smoothing, Rng& rng) {
    PrototypeBank bank;
    bank.temperature = temperature;
    bank.smoothing = smoothing;
    bank.prototypes = Matrix(num_prototypes, embedding_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
    for (auto& v : bank.prototypes.data) v = rng.gaussian(0.0, scale);
    bank.validate();
    return bank;
}

// Temperature-scaled softmax over prototype scores followed by label
// smoothing: p' = (1 - eps) * softmax(z C^T / T) + eps / P. Every entry is
// floored at eps / P and rows sum to one.
inline Matrix prototype_probabilities(const Matrix& embeddings, const PrototypeBank& bank) {
    bank.validate();
    if (embeddings.cols != bank.embedding_dim())
        throw std::invalid_argument("prototype_probabilities: embedding dim does not match bank");
    Matrix logits = multiply_bt(embeddings, bank.prototypes);
    const double inv_t = 1.0 / bank.temperature;
    for (auto& v : logits.data) {
        v *= inv_t;
        if (!std::isfinite(v)) throw std::runtime_error("prototype_probabilities: non-finite logits");
    }
    const std::size_t p_count = bank.num_prototypes();
    const double floor_term = bank.smoothing / static_cast<double>(p_count);
    Matrix probs(logits.rows, p_count);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < p_count; ++c) {
            probs.at(r, c) = std::exp(row[c] - mx);
            sum += probs.at(r, c);
        }
        for (std::size_t c = 0; c < p_count; ++c)
            probs.at(r, c) = (1.0 - bank.smoothing) * (probs.at(r, c) / sum) + floor_term;
    }
    return probs;
}

namespace detail {
inline void check_distribution(std::span<const double> p, const char* which) {
    double sum = 0.0;
    for (const double v : p) {
        if (v < 0.0) throw std::invalid_argument(std::string("swav_loss: ") + which + " has a negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument(std::string("swav_loss: ") + which + " does not sum to 1");
}
}  // namespace detail

// Composite assignment loss for one row pair: log1p is applied to the first
// distribution element-wise and the result renormalized before the KL
// divergence against the second. (The raw expression KL(log1p(P1) || P2) is
// not well-typed; renormalization is the minimal repair and reduces to
// standard KL as P1 approaches one-hot.)
inline double swav_loss(std::span<const double> p1, std::span<const double> p2) {
    if (p1.size() != p2.size()) throw std::invalid_argument("swav_loss: size mismatch");
    detail::check_distribution(p1, "p1");
    detail::check_distribution(p2, "p2");
    double z = 0.0;
    for (const double v : p1) z += std::log1p(v);
    double loss = 0.0;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        const double q = std::log1p(p1[i]) / z;
        if (q == 0.0) continue;  // 0 * ln(0/x) = 0
        if (p2[i] <= 0.0)
            throw std::runtime_error("swav_loss: q positive where p2 is zero (needs smoothing floor)");
        loss += q * std::log(q / p2[i]);
    }
    return loss;
}

// Mean of row losses.
inline double batch_swav_loss(const Matrix& p1, const Matrix& p2) {
    if (p1.rows != p2.rows || p1.cols != p2.cols)
        throw std::invalid_argument("batch_swav_loss: shape mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < p1.rows; ++r) total += swav_loss(p1.row(r), p2.row(r));
    return total / static_cast<double>(p1.rows);
}

// Adds i.i.d. N(0, sigma^2) noise per entry. sigma == 0 returns the input
// without consuming the stream.
inline Matrix gaussian_augment(const Matrix& input, double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_augment: sigma must be >= 0");
    if (sigma == 0.0) return input;
    Matrix out = input;
    for (auto& v : out.data) v += rng.gaussian(0.0, sigma);
    return out;
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
};

// Gradient clipping by global L2 norm, then a standard bias-corrected Adam
// update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
inline void clipped_adam_step(std::vector<double>& params, std::vector<double> grad, AdamState& state,
                              double lr, double clip_norm, double beta1 = 0.9, double beta2 = 0.999,
                              double eps = 1e-8) {
    if (grad.size() != params.size()) throw std::invalid_argument("clipped_adam_step: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("clipped_adam_step: optimizer state shape mismatch");

    double norm_sq = 0.0;
    for (const double g : grad) {
        if (!std::isfinite(g)) throw std::runtime_error("clipped_adam_step: non-finite gradient entry");
        norm_sq += g * g;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > clip_norm && norm > 0.0) {
        const double scale = clip_norm / norm;
        for (double& g : grad) g *= scale;
    }

    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

struct TrainConfig {
    int num_epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    double clip_norm = 1.0;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
    std::vector<int> depth_range = {1, 2};
    std::vector<int> prototype_range = {8};
    std::size_t output_dim = 4;
    double gamma = 1.0;
    double temperature = 0.1;
    double smoothing = 0.01;
    bool finite_diff_gradient = false;  // fallback for the probability Jacobian
    int qubit_cap = quantum::kDefaultQubitCap;
};

struct TrainedModel {
    quantum::QnnModel model;  // final circuit parameters
    PrototypeBank bank;       // final prototypes
    std::vector<double> loss_history;
    std::vector<quantum::QuantumFeatures> per_epoch_features;
    int depth = 0;
    int num_prototypes = 0;
};

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> theta_grad;
    Matrix prototype_grad;
};

// Loss plus gradients for one batch with the two noise draws held fixed:
// forward through simulate -> extract -> tanh affine -> augmented prototype
// probabilities -> row KL mean, then analytic classical backprop down to the
// basis-state probabilities and the shift-rule Jacobian for d p / d theta.
inline LossAndGradient pipeline_loss_and_gradient(const Matrix& batch, const quantum::QnnModel& model,
                                                  const PrototypeBank& bank, const Matrix& noise1,
                                                  const Matrix& noise2, bool finite_diff_jacobian = false,
                                                  int qubit_cap = quantum::kDefaultQubitCap) {
    bank.validate();
    const std::size_t n = batch.rows;
    const std::size_t in_dim = model.input_dim;
    const std::size_t out_dim = model.output_dim;
    const std::size_t p_count = bank.num_prototypes();
    const std::size_t w_count = model.weight_count();

    const auto state = quantum::simulate_statevector(model.circuit, qubit_cap);
    const auto probs = quantum::probabilities(state);
    const auto weights = quantum::extract_weights_from_probabilities(probs, w_count, model.gamma);

    const Matrix z = quantum::transform_forward(batch, weights, in_dim, out_dim);
    Matrix aug1 = z;
    Matrix aug2 = z;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        aug1.data[i] += noise1.data[i];
        aug2.data[i] += noise2.data[i];
    }
    const Matrix p1 = prototype_probabilities(aug1, bank);
    const Matrix p2 = prototype_probabilities(aug2, bank);

    // Row losses and dL/dP1, dL/dP2 with the 1/n batch-mean factor folded in.
    LossAndGradient result;
    Matrix dp1(n, p_count);
    Matrix dp2(n, p_count);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        double zsum = 0.0;
        for (std::size_t i = 0; i < p_count; ++i) zsum += std::log1p(p1.at(r, i));
        double row_loss = 0.0;
        for (std::size_t i = 0; i < p_count; ++i) {
            const double q = std::log1p(p1.at(r, i)) / zsum;
            row_loss += q * std::log(q / p2.at(r, i));
        }
        result.loss += row_loss * inv_n;
        for (std::size_t i = 0; i < p_count; ++i) {
            const double q = std::log1p(p1.at(r, i)) / zsum;
            dp1.at(r, i) = (std::log(q) - std::log(p2.at(r, i)) - row_loss) /
                           (zsum * (1.0 + p1.at(r, i))) * inv_n;
            dp2.at(r, i) = -q / p2.at(r, i) * inv_n;
        }
    }

    // Backprop one view: smoothing -> softmax -> logits; accumulates into the
    // embedding gradient and the prototype gradient.
    Matrix dz(n, out_dim);
    result.prototype_grad = Matrix(p_count, out_dim);
    const double inv_t = 1.0 / bank.temperature;
    const auto backprop_view = [&](const Matrix& dprob, const Matrix& probs_v, const Matrix& aug) {
        Matrix dlogits(n, p_count);
        for (std::size_t r = 0; r < n; ++r) {
            // Through smoothing the softmax gradient scales by (1 - eps).
            double inner = 0.0;
            for (std::size_t i = 0; i < p_count; ++i) {
                const double s = (probs_v.at(r, i) - bank.smoothing / static_cast<double>(p_count)) /
                                 (1.0 - bank.smoothing);
                inner += dprob.at(r, i) * (1.0 - bank.smoothing) * s;
            }
            for (std::size_t k = 0; k < p_count; ++k) {
                const double s_k = (probs_v.at(r, k) - bank.smoothing / static_cast<double>(p_count)) /
                                   (1.0 - bank.smoothing);
                dlogits.at(r, k) = s_k * (dprob.at(r, k) * (1.0 - bank.smoothing) - inner);
            }
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t d = 0; d < out_dim; ++d) {
                double acc = 0.0;
                for (std::size_t k = 0; k < p_count; ++k)
                    acc += dlogits.at(r, k) * bank.prototypes.at(k, d);
                dz.at(r, d) += acc * inv_t;
            }
        for (std::size_t k = 0; k < p_count; ++k)
            for (std::size_t d = 0; d < out_dim; ++d) {
                double acc = 0.0;
                for (std::size_t r = 0; r < n; ++r) acc += dlogits.at(r, k) * aug.at(r, d);
                result.prototype_grad.at(k, d) += acc * inv_t;
            }
    };
    backprop_view(dp1, p1, aug1);
    backprop_view(dp2, p2, aug2);

    // tanh and the affine map back to the flat weight vector.
    std::vector<double> dw(w_count, 0.0);
    const std::size_t bias_offset = in_dim * out_dim;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < out_dim; ++j) {
            const double da = dz.at(r, j) * (1.0 - z.at(r, j) * z.at(r, j));
            for (std::size_t i = 0; i < in_dim; ++i) dw[j * in_dim + i] += da * batch.at(r, i);
            dw[bias_offset + j] += da;
        }

    // Quantum-Train mapping is affine in the probabilities: dw_i/dp_i = gamma * 2^n.
    const double map_scale = model.gamma * static_cast<double>(probs.size());
    const Matrix jac = finite_diff_jacobian
                           ? quantum::probability_jacobian_fd(model.circuit, w_count, 1e-5, qubit_cap)
                           : quantum::probability_jacobian(model.circuit, w_count, qubit_cap);
    result.theta_grad.assign(model.circuit.params.size(), 0.0);
    for (std::size_t k = 0; k < result.theta_grad.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w_count; ++i) acc += jac.at(k, i) * dw[i];
        result.theta_grad[k] = acc * map_scale;
    }
    return result;
}

// Loss only, same forward path; used by the finite-difference checks.
inline double pipeline_loss(const Matrix& batch, const quantum::QnnModel& model, const PrototypeBank& bank,
                            const Matrix& noise1, const Matrix& noise2,
                            int qubit_cap = quantum::kDefaultQubitCap) {
    const auto features = quantum::qnn_forward(batch, model, qubit_cap);
    Matrix aug1 = features.matrix;
    Matrix aug2 = features.matrix;
    for (std::size_t i = 0; i < aug1.data.size(); ++i) {
        aug1.data[i] += noise1.data[i];
        aug2.data[i] += noise2.data[i];
    }
    return batch_swav_loss(prototype_probabilities(aug1, bank), prototype_probabilities(aug2, bank));
}

// One sweep cell: trains circuit parameters and prototypes jointly with the
// double-augmentation batch loop, snapshotting evaluation-mode features after
// every epoch. Fully deterministic given (features, config, bank, depth).
inline TrainedModel train_qnn_swav(const Matrix& features, const TrainConfig& config, PrototypeBank bank,
                                   int depth) {
    if (features.rows == 0) throw std::invalid_argument("train_qnn_swav: empty feature matrix");
    if (config.batch_size == 0) throw std::invalid_argument("train_qnn_swav: batch_size must be >= 1");
    if (config.batch_size > features.rows)
        throw std::invalid_argument("train_qnn_swav: batch_size exceeds row count");
    bank.validate();
    if (bank.embedding_dim() != config.output_dim)
        throw std::invalid_argument("train_qnn_swav: bank embedding dim does not match output_dim");

    const std::uint64_t cell_seed = derive_seed(
        config.seed, "train-cell",
        (static_cast<std::uint64_t>(depth) << 32) | static_cast<std::uint64_t>(bank.num_prototypes()));

    TrainedModel out;
    out.depth = depth;
    out.num_prototypes = static_cast<int>(bank.num_prototypes());
    out.model = quantum::make_qnn_model(features.cols, config.output_dim, depth, config.gamma,
                                        config.qubit_cap);
    Rng theta_rng(derive_seed(cell_seed, "theta-init"));
    out.model.circuit.params = quantum::sample_circuit_params(theta_rng, out.model.circuit.expected_params());

    Rng noise_rng(derive_seed(cell_seed, "noise"));
    AdamState opt_state;

    const std::size_t n = features.rows;
    const std::size_t theta_count = out.model.circuit.params.size();
    const std::size_t proto_count = bank.prototypes.data.size();

    for (int epoch = 1; epoch <= config.num_epochs; ++epoch) {
        double epoch_loss = 0.0;
        int batch_index = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
            const std::size_t rows = std::min(config.batch_size, n - start);
            Matrix batch(rows, features.cols);
            std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(start * features.cols),
                        rows * features.cols, batch.data.begin());

            Matrix noise1(rows, config.output_dim);
            Matrix noise2(rows, config.output_dim);
            if (config.noise_sigma > 0.0) {
                for (auto& v : noise1.data) v = noise_rng.gaussian(0.0, config.noise_sigma);
                for (auto& v : noise2.data) v = noise_rng.gaussian(0.0, config.noise_sigma);
            }

            const auto grads = pipeline_loss_and_gradient(batch, out.model, bank, noise1, noise2,
                                                         config.finite_diff_gradient, config.qubit_cap);
            if (!std::isfinite(grads.loss))
                throw std::runtime_error("train_qnn_swav: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " + std::to_string(batch_index));
            epoch_loss += grads.loss * static_cast<double>(rows);

            std::vector<double> params(theta_count + proto_count);
            std::copy(out.model.circuit.params.begin(), out.model.circuit.params.end(), params.begin());
            std::copy(bank.prototypes.data.begin(), bank.prototypes.data.end(),
                      params.begin() + static_cast<std::ptrdiff_t>(theta_count));
            std::vector<double> grad(theta_count + proto_count);
            std::copy(grads.theta_grad.begin(), grads.theta_grad.end(), grad.begin());
            std::copy(grads.prototype_grad.data.begin(), grads.prototype_grad.data.end(),
                      grad.begin() + static_cast<std::ptrdiff_t>(theta_count));

            clipped_adam_step(params, std::move(grad), opt_state, config.learning_rate, config.clip_norm);

            std::copy_n(params.begin(), theta_count, out.model.circuit.params.begin());
            std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(theta_count), proto_count,
                        bank.prototypes.data.begin());
        }
        out.loss_history.push_back(epoch_loss / static_cast<double>(n));

        // Evaluation pass, no gradients: snapshot the epoch's features.
        auto snapshot = quantum::qnn_forward(features, out.model, config.qubit_cap);
        snapshot.provenance = quantum::Provenance{"trained", depth, epoch, config.seed};
        out.per_epoch_features.push_back(std::move(snapshot));
    }

    out.bank = std::move(bank);
    return out;
}

// Outer sweep loops: for each num_prototypes, for each quantum depth, train
// one isolated cell. Cells share no state, so they run on a bounded worker
// pool; each deterministic result lands in its own slot.
inline std::vector<TrainedModel> train_sweep(const Matrix& features, const TrainConfig& config,
                                             unsigned workers = 0) {
    std::vector<std::pair<int, int>> grid;  // (num_prototypes, depth) in sweep order
    for (const int protos : config.prototype_range)
        for (const int depth : config.depth_range) grid.emplace_back(protos, depth);

    std::vector<TrainedModel> cells(grid.size());
    parallel_for(
        grid.size(),
        [&](std::size_t i) {
            const auto [protos, depth] = grid[i];
            Rng proto_rng(derive_seed(config.seed, "proto-init",
                                      (static_cast<std::uint64_t>(depth) << 32) |
                                          static_cast<std::uint64_t>(protos)));
            auto bank = make_prototype_bank(static_cast<std::size_t>(protos), config.output_dim,
                                            config.temperature, config.smoothing, proto_rng);
            cells[i] = train_qnn_swav(features, config, std::move(bank), depth);
        },
        workers);
    return cells;
}

}  // namespace qcluster::swav
