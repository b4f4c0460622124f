#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcluster/matrix.hpp"
#include "qcluster/rng.hpp"

namespace qcluster::quantum {

inline constexpr int kDefaultQubitCap = 12;

// Hardware-efficient ansatz: per layer, one R_y rotation per qubit followed by
// a nearest-neighbour CNOT chain. Parameter count is n_qubits * depth; params
// are ordered layer-major (layer 0 qubit 0, layer 0 qubit 1, ...).
struct CircuitSpec {
    int n_qubits = 1;
    int depth = 1;
    std::vector<double> params;

    std::size_t expected_params() const {
        return static_cast<std::size_t>(n_qubits) * static_cast<std::size_t>(depth);
    }

    void validate() const {
        if (n_qubits < 1) throw std::invalid_argument("CircuitSpec: n_qubits must be >= 1");
        if (depth < 1) throw std::invalid_argument("CircuitSpec: depth must be >= 1");
        if (params.size() != expected_params())
            throw std::invalid_argument("CircuitSpec: expected " + std::to_string(expected_params()) +
                                        " params, got " + std::to_string(params.size()));
    }
};

using Amplitude = std::complex<double>;

// Basis-state convention: qubit 0 is the most significant bit of the state
// index, so |q0 q1> = |10> is amplitude index 2 on two qubits.
struct StateVector {
    int n_qubits = 0;
    std::vector<Amplitude> amplitudes;

    double norm() const {
        double s = 0.0;
        for (const auto& a : amplitudes) s += std::norm(a);
        return std::sqrt(s);
    }
};

class ResourceLimitError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void apply_ry(std::vector<Amplitude>& amps, int n_qubits, int qubit, double theta) {
    const double c = std::cos(theta / 2.0);
    const double s = std::sin(theta / 2.0);
    const std::size_t stride = std::size_t{1} << (n_qubits - 1 - qubit);
    for (std::size_t base = 0; base < amps.size(); base += 2 * stride)
        for (std::size_t i = base; i < base + stride; ++i) {
            const Amplitude a0 = amps[i];
            const Amplitude a1 = amps[i + stride];
            amps[i] = c * a0 - s * a1;
            amps[i + stride] = s * a0 + c * a1;
        }
}

inline void apply_cnot(std::vector<Amplitude>& amps, int n_qubits, int control, int target) {
    const std::size_t cbit = std::size_t{1} << (n_qubits - 1 - control);
    const std::size_t tbit = std::size_t{1} << (n_qubits - 1 - target);
    for (std::size_t i = 0; i < amps.size(); ++i)
        if ((i & cbit) && !(i & tbit)) std::swap(amps[i], amps[i | tbit]);
}

}  // namespace detail

// Dense statevector simulation from |0...0>, renormalized at the end to keep
// accumulated rounding out of downstream probabilities.
inline StateVector simulate_statevector(const CircuitSpec& spec, int qubit_cap = kDefaultQubitCap) {
    spec.validate();
    if (spec.n_qubits > qubit_cap)
        throw ResourceLimitError("simulate_statevector: " + std::to_string(spec.n_qubits) +
                                 " qubits exceeds simulator cap of " + std::to_string(qubit_cap));

    StateVector state;
    state.n_qubits = spec.n_qubits;
    state.amplitudes.assign(std::size_t{1} << spec.n_qubits, Amplitude{0.0, 0.0});
    state.amplitudes[0] = Amplitude{1.0, 0.0};

    for (int layer = 0; layer < spec.depth; ++layer) {
        for (int q = 0; q < spec.n_qubits; ++q)
            detail::apply_ry(state.amplitudes, spec.n_qubits, q,
                             spec.params[static_cast<std::size_t>(layer) * spec.n_qubits + q]);
        for (int q = 0; q + 1 < spec.n_qubits; ++q)
            detail::apply_cnot(state.amplitudes, spec.n_qubits, q, q + 1);
    }

    const double norm = state.norm();
    if (norm > 0.0)
        for (auto& a : state.amplitudes) a /= norm;
    return state;
}

inline std::vector<double> probabilities(const StateVector& state) {
    std::vector<double> p;
    p.reserve(state.amplitudes.size());
    for (const auto& a : state.amplitudes) p.push_back(std::norm(a));
    return p;
}

// Quantum-Train mapping: w_i = gamma * (p_i * 2^n - 1) over the first `count`
// basis states. Centered so the uniform superposition yields the zero vector.
inline std::vector<double> extract_weights(const StateVector& state, std::size_t count, double gamma) {
    const std::size_t dim = state.amplitudes.size();
    if (count > dim)
        throw std::invalid_argument("extract_weights: requested " + std::to_string(count) +
                                    " weights from " + std::to_string(dim) + " amplitudes");
    std::vector<double> w;
    w.reserve(count);
    const double scale = static_cast<double>(dim);
    for (std::size_t i = 0; i < count; ++i)
        w.push_back(gamma * (std::norm(state.amplitudes[i]) * scale - 1.0));
    return w;
}

inline std::vector<double> extract_weights_from_probabilities(std::span<const double> p,
                                                              std::size_t count, double gamma) {
    if (count > p.size()) throw std::invalid_argument("extract_weights: count exceeds probability count");
    std::vector<double> w;
    w.reserve(count);
    const double scale = static_cast<double>(p.size());
    for (std::size_t i = 0; i < count; ++i) w.push_back(gamma * (p[i] * scale - 1.0));
    return w;
}

struct Provenance {
    std::string strategy;  // "random" | "trained"
    int depth = 0;
    int epoch = -1;  // epoch for trained snapshots, Monte-Carlo run index for random
    std::uint64_t seed = 0;
};

struct QuantumFeatures {
    Matrix matrix;
    Provenance provenance;
};

// Circuit + amplitude-to-weight mapping + single linear layer with tanh.
// The circuit sees no data; it only generates the transform's parameters.
struct QnnModel {
    CircuitSpec circuit;
    double gamma = 1.0;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;

    std::size_t weight_count() const { return input_dim * output_dim + output_dim; }
};

// Chooses the smallest qubit count with 2^n >= weight count. Parameters start
// at zero; callers seed them (random draw or training init).
inline QnnModel make_qnn_model(std::size_t input_dim, std::size_t output_dim, int depth,
                               double gamma = 1.0, int qubit_cap = kDefaultQubitCap) {
    if (input_dim == 0 || output_dim == 0)
        throw std::invalid_argument("make_qnn_model: dimensions must be positive");
    QnnModel model;
    model.input_dim = input_dim;
    model.output_dim = output_dim;
    model.gamma = gamma;
    const std::size_t needed = model.weight_count();
    int n_qubits = 1;
    while ((std::size_t{1} << n_qubits) < needed) {
        ++n_qubits;
        if (n_qubits > qubit_cap)
            throw ResourceLimitError("make_qnn_model: " + std::to_string(needed) +
                                     " weights need more than 2^" + std::to_string(qubit_cap) +
                                     " amplitudes");
    }
    model.circuit.n_qubits = n_qubits;
    model.circuit.depth = depth;
    model.circuit.params.assign(model.circuit.expected_params(), 0.0);
    return model;
}

// tanh(X W^T + b) given the flat weight vector [W row-major | b].
inline Matrix transform_forward(const Matrix& features, std::span<const double> weights,
                                std::size_t input_dim, std::size_t output_dim) {
    if (features.cols != input_dim)
        throw std::invalid_argument("transform_forward: feature column count does not match input_dim");
    if (weights.size() != input_dim * output_dim + output_dim)
        throw std::invalid_argument("transform_forward: weight count does not match transform shape");
    Matrix out(features.rows, output_dim);
    const std::size_t bias_offset = input_dim * output_dim;
    for (std::size_t r = 0; r < features.rows; ++r)
        for (std::size_t j = 0; j < output_dim; ++j) {
            double a = weights[bias_offset + j];
            for (std::size_t i = 0; i < input_dim; ++i)
                a += features.at(r, i) * weights[j * input_dim + i];
            out.at(r, j) = std::tanh(a);
        }
    return out;
}

// One statevector simulation per forward pass; weights reshape into the
// transform's linear map and bias.
inline QuantumFeatures qnn_forward(const Matrix& features, const QnnModel& model,
                                   int qubit_cap = kDefaultQubitCap) {
    const auto state = simulate_statevector(model.circuit, qubit_cap);
    const auto weights = extract_weights(state, model.weight_count(), model.gamma);
    QuantumFeatures out;
    out.matrix = transform_forward(features, weights, model.input_dim, model.output_dim);
    out.provenance = Provenance{"trained", model.circuit.depth, -1, 0};
    return out;
}

inline std::vector<double> sample_circuit_params(Rng& rng, std::size_t count) {
    std::vector<double> theta;
    theta.reserve(count);
    for (std::size_t i = 0; i < count; ++i) theta.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    return theta;
}

// Monte-Carlo random feature extraction: one untrained circuit per run, theta
// drawn uniformly from [0, 2pi) off a single seeded stream.
inline std::vector<QuantumFeatures> random_quantum_features(const Matrix& features, int depth,
                                                            std::size_t output_dim, int runs,
                                                            std::uint64_t seed, double gamma = 1.0,
                                                            int qubit_cap = kDefaultQubitCap) {
    if (runs < 1) throw std::invalid_argument("random_quantum_features: runs must be >= 1");
    Rng rng(derive_seed(seed, "qf-theta"));
    std::vector<QuantumFeatures> out;
    out.reserve(static_cast<std::size_t>(runs));
    for (int run = 0; run < runs; ++run) {
        QnnModel model = make_qnn_model(features.cols, output_dim, depth, gamma, qubit_cap);
        model.circuit.params = sample_circuit_params(rng, model.circuit.expected_params());
        auto qf = qnn_forward(features, model, qubit_cap);
        qf.provenance = Provenance{"random", depth, run, seed};
        out.push_back(std::move(qf));
    }
    return out;
}

// Whole-loss parameter-shift rule. Exact when the loss is linear in the
// circuit's measurement probabilities (each theta appears in a single R_y);
// training chains the shift rule through probability_jacobian instead, where
// exactness holds for arbitrary classical post-processing.
inline std::vector<double> qnn_gradient(const QnnModel& model,
                                        const std::function<double(const std::vector<double>&)>& loss_at) {
    const auto& theta = model.circuit.params;
    std::vector<double> grad(theta.size(), 0.0);
    std::vector<double> shifted = theta;
    constexpr double half_pi = std::numbers::pi / 2.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        shifted[k] = theta[k] + half_pi;
        const double up = loss_at(shifted);
        shifted[k] = theta[k] - half_pi;
        const double down = loss_at(shifted);
        shifted[k] = theta[k];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("qnn_gradient: non-finite loss at shifted parameter " +
                                     std::to_string(k));
        grad[k] = (up - down) / 2.0;
    }
    return grad;
}

// J[k][i] = d p_i / d theta_k by the parameter-shift rule (exact for this
// ansatz). Truncated to the first `count` basis states.
inline Matrix probability_jacobian(const CircuitSpec& spec, std::size_t count,
                                   int qubit_cap = kDefaultQubitCap) {
    Matrix jac(spec.params.size(), count);
    CircuitSpec shifted = spec;
    constexpr double half_pi = std::numbers::pi / 2.0;
    for (std::size_t k = 0; k < spec.params.size(); ++k) {
        shifted.params[k] = spec.params[k] + half_pi;
        const auto p_up = probabilities(simulate_statevector(shifted, qubit_cap));
        shifted.params[k] = spec.params[k] - half_pi;
        const auto p_down = probabilities(simulate_statevector(shifted, qubit_cap));
        shifted.params[k] = spec.params[k];
        for (std::size_t i = 0; i < count; ++i) jac.at(k, i) = (p_up[i] - p_down[i]) / 2.0;
    }
    return jac;
}

// Central finite-difference fallback for the probability Jacobian.
inline Matrix probability_jacobian_fd(const CircuitSpec& spec, std::size_t count, double h = 1e-5,
                                      int qubit_cap = kDefaultQubitCap) {
    Matrix jac(spec.params.size(), count);
    CircuitSpec shifted = spec;
    for (std::size_t k = 0; k < spec.params.size(); ++k) {
        shifted.params[k] = spec.params[k] + h;
        const auto p_up = probabilities(simulate_statevector(shifted, qubit_cap));
        shifted.params[k] = spec.params[k] - h;
        const auto p_down = probabilities(simulate_statevector(shifted, qubit_cap));
        shifted.params[k] = spec.params[k];
        for (std::size_t i = 0; i < count; ++i) jac.at(k, i) = (p_up[i] - p_down[i]) / (2.0 * h);
    }
    return jac;
}

}  // namespace qcluster::quantum
