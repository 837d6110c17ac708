#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mapexit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// One exponential component of a hyperexponential jump law.
struct JumpComponent {
    double weight = 1.0;  // mixing probability
    double rate = 1.0;    // exponential rate (1/space)
};

/// Downward jump magnitude distributed as a finite mixture of exponentials.
struct JumpLaw {
    std::vector<JumpComponent> components;

    /// E e^{-alpha U} for the magnitude U >= 0, i.e. sum p mu / (mu + alpha).
    [[nodiscard]] Complex transform(Complex alpha) const;
    [[nodiscard]] Complex transform_deriv(Complex alpha) const;
    [[nodiscard]] double mean() const;
    [[nodiscard]] double min_rate() const;
};

/// Poisson stream of downward jumps active while the phase is occupied.
struct JumpStream {
    double intensity = 0.0;  // 1/time
    JumpLaw law;
};

struct Phase {
    double drift = 0.0;  // space/time
    double sigma = 0.0;  // space/sqrt(time)
    std::vector<JumpStream> jumps;
    // Set only by embed_fluid: a unit-slope descending stretch standing in for a jump.
    bool auxiliary = false;
};

/// Spectrally negative Markov additive process with hyperexponential jumps.
///
/// Q may have a row defect (state-dependent killing); `kill_rate` is a
/// uniform killing rate on top of it.
struct MapModel {
    Matrix Q;
    double kill_rate = 0.0;
    std::vector<Phase> phases;
    // Jump applied on an i -> j switch (i != j); absent means no jump.
    std::map<std::pair<std::size_t, std::size_t>, JumpLaw> transition_jumps;

    [[nodiscard]] std::size_t size() const { return phases.size(); }
    [[nodiscard]] bool has_jumps() const;
    /// No killing at all: kill_rate == 0 and every Q row sums to zero.
    [[nodiscard]] bool conservative(double tol = 1e-12) const;
};

struct Violation {
    std::string field;
    std::string rule;
};

/// Checks every structural invariant; empty result means the model is valid.
[[nodiscard]] std::vector<Violation> validate(const MapModel& model);

/// Throws ValidationError listing all violations, if any.
void require_valid(const MapModel& model);

/// Matrix exponent F(alpha) = diag(psi_i(alpha)) + Q o G(alpha) - q I.
[[nodiscard]] CMatrix matrix_exponent(const MapModel& model, Complex alpha);
[[nodiscard]] Matrix matrix_exponent(const MapModel& model, double alpha);

/// Entrywise derivative dF/dalpha.
[[nodiscard]] CMatrix matrix_exponent_deriv(const MapModel& model, Complex alpha);
[[nodiscard]] Matrix matrix_exponent_deriv(const MapModel& model, double alpha);

/// Dominant (Perron) eigenvalue k(alpha) of the real matrix F(alpha), alpha >= 0.
[[nodiscard]] double perron_root(const MapModel& model, double alpha);

/// Stationary row vector of a conservative irreducible generator.
[[nodiscard]] Vector stationary_distribution(const Matrix& Q);

/// k'(0) = pi F'(0) 1. Requires a model without killing.
[[nodiscard]] double asymptotic_drift(const MapModel& model);

/// Copy of the model with the uniform killing rate increased by q >= 0.
[[nodiscard]] MapModel with_killing(const MapModel& model, double q);

/// Where each phase of an embedded model comes from.
struct AuxDescriptor {
    enum class Source { Stream, Transition };
    Source source = Source::Stream;
    std::size_t from = 0;       // phase owning the stream, or i of the i -> j switch
    std::size_t to = 0;         // phase re-entered when the stretch ends
    std::size_t stream = 0;     // stream index (Stream source only)
    std::size_t component = 0;  // mixture component
};

struct EmbeddingMap {
    std::vector<std::size_t> original_indices;  // position of original phase i in the embedded model
    std::vector<std::size_t> aux_indices;
    std::vector<AuxDescriptor> aux_descriptors;  // parallel to aux_indices

    [[nodiscard]] std::size_t original_count() const { return original_indices.size(); }
    [[nodiscard]] std::size_t embedded_count() const { return original_indices.size() + aux_indices.size(); }
    [[nodiscard]] bool is_identity() const { return aux_indices.empty(); }
};

/// Replaces every hyperexponential jump by a descending unit-slope stretch in
/// an auxiliary phase. Original phases keep indices 0..N-1; killing is moved
/// into the Q row defect of the original phases.
[[nodiscard]] std::pair<MapModel, EmbeddingMap> embed_fluid(const MapModel& model);

}  // namespace mapexit
