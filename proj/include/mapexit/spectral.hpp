#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mapexit/model.hpp"

namespace mapexit {

/// State-space form of F(alpha)^{-1} for a jump-free model:
/// F(alpha)^{-1} = C (alpha I - M)^{-1} B.
///
/// The state is (y, alpha*y_U) where U are the phases with sigma > 0, so M
/// has size N + |U| and its eigenvalues are exactly the finite roots of
/// det F. This is the quadratic pencil with its infinite eigenvalues deflated.
struct Realization {
    Matrix M;
    Matrix B;  // (N + |U|) x N
    Matrix C;  // N x (N + |U|)
};

[[nodiscard]] Realization companion_realization(const MapModel& jump_free);

struct RootData {
    Complex rho;
    CVector h;  // right null vector of F_emb(rho), unit norm, first nonzero entry real positive
    CVector v;  // left null vector: v^T F_emb(rho) = 0, same normalization
    int multiplicity = 1;
    bool in_lambda = false;  // contributes an eigenvalue -rho to Lambda
    // Residue of F(alpha)^{-1} at rho on the original phases, equal to
    // h_orig * weight^T. Absent for the double root at 0 of a recurrent model.
    std::optional<CMatrix> residue;
    std::optional<CVector> weight;
};

struct Spectrum {
    MapModel original;
    MapModel embedded;
    EmbeddingMap embedding;
    Realization realization;  // of the embedded model

    std::vector<RootData> roots;  // sorted by decreasing real part, then imaginary part
    Matrix Lambda;                // first-passage generator on the original phases
    double eta = 0.0;             // max Re rho
    bool conservative = false;
    bool recurrent = false;       // no killing and k'(0) = 0
    std::optional<double> drift;  // k'(0) when conservative

    [[nodiscard]] std::size_t size() const { return embedding.original_count(); }
    [[nodiscard]] bool simple() const;
    /// Smallest |alpha - rho| over all roots.
    [[nodiscard]] double distance_to_roots(Complex alpha) const;
};

/// Finds every root of det F (through the fluid embedding when the model has
/// jumps), their null vectors and residues, Lambda and eta.
///
/// Throws RepeatedRoot for coincident roots (except the double root at 0 of a
/// recurrent model, which is recorded with multiplicity 2) and CountMismatch
/// when the number of roots feeding Lambda differs from the phase count.
[[nodiscard]] Spectrum solve_spectrum(const MapModel& model);

/// P[J(tau_x^+)] = e^{Lambda x} on the original phases.
[[nodiscard]] Matrix first_passage_matrix(const Spectrum& spectrum, double x);

}  // namespace mapexit
