#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kvn/fock.hpp"

namespace kvn {

// Kraus operators of one step. ops[designated] is the success operator K_a.
struct KrausSet {
    std::vector<Matrix> ops;
    std::size_t designated = 0;
    double shift = 0.0;  // lambda added to A before exponentiation
    double dt = 0.0;
};

inline constexpr double kPsdClip = 1e-12;

// K_a = exp(-(A + lambda I) dt) with lambda = max(0, -lambda_min(Herm A)),
// K_abar = sqrt(I - K_a^dagger K_a). Small negative eigenvalues of the
// complement (>= -1e-12) are clipped to zero; anything lower throws.
KrausSet kraus_pair(const Matrix& A, double dt);

// Splits the complement of K_a into n - 1 operators over disjoint groups of
// its eigenvectors, keeping sum K^dagger K = I exactly in exact arithmetic.
KrausSet kraus_split(const KrausSet& pair, std::size_t n);

// Largest |eigenvalue| of sum K^dagger K - I.
double completeness_error(const std::vector<Matrix>& ops);

inline constexpr double kCompletenessTol = 1e-10;

// Binary-tree dilation of a Kraus set. Node keys are the outcome bitstrings
// leading to the node ("" is the root); each node holds a 2d x 2d unitary
// acting on (ancilla qubit) x (system), ancilla index most significant.
// Leaves are bitstrings of length `depth`; bits read as a binary number give
// the Kraus index, so the all-zeros path is K_a. Indices past the Kraus count
// are padding and carry zero operators.
struct ChannelTree {
    std::size_t dim = 0;
    std::size_t n_kraus = 0;
    int depth = 0;
    std::map<std::string, Matrix> nodes;
    std::map<std::string, std::optional<std::size_t>> leaves;

    // <b|U|0> for the node at `prefix`.
    Matrix block(const std::string& prefix, int outcome) const;
    // B_depth ... B_1 along the path.
    Matrix path_product(const std::string& bits) const;
};

// Throws ChannelError when the set is not complete to kCompletenessTol.
ChannelTree compile_tree(const KrausSet& kraus);

struct ChannelCheck {
    double trace_error = 0.0;        // |Tr sum K rho K^dagger - Tr rho|, worst probe
    double tree_trace_error = 0.0;   // same for the tree leaves
    double path_error = 0.0;         // max ||path product - K_b||_F
    double p_a_error = 0.0;          // |P(all zeros) - Tr K_a^dagger K_a rho|
    double min_probability = 0.0;    // smallest leaf probability over probes
    double state_error = 0.0;        // ||rho_tree - rho_ref||_F of post-selected states
    double unitarity_error = 0.0;    // max ||U^dagger U - I||_F over nodes
    std::vector<std::string> failures;

    bool ok() const { return failures.empty(); }
};

// Probes: the maximally mixed state, basis states and random density
// matrices drawn from `seed`.
std::vector<Matrix> probe_states(std::size_t dim, std::size_t n_random, std::uint64_t seed);

ChannelCheck verify_channel(const ChannelTree& tree, const KrausSet& kraus,
                            const std::vector<Matrix>& probes, double tol = 1e-9);

// Writes U_<bits>.bin (row-major little-endian float64, re/im interleaved),
// U_<bits>_abs.csv and manifest.json into `dir`. The root file is U_root.
void export_tree(const ChannelTree& tree, const std::filesystem::path& dir);
Matrix read_unitary_bin(const std::filesystem::path& file, std::size_t dim);

} // namespace kvn
