#include "kvn/fock.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvn/error.hpp"

namespace kvn {

SparseMatrix FockSpace::identity() const {
    SparseMatrix id(static_cast<Eigen::Index>(total_dim), static_cast<Eigen::Index>(total_dim));
    id.setIdentity();
    return id;
}

Matrix single_mode_annihilator(int levels) {
    if (levels < 1) throw ContractError("annihilator: levels must be >= 1");
    Matrix a = Matrix::Zero(levels, levels);
    for (int n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

FockSpace build_fock(int n_modes, int levels, std::size_t dim_cap) {
    if (n_modes < 1) throw ContractError("fock space: need at least one mode");
    if (levels < 2) throw ContractError("fock space: need at least two levels per mode");
    std::size_t dim = 1;
    for (int m = 0; m < n_modes; ++m) {
        dim *= static_cast<std::size_t>(levels);
        if (dim > dim_cap) {
            throw ContractError("fock space: dimension " + std::to_string(levels) + "^" +
                                std::to_string(n_modes) + " exceeds cap " +
                                std::to_string(dim_cap));
        }
    }
    FockSpace fs;
    fs.n_modes = n_modes;
    fs.levels = levels;
    fs.total_dim = dim;
    const auto D = static_cast<Eigen::Index>(dim);
    for (int m = 0; m < n_modes; ++m) {
        std::size_t stride = 1;
        for (int k = m + 1; k < n_modes; ++k) stride *= static_cast<std::size_t>(levels);
        std::vector<Eigen::Triplet<Complex>> trip;
        for (std::size_t col = 0; col < dim; ++col) {
            const int n = static_cast<int>((col / stride) % static_cast<std::size_t>(levels));
            if (n == 0) continue;
            trip.emplace_back(static_cast<Eigen::Index>(col - stride),
                              static_cast<Eigen::Index>(col),
                              Complex(std::sqrt(static_cast<double>(n)), 0.0));
        }
        SparseMatrix a(D, D);
        a.setFromTriplets(trip.begin(), trip.end());
        fs.annihilators.push_back(std::move(a));
    }
    return fs;
}

SiteMap SiteMap::identity(std::size_t sites, int n_fields) {
    SiteMap map;
    int next = 0;
    for (int f = 0; f < n_fields; ++f) {
        std::vector<int> row(sites);
        for (auto& r : row) r = next++;
        map.mode.push_back(std::move(row));
    }
    return map;
}

int SiteMap::operator()(int field, std::size_t site) const {
    if (field < 0 || static_cast<std::size_t>(field) >= mode.size()) return -1;
    const auto& row = mode[static_cast<std::size_t>(field)];
    return site < row.size() ? row[site] : -1;
}

GeneratorMatrix assemble_generator(const FockSpace& space, const RhsSpec& spec,
                                   const SiteMap& site_map) {
    validate(spec);
    const auto D = static_cast<Eigen::Index>(space.total_dim);
    auto mode_of = [&](int field, std::size_t site) {
        const int m = site_map(field, site);
        if (m >= space.n_modes) throw ContractError("generator: site map points past the last mode");
        return m;
    };

    SparseMatrix A(D, D);
    std::size_t terms = 0;
    for (const auto& st : spec.sites) {
        const int out = mode_of(st.out_field, st.site);
        if (out < 0) continue;
        const SparseMatrix ad = SparseMatrix(space.a(out).adjoint());
        for (const auto& mono : st.monomials) {
            Complex c = mono.coeff;
            SparseMatrix prod = space.identity();
            for (const auto& f : mono.factors) {
                const Neighbor nb = neighbor(spec.grid, st.site, f.dx, f.dy);
                if (!nb.inside) {
                    c *= nb.value;
                    continue;
                }
                const int m = mode_of(f.field, nb.index);
                if (m < 0) {
                    throw ContractError("generator: factor at site " + std::to_string(nb.index) +
                                        " has no mode");
                }
                prod = SparseMatrix(prod * space.a(m));
            }
            if (c == Complex{}) continue;
            A += c * SparseMatrix(ad * prod);
            ++terms;
        }
    }
    GeneratorMatrix g;
    g.A = Matrix(A);
    g.provenance = spec.name + ": " + std::to_string(terms) + " normal-ordered terms on " +
                   std::to_string(space.n_modes) + " modes x " + std::to_string(space.levels) +
                   " levels";
    return g;
}

Matrix expm(const Matrix& A) {
    if (A.rows() != A.cols()) throw ContractError("expm: matrix must be square");
    const Eigen::Index n = A.rows();
    if (n == 0) return A;
    if (!A.allFinite()) throw DivergenceError("expm: non-finite input", 0);
    static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                   1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                   670442572800.0,      33522128640.0,       1323241920.0,
                                   40840800.0,          960960.0,            16380.0,
                                   182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;
    const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    const Matrix X = A / std::ldexp(1.0, s);
    const Matrix I = Matrix::Identity(n, n);
    const Matrix X2 = X * X;
    const Matrix X4 = X2 * X2;
    const Matrix X6 = X4 * X2;
    const Matrix U = X * (X6 * (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 +
                          b[3] * X2 + b[1] * I);
    const Matrix V =
        X6 * (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * I;
    Matrix R = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < s; ++k) R = R * R;
    return R;
}

Vector expm_apply(const Matrix& M, const Vector& v, double t) {
    if (M.rows() != M.cols() || M.cols() != v.size()) {
        throw ContractError("expm_apply: dimension mismatch");
    }
    const double norm = M.cwiseAbs().colwise().sum().maxCoeff() * std::abs(t);
    const int steps = std::max(1, static_cast<int>(std::ceil(norm / 0.5)));
    const double h = t / steps;
    Vector out = v;
    for (int s = 0; s < steps; ++s) {
        Vector term = out;
        Vector sum = out;
        for (int k = 1; k < 60; ++k) {
            term = (M * term) * (h / k);
            sum += term;
            if (term.norm() <= 1e-17 * sum.norm()) break;
        }
        out = sum;
    }
    return out;
}

Vector coherent_state(const FockSpace& space, std::span<const Complex> z) {
    if (static_cast<int>(z.size()) != space.n_modes) {
        throw ContractError("coherent state: need one amplitude per mode");
    }
    Vector psi = Vector::Ones(1);
    for (int m = 0; m < space.n_modes; ++m) {
        Vector c(space.levels);
        Complex zn{1.0, 0.0};
        double fact = 1.0;
        for (int n = 0; n < space.levels; ++n) {
            if (n > 0) {
                zn *= z[static_cast<std::size_t>(m)];
                fact *= n;
            }
            c(n) = zn / std::sqrt(fact);
        }
        Vector next(psi.size() * c.size());
        for (Eigen::Index i = 0; i < psi.size(); ++i) {
            next.segment(i * c.size(), c.size()) = psi(i) * c;
        }
        psi = std::move(next);
    }
    return psi / psi.norm();
}

Complex expectation(const Vector& psi, const Matrix& op) {
    return psi.dot(op * psi) / psi.squaredNorm();
}

Complex expectation(const Vector& psi, const SparseMatrix& op) {
    return psi.dot(op * psi) / psi.squaredNorm();
}

ModeMoments mode_moments(const FockSpace& space, const Vector& psi) {
    if (psi.size() != static_cast<Eigen::Index>(space.total_dim)) {
        throw ContractError("mode moments: state dimension mismatch");
    }
    ModeMoments mm;
    const double nrm = psi.squaredNorm();
    for (int m = 0; m < space.n_modes; ++m) {
        const Vector ap = space.a(m) * psi;
        const Complex mean = psi.dot(ap) / nrm;
        const double number = ap.squaredNorm() / nrm;
        mm.mean.push_back(mean);
        mm.variance.push_back(number - std::norm(mean));
    }
    return mm;
}

ModeMoments evolve_coherent_moments(const FockSpace& space, const Matrix& M,
                                    std::span<const Complex> z, double dt) {
    return mode_moments(space, expm_apply(M, coherent_state(space, z), dt));
}

} // namespace kvn
