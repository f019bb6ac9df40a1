#include "kvn/channel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

#include "kvn/csv.hpp"
#include "kvn/error.hpp"

namespace kvn {

namespace {

Matrix hermitian_part(const Matrix& A) { return 0.5 * (A + A.adjoint()); }

// V diag(sqrt(lambda)) V^dagger restricted to the columns in [begin, end).
Matrix sqrt_block(const Eigen::SelfAdjointEigenSolver<Matrix>& es, Eigen::Index begin,
                  Eigen::Index end) {
    const Eigen::Index n = end - begin;
    const Matrix V = es.eigenvectors().middleCols(begin, n);
    Eigen::VectorXd s = es.eigenvalues().segment(begin, n).cwiseMax(0.0).cwiseSqrt();
    return V * s.asDiagonal() * V.adjoint();
}

Eigen::SelfAdjointEigenSolver<Matrix> clipped_eig(const Matrix& R, const char* who) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(R));
    if (es.info() != Eigen::Success) throw ChannelError(std::string(who) + ": eigensolver failed");
    const double lo = es.eigenvalues().minCoeff();
    if (lo < -kPsdClip) {
        throw ChannelError(std::string(who) + ": complement has eigenvalue " +
                           csv::num(lo) + " below -1e-12");
    }
    return es;
}

int ceil_log2(std::size_t n) {
    int d = 0;
    while ((std::size_t{1} << d) < n) ++d;
    return d;
}

std::string bits_of(std::size_t value, int width) {
    std::string s(static_cast<std::size_t>(width), '0');
    for (int k = 0; k < width; ++k) {
        if ((value >> (width - 1 - k)) & 1U) s[static_cast<std::size_t>(k)] = '1';
    }
    return s;
}

// Thin QR with a nonnegative real diagonal in R.
void thin_qr(const Matrix& W, Matrix& Q, Matrix& R) {
    const Eigen::Index d = W.cols();
    Eigen::HouseholderQR<Matrix> qr(W);
    Q = qr.householderQ() * Matrix::Identity(W.rows(), d);
    R = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j) {
        const Complex r = R(j, j);
        const double mag = std::abs(r);
        if (mag == 0.0) continue;
        const Complex phase = r / mag;
        R.row(j) *= std::conj(phase);
        Q.col(j) *= phase;
    }
}

// Unitary whose left half is the 2d x d isometry C.
Matrix complete_unitary(const Matrix& C) {
    const Eigen::Index d = C.cols();
    Eigen::HouseholderQR<Matrix> qr(C);
    const Matrix full = qr.householderQ();
    Matrix U(2 * d, 2 * d);
    U.leftCols(d) = C;
    U.rightCols(d) = full.rightCols(d);
    return U;
}

void build_node(ChannelTree& tree, const std::string& prefix, const Matrix& W) {
    const Eigen::Index d = static_cast<Eigen::Index>(tree.dim);
    const Eigen::Index half = W.rows() / 2;
    Matrix C(2 * d, d);
    if (half == d) {
        C = W;
        tree.nodes[prefix] = complete_unitary(C);
        return;
    }
    Matrix Q0, R0, Q1, R1;
    thin_qr(W.topRows(half), Q0, R0);
    thin_qr(W.bottomRows(half), Q1, R1);
    C.topRows(d) = R0;
    C.bottomRows(d) = R1;
    tree.nodes[prefix] = complete_unitary(C);
    build_node(tree, prefix + "0", Q0);
    build_node(tree, prefix + "1", Q1);
}

} // namespace

KrausSet kraus_pair(const Matrix& A, double dt) {
    if (A.rows() != A.cols() || A.rows() == 0) {
        throw ContractError("kraus pair: generator must be square and nonempty");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("kraus pair: dt must be > 0");
    if (!A.allFinite()) throw ContractError("kraus pair: generator has non-finite entries");
    const Eigen::Index d = A.rows();

    Eigen::SelfAdjointEigenSolver<Matrix> herm(hermitian_part(A), Eigen::EigenvaluesOnly);
    const double lambda = std::max(0.0, -herm.eigenvalues().minCoeff());

    KrausSet ks;
    ks.shift = lambda;
    ks.dt = dt;
    const Matrix Ka = expm(-(A + lambda * Matrix::Identity(d, d)) * dt);
    const Matrix R = Matrix::Identity(d, d) - Ka.adjoint() * Ka;
    const auto es = clipped_eig(R, "kraus pair");
    ks.ops.push_back(Ka);
    ks.ops.push_back(sqrt_block(es, 0, d));
    return ks;
}

KrausSet kraus_split(const KrausSet& pair, std::size_t n) {
    if (pair.ops.empty()) throw ContractError("kraus split: empty set");
    if (n < 2) throw ContractError("kraus split: need at least two operators");
    const Matrix& Ka = pair.ops.at(pair.designated);
    const Eigen::Index d = Ka.rows();
    if (n - 1 > static_cast<std::size_t>(d)) {
        throw ContractError("kraus split: more complement operators than dimensions");
    }
    const Matrix R = Matrix::Identity(d, d) - Ka.adjoint() * Ka;
    const auto es = clipped_eig(R, "kraus split");

    KrausSet out;
    out.shift = pair.shift;
    out.dt = pair.dt;
    out.ops.push_back(Ka);
    const auto groups = static_cast<Eigen::Index>(n - 1);
    // Eigenvalues come out ascending; deal the largest ones out first.
    for (Eigen::Index g = 0; g < groups; ++g) {
        const Eigen::Index hi = d - (g * d) / groups;
        const Eigen::Index lo = d - ((g + 1) * d) / groups;
        out.ops.push_back(sqrt_block(es, lo, hi));
    }
    return out;
}

double completeness_error(const std::vector<Matrix>& ops) {
    if (ops.empty()) throw ContractError("completeness: empty set");
    const Eigen::Index d = ops.front().cols();
    Matrix S = -Matrix::Identity(d, d);
    for (const auto& K : ops) {
        if (K.rows() != d || K.cols() != d) throw ContractError("completeness: shape mismatch");
        S += K.adjoint() * K;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(S), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix ChannelTree::block(const std::string& prefix, int outcome) const {
    const auto it = nodes.find(prefix);
    if (it == nodes.end()) throw ContractError("channel tree: no node '" + prefix + "'");
    const auto d = static_cast<Eigen::Index>(dim);
    return outcome == 0 ? Matrix(it->second.topLeftCorner(d, d))
                        : Matrix(it->second.bottomLeftCorner(d, d));
}

Matrix ChannelTree::path_product(const std::string& bits) const {
    if (static_cast<int>(bits.size()) != depth) {
        throw ContractError("channel tree: path length must equal depth");
    }
    const auto d = static_cast<Eigen::Index>(dim);
    Matrix P = Matrix::Identity(d, d);
    for (std::size_t l = 0; l < bits.size(); ++l) {
        if (bits[l] != '0' && bits[l] != '1') throw ContractError("channel tree: bad bit");
        P = block(bits.substr(0, l), bits[l] - '0') * P;
    }
    return P;
}

ChannelTree compile_tree(const KrausSet& kraus) {
    const auto& ops = kraus.ops;
    if (ops.size() < 2) throw ContractError("compile: need at least two Kraus operators");
    if (kraus.designated != 0) {
        throw ContractError("compile: the designated operator must come first");
    }
    const Eigen::Index d = ops.front().rows();
    for (const auto& K : ops) {
        if (K.rows() != d || K.cols() != d) throw ContractError("compile: shape mismatch");
        if (!K.allFinite()) throw ChannelError("compile: non-finite Kraus entry");
    }
    const double err = completeness_error(ops);
    if (!(err <= kCompletenessTol)) {
        throw ChannelError("compile: Kraus set is not complete (error " + csv::num(err) + ")");
    }

    ChannelTree tree;
    tree.dim = static_cast<std::size_t>(d);
    tree.n_kraus = ops.size();
    tree.depth = ceil_log2(ops.size());
    const std::size_t padded = std::size_t{1} << tree.depth;

    Matrix W = Matrix::Zero(static_cast<Eigen::Index>(padded) * d, d);
    for (std::size_t b = 0; b < ops.size(); ++b) {
        W.middleRows(static_cast<Eigen::Index>(b) * d, d) = ops[b];
    }
    build_node(tree, "", W);
    for (std::size_t b = 0; b < padded; ++b) {
        tree.leaves[bits_of(b, tree.depth)] =
            b < ops.size() ? std::optional<std::size_t>(b) : std::nullopt;
    }
    return tree;
}

std::vector<Matrix> probe_states(std::size_t dim, std::size_t n_random, std::uint64_t seed) {
    const auto d = static_cast<Eigen::Index>(dim);
    std::vector<Matrix> probes;
    probes.push_back(Matrix::Identity(d, d) / static_cast<double>(dim));
    Matrix e0 = Matrix::Zero(d, d);
    e0(0, 0) = 1.0;
    probes.push_back(e0);
    Matrix e1 = Matrix::Zero(d, d);
    e1(d - 1, d - 1) = 1.0;
    probes.push_back(e1);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t k = 0; k < n_random; ++k) {
        Matrix G(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) G(i, j) = Complex(g(rng), g(rng));
        }
        Matrix rho = G * G.adjoint();
        probes.push_back(rho / rho.trace().real());
    }
    return probes;
}

ChannelCheck verify_channel(const ChannelTree& tree, const KrausSet& kraus,
                            const std::vector<Matrix>& probes, double tol) {
    ChannelCheck chk;
    const auto d = static_cast<Eigen::Index>(tree.dim);
    const Matrix I = Matrix::Identity(d, d);
    const Matrix I2 = Matrix::Identity(2 * d, 2 * d);
    for (const auto& [key, U] : tree.nodes) {
        chk.unitarity_error = std::max(chk.unitarity_error, (U.adjoint() * U - I2).norm());
    }

    std::vector<Matrix> paths;
    for (const auto& [bits, idx] : tree.leaves) {
        paths.push_back(tree.path_product(bits));
        const double e = idx ? (paths.back() - kraus.ops.at(*idx)).norm() : paths.back().norm();
        chk.path_error = std::max(chk.path_error, e);
    }
    const Matrix& Ka = kraus.ops.at(kraus.designated);
    const Matrix Ea = Ka.adjoint() * Ka;

    chk.min_probability = 1.0;
    for (const auto& rho : probes) {
        if (rho.rows() != d) throw ContractError("verify: probe dimension mismatch");
        const double tr = rho.trace().real();
        Matrix out = Matrix::Zero(d, d);
        for (const auto& K : kraus.ops) out += K * rho * K.adjoint();
        chk.trace_error = std::max(chk.trace_error, std::abs(out.trace().real() - tr));

        double tree_sum = 0.0;
        for (const auto& P : paths) {
            const double p = (P * rho * P.adjoint()).trace().real();
            tree_sum += p;
            chk.min_probability = std::min(chk.min_probability, p / tr);
        }
        chk.tree_trace_error = std::max(chk.tree_trace_error, std::abs(tree_sum - tr));

        const Matrix sel_tree = paths.front() * rho * paths.front().adjoint();
        const Matrix sel_ref = Ka * rho * Ka.adjoint();
        const double p_tree = sel_tree.trace().real();
        const double p_ref = (Ea * rho).trace().real();
        chk.p_a_error = std::max(chk.p_a_error, std::abs(p_tree - p_ref));
        if (p_ref > 1e-14 && p_tree > 1e-14) {
            chk.state_error =
                std::max(chk.state_error, (sel_tree / p_tree - sel_ref / p_ref).norm());
        }
    }

    auto check = [&](double v, const char* what) {
        if (!(v <= tol)) chk.failures.push_back(std::string(what) + " = " + csv::num(v));
    };
    check(chk.trace_error, "trace error");
    check(chk.tree_trace_error, "tree trace error");
    check(chk.path_error, "path product error");
    check(chk.p_a_error, "success probability error");
    check(chk.state_error, "post-selected state error");
    check(chk.unitarity_error, "node unitarity error");
    if (chk.min_probability < -tol) {
        chk.failures.push_back("negative outcome probability " + csv::num(chk.min_probability));
    }
    return chk;
}

namespace {

std::string node_file(const std::string& bits) { return bits.empty() ? "U_root" : "U_" + bits; }

void put_le(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof u);
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((u >> (8 * b)) & 0xFFU);
    os.write(buf, 8);
}

double get_le(std::istream& is) {
    char buf[8];
    if (!is.read(buf, 8)) throw ContractError("unitary file: truncated");
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) {
        u |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[b])) << (8 * b);
    }
    double v;
    std::memcpy(&v, &u, sizeof v);
    return v;
}

} // namespace

void export_tree(const ChannelTree& tree, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["dim"] = tree.dim;
    manifest["unitary_dim"] = 2 * tree.dim;
    manifest["depth"] = tree.depth;
    manifest["n_kraus"] = tree.n_kraus;
    manifest["format"] = "row-major little-endian float64, re/im interleaved";
    manifest["layout"] = "ancilla qubit most significant; column block 0 is ancilla |0>";
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [bits, U] : tree.nodes) {
        const std::string base = node_file(bits);
        {
            std::ofstream os(dir / (base + ".bin"), std::ios::binary);
            for (Eigen::Index i = 0; i < U.rows(); ++i) {
                for (Eigen::Index j = 0; j < U.cols(); ++j) {
                    put_le(os, U(i, j).real());
                    put_le(os, U(i, j).imag());
                }
            }
            if (!os) throw Error("export: cannot write " + (dir / (base + ".bin")).string());
        }
        {
            std::ofstream os(dir / (base + "_abs.csv"));
            for (Eigen::Index i = 0; i < U.rows(); ++i) {
                for (Eigen::Index j = 0; j < U.cols(); ++j) {
                    os << (j ? "," : "") << csv::num(std::abs(U(i, j)));
                }
                os << '\n';
            }
        }
        nodes.push_back({{"path", bits}, {"file", base + ".bin"}, {"abs_csv", base + "_abs.csv"}});
    }
    manifest["nodes"] = nodes;
    nlohmann::json leaves = nlohmann::json::object();
    for (const auto& [bits, idx] : tree.leaves) {
        leaves[bits] = idx ? nlohmann::json(*idx) : nlohmann::json(nullptr);
    }
    manifest["leaves"] = leaves;
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
}

Matrix read_unitary_bin(const std::filesystem::path& file, std::size_t dim) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw ContractError("cannot open " + file.string());
    const auto n = static_cast<Eigen::Index>(2 * dim);
    Matrix U(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double re = get_le(is);
            const double im = get_le(is);
            U(i, j) = Complex(re, im);
        }
    }
    return U;
}

} // namespace kvn
