#include "stokesdd/sparse.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stokesdd {

SparseMatrix SparseMatrix::from_triplets(std::span<const Triplet> triplets,
                                         int nrows, int ncols) {
    if (nrows < 0 || ncols < 0)
        throw std::invalid_argument("from_triplets: negative dimension");
    for (const Triplet& t : triplets) {
        if (t.row < 0 || t.row >= nrows || t.col < 0 || t.col >= ncols)
            throw std::out_of_range("from_triplets: index (" + std::to_string(t.row) +
                                    "," + std::to_string(t.col) + ") outside " +
                                    std::to_string(nrows) + "x" + std::to_string(ncols));
    }
    std::vector<int> order(triplets.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (triplets[a].row != triplets[b].row) return triplets[a].row < triplets[b].row;
        return triplets[a].col < triplets[b].col;
    });

    SparseMatrix m;
    m.nrows_ = nrows;
    m.ncols_ = ncols;
    m.row_offsets_.assign(nrows + 1, 0);
    m.col_indices_.reserve(triplets.size());
    m.values_.reserve(triplets.size());

    size_t k = 0;
    for (int r = 0; r < nrows; ++r) {
        while (k < order.size() && triplets[order[k]].row == r) {
            int c = triplets[order[k]].col;
            double v = 0.0;
            while (k < order.size() && triplets[order[k]].row == r &&
                   triplets[order[k]].col == c) {
                v += triplets[order[k]].value;
                ++k;
            }
            if (v != 0.0) {
                m.col_indices_.push_back(c);
                m.values_.push_back(v);
            }
        }
        m.row_offsets_[r + 1] = static_cast<int>(m.col_indices_.size());
    }
    return m;
}

SparseMatrix SparseMatrix::identity(int n) {
    std::vector<Triplet> ts;
    ts.reserve(n);
    for (int i = 0; i < n; ++i) ts.push_back({i, i, 1.0});
    return from_triplets(ts, n, n);
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
    if (static_cast<int>(x.size()) != ncols_ || static_cast<int>(y.size()) != nrows_)
        throw std::invalid_argument("spmv: dimension mismatch");
    for (int r = 0; r < nrows_; ++r) {
        double s = 0.0;
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
            s += values_[k] * x[col_indices_[k]];
        y[r] = s;
    }
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
    std::vector<double> y(nrows_);
    multiply(x, y);
    return y;
}

void SparseMatrix::multiply_transpose(std::span<const double> x,
                                      std::span<double> y) const {
    if (static_cast<int>(x.size()) != nrows_ || static_cast<int>(y.size()) != ncols_)
        throw std::invalid_argument("spmv^T: dimension mismatch");
    std::fill(y.begin(), y.end(), 0.0);
    for (int r = 0; r < nrows_; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
            y[col_indices_[k]] += values_[k] * xr;
    }
}

std::vector<double> SparseMatrix::multiply_transpose(std::span<const double> x) const {
    std::vector<double> y(ncols_);
    multiply_transpose(x, y);
    return y;
}

SparseMatrix SparseMatrix::transposed() const {
    std::vector<Triplet> ts;
    ts.reserve(values_.size());
    for (int r = 0; r < nrows_; ++r)
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
            ts.push_back({col_indices_[k], r, values_[k]});
    return from_triplets(ts, ncols_, nrows_);
}

SparseMatrix SparseMatrix::multiply(const SparseMatrix& other) const {
    if (ncols_ != other.nrows_)
        throw std::invalid_argument("sparse multiply: dimension mismatch");
    std::vector<Triplet> ts;
    std::vector<double> acc(other.ncols_, 0.0);
    std::vector<int> touched;
    for (int r = 0; r < nrows_; ++r) {
        touched.clear();
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            const int mid = col_indices_[k];
            const double v = values_[k];
            for (int k2 = other.row_offsets_[mid]; k2 < other.row_offsets_[mid + 1]; ++k2) {
                const int c = other.col_indices_[k2];
                if (acc[c] == 0.0) touched.push_back(c);
                acc[c] += v * other.values_[k2];
            }
        }
        for (int c : touched) {
            if (acc[c] != 0.0) ts.push_back({r, c, acc[c]});
            acc[c] = 0.0;
        }
    }
    return from_triplets(ts, nrows_, other.ncols_);
}

SparseMatrix SparseMatrix::submatrix(std::span<const int> row_ids,
                                     std::span<const int> col_ids) const {
    std::vector<int> col_map(ncols_, -1);
    for (size_t j = 0; j < col_ids.size(); ++j) col_map[col_ids[j]] = static_cast<int>(j);
    std::vector<Triplet> ts;
    for (size_t i = 0; i < row_ids.size(); ++i) {
        const int r = row_ids[i];
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            const int c = col_map[col_indices_[k]];
            if (c >= 0) ts.push_back({static_cast<int>(i), c, values_[k]});
        }
    }
    return from_triplets(ts, static_cast<int>(row_ids.size()),
                         static_cast<int>(col_ids.size()));
}

double SparseMatrix::coeff(int i, int j) const {
    for (int k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
        if (col_indices_[k] == j) return values_[k];
    return 0.0;
}

std::vector<double> SparseMatrix::dense() const {
    std::vector<double> d(static_cast<size_t>(nrows_) * ncols_, 0.0);
    for (int r = 0; r < nrows_; ++r)
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
            d[static_cast<size_t>(r) * ncols_ + col_indices_[k]] = values_[k];
    return d;
}

void SparseMatrix::append_triplets(std::vector<Triplet>& out, int row_shift,
                                   int col_shift, double scale) const {
    for (int r = 0; r < nrows_; ++r)
        for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
            out.push_back({r + row_shift, col_indices_[k] + col_shift,
                           scale * values_[k]});
}

SparseMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file " + path);
    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate" ||
        field != "real" || (symmetry != "general" && symmetry != "symmetric"))
        throw std::runtime_error("unsupported MatrixMarket header in " + path);
    const bool symmetric = symmetry == "symmetric";

    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') break;
    }
    std::istringstream sizes(line);
    int nrows = 0, ncols = 0;
    long long nnz = 0;
    if (!(sizes >> nrows >> ncols >> nnz))
        throw std::runtime_error("bad size line in " + path);

    std::vector<Triplet> ts;
    ts.reserve(static_cast<size_t>(symmetric ? 2 * nnz : nnz));
    for (long long k = 0; k < nnz; ++k) {
        int i = 0, j = 0;
        double v = 0.0;
        if (!(in >> i >> j >> v)) throw std::runtime_error("truncated data in " + path);
        ts.push_back({i - 1, j - 1, v});
        if (symmetric && i != j) ts.push_back({j - 1, i - 1, v});
    }
    return SparseMatrix::from_triplets(ts, nrows, ncols);
}

void write_matrix_market(const SparseMatrix& m, const std::string& path,
                         bool symmetric) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "%%MatrixMarket matrix coordinate real "
        << (symmetric ? "symmetric" : "general") << "\n";
    out.precision(17);
    int count = 0;
    for (int r = 0; r < m.rows(); ++r)
        for (int k = m.row_offsets()[r]; k < m.row_offsets()[r + 1]; ++k)
            if (!symmetric || m.col_indices()[k] <= r) ++count;
    out << m.rows() << " " << m.cols() << " " << count << "\n";
    for (int r = 0; r < m.rows(); ++r)
        for (int k = m.row_offsets()[r]; k < m.row_offsets()[r + 1]; ++k) {
            const int c = m.col_indices()[k];
            if (symmetric && c > r) continue;
            out << (r + 1) << " " << (c + 1) << " " << m.values()[k] << "\n";
        }
}

namespace {

Eigen::SparseMatrix<double> to_eigen(const SparseMatrix& m) {
    Eigen::Map<const Eigen::SparseMatrix<double, Eigen::RowMajor, int>> map(
        m.rows(), m.cols(), m.nnz(), m.row_offsets().data(), m.col_indices().data(),
        m.values().data());
    return Eigen::SparseMatrix<double>(map);
}

}  // namespace

struct Factorization::Impl {
    int n = 0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool singular = false;
    std::vector<Eigen::VectorXd> null_q;  // orthonormal
    std::vector<int> pinned;
    double ctol = 1e-10;
};

static void factor_or_throw(Eigen::SparseLU<Eigen::SparseMatrix<double>>& lu,
                            const Eigen::SparseMatrix<double>& a) {
    lu.analyzePattern(a);
    lu.factorize(a);
    if (lu.info() != Eigen::Success)
        throw std::runtime_error("factorization breakdown (zero pivot): " +
                                 lu.lastErrorMessage());
}

Factorization Factorization::compute(const SparseMatrix& m) {
    if (m.rows() != m.cols())
        throw std::invalid_argument("factorization requires a square matrix");
    auto impl = std::make_shared<Impl>();
    impl->n = m.rows();
    factor_or_throw(impl->lu, to_eigen(m));
    Factorization f;
    f.impl_ = std::move(impl);
    return f;
}

Factorization Factorization::compute_with_null_basis(
    const SparseMatrix& m, std::span<const std::vector<double>> null_basis,
    double consistency_tol) {
    if (m.rows() != m.cols())
        throw std::invalid_argument("factorization requires a square matrix");
    if (null_basis.empty()) return compute(m);

    auto impl = std::make_shared<Impl>();
    impl->n = m.rows();
    impl->singular = true;
    impl->ctol = consistency_tol;

    for (const auto& col : null_basis) {
        if (static_cast<int>(col.size()) != m.rows())
            throw std::invalid_argument("null basis column has wrong length");
        Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(col.data(), col.size());
        for (const auto& prev : impl->null_q) q -= prev.dot(q) * prev;
        const double nrm = q.norm();
        if (nrm < 1e-12)
            throw std::invalid_argument("null basis columns are linearly dependent");
        impl->null_q.push_back(q / nrm);
    }

    double max_abs = 0.0;
    for (double v : m.values()) max_abs = std::max(max_abs, std::abs(v));
    for (const auto& q : impl->null_q) {
        std::vector<double> mq = m.multiply(std::span<const double>(q.data(), q.size()));
        double r = norm2(mq);
        if (r > 1e-8 * std::max(1.0, max_abs))
            throw std::invalid_argument("null basis column is not in Ker(M), |Mq| = " +
                                        std::to_string(r));
    }

    // Pin one dof per null vector (largest-magnitude unpinned entry).
    std::vector<char> is_pinned(m.rows(), 0);
    for (const auto& q : impl->null_q) {
        int best = -1;
        double best_mag = -1.0;
        for (int i = 0; i < m.rows(); ++i) {
            if (!is_pinned[i] && std::abs(q[i]) > best_mag) {
                best_mag = std::abs(q[i]);
                best = i;
            }
        }
        if (best < 0 || best_mag < 1e-12)
            throw std::invalid_argument("cannot pin a dof for a null vector");
        is_pinned[best] = 1;
        impl->pinned.push_back(best);
    }

    std::vector<Triplet> ts;
    ts.reserve(m.nnz() + impl->pinned.size());
    for (int r = 0; r < m.rows(); ++r) {
        if (is_pinned[r]) continue;
        for (int k = m.row_offsets()[r]; k < m.row_offsets()[r + 1]; ++k)
            if (!is_pinned[m.col_indices()[k]])
                ts.push_back({r, m.col_indices()[k], m.values()[k]});
    }
    for (int p : impl->pinned) ts.push_back({p, p, 1.0});
    factor_or_throw(impl->lu, to_eigen(SparseMatrix::from_triplets(ts, m.rows(), m.cols())));

    Factorization f;
    f.impl_ = std::move(impl);
    return f;
}

std::vector<double> Factorization::solve(std::span<const double> b,
                                         bool allow_projection) const {
    if (!impl_) throw std::logic_error("solve on empty factorization");
    if (static_cast<int>(b.size()) != impl_->n)
        throw std::invalid_argument("solve: rhs length mismatch");
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
    if (impl_->singular) {
        double off = 0.0;
        for (const auto& q : impl_->null_q) {
            const double c = q.dot(rhs);
            off += c * c;
            rhs -= c * q;
        }
        const double bn = norm2(b);
        if (!allow_projection && std::sqrt(off) > impl_->ctol * std::max(bn, 1e-300))
            throw std::runtime_error(
                "inconsistent rhs for singular system, off-range residual norm = " +
                std::to_string(std::sqrt(off)) + " relative to |b| = " + std::to_string(bn));
        for (int p : impl_->pinned) rhs[p] = 0.0;
    }
    Eigen::VectorXd x = impl_->lu.solve(rhs);
    if (impl_->lu.info() != Eigen::Success)
        throw std::runtime_error("triangular solve failed");
    if (impl_->singular)
        for (const auto& q : impl_->null_q) x -= q.dot(x) * q;
    return std::vector<double>(x.data(), x.data() + x.size());
}

bool Factorization::singular_consistent() const {
    return impl_ && impl_->singular;
}

int Factorization::dim() const { return impl_ ? impl_->n : 0; }

DenseSymEig dense_sym_eig(std::span<const double> m_rowmajor, int n) {
    if (static_cast<int>(m_rowmajor.size()) != n * n)
        throw std::invalid_argument("dense_sym_eig: storage size mismatch");
    double max_abs = 0.0, asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            max_abs = std::max(max_abs, std::abs(m_rowmajor[i * n + j]));
            asym = std::max(asym, std::abs(m_rowmajor[i * n + j] - m_rowmajor[j * n + i]));
        }
    if (asym > 1e-12 * std::max(1.0, max_abs))
        throw std::invalid_argument("dense_sym_eig: matrix asymmetry " +
                                    std::to_string(asym) + " beyond tolerance");
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a(i, j) = 0.5 * (m_rowmajor[i * n + j] + m_rowmajor[j * n + i]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    DenseSymEig out;
    out.n = n;
    out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
    out.eigenvectors.assign(es.eigenvectors().data(),
                            es.eigenvectors().data() + static_cast<size_t>(n) * n);
    return out;
}

std::vector<double> tridiag_eig(const SymTridiagonal& t) {
    const int n = static_cast<int>(t.diag.size());
    if (n == 0) return {};
    if (t.offdiag.size() + 1 != t.diag.size())
        throw std::invalid_argument("tridiag_eig: offdiag length must be diag length - 1");
    Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(t.diag.data(), n);
    Eigen::VectorXd e(std::max(n - 1, 0));
    if (n > 1) e = Eigen::Map<const Eigen::VectorXd>(t.offdiag.data(), n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("tridiagonal eigensolver failed");
    return std::vector<double>(es.eigenvalues().data(), es.eigenvalues().data() + n);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace stokesdd
