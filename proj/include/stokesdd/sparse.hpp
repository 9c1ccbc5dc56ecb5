/// @file sparse.hpp
/// @brief CSR sparse matrices, direct factorization of symmetric indefinite
///        systems (with a consistent mode for singular ones), small symmetric
///        eigensolvers, and MatrixMarket I/O.
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stokesdd {

struct Triplet {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

/// Sparse matrix in canonical CSR form: row offsets nondecreasing, column
/// indices strictly increasing within each row, no explicit zeros.
class SparseMatrix {
public:
    SparseMatrix() = default;

    /// Builds canonical CSR from (row, col, value) triplets. Duplicates are
    /// summed; entries that sum to exactly zero are dropped.
    /// Throws std::out_of_range for indices outside [0,nrows)x[0,ncols).
    static SparseMatrix from_triplets(std::span<const Triplet> triplets,
                                      int nrows, int ncols);
    static SparseMatrix identity(int n);

    int rows() const { return nrows_; }
    int cols() const { return ncols_; }
    int nnz() const { return static_cast<int>(values_.size()); }

    std::span<const int> row_offsets() const { return row_offsets_; }
    std::span<const int> col_indices() const { return col_indices_; }
    std::span<const double> values() const { return values_; }

    /// y = A x. Throws std::invalid_argument on dimension mismatch.
    void multiply(std::span<const double> x, std::span<double> y) const;
    std::vector<double> multiply(std::span<const double> x) const;

    /// y = A^T x.
    void multiply_transpose(std::span<const double> x, std::span<double> y) const;
    std::vector<double> multiply_transpose(std::span<const double> x) const;

    SparseMatrix transposed() const;
    SparseMatrix multiply(const SparseMatrix& other) const;

    /// Extracts the submatrix with the given (global) row and column index
    /// sets, in the given order.
    SparseMatrix submatrix(std::span<const int> row_ids,
                           std::span<const int> col_ids) const;

    double coeff(int i, int j) const;

    /// Dense row-major copy (test/oracle use).
    std::vector<double> dense() const;

    void append_triplets(std::vector<Triplet>& out,
                         int row_shift = 0, int col_shift = 0,
                         double scale = 1.0) const;

private:
    int nrows_ = 0;
    int ncols_ = 0;
    std::vector<int> row_offsets_ = {0};
    std::vector<int> col_indices_;
    std::vector<double> values_;
};

/// Reads a MatrixMarket "matrix coordinate real general|symmetric" file
/// (1-based indices). Symmetric files are expanded to full storage.
SparseMatrix read_matrix_market(const std::string& path);

/// Writes coordinate format, 1-based. With symmetric=true only the lower
/// triangle is stored and the header says "symmetric".
void write_matrix_market(const SparseMatrix& m, const std::string& path,
                         bool symmetric = false);

/// Direct factorization of a square sparse (possibly indefinite, possibly
/// singular) matrix. Immutable after construction; safe to share across
/// threads, distinct factorizations may be built and solved concurrently.
class Factorization {
public:
    Factorization() = default;

    /// Factors a nonsingular matrix. Throws std::runtime_error identifying a
    /// zero pivot if the matrix is singular.
    static Factorization compute(const SparseMatrix& m);

    /// Singular-consistent mode: null_basis columns must span Ker(M).
    /// solve() then projects the rhs onto Range(M), solves a system pinned at
    /// one dof per null vector, and returns the solution orthogonal to the
    /// null basis. consistency_tol bounds the admissible relative rhs
    /// component outside Range(M).
    static Factorization compute_with_null_basis(
        const SparseMatrix& m,
        std::span<const std::vector<double>> null_basis,
        double consistency_tol = 1e-10);

    /// Solves M x = b. In singular-consistent mode throws std::runtime_error
    /// (reporting the residual norm) if b is inconsistent, unless
    /// allow_projection is set, in which case b is silently projected onto
    /// Range(M) first.
    std::vector<double> solve(std::span<const double> b,
                              bool allow_projection = false) const;

    bool singular_consistent() const;
    int dim() const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

struct SymTridiagonal {
    std::vector<double> diag;
    std::vector<double> offdiag;  // length diag.size()-1
};

struct DenseSymEig {
    std::vector<double> eigenvalues;    // ascending
    std::vector<double> eigenvectors;   // column-major, column j pairs with eigenvalues[j]
    int n = 0;
};

/// Full spectrum of a dense symmetric matrix (row-major storage). Throws if
/// the asymmetry exceeds 1e-12 relative to the largest entry magnitude.
DenseSymEig dense_sym_eig(std::span<const double> m_rowmajor, int n);

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix.
std::vector<double> tridiag_eig(const SymTridiagonal& t);

// Small vector helpers used throughout.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace stokesdd
