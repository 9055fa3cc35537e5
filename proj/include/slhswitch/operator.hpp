#pragma once

// Dense complex operators on truncated tensor-product Hilbert spaces
// (cavity Fock ladders and a qubit).

#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace slhswitch {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

/// Tolerance used for Hermiticity and trace assertions.
inline constexpr double operator_tolerance = 1e-10;

/// Ordered factor dimensions of a tensor-product space, e.g. {3, 2} for a
/// cavity truncated at two photons next to a qubit.
class SpaceSignature {
public:
    SpaceSignature() = default;

    explicit SpaceSignature(std::vector<std::size_t> factors)
        : factors_(std::move(factors))
    {
        if (factors_.empty())
            throw Error(ErrorKind::invalid_dimension, "space signature needs at least one factor");
        for (std::size_t d : factors_) {
            if (d < 2)
                throw Error(ErrorKind::invalid_dimension,
                            "factor dimension " + std::to_string(d) + " is below 2");
        }
    }

    SpaceSignature(std::initializer_list<std::size_t> factors)
        : SpaceSignature(std::vector<std::size_t>(factors)) {}

    std::span<const std::size_t> factors() const noexcept { return factors_; }
    std::size_t size() const noexcept { return factors_.size(); }
    std::size_t operator[](std::size_t slot) const { return factors_.at(slot); }

    std::size_t dimension() const noexcept
    {
        return std::accumulate(factors_.begin(), factors_.end(), std::size_t{1},
                               std::multiplies<>{});
    }

    /// Flat row-major index of a product basis state; slot 0 is the most
    /// significant digit.
    std::size_t flat_index(std::span<const std::size_t> labels) const
    {
        if (labels.size() != factors_.size())
            throw Error(ErrorKind::invalid_label, "label count does not match factor count");
        std::size_t idx = 0;
        for (std::size_t k = 0; k < factors_.size(); ++k) {
            if (labels[k] >= factors_[k])
                throw Error(ErrorKind::invalid_label,
                            "basis label " + std::to_string(labels[k]) + " out of range for factor "
                                + std::to_string(k) + " of dimension "
                                + std::to_string(factors_[k]));
            idx = idx * factors_[k] + labels[k];
        }
        return idx;
    }

    std::string to_string() const
    {
        std::string s = "[";
        for (std::size_t k = 0; k < factors_.size(); ++k) {
            if (k)
                s += ",";
            s += std::to_string(factors_[k]);
        }
        return s + "]";
    }

    friend bool operator==(const SpaceSignature &, const SpaceSignature &) = default;

private:
    std::vector<std::size_t> factors_;
};

/// A square complex matrix tagged with the space it acts on.
class Operator {
public:
    Operator() = default;

    Operator(SpaceSignature signature, Matrix entries)
        : signature_(std::move(signature)), entries_(std::move(entries))
    {
        const auto dim = static_cast<Eigen::Index>(signature_.dimension());
        if (entries_.rows() != dim || entries_.cols() != dim)
            throw Error(ErrorKind::invalid_dimension,
                        "matrix shape does not match signature " + signature_.to_string());
    }

    /// Single-factor operator; the signature is inferred from the matrix side.
    explicit Operator(Matrix entries)
        : signature_{static_cast<std::size_t>(entries.rows())}, entries_(std::move(entries))
    {
        if (entries_.rows() != entries_.cols())
            throw Error(ErrorKind::invalid_dimension, "operator matrix must be square");
    }

    static Operator zero(const SpaceSignature &sig)
    {
        const auto d = static_cast<Eigen::Index>(sig.dimension());
        return {sig, Matrix::Zero(d, d)};
    }

    static Operator identity(const SpaceSignature &sig)
    {
        const auto d = static_cast<Eigen::Index>(sig.dimension());
        return {sig, Matrix::Identity(d, d)};
    }

    const SpaceSignature &signature() const noexcept { return signature_; }
    const Matrix &matrix() const noexcept { return entries_; }
    std::size_t dimension() const noexcept { return signature_.dimension(); }

    Operator adjoint() const { return {signature_, entries_.adjoint()}; }
    cplx trace() const { return entries_.trace(); }

    /// Max-norm of O - O^dagger.
    double hermiticity_defect() const
    {
        if (entries_.size() == 0)
            return 0.0;
        return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff();
    }

    bool is_hermitian(double tol = operator_tolerance) const { return hermiticity_defect() < tol; }

    Operator &operator+=(const Operator &rhs)
    {
        require_same(rhs);
        entries_ += rhs.entries_;
        return *this;
    }
    Operator &operator-=(const Operator &rhs)
    {
        require_same(rhs);
        entries_ -= rhs.entries_;
        return *this;
    }
    Operator &operator*=(cplx s)
    {
        entries_ *= s;
        return *this;
    }

    friend Operator operator+(Operator a, const Operator &b) { return a += b; }
    friend Operator operator-(Operator a, const Operator &b) { return a -= b; }
    friend Operator operator*(cplx s, Operator a) { return a *= s; }
    friend Operator operator*(Operator a, cplx s) { return a *= s; }
    friend Operator operator*(const Operator &a, const Operator &b)
    {
        a.require_same(b);
        return {a.signature_, a.entries_ * b.entries_};
    }

    /// Apply to a ket given as a flat coefficient vector.
    Eigen::VectorXcd apply(const Eigen::VectorXcd &ket) const
    {
        if (ket.size() != entries_.cols())
            throw Error(ErrorKind::signature_mismatch, "ket length does not match operator");
        return entries_ * ket;
    }

    void require_same(const Operator &other) const
    {
        if (!(signature_ == other.signature_))
            throw Error(ErrorKind::signature_mismatch,
                        "operator signatures differ: " + signature_.to_string() + " vs "
                            + other.signature_.to_string());
    }

private:
    SpaceSignature signature_;
    Matrix entries_;
};

/// Bosonic annihilation operator truncated to `dim` levels:
/// <k-1|a|k> = sqrt(k).
inline Operator annihilation(std::size_t dim)
{
    if (dim < 2)
        throw Error(ErrorKind::invalid_dimension,
                    "annihilation operator needs dim >= 2, got " + std::to_string(dim));
    const auto d = static_cast<Eigen::Index>(dim);
    Matrix m = Matrix::Zero(d, d);
    for (Eigen::Index k = 1; k < d; ++k)
        m(k - 1, k) = std::sqrt(static_cast<double>(k));
    return Operator{std::move(m)};
}

inline Operator creation(std::size_t dim) { return annihilation(dim).adjoint(); }

/// Qubit lowering operator in the basis (g, e): <g|sigma_-|e> = 1.
inline Operator qubit_lowering()
{
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 1.0;
    return Operator{std::move(m)};
}

/// Lift a single-factor operator into `signature`, acting as identity on
/// every other factor.
inline Operator embed(const Operator &local, std::size_t slot, const SpaceSignature &signature)
{
    if (slot >= signature.size())
        throw Error(ErrorKind::invalid_embed,
                    "slot " + std::to_string(slot) + " outside signature " + signature.to_string());
    if (local.dimension() != signature[slot])
        throw Error(ErrorKind::invalid_embed,
                    "local dimension " + std::to_string(local.dimension()) + " does not match factor "
                        + std::to_string(slot) + " of " + signature.to_string());

    std::size_t outer = 1;
    for (std::size_t k = 0; k < slot; ++k)
        outer *= signature[k];
    std::size_t inner = 1;
    for (std::size_t k = slot + 1; k < signature.size(); ++k)
        inner *= signature[k];

    const auto d_local = static_cast<Eigen::Index>(local.dimension());
    const auto d_inner = static_cast<Eigen::Index>(inner);
    const auto d = static_cast<Eigen::Index>(signature.dimension());
    Matrix m = Matrix::Zero(d, d);
    const Matrix &l = local.matrix();
    for (Eigen::Index o = 0; o < static_cast<Eigen::Index>(outer); ++o) {
        const Eigen::Index base = o * d_local * d_inner;
        for (Eigen::Index r = 0; r < d_local; ++r)
            for (Eigen::Index c = 0; c < d_local; ++c) {
                if (l(r, c) == cplx{})
                    continue;
                for (Eigen::Index i = 0; i < d_inner; ++i)
                    m(base + r * d_inner + i, base + c * d_inner + i) = l(r, c);
            }
    }
    return {signature, std::move(m)};
}

/// Asymmetric expectation Tr[rho^dagger obs]; reduces to Tr[rho obs] for
/// Hermitian rho.
inline cplx expectation(const Operator &rho, const Operator &obs)
{
    rho.require_same(obs);
    // Tr[A^dagger B] = sum_ij conj(A_ij) B_ij
    return rho.matrix().conjugate().cwiseProduct(obs.matrix()).sum();
}

/// Rank-1 projector onto the product basis state with the given per-factor
/// labels.
inline Operator basis_projector(std::span<const std::size_t> labels, const SpaceSignature &signature)
{
    const auto idx = static_cast<Eigen::Index>(signature.flat_index(labels));
    Operator p = Operator::zero(signature);
    Matrix m = p.matrix();
    m(idx, idx) = 1.0;
    return {signature, std::move(m)};
}

inline Operator basis_projector(std::initializer_list<std::size_t> labels,
                                const SpaceSignature &signature)
{
    const std::vector<std::size_t> v(labels);
    return basis_projector(std::span<const std::size_t>(v), signature);
}

} // namespace slhswitch
