#pragma once

// V-zono over-approximation: a set given by base vertices C (m x d) and base
// vectors V (n x d), whose candidate vertices are every c + sum_j (+/- v_j).
// The m * 2^n candidates are never materialized; bounds, support values and
// constraint minima are read off C and |V| directly.

#include "nnrepair/error.hpp"
#include "nnrepair/fvim.hpp"
#include "nnrepair/model.hpp"
#include "nnrepair/property.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace nnrepair {

class VZono
{
public:
    VZono() = default;

    VZono(Matrix baseVertices, Matrix baseVectors)
        : _baseVertices(std::move(baseVertices))
        , _baseVectors(std::move(baseVectors))
    {
        if ( _baseVertices.rows() < 1 )
            throw ContractError("V-zono needs at least one base vertex");
        if ( _baseVectors.rows() > 0 && _baseVectors.cols() != _baseVertices.cols() )
            throw DimensionError("base vectors and base vertices have different widths");
        if ( _baseVectors.rows() == 0 )
            _baseVectors.resize(0, _baseVertices.cols());
    }

    const Matrix &baseVertices() const { return _baseVertices; }
    const Matrix &baseVectors() const { return _baseVectors; }
    Index dim() const { return _baseVertices.cols(); }
    Index numBaseVertices() const { return _baseVertices.rows(); }
    Index numBaseVectors() const { return _baseVectors.rows(); }

private:
    Matrix _baseVertices;
    Matrix _baseVectors;
};

/// Exact conversion: base vertices are the current vertices, no base vectors.
inline VZono fromTracked(const TrackedSet &s)
{
    if ( s.numVertices() < 1 )
        throw ContractError("cannot convert an empty set");
    return VZono(s.currentVertices, Matrix(0, s.currentDim()));
}

/// C' = C W^T + b, V' = V W^T.
inline VZono affineMap(const VZono &z, const Matrix &weights, const Vector &bias)
{
    if ( weights.cols() != z.dim() || bias.size() != weights.rows() )
        throw DimensionError("affine map does not match the V-zono width");
    Matrix vertices = (z.baseVertices() * weights.transpose()).rowwise() + bias.transpose();
    Matrix vectors = z.baseVectors() * weights.transpose();
    return VZono(std::move(vertices), std::move(vectors));
}

/// max over the represented set of dir^T y.
inline double support(const VZono &z, const Vector &direction)
{
    double spread = (z.baseVectors() * direction).cwiseAbs().sum();
    return (z.baseVertices() * direction).maxCoeff() + spread;
}

/// min over the represented set of alpha^T y + beta.
inline double constraintMin(const VZono &z, const Vector &alpha, double beta)
{
    if ( alpha.size() != z.dim() )
        throw DimensionError("constraint width does not match the V-zono");
    double spread = (z.baseVectors() * alpha).cwiseAbs().sum();
    return (z.baseVertices() * alpha).minCoeff() + beta - spread;
}

inline Bounds neuronBounds(const VZono &z, Index i)
{
    if ( i < 0 || i >= z.dim() )
        throw DimensionError("neuron index out of range");
    double spread = z.baseVectors().col(i).cwiseAbs().sum();
    return { z.baseVertices().col(i).minCoeff() - spread, z.baseVertices().col(i).maxCoeff() + spread };
}

namespace detail {

struct ReluBand
{
    double slope;  // ub / (ub - lb)
    double offset; // -ub * lb / (2 (ub - lb)), also the half-width of the band
};

inline ReluBand reluBand(double lb, double ub)
{
    if ( !(lb < 0.0 && ub > 0.0) )
        throw ContractError("ReLU relaxation needs lb < 0 < ub");
    double width = ub - lb;
    return { ub / width, -ub * lb / (2.0 * width) };
}

} // namespace detail

/// Relaxation of neuron i before projection: appends the relaxed output x^_i
/// as a new last dimension, keeping x_i. Every base vertex gets
/// slope * c_i + offset there, every existing base vector slope * v_i, and one
/// new base vector offset * e_new is appended.
inline VZono reluLift(const VZono &z, Index i, double lb, double ub)
{
    if ( i < 0 || i >= z.dim() )
        throw DimensionError("neuron index out of range");
    detail::ReluBand band = detail::reluBand(lb, ub);
    const Index d = z.dim();
    Matrix vertices(z.numBaseVertices(), d + 1);
    vertices.leftCols(d) = z.baseVertices();
    vertices.col(d) = (band.slope * z.baseVertices().col(i)).array() + band.offset;
    Matrix vectors = Matrix::Zero(z.numBaseVectors() + 1, d + 1);
    vectors.topLeftCorner(z.numBaseVectors(), d) = z.baseVectors();
    vectors.col(d).head(z.numBaseVectors()) = band.slope * z.baseVectors().col(i);
    vectors(z.numBaseVectors(), d) = band.offset;
    return VZono(std::move(vertices), std::move(vectors));
}

/// Drops dimension i and moves the last dimension into its place.
inline VZono replaceWithLast(const VZono &z, Index i)
{
    const Index d = z.dim() - 1;
    Matrix vertices = z.baseVertices().leftCols(d);
    Matrix vectors = z.baseVectors().leftCols(d);
    vertices.col(i) = z.baseVertices().col(d);
    vectors.col(i) = z.baseVectors().col(d);
    return VZono(std::move(vertices), std::move(vectors));
}

/// Zonotope-band relaxation of neuron i for a spanning range lb < 0 < ub,
/// projected back to the original width: x_i is replaced by the relaxed value.
inline VZono reluRelax(const VZono &z, Index i, double lb, double ub)
{
    return replaceWithLast(reluLift(z, i, lb, ub), i);
}

/// Applies the per-neuron ReLU rule to every coordinate in ascending order.
inline VZono reluLayer(const VZono &z)
{
    VZono current = z;
    for ( Index i = 0; i < z.dim(); ++i )
    {
        Bounds range = neuronBounds(current, i);
        if ( range.ub <= 0.0 )
        {
            Matrix vertices = current.baseVertices();
            Matrix vectors = current.baseVectors();
            vertices.col(i).setZero();
            vectors.col(i).setZero();
            current = VZono(std::move(vertices), std::move(vectors));
        }
        else if ( range.lb < 0.0 )
        {
            current = reluRelax(current, i, range.lb, range.ub);
        }
    }
    return current;
}

/// Replaces the base vertices by the midpoint of their bounding box and adds
/// one axis-aligned base vector per nonzero half-width. Sound but coarser;
/// applied only when there are more than `cap` base vertices.
inline VZono reduceBaseVertices(const VZono &z, Index cap)
{
    if ( z.numBaseVertices() <= cap )
        return z;
    const Index d = z.dim();
    Vector low = z.baseVertices().colwise().minCoeff().transpose();
    Vector high = z.baseVertices().colwise().maxCoeff().transpose();
    Vector mid = 0.5 * (low + high);
    Vector half = 0.5 * (high - low);
    Index extra = (half.array() > 0.0).count();
    Matrix vectors(z.numBaseVectors() + extra, d);
    vectors.topRows(z.numBaseVectors()) = z.baseVectors();
    Index row = z.numBaseVectors();
    for ( Index i = 0; i < d; ++i )
    {
        if ( half[i] > 0.0 )
        {
            vectors.row(row).setZero();
            vectors(row++, i) = half[i];
        }
    }
    return VZono(mid.transpose(), std::move(vectors));
}

/// True when some constraint of the domain is violated by the whole set, so
/// the set cannot meet the unsafe domain. False means "possibly unsafe".
inline bool isProvablySafe(const VZono &z, const UnsafeDomain &unsafe)
{
    if ( unsafe.constraints.empty() )
        throw ContractError("unsafe domain has no constraints");
    for ( const LinearConstraint &c : unsafe.constraints )
        if ( constraintMin(z, c.a, c.b) > 0.0 )
            return true;
    return false;
}

} // namespace nnrepair
