#pragma once

#include "nnrepair/error.hpp"
#include "nnrepair/model.hpp"

#include <string>
#include <vector>

namespace nnrepair {

/// One halfspace a^T y + b <= 0 in output space.
struct LinearConstraint
{
    Vector a;
    double b = 0.0;

    double slack(const Vector &y) const { return a.dot(y) + b; }
};

/// Conjunction of halfspaces; a point is unsafe when every slack is <= 0.
struct UnsafeDomain
{
    std::vector<LinearConstraint> constraints;

    bool contains(const Vector &y, double tolerance = 0.0) const
    {
        for ( const LinearConstraint &c : constraints )
            if ( c.slack(y) > tolerance )
                return false;
        return true;
    }

    /// Largest slack; <= 0 means inside.
    double maxSlack(const Vector &y) const
    {
        double worst = -std::numeric_limits<double>::infinity();
        for ( const LinearConstraint &c : constraints )
            worst = std::max(worst, c.slack(y));
        return worst;
    }

    void validate(Index outputDim) const
    {
        if ( constraints.empty() )
            throw ContractError("unsafe domain has no constraints (the whole output space would be unsafe)");
        for ( const LinearConstraint &c : constraints )
        {
            if ( c.a.size() != outputDim )
                throw DimensionError("unsafe constraint width does not match the network output");
            if ( c.a.isZero(0.0) )
                throw ContractError("unsafe constraint has a zero normal");
        }
    }
};

/// Input box plus the outputs that must never be produced from it.
struct SafetyProperty
{
    std::string name;
    Vector inputLb;
    Vector inputUb;
    UnsafeDomain unsafe;

    void validate(const Network &net) const
    {
        if ( inputLb.size() != net.inputDim() || inputUb.size() != net.inputDim() )
            throw DimensionError("property '" + name + "' box does not match the network input width");
        for ( Index i = 0; i < inputLb.size(); ++i )
            if ( !(inputLb[i] < inputUb[i]) )
                throw ContractError("property '" + name + "' needs lb < ub in every input");
        unsafe.validate(net.outputDim());
    }

    bool sameBox(const SafetyProperty &other) const
    {
        return inputLb.size() == other.inputLb.size() && inputLb == other.inputLb && inputUb == other.inputUb;
    }
};

/// The unsafe domain "output k is the minimum among all", i.e. y_k <= y_j for
/// every j != k, written as y_k - y_j <= 0.
inline UnsafeDomain minimumOutputDomain(Index outputDim, Index k)
{
    UnsafeDomain domain;
    for ( Index j = 0; j < outputDim; ++j )
    {
        if ( j == k )
            continue;
        LinearConstraint c;
        c.a = Vector::Zero(outputDim);
        c.a[k] = 1.0;
        c.a[j] = -1.0;
        domain.constraints.push_back(std::move(c));
    }
    return domain;
}

} // namespace nnrepair
