#pragma once

// Exact polytope engine over facet-vertex incidence matrices (FVIM).
//
// A TrackedSet is a full-dimensional input-space polytope given by its
// vertices and incidence matrix, together with the image of every vertex at
// the current point of propagation through a network. On each linear region
// the network is affine, so splitting and mapping only ever touch vertex
// values and the incidence combinatorics; no LP is needed.

#include "nnrepair/error.hpp"
#include "nnrepair/model.hpp"

#include <boost/dynamic_bitset.hpp>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <string>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

namespace nnrepair {

/// Vertices with |value| <= this are treated as lying on a split plane.
inline constexpr double kSignTolerance = 1e-9;

/// Binary matrix of shape (facets x vertices); row f has bit v set when facet
/// f contains vertex v.
class Fvim
{
public:
    using Row = boost::dynamic_bitset<>;

    Fvim() = default;
    explicit Fvim(std::size_t numVertices)
        : _numVertices(numVertices)
    {
    }

    std::size_t numFacets() const { return _rows.size(); }
    std::size_t numVertices() const { return _numVertices; }
    const Row &facet(std::size_t f) const { return _rows[f]; }
    const std::vector<Row> &rows() const { return _rows; }
    bool contains(std::size_t f, std::size_t v) const { return _rows[f].test(v); }

    void addFacet(Row row)
    {
        if ( row.size() != _numVertices )
            throw DimensionError("incidence row width does not match the vertex count");
        _rows.push_back(std::move(row));
    }

    /// Transpose: for every vertex, the set of facets containing it.
    std::vector<Row> vertexFacets() const
    {
        std::vector<Row> columns(_numVertices, Row(_rows.size()));
        for ( std::size_t f = 0; f < _rows.size(); ++f )
            for ( std::size_t v = _rows[f].find_first(); v != Row::npos; v = _rows[f].find_next(v) )
                columns[v].set(f);
        return columns;
    }

    void removeDuplicateRows()
    {
        std::vector<Row> unique;
        for ( Row &row : _rows )
            if ( std::find(unique.begin(), unique.end(), row) == unique.end() )
                unique.push_back(std::move(row));
        _rows = std::move(unique);
    }

    bool operator==(const Fvim &other) const = default;

private:
    std::vector<Row> _rows;
    std::size_t _numVertices = 0;
};

/// Input-space linear region plus the per-vertex values at the current layer.
/// Rows of `inputVertices` and `currentVertices` correspond.
struct TrackedSet
{
    Fvim fvim;
    Matrix inputVertices;
    Matrix currentVertices;
    // Index of the next network layer to apply.
    std::size_t layerCursor = 0;

    Index numVertices() const { return inputVertices.rows(); }
    Index inputDim() const { return inputVertices.cols(); }
    Index currentDim() const { return currentVertices.cols(); }
};

struct Bounds
{
    double lb;
    double ub;
};

/// Axis-aligned box with 2^d vertices and 2d facets. Facet 2i is x_i = lb_i,
/// facet 2i+1 is x_i = ub_i. Vertex v has coordinate i at ub_i iff bit i of v
/// is set.
inline TrackedSet boxPolytope(const Vector &lb, const Vector &ub)
{
    const Index d = lb.size();
    if ( d == 0 )
        throw ContractError("box needs at least one dimension");
    if ( ub.size() != d )
        throw DimensionError("box bounds have different lengths");
    if ( d > 24 )
        throw ContractError("box dimension too large for vertex enumeration");
    for ( Index i = 0; i < d; ++i )
        if ( !(lb[i] < ub[i]) )
            throw ContractError("box needs lb < ub in every dimension");

    const std::size_t count = std::size_t(1) << d;
    TrackedSet s;
    s.inputVertices.resize(static_cast<Index>(count), d);
    for ( std::size_t v = 0; v < count; ++v )
        for ( Index i = 0; i < d; ++i )
            s.inputVertices(static_cast<Index>(v), i) = (v >> i) & 1U ? ub[i] : lb[i];

    s.fvim = Fvim(count);
    for ( Index i = 0; i < d; ++i )
    {
        Fvim::Row lower(count);
        Fvim::Row upper(count);
        for ( std::size_t v = 0; v < count; ++v )
        {
            if ( (v >> i) & 1U )
                upper.set(v);
            else
                lower.set(v);
        }
        s.fvim.addFacet(std::move(lower));
        s.fvim.addFacet(std::move(upper));
    }
    s.currentVertices = s.inputVertices;
    return s;
}

/// current <- current * W^T + b. Incidence and input vertices are untouched.
inline TrackedSet affineMap(const TrackedSet &s, const Matrix &weights, const Vector &bias)
{
    if ( weights.cols() != s.currentDim() || bias.size() != weights.rows() )
        throw DimensionError("affine map does not match the set's current width");
    TrackedSet out;
    out.fvim = s.fvim;
    out.inputVertices = s.inputVertices;
    out.currentVertices = (s.currentVertices * weights.transpose()).rowwise() + bias.transpose();
    out.layerCursor = s.layerCursor;
    return out;
}

/// Exact bounds of coordinate i read off the vertices.
inline Bounds dimBounds(const TrackedSet &s, Index i)
{
    if ( i < 0 || i >= s.currentDim() )
        throw DimensionError("dimension index out of range");
    return { s.currentVertices.col(i).minCoeff(), s.currentVertices.col(i).maxCoeff() };
}

/// Result of cutting a set with a hyperplane h(y) = 0. `lower` is the part
/// with h <= 0, `upper` the part with h >= 0. When the set lies on one side
/// only, the other member is empty. `degenerate` counts pieces dropped because
/// they had fewer than d + 1 vertices.
struct SplitResult
{
    std::optional<TrackedSet> lower;
    std::optional<TrackedSet> upper;
    std::size_t degenerate = 0;
};

namespace detail {

struct CutVertex
{
    std::size_t from;
    std::size_t to;
    double t;
    Fvim::Row sharedFacets;
};

// Builds one side of a cut. `kept` are the vertices strictly on this side,
// `onPlane` the ones within tolerance of the plane.
inline std::optional<TrackedSet> buildChild(const TrackedSet &s,
                                            const std::vector<std::size_t> &kept,
                                            const std::vector<std::size_t> &onPlane,
                                            const std::vector<CutVertex> &cuts,
                                            const Matrix &cutInput,
                                            const Matrix &cutCurrent)
{
    const std::size_t d = static_cast<std::size_t>(s.inputDim());
    std::vector<std::size_t> original;
    original.reserve(kept.size() + onPlane.size());
    std::merge(kept.begin(), kept.end(), onPlane.begin(), onPlane.end(), std::back_inserter(original));
    const std::size_t total = original.size() + cuts.size();
    if ( total < d + 1 )
        return std::nullopt;

    TrackedSet child;
    child.layerCursor = s.layerCursor;
    child.inputVertices.resize(static_cast<Index>(total), s.inputDim());
    child.currentVertices.resize(static_cast<Index>(total), s.currentDim());
    Fvim::Row strict(total);
    for ( std::size_t k = 0; k < original.size(); ++k )
    {
        child.inputVertices.row(static_cast<Index>(k)) = s.inputVertices.row(static_cast<Index>(original[k]));
        child.currentVertices.row(static_cast<Index>(k)) = s.currentVertices.row(static_cast<Index>(original[k]));
    }
    for ( std::size_t k = 0; k < kept.size(); ++k )
        strict.set(static_cast<std::size_t>(std::lower_bound(original.begin(), original.end(), kept[k]) -
                                            original.begin()));
    for ( std::size_t k = 0; k < cuts.size(); ++k )
    {
        child.inputVertices.row(static_cast<Index>(original.size() + k)) = cutInput.row(static_cast<Index>(k));
        child.currentVertices.row(static_cast<Index>(original.size() + k)) = cutCurrent.row(static_cast<Index>(k));
    }

    child.fvim = Fvim(total);
    for ( std::size_t f = 0; f < s.fvim.numFacets(); ++f )
    {
        const Fvim::Row &parentRow = s.fvim.facet(f);
        Fvim::Row row(total);
        for ( std::size_t k = 0; k < original.size(); ++k )
            if ( parentRow.test(original[k]) )
                row.set(k);
        for ( std::size_t k = 0; k < cuts.size(); ++k )
            if ( cuts[k].sharedFacets.test(f) )
                row.set(original.size() + k);
        // A parent facet survives only if it still has a vertex strictly on
        // this side; otherwise what is left of it lies inside the cut plane.
        if ( row.count() >= d && row.intersects(strict) )
            child.fvim.addFacet(std::move(row));
    }
    Fvim::Row cutFacet(total);
    for ( std::size_t k = 0; k < original.size(); ++k )
        if ( !strict.test(k) )
            cutFacet.set(k);
    for ( std::size_t k = 0; k < cuts.size(); ++k )
        cutFacet.set(original.size() + k);
    child.fvim.addFacet(std::move(cutFacet));
    child.fvim.removeDuplicateRows();
    return child;
}

} // namespace detail

/// Cuts `s` with the hyperplane {y : a^T y + b = 0} over current coordinates.
/// Crossing edges are found from the incidence matrix: vertices u, v span an
/// edge iff they share at least d - 1 facets and no third vertex lies on all
/// of their shared facets. Each crossing edge yields one new vertex by linear
/// interpolation, applied identically to input and current rows.
inline SplitResult splitByHyperplane(const TrackedSet &s, const Vector &a, double b, double tolerance = kSignTolerance)
{
    if ( a.size() != s.currentDim() )
        throw DimensionError("split hyperplane width does not match the set");
    const std::size_t n = static_cast<std::size_t>(s.numVertices());
    const std::size_t d = static_cast<std::size_t>(s.inputDim());
    Vector h = s.currentVertices * a;
    h.array() += b;

    std::vector<std::size_t> negative;
    std::vector<std::size_t> positive;
    std::vector<std::size_t> onPlane;
    for ( std::size_t v = 0; v < n; ++v )
    {
        double value = h[static_cast<Index>(v)];
        if ( value < -tolerance )
            negative.push_back(v);
        else if ( value > tolerance )
            positive.push_back(v);
        else
            onPlane.push_back(v);
    }

    SplitResult result;
    if ( positive.empty() )
    {
        result.lower = s;
        return result;
    }
    if ( negative.empty() )
    {
        result.upper = s;
        return result;
    }

    const std::vector<Fvim::Row> facetsOf = s.fvim.vertexFacets();
    std::vector<detail::CutVertex> cuts;
    for ( std::size_t u : negative )
    {
        for ( std::size_t v : positive )
        {
            Fvim::Row shared = facetsOf[u] & facetsOf[v];
            if ( shared.count() + 1 < d )
                continue;
            bool edge = true;
            for ( std::size_t w = 0; w < n && edge; ++w )
                if ( w != u && w != v && shared.is_subset_of(facetsOf[w]) )
                    edge = false;
            if ( !edge )
                continue;
            double hu = h[static_cast<Index>(u)];
            double hv = h[static_cast<Index>(v)];
            cuts.push_back({ u, v, hu / (hu - hv), std::move(shared) });
        }
    }

    Matrix cutInput(static_cast<Index>(cuts.size()), s.inputDim());
    Matrix cutCurrent(static_cast<Index>(cuts.size()), s.currentDim());
    for ( std::size_t k = 0; k < cuts.size(); ++k )
    {
        const auto &cut = cuts[k];
        const Index r = static_cast<Index>(k);
        const Index from = static_cast<Index>(cut.from);
        const Index to = static_cast<Index>(cut.to);
        cutInput.row(r) = s.inputVertices.row(from) + cut.t * (s.inputVertices.row(to) - s.inputVertices.row(from));
        cutCurrent.row(r) =
            s.currentVertices.row(from) + cut.t * (s.currentVertices.row(to) - s.currentVertices.row(from));
    }

    result.lower = detail::buildChild(s, negative, onPlane, cuts, cutInput, cutCurrent);
    result.upper = detail::buildChild(s, positive, onPlane, cuts, cutInput, cutCurrent);
    result.degenerate = (result.lower ? 0 : 1) + (result.upper ? 0 : 1);
    return result;
}

/// Exact ReLU of neuron i: one set when the range of x_i lies on one side of
/// zero, otherwise the two pieces of the cut x_i = 0, with x_i zeroed on the
/// negative piece. Degenerate pieces are dropped and counted in `degenerate`.
inline std::vector<TrackedSet> splitByNeuron(const TrackedSet &s, Index i, std::size_t *degenerate = nullptr)
{
    if ( i < 0 || i >= s.currentDim() )
        throw DimensionError("neuron index out of range");
    Bounds range = dimBounds(s, i);
    std::vector<TrackedSet> out;
    if ( range.ub <= kSignTolerance )
    {
        TrackedSet zeroed = s;
        zeroed.currentVertices.col(i).setZero();
        out.push_back(std::move(zeroed));
        return out;
    }
    if ( range.lb >= -kSignTolerance )
    {
        out.push_back(s);
        return out;
    }

    SplitResult split = splitByHyperplane(s, Vector::Unit(s.currentDim(), i), 0.0);
    if ( degenerate )
        *degenerate += split.degenerate;
    if ( split.lower )
    {
        split.lower->currentVertices.col(i).setZero();
        out.push_back(std::move(*split.lower));
    }
    if ( split.upper )
    {
        // Interpolated vertices sit on the plane up to rounding; pin them.
        auto &col = split.upper->currentVertices;
        for ( Index r = 0; r < col.rows(); ++r )
            if ( std::abs(col(r, i)) <= kSignTolerance )
                col(r, i) = 0.0;
        out.push_back(std::move(*split.upper));
    }
    return out;
}

/// Lists violations of the incidence invariants (vertex and facet degrees,
/// duplicate rows). Empty means consistent.
inline std::vector<std::string> incidenceProblems(const TrackedSet &s)
{
    std::vector<std::string> problems;
    const std::size_t d = static_cast<std::size_t>(s.inputDim());
    if ( s.fvim.numVertices() != static_cast<std::size_t>(s.numVertices()) ||
         s.currentVertices.rows() != s.inputVertices.rows() )
        problems.push_back("vertex counts disagree");
    std::vector<Fvim::Row> columns = s.fvim.vertexFacets();
    for ( std::size_t v = 0; v < columns.size(); ++v )
        if ( columns[v].count() < d )
            problems.push_back("vertex " + std::to_string(v) + " lies on fewer than d facets");
    for ( std::size_t f = 0; f < s.fvim.numFacets(); ++f )
    {
        if ( d >= 2 && s.fvim.facet(f).count() < d )
            problems.push_back("facet " + std::to_string(f) + " has fewer than d vertices");
        for ( std::size_t g = f + 1; g < s.fvim.numFacets(); ++g )
            if ( s.fvim.facet(f) == s.fvim.facet(g) )
                problems.push_back("facets " + std::to_string(f) + " and " + std::to_string(g) + " are identical");
    }
    return problems;
}

/// Plain-text dump: vertices (input | current) followed by the incidence
/// matrix, one facet per line.
inline void dumpTrackedSet(std::ostream &out, const TrackedSet &s)
{
    out << "tracked_set layer=" << s.layerCursor << " vertices=" << s.numVertices()
        << " facets=" << s.fvim.numFacets() << " input_dim=" << s.inputDim() << " current_dim=" << s.currentDim()
        << '\n';
    for ( Index v = 0; v < s.numVertices(); ++v )
    {
        out << "  v" << v << ':';
        for ( Index j = 0; j < s.inputDim(); ++j )
            out << ' ' << s.inputVertices(v, j);
        out << " |";
        for ( Index j = 0; j < s.currentDim(); ++j )
            out << ' ' << s.currentVertices(v, j);
        out << '\n';
    }
    for ( std::size_t f = 0; f < s.fvim.numFacets(); ++f )
    {
        out << "  f" << f << ": ";
        for ( std::size_t v = 0; v < s.fvim.numVertices(); ++v )
            out << (s.fvim.contains(f, v) ? '1' : '0');
        out << '\n';
    }
}

} // namespace nnrepair
