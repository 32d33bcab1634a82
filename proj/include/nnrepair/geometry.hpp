#pragma once

#include "nnrepair/fvim.hpp"
#include "nnrepair/model.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace nnrepair {

/// H-representation A x <= b with unit-norm rows.
struct Halfspaces
{
    Matrix a;
    Vector b;

    bool contains(const Vector &x, double tolerance = 1e-9) const
    {
        if ( a.rows() == 0 )
            return true;
        return ((a * x - b).array() <= tolerance).all();
    }
};

/// Facet hyperplanes of a full-dimensional polytope given as vertices plus
/// incidence. Each facet plane is fitted through its incident vertices and
/// oriented so that the vertex centroid lies inside.
inline Halfspaces facetHalfspaces(const Fvim &fvim, const Matrix &vertices)
{
    const Index d = vertices.cols();
    const Vector centroid = vertices.colwise().mean().transpose();
    Halfspaces h;
    h.a.resize(static_cast<Index>(fvim.numFacets()), d);
    h.b.resize(static_cast<Index>(fvim.numFacets()));
    for ( std::size_t f = 0; f < fvim.numFacets(); ++f )
    {
        const Fvim::Row &row = fvim.facet(f);
        Matrix points(static_cast<Index>(row.count()), d);
        Index k = 0;
        for ( std::size_t v = row.find_first(); v != Fvim::Row::npos; v = row.find_next(v) )
            points.row(k++) = vertices.row(static_cast<Index>(v));
        const Vector mean = points.colwise().mean().transpose();
        Matrix centered = points.rowwise() - mean.transpose();
        // Pad with a zero row so the SVD always exposes d right singular vectors.
        Matrix padded = Matrix::Zero(std::max<Index>(centered.rows(), d), d);
        padded.topRows(centered.rows()) = centered;
        Eigen::JacobiSVD<Matrix> svd(padded, Eigen::ComputeFullV);
        Vector normal = svd.matrixV().col(d - 1);
        double offset = normal.dot(mean);
        if ( normal.dot(centroid) > offset )
        {
            normal = -normal;
            offset = -offset;
        }
        h.a.row(static_cast<Index>(f)) = normal.transpose();
        h.b[static_cast<Index>(f)] = offset;
    }
    return h;
}

/// Convex hull of 2-d points (Andrew's monotone chain), counter-clockwise,
/// without repeating the first point.
inline std::vector<std::pair<double, double>> convexHull2d(std::vector<std::pair<double, double>> points)
{
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if ( points.size() < 3 )
        return points;
    auto cross = [](const auto &o, const auto &a, const auto &b) {
        return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * points.size());
    std::size_t k = 0;
    for ( const auto &p : points )
    {
        while ( k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0 )
            --k;
        hull[k++] = p;
    }
    for ( std::size_t i = points.size() - 1, lower = k + 1; i-- > 0; )
    {
        while ( k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0 )
            --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);
    return hull;
}

/// 2-d projection polygon of a vertex matrix on columns (i, j).
inline std::vector<std::pair<double, double>> projectionPolygon(const Matrix &vertices, Index i, Index j)
{
    std::vector<std::pair<double, double>> points;
    points.reserve(static_cast<std::size_t>(vertices.rows()));
    for ( Index r = 0; r < vertices.rows(); ++r )
        points.emplace_back(vertices(r, i), vertices(r, j));
    return convexHull2d(std::move(points));
}

/// Row permutation that sorts rows lexicographically.
inline std::vector<Index> lexicographicRowOrder(const Matrix &m)
{
    std::vector<Index> order(static_cast<std::size_t>(m.rows()));
    for ( Index r = 0; r < m.rows(); ++r )
        order[static_cast<std::size_t>(r)] = r;
    std::sort(order.begin(), order.end(), [&m](Index x, Index y) {
        for ( Index c = 0; c < m.cols(); ++c )
            if ( m(x, c) != m(y, c) )
                return m(x, c) < m(y, c);
        return false;
    });
    return order;
}

inline Matrix permuteRows(const Matrix &m, const std::vector<Index> &order)
{
    Matrix out(m.rows(), m.cols());
    for ( std::size_t r = 0; r < order.size(); ++r )
        out.row(static_cast<Index>(r)) = m.row(order[r]);
    return out;
}

/// Lexicographic order on matrices: shape first, then entries row-major.
inline bool lexicographicLess(const Matrix &x, const Matrix &y)
{
    if ( x.rows() != y.rows() )
        return x.rows() < y.rows();
    if ( x.cols() != y.cols() )
        return x.cols() < y.cols();
    for ( Index r = 0; r < x.rows(); ++r )
        for ( Index c = 0; c < x.cols(); ++c )
            if ( x(r, c) != y(r, c) )
                return x(r, c) < y(r, c);
    return false;
}

} // namespace nnrepair
