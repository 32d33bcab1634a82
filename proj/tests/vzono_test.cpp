#include "nnrepair/fixtures.hpp"
#include "nnrepair/reach.hpp"
#include "nnrepair/vzono.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace nnrepair;

namespace {

VZono randomZono(std::mt19937_64 &rng, Index d, Index m, Index n)
{
    Matrix c(m, d);
    Matrix v(n, d);
    for ( Index r = 0; r < m; ++r )
        c.row(r) = oracle::gaussian(d, rng).transpose();
    for ( Index r = 0; r < n; ++r )
        v.row(r) = 0.4 * oracle::gaussian(d, rng).transpose();
    return VZono(c, v);
}

VZono triangleZono()
{
    Matrix c(3, 2);
    c << -1, 2, -1, 0, 1, 0;
    return VZono(c, Matrix(0, 2));
}

double enumeratedMax(const VZono &z, const Vector &direction)
{
    double best = -std::numeric_limits<double>::infinity();
    for ( const Vector &p : oracle::enumerate(z) )
        best = std::max(best, p.dot(direction));
    return best;
}

} // namespace

TEST(VZono, FromTrackedCopiesVertices)
{
    TrackedSet square = boxPolytope(Vector::Zero(2), Vector::Ones(2));
    VZono z = fromTracked(square);
    EXPECT_EQ(z.numBaseVertices(), 4);
    EXPECT_EQ(z.numBaseVectors(), 0);

    TrackedSet point;
    point.inputVertices = Matrix::Zero(1, 1);
    point.currentVertices = Matrix::Ones(1, 2);
    point.fvim = Fvim(1);
    EXPECT_EQ(fromTracked(point).numBaseVertices(), 1);

    std::mt19937_64 rng(1);
    Network net = fixtures::randomNetwork({ 2, 5, 3 }, 1);
    for ( const TrackedSet &piece : layerOutput(net, square) )
    {
        VZono pz = fromTracked(piece);
        for ( int k = 0; k < 20; ++k )
        {
            Vector dir = oracle::gaussian(piece.currentDim(), rng);
            EXPECT_DOUBLE_EQ(support(pz, dir), (piece.currentVertices * dir).maxCoeff());
        }
    }
}

TEST(VZono, AffineMapArithmetic)
{
    VZono z((Matrix(1, 2) << 1, 0).finished(), (Matrix(1, 2) << 0, 1).finished());
    VZono same = affineMap(z, Matrix::Identity(2, 2), Vector::Zero(2));
    EXPECT_EQ(same.baseVertices(), z.baseVertices());
    EXPECT_EQ(same.baseVectors(), z.baseVectors());

    Matrix w(2, 2);
    w << 2, 0, 0, 3;
    VZono mapped = affineMap(z, w, Vector::Ones(2));
    EXPECT_EQ(mapped.baseVertices(), (Matrix(1, 2) << 3, 1).finished());
    EXPECT_EQ(mapped.baseVectors(), (Matrix(1, 2) << 0, 3).finished());
}

TEST(VZono, AffineMapSupportDuality)
{
    std::mt19937_64 rng(4);
    for ( int trial = 0; trial < 50; ++trial )
    {
        VZono z = randomZono(rng, 3, 4, 3);
        Matrix w = Matrix::Random(2, 3);
        Vector b = oracle::gaussian(2, rng);
        Vector alpha = oracle::gaussian(2, rng);
        double lhs = support(affineMap(z, w, b), alpha);
        double rhs = support(z, w.transpose() * alpha) + alpha.dot(b);
        EXPECT_NEAR(lhs, rhs, 1e-12);
    }
}

TEST(VZono, NeuronBounds)
{
    VZono cross(Matrix::Zero(1, 2), Matrix::Identity(2, 2));
    EXPECT_EQ(neuronBounds(cross, 0).lb, -1.0);
    EXPECT_EQ(neuronBounds(cross, 0).ub, 1.0);
    EXPECT_EQ(neuronBounds(triangleZono(), 0).lb, -1.0);
    EXPECT_EQ(neuronBounds(triangleZono(), 0).ub, 1.0);

    std::mt19937_64 rng(5);
    for ( int trial = 0; trial < 40; ++trial )
    {
        VZono z = randomZono(rng, 3, 3, static_cast<Index>(trial % 8));
        for ( Index i = 0; i < 3; ++i )
        {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for ( const Vector &p : oracle::enumerate(z) )
            {
                lo = std::min(lo, p[i]);
                hi = std::max(hi, p[i]);
            }
            EXPECT_NEAR(neuronBounds(z, i).lb, lo, 1e-12);
            EXPECT_NEAR(neuronBounds(z, i).ub, hi, 1e-12);
        }
    }
}

TEST(VZono, ReluLiftOnTheTriangle)
{
    VZono lifted = reluLift(triangleZono(), 0, -1.0, 1.0);
    ASSERT_EQ(lifted.dim(), 3);
    EXPECT_EQ(lifted.baseVertices().col(2), (Vector(3) << -0.25, -0.25, 0.75).finished());
    ASSERT_EQ(lifted.numBaseVectors(), 1);
    EXPECT_EQ(lifted.baseVectors().row(0), (Matrix(1, 3) << 0, 0, 0.25).finished());

    VZono projected = reluRelax(triangleZono(), 0, -1.0, 1.0);
    EXPECT_EQ(projected.baseVertices(), (Matrix(3, 2) << -0.25, 2, -0.25, 0, 0.75, 0).finished());
    EXPECT_EQ(projected.baseVectors(), (Matrix(1, 2) << 0.25, 0).finished());
}

TEST(VZono, ReluBandContainsTheEndpoint)
{
    const double lb = -2.0;
    const double ub = 3.0;
    const double slope = ub / (ub - lb);
    const double offset = -ub * lb / (2.0 * (ub - lb));
    double low = slope * lb + offset - offset;
    double high = slope * lb + offset + offset;
    EXPECT_NEAR(low, ub * lb / (ub - lb), 1e-15);
    EXPECT_NEAR(high, 0.0, 1e-15);
    EXPECT_THROW(reluRelax(triangleZono(), 0, 0.5, 1.0), ContractError);
}

TEST(VZono, ReluRelaxContainsRectifiedPoints)
{
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> coin(0, 1);
    for ( int trial = 0; trial < 30; ++trial )
    {
        VZono z = randomZono(rng, 3, 3, 4);
        const Index i = trial % 3;
        Bounds range = neuronBounds(z, i);
        if ( !(range.lb < 0.0 && range.ub > 0.0) )
            continue;
        const double slope = range.ub / (range.ub - range.lb);
        const double offset = -range.ub * range.lb / (2.0 * (range.ub - range.lb));
        VZono relaxed = reluRelax(z, i, range.lb, range.ub);
        for ( int s = 0; s < 1000; ++s )
        {
            Index c = static_cast<Index>(s % z.numBaseVertices());
            Vector p = z.baseVertices().row(c).transpose();
            for ( Index j = 0; j < z.numBaseVectors(); ++j )
                p += (coin(rng) ? 1.0 : -1.0) * z.baseVectors().row(j).transpose();
            double rectified = std::max(0.0, p[i]);
            EXPECT_GE(rectified, slope * p[i] + offset - offset - 1e-12);
            EXPECT_LE(rectified, slope * p[i] + offset + offset + 1e-12);
            // The rectified point lies in the relaxed set: check every direction
            // it could violate through the support function.
            Vector q = p;
            q[i] = rectified;
            for ( int k = 0; k < 5; ++k )
            {
                Vector dir = oracle::gaussian(3, rng);
                EXPECT_GE(support(relaxed, dir), q.dot(dir) - 1e-9);
            }
        }
    }
}

TEST(VZono, ReluLayerBranches)
{
    VZono positive((Matrix(2, 2) << 1, 2, 3, 4).finished(), (Matrix(1, 2) << 0.5, 0.5).finished());
    VZono same = reluLayer(positive);
    EXPECT_EQ(same.baseVertices(), positive.baseVertices());
    EXPECT_EQ(same.baseVectors(), positive.baseVectors());

    VZono negative((Matrix(2, 2) << -1, -2, -3, -4).finished(), (Matrix(1, 2) << 0.5, 0.5).finished());
    VZono zero = reluLayer(negative);
    EXPECT_TRUE(zero.baseVertices().isZero(0.0));
    EXPECT_TRUE(zero.baseVectors().isZero(0.0));

    // x0 spans zero, x1 is nonnegative: only the first neuron is relaxed.
    VZono mixed = reluLayer(triangleZono());
    VZono byHand = reluRelax(triangleZono(), 0, -1.0, 1.0);
    EXPECT_EQ(mixed.baseVertices(), byHand.baseVertices());
    EXPECT_EQ(mixed.baseVectors(), byHand.baseVectors());
}

TEST(VZono, ConstraintMinimum)
{
    VZono cross(Matrix::Zero(1, 2), Matrix::Identity(2, 2));
    EXPECT_EQ(constraintMin(cross, Vector::Ones(2), 0.0), -2.0);
    std::mt19937_64 rng(7);
    VZono z = randomZono(rng, 3, 4, 5);
    EXPECT_EQ(constraintMin(z, Vector::Zero(3), 1.5), 1.5);
    for ( int trial = 0; trial < 20; ++trial )
    {
        VZono r = randomZono(rng, 3, 3, static_cast<Index>(trial % 11));
        Vector alpha = oracle::gaussian(3, rng);
        double best = std::numeric_limits<double>::infinity();
        for ( const Vector &p : oracle::enumerate(r) )
            best = std::min(best, alpha.dot(p) + 0.25);
        EXPECT_NEAR(constraintMin(r, alpha, 0.25), best, 1e-12);
        EXPECT_NEAR(support(r, alpha), enumeratedMax(r, alpha), 1e-12);
    }
}

TEST(VZono, ProvableSafety)
{
    UnsafeDomain u;
    u.constraints.push_back({ (Vector(2) << 1, 0).finished(), -5.0 });
    VZono far((Matrix(1, 2) << 6, 0).finished(), (Matrix(1, 2) << 0.5, 0).finished());
    EXPECT_TRUE(isProvablySafe(far, u));
    VZono witness((Matrix(1, 2) << 5.2, 0).finished(), (Matrix(1, 2) << 0.5, 0).finished());
    EXPECT_FALSE(isProvablySafe(witness, u));

    // Output 0 is strictly larger than every other output across the set.
    UnsafeDomain minimum = minimumOutputDomain(5, 0);
    Matrix c(2, 5);
    c << 3, 0, 1, 2, 1, 3.5, 1, 0, 1, 2;
    VZono separated(c, (Matrix(1, 5) << 0.1, 0.1, 0.1, 0.1, 0.1).finished());
    EXPECT_TRUE(isProvablySafe(separated, minimum));
    c(0, 0) = 0.0; // row 0 now lies inside the domain
    EXPECT_FALSE(isProvablySafe(VZono(c, Matrix(0, 5)), minimum));
    EXPECT_THROW(isProvablySafe(far, UnsafeDomain{}), ContractError);
}

TEST(VZono, ReducedBaseVerticesStaySound)
{
    std::mt19937_64 rng(8);
    VZono z = randomZono(rng, 3, 40, 2);
    VZono reduced = reduceBaseVertices(z, 8);
    EXPECT_EQ(reduced.numBaseVertices(), 1);
    for ( int k = 0; k < 100; ++k )
    {
        Vector dir = oracle::gaussian(3, rng);
        EXPECT_GE(support(reduced, dir), support(z, dir) - 1e-12);
    }
    EXPECT_EQ(reduceBaseVertices(z, 40).numBaseVertices(), 40);
}

TEST(VZono, OutputOverapproxIsExactWithoutSpanningNeurons)
{
    // Positive weights and biases on a positive box: no neuron ever spans zero.
    Network raw = fixtures::randomNetwork({ 2, 4, 3 }, 3);
    std::vector<Layer> layers = raw.layers();
    for ( Layer &layer : layers )
    {
        layer.weights = layer.weights.cwiseAbs();
        layer.bias = layer.bias.cwiseAbs();
    }
    Network net(layers);
    TrackedSet box = boxPolytope(Vector::Zero(2), Vector::Ones(2));
    VZono z = outputOverapprox(net, box);
    std::mt19937_64 rng(9);
    Matrix images(4, 3);
    for ( Index v = 0; v < 4; ++v )
        images.row(v) = net.forward(box.inputVertices.row(v).transpose()).transpose();
    for ( int k = 0; k < 30; ++k )
    {
        Vector dir = oracle::gaussian(3, rng);
        EXPECT_NEAR(support(z, dir), (images * dir).maxCoeff(), 1e-9);
    }

    // At the last layer only the affine map remains.
    TrackedSet atLast = affineMap(box, net.layer(0).weights, net.layer(0).bias);
    atLast.currentVertices = atLast.currentVertices.cwiseMax(0.0);
    atLast.layerCursor = 1;
    VZono last = outputOverapprox(net, atLast);
    EXPECT_EQ(last.numBaseVectors(), 0);
    EXPECT_LE((last.baseVertices() - images).cwiseAbs().maxCoeff(), 1e-12);
}
