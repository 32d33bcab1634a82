#pragma once

// Seeded generators for desk-scale networks, properties and datasets.

#include "nnrepair/model.hpp"
#include "nnrepair/property.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace nnrepair::fixtures {

/// Dense ReLU network with the given widths (input first, output last) and
/// Gaussian weights of standard deviation `scale / sqrt(fan_in)`.
inline Network randomNetwork(const std::vector<Index> &widths, std::uint64_t seed, double scale = 1.0,
                             double biasScale = 0.3)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Layer> layers;
    for ( std::size_t k = 0; k + 1 < widths.size(); ++k )
    {
        Layer layer;
        layer.weights.resize(widths[k + 1], widths[k]);
        layer.bias.resize(widths[k + 1]);
        const double std = scale / std::sqrt(static_cast<double>(widths[k]));
        for ( Index r = 0; r < layer.weights.rows(); ++r )
            for ( Index c = 0; c < layer.weights.cols(); ++c )
                layer.weights(r, c) = std * gauss(rng);
        for ( Index r = 0; r < layer.bias.size(); ++r )
            layer.bias[r] = biasScale * gauss(rng);
        layer.activation = k + 2 == widths.size() ? Activation::Identity : Activation::Relu;
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
}

inline LabeledDataset sampleDataset(const Network &teacher, const Vector &lb, const Vector &ub, std::size_t count,
                                    std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    LabeledDataset data;
    for ( std::size_t s = 0; s < count; ++s )
    {
        Vector x(lb.size());
        for ( Index i = 0; i < lb.size(); ++i )
            x[i] = lb[i] + unit(rng) * (ub[i] - lb[i]);
        Vector y = teacher.forward(x);
        data.labels.push_back(argmax(y));
        data.inputs.push_back(std::move(x));
        data.targets.push_back(std::move(y));
    }
    return data;
}

// HorizontalCAS input ranges: rho (ft), theta (rad), psi (rad), v_own, v_int.
inline Vector hcasInputLb()
{
    return (Vector(5) << 0.0, -std::numbers::pi, -std::numbers::pi, 100.0, 0.0).finished();
}

inline Vector hcasInputUb()
{
    return (Vector(5) << 56000.0, std::numbers::pi, std::numbers::pi, 1000.0, 1000.0).finished();
}

/// Normalization centring each input range and scaling it to unit width.
inline Normalization hcasNormalization()
{
    Normalization norm;
    norm.mins = hcasInputLb();
    norm.maxes = hcasInputUb();
    norm.means.resize(6);
    norm.ranges.resize(6);
    norm.means.head(5) = 0.5 * (hcasInputLb() + hcasInputUb());
    norm.ranges.head(5) = hcasInputUb() - hcasInputLb();
    norm.means[5] = 0.0;
    norm.ranges[5] = 1.0;
    return norm;
}

/// 5-input, 5-output random network carrying HorizontalCAS normalization.
inline Network hcasStyleNetwork(std::uint64_t seed, const std::vector<Index> &hidden = { 8, 8 })
{
    std::vector<Index> widths = { 5 };
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(5);
    Network raw = randomNetwork(widths, seed, 1.5);
    return Network(raw.layers(), hcasNormalization());
}

/// The three HorizontalCAS properties, expressed in normalized input space.
/// All share the unsafe domain "clear-of-conflict (output 0) is the minimum".
/// The point constraint psi = 0 of the third property is widened to the slab
/// |psi| <= psiHalfWidth so the box stays full-dimensional.
inline std::vector<SafetyProperty> hcasProperties(const Normalization &norm, double psiHalfWidth = 1e-3)
{
    const double pi = std::numbers::pi;
    struct RawBox
    {
        const char *name;
        Vector lb;
        Vector ub;
    };
    std::vector<RawBox> boxes = {
        { "property1", (Vector(5) << 50000, -pi, -pi, 900, 0).finished(),
          (Vector(5) << 56000, pi, pi, 1000, 60).finished() },
        { "property2", (Vector(5) << 1500, -0.06, 3.10, 880, 860).finished(),
          (Vector(5) << 1800, 0.06, pi, 1000, 1000).finished() },
        { "property3", (Vector(5) << 1500, -0.06, -psiHalfWidth, 900, 700).finished(),
          (Vector(5) << 1800, 0.06, psiHalfWidth, 1000, 1000).finished() },
    };
    std::vector<SafetyProperty> out;
    for ( const RawBox &box : boxes )
    {
        SafetyProperty p;
        p.name = box.name;
        p.inputLb = (box.lb - norm.means.head(5)).cwiseQuotient(norm.ranges.head(5));
        p.inputUb = (box.ub - norm.means.head(5)).cwiseQuotient(norm.ranges.head(5));
        p.unsafe = minimumOutputDomain(5, 0);
        out.push_back(std::move(p));
    }
    return out;
}

/// Small repair scenario on [-1, 1]^2. The teacher computes y = ReLU(x + 1),
/// so its label is the larger input coordinate. The candidate adds 0.2 to the
/// second output: it still agrees with the teacher away from the diagonal but
/// maps a corner of the property box into {y0 <= y1}.
struct ToyRepairCase
{
    Network teacher;
    Network candidate;
    SafetyProperty property;
    LabeledDataset train;
    LabeledDataset test;
};

inline ToyRepairCase toyRepairCase(std::uint64_t seed = 7)
{
    Layer hidden;
    hidden.weights = Matrix::Identity(2, 2);
    hidden.bias = Vector::Ones(2);
    Layer output;
    output.weights = Matrix::Identity(2, 2);
    output.bias = Vector::Zero(2);
    output.activation = Activation::Identity;

    ToyRepairCase c;
    c.teacher = Network({ hidden, output });
    Layer biased = output;
    biased.bias[1] = 0.2;
    c.candidate = Network({ hidden, biased });

    // Teacher margin y0 - y1 = x0 - x1 lies in [0.1, 0.6] here.
    c.property.name = "toy";
    c.property.inputLb = (Vector(2) << 0.1, -0.2).finished();
    c.property.inputUb = (Vector(2) << 0.4, 0.0).finished();
    c.property.unsafe = minimumOutputDomain(2, 0);

    Vector lb = Vector::Constant(2, -1.0);
    Vector ub = Vector::Constant(2, 1.0);
    c.train = sampleDataset(c.teacher, lb, ub, 200, seed);
    c.test = sampleDataset(c.teacher, lb, ub, 1000, seed + 1);
    return c;
}

/// A network that is safe with a wide margin everywhere except a thin slab
/// x0 >= 0.9 of the box [-1, 1]^d: one hidden unit carries ReLU(x0 - 0.9)
/// through every layer into a steep negative output term, the remaining
/// units are random and only weakly coupled to the output. The unsafe domain
/// is {y0 <= y1}.
struct PruningBenchmark
{
    Network net;
    SafetyProperty property;
};

inline PruningBenchmark pruningBenchmark(std::uint64_t seed = 11, Index inputs = 2, Index width = 8,
                                         std::size_t hiddenLayers = 2)
{
    std::vector<Index> widths = { inputs };
    for ( std::size_t k = 0; k < hiddenLayers; ++k )
        widths.push_back(width);
    widths.push_back(2);
    Network random = randomNetwork(widths, seed, 2.0, 0.2);
    std::vector<Layer> layers = random.layers();

    // Unit 0 of every hidden layer carries ReLU(x0 - 0.9).
    layers[0].weights.row(0).setZero();
    layers[0].weights(0, 0) = 1.0;
    layers[0].bias[0] = -0.9;
    for ( std::size_t k = 1; k < hiddenLayers; ++k )
    {
        layers[k].weights.row(0).setZero();
        layers[k].weights.col(0).setZero();
        layers[k].weights(0, 0) = 1.0;
        layers[k].bias[0] = 0.0;
    }
    Layer &out = layers.back();
    out.weights *= 0.02;
    out.weights(0, 0) = -40.0;
    out.weights(1, 0) = 0.0;
    out.bias[0] = 1.0;
    out.bias[1] = 0.0;

    PruningBenchmark b{ Network(std::move(layers)), {} };
    b.property.name = "slab";
    b.property.inputLb = Vector::Constant(inputs, -1.0);
    b.property.inputUb = Vector::Constant(inputs, 1.0);
    b.property.unsafe = minimumOutputDomain(2, 0);
    return b;
}

} // namespace nnrepair::fixtures
