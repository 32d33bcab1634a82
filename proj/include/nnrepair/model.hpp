#pragma once

#include "nnrepair/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nnrepair {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { Relu, Identity };

/// One dense layer: y = act(W x + b). W has shape (out, in).
struct Layer
{
    Matrix weights;
    Vector bias;
    Activation activation = Activation::Relu;

    Index inputDim() const { return weights.cols(); }
    Index outputDim() const { return weights.rows(); }

    Vector apply(const Vector &x) const
    {
        Vector z = weights * x + bias;
        if ( activation == Activation::Relu )
            z = z.cwiseMax(0.0);
        return z;
    }
};

/// Input normalization constants as stored in NNet files. `means` and
/// `ranges` carry one extra trailing entry for the outputs.
struct Normalization
{
    Vector mins;
    Vector maxes;
    Vector means;
    Vector ranges;
};

/// Feed-forward ReLU network. Immutable once built; training returns a new
/// value.
class Network
{
public:
    Network() = default;

    explicit Network(std::vector<Layer> layers, Normalization norm = {})
        : _layers(std::move(layers))
        , _norm(std::move(norm))
    {
        if ( _layers.empty() )
            throw DimensionError("network needs at least one layer");
        for ( std::size_t k = 0; k < _layers.size(); ++k )
        {
            const Layer &layer = _layers[k];
            if ( layer.weights.rows() == 0 || layer.weights.cols() == 0 )
                throw DimensionError("layer " + std::to_string(k) + " has an empty weight matrix");
            if ( layer.bias.size() != layer.weights.rows() )
                throw DimensionError("layer " + std::to_string(k) + " bias length does not match weight rows");
            if ( k > 0 && layer.inputDim() != _layers[k - 1].outputDim() )
                throw DimensionError("layer " + std::to_string(k) + " input width does not chain with layer " +
                                     std::to_string(k - 1));
            if ( k + 1 < _layers.size() && layer.activation != Activation::Relu )
                throw DimensionError("only the last layer may use the identity activation");
        }
        if ( _norm.mins.size() == 0 )
            _norm = identityNormalization(inputDim());
    }

    const std::vector<Layer> &layers() const { return _layers; }
    const Layer &layer(std::size_t k) const { return _layers.at(k); }
    std::size_t numLayers() const { return _layers.size(); }
    Index inputDim() const { return _layers.front().inputDim(); }
    Index outputDim() const { return _layers.back().outputDim(); }
    const Normalization &normalization() const { return _norm; }

    std::size_t parameterCount() const
    {
        std::size_t count = 0;
        for ( const Layer &layer : _layers )
            count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
        return count;
    }

    Vector forward(const Vector &x) const
    {
        if ( x.size() != inputDim() )
            throw DimensionError("forward: expected " + std::to_string(inputDim()) + " inputs, got " +
                                 std::to_string(x.size()));
        return forwardFrom(0, x);
    }

    /// Evaluates layers [first, end) on a value that is already the input to
    /// layer `first`.
    Vector forwardFrom(std::size_t first, const Vector &h) const
    {
        Vector value = h;
        for ( std::size_t k = first; k < _layers.size(); ++k )
        {
            if ( value.size() != _layers[k].inputDim() )
                throw DimensionError("forward: width mismatch at layer " + std::to_string(k));
            value = _layers[k].apply(value);
        }
        return value;
    }

    /// Evaluates on raw (unnormalized) inputs, clamping to [mins, maxes] and
    /// undoing the output normalization, as the NNet convention prescribes.
    Vector forwardRaw(const Vector &raw) const
    {
        const Index n = inputDim();
        Vector x(n);
        for ( Index i = 0; i < n; ++i )
        {
            double v = std::clamp(raw[i], _norm.mins[i], _norm.maxes[i]);
            x[i] = (v - _norm.means[i]) / _norm.ranges[i];
        }
        Vector y = forward(x);
        return y.array() * _norm.ranges[n] + _norm.means[n];
    }

    Network withLayers(std::vector<Layer> layers) const { return Network(std::move(layers), _norm); }

    static Normalization identityNormalization(Index inputs)
    {
        Normalization norm;
        norm.mins = Vector::Constant(inputs, -std::numeric_limits<double>::max());
        norm.maxes = Vector::Constant(inputs, std::numeric_limits<double>::max());
        norm.means = Vector::Zero(inputs + 1);
        norm.ranges = Vector::Ones(inputs + 1);
        return norm;
    }

private:
    std::vector<Layer> _layers;
    Normalization _norm;
};

/// Index of the largest entry; ties go to the lowest index.
inline Index argmax(const Vector &v)
{
    Index best = 0;
    for ( Index i = 1; i < v.size(); ++i )
        if ( v[i] > v[best] )
            best = i;
    return best;
}

struct LabeledDataset
{
    std::vector<Vector> inputs;
    std::vector<Vector> targets;
    // Empty means "argmax of the target".
    std::vector<Index> labels;

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }

    Index label(std::size_t i) const { return labels.empty() ? argmax(targets[i]) : labels[i]; }

    void add(Vector x, Vector y)
    {
        if ( !labels.empty() )
            labels.push_back(argmax(y));
        inputs.push_back(std::move(x));
        targets.push_back(std::move(y));
    }

    void validate(Index inputDim, Index outputDim) const
    {
        if ( targets.size() != inputs.size() || (!labels.empty() && labels.size() != inputs.size()) )
            throw DimensionError("dataset columns have different lengths");
        for ( std::size_t i = 0; i < inputs.size(); ++i )
        {
            if ( inputs[i].size() != inputDim )
                throw DimensionError("dataset input " + std::to_string(i) + " has wrong width");
            if ( targets[i].size() != outputDim )
                throw DimensionError("dataset target " + std::to_string(i) + " has wrong width");
        }
    }
};

struct TrainConfig
{
    double learningRate = 0.01;
    std::size_t batchSize = 16;
    std::size_t epochsPerIteration = 10;
    std::uint64_t seed = 0;
};

/// Parameter-shaped container for gradients.
struct Gradients
{
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static Gradients zerosLike(const Network &net)
    {
        Gradients g;
        for ( const Layer &layer : net.layers() )
        {
            g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
            g.biases.push_back(Vector::Zero(layer.bias.size()));
        }
        return g;
    }
};

/// Mean-squared error over the listed samples:
/// (1 / (B * outputDim)) * sum_b ||f(x_b) - y_b||^2.
/// When `grad` is non-null it receives d(loss)/d(parameters).
inline double batchLoss(const Network &net,
                        const LabeledDataset &data,
                        std::span<const std::size_t> indices,
                        Gradients *grad = nullptr)
{
    const std::size_t numLayers = net.numLayers();
    const double scale = 1.0 / (static_cast<double>(indices.size()) * static_cast<double>(net.outputDim()));
    if ( grad )
        *grad = Gradients::zerosLike(net);

    double loss = 0.0;
    std::vector<Vector> activations(numLayers + 1);
    std::vector<Vector> preActivations(numLayers);
    for ( std::size_t idx : indices )
    {
        activations[0] = data.inputs[idx];
        for ( std::size_t k = 0; k < numLayers; ++k )
        {
            const Layer &layer = net.layer(k);
            preActivations[k] = layer.weights * activations[k] + layer.bias;
            activations[k + 1] = layer.activation == Activation::Relu ? Vector(preActivations[k].cwiseMax(0.0))
                                                                      : preActivations[k];
        }
        Vector residual = activations[numLayers] - data.targets[idx];
        loss += residual.squaredNorm();
        if ( !grad )
            continue;

        Vector delta = 2.0 * scale * residual;
        for ( std::size_t k = numLayers; k-- > 0; )
        {
            const Layer &layer = net.layer(k);
            if ( layer.activation == Activation::Relu )
                delta = delta.cwiseProduct((preActivations[k].array() > 0.0).cast<double>().matrix());
            grad->weights[k].noalias() += delta * activations[k].transpose();
            grad->biases[k] += delta;
            if ( k > 0 )
                delta = layer.weights.transpose() * delta;
        }
    }
    return loss * scale;
}

inline double datasetLoss(const Network &net, const LabeledDataset &data)
{
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    return batchLoss(net, data, all);
}

/// Minibatch SGD on mean-squared error. Deterministic for a fixed seed.
/// `epochLosses`, when given, receives the full-dataset loss after each epoch.
inline Network train(const Network &net,
                     const LabeledDataset &data,
                     const TrainConfig &cfg,
                     std::vector<double> *epochLosses = nullptr)
{
    if ( data.empty() )
        throw Error("train: empty dataset");
    if ( !(cfg.learningRate > 0.0) || cfg.batchSize == 0 )
        throw ContractError("train: learning rate must be positive and batch size at least 1");
    data.validate(net.inputDim(), net.outputDim());

    std::vector<Layer> layers = net.layers();
    Network current = net;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::size_t batchCounter = 0;
    Gradients grad;
    for ( std::size_t epoch = 0; epoch < cfg.epochsPerIteration; ++epoch )
    {
        std::shuffle(order.begin(), order.end(), rng);
        for ( std::size_t start = 0; start < order.size(); start += cfg.batchSize, ++batchCounter )
        {
            std::size_t stop = std::min(order.size(), start + cfg.batchSize);
            std::span<const std::size_t> batch(order.data() + start, stop - start);
            double loss = batchLoss(current, data, batch, &grad);
            if ( !std::isfinite(loss) )
                throw TrainingError("train: non-finite loss", batchCounter);
            for ( std::size_t k = 0; k < layers.size(); ++k )
            {
                layers[k].weights -= cfg.learningRate * grad.weights[k];
                layers[k].bias -= cfg.learningRate * grad.biases[k];
            }
            current = net.withLayers(layers);
        }
        if ( epochLosses )
            epochLosses->push_back(datasetLoss(current, data));
    }
    return current;
}

/// Fraction of samples whose argmax output equals the label.
inline double accuracy(const Network &net, const LabeledDataset &data)
{
    if ( data.empty() )
        throw Error("accuracy: empty dataset");
    std::size_t hits = 0;
    for ( std::size_t i = 0; i < data.size(); ++i )
        if ( argmax(net.forward(data.inputs[i])) == data.label(i) )
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

} // namespace nnrepair
