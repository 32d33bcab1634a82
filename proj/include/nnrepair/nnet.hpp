#pragma once

// Reader and writer for the NNet text format used by the ACAS Xu family of
// benchmark networks:
//
//   // comment lines
//   numLayers, inputSize, outputSize, maxLayerSize,
//   size_0, size_1, ..., size_numLayers,
//   0,                                  (legacy symmetric flag)
//   min_0, ..., min_{in-1},
//   max_0, ..., max_{in-1},
//   mean_0, ..., mean_{in-1}, mean_out,
//   range_0, ..., range_{in-1}, range_out,
//   then per layer: size_{k+1} weight rows of size_k values, size_{k+1} bias rows.
//
// Hidden layers are ReLU, the last layer is identity.

#include "nnrepair/error.hpp"
#include "nnrepair/model.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace nnrepair {

namespace detail {

class NnetLineReader
{
public:
    NnetLineReader(std::istream &in, std::string source)
        : _in(in)
        , _source(std::move(source))
    {
    }

    // Next non-comment, non-blank line split on commas. Empty trailing
    // fields are dropped.
    std::vector<double> numbers(std::size_t expected, const char *what)
    {
        std::string line;
        while ( std::getline(_in, line) )
        {
            ++_line;
            std::string_view view(line);
            while ( !view.empty() && std::isspace(static_cast<unsigned char>(view.front())) )
                view.remove_prefix(1);
            if ( view.empty() || view.starts_with("//") )
                continue;
            std::vector<double> values = parse(view);
            if ( expected != 0 && values.size() != expected )
                fail(std::string(what) + ": expected " + std::to_string(expected) + " values, found " +
                     std::to_string(values.size()));
            return values;
        }
        throw NnetParseError(_source, 0, std::string("unexpected end of file while reading ") + what);
    }

    [[noreturn]] void fail(const std::string &message) const { throw NnetParseError(_source, _line, message); }

private:
    std::vector<double> parse(std::string_view view) const
    {
        std::vector<double> values;
        while ( !view.empty() )
        {
            std::size_t comma = view.find(',');
            std::string_view field = view.substr(0, comma);
            while ( !field.empty() && std::isspace(static_cast<unsigned char>(field.front())) )
                field.remove_prefix(1);
            while ( !field.empty() && std::isspace(static_cast<unsigned char>(field.back())) )
                field.remove_suffix(1);
            if ( !field.empty() )
            {
                if ( field.front() == '+' )
                    field.remove_prefix(1);
                double value = 0.0;
                auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
                if ( ec != std::errc() || ptr != field.data() + field.size() )
                    fail("non-numeric token '" + std::string(field) + "'");
                values.push_back(value);
            }
            else if ( comma != std::string_view::npos && comma + 1 < view.size() )
            {
                fail("empty field");
            }
            if ( comma == std::string_view::npos )
                break;
            view.remove_prefix(comma + 1);
        }
        return values;
    }

    std::istream &_in;
    std::string _source;
    std::size_t _line = 0;
};

inline std::size_t asCount(double value, NnetLineReader &reader, const char *what)
{
    if ( value < 1 || value != static_cast<double>(static_cast<long long>(value)) )
        reader.fail(std::string(what) + " must be a positive integer");
    return static_cast<std::size_t>(value);
}

} // namespace detail

inline Network parseNnet(std::istream &in, const std::string &source = "<nnet>")
{
    detail::NnetLineReader reader(in, source);

    std::vector<double> header = reader.numbers(4, "header");
    std::size_t numLayers = detail::asCount(header[0], reader, "layer count");
    std::size_t inputSize = detail::asCount(header[1], reader, "input size");
    std::size_t outputSize = detail::asCount(header[2], reader, "output size");

    std::vector<double> sizeValues = reader.numbers(numLayers + 1, "layer sizes");
    std::vector<std::size_t> sizes;
    for ( double v : sizeValues )
        sizes.push_back(detail::asCount(v, reader, "layer size"));
    if ( sizes.front() != inputSize || sizes.back() != outputSize )
        reader.fail("layer sizes disagree with declared input/output sizes");

    reader.numbers(0, "symmetric flag");
    Normalization norm;
    auto toVector = [](const std::vector<double> &v) { return Vector(Eigen::Map<const Vector>(v.data(), v.size())); };
    norm.mins = toVector(reader.numbers(inputSize, "input minimums"));
    norm.maxes = toVector(reader.numbers(inputSize, "input maximums"));
    norm.means = toVector(reader.numbers(inputSize + 1, "means"));
    norm.ranges = toVector(reader.numbers(inputSize + 1, "ranges"));

    std::vector<Layer> layers;
    for ( std::size_t k = 0; k < numLayers; ++k )
    {
        Layer layer;
        const std::size_t rows = sizes[k + 1];
        const std::size_t cols = sizes[k];
        layer.weights.resize(rows, cols);
        layer.bias.resize(rows);
        for ( std::size_t r = 0; r < rows; ++r )
        {
            std::vector<double> row = reader.numbers(cols, "weight row");
            for ( std::size_t c = 0; c < cols; ++c )
                layer.weights(r, c) = row[c];
        }
        for ( std::size_t r = 0; r < rows; ++r )
            layer.bias[r] = reader.numbers(1, "bias")[0];
        layer.activation = k + 1 == numLayers ? Activation::Identity : Activation::Relu;
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers), std::move(norm));
}

inline Network loadNnet(const std::string &path)
{
    std::ifstream in(path);
    if ( !in )
        throw Error("cannot open NNet file '" + path + "'");
    return parseNnet(in, path);
}

namespace detail {

inline std::string formatDouble(double value)
{
    char buffer[64];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

inline void writeRow(std::ostream &out, const Vector &v)
{
    for ( Index i = 0; i < v.size(); ++i )
        out << formatDouble(v[i]) << ',';
    out << '\n';
}

} // namespace detail

/// Writes shortest round-trip decimals, so a reload reproduces every weight
/// bit for bit.
inline void writeNnet(std::ostream &out, const Network &net, const std::string &comment = "")
{
    out << "// " << (comment.empty() ? "Neural network in NNet format" : comment) << '\n';
    std::size_t maxSize = static_cast<std::size_t>(net.inputDim());
    for ( const Layer &layer : net.layers() )
        maxSize = std::max(maxSize, static_cast<std::size_t>(layer.outputDim()));
    out << net.numLayers() << ',' << net.inputDim() << ',' << net.outputDim() << ',' << maxSize << ",\n";
    out << net.inputDim() << ',';
    for ( const Layer &layer : net.layers() )
        out << layer.outputDim() << ',';
    out << "\n0,\n";
    const Normalization &norm = net.normalization();
    detail::writeRow(out, norm.mins);
    detail::writeRow(out, norm.maxes);
    detail::writeRow(out, norm.means);
    detail::writeRow(out, norm.ranges);
    for ( const Layer &layer : net.layers() )
    {
        for ( Index r = 0; r < layer.weights.rows(); ++r )
            detail::writeRow(out, layer.weights.row(r).transpose());
        for ( Index r = 0; r < layer.bias.size(); ++r )
            out << detail::formatDouble(layer.bias[r]) << ",\n";
    }
}

inline void saveNnet(const std::string &path, const Network &net, const std::string &comment = "")
{
    std::ofstream out(path);
    if ( !out )
        throw Error("cannot write NNet file '" + path + "'");
    writeNnet(out, net, comment);
    if ( !out )
        throw Error("failed writing NNet file '" + path + "'");
}

} // namespace nnrepair
