#pragma once

// JSON encodings for properties, datasets, reachability results and repair
// reports.
//
// Property file: either a list of properties or {"properties": [...]}, each
//   {"name": str, "lb": [..], "ub": [..], "unsafe": [{"a": [..], "b": real}, ...]}
// meaning a^T y + b <= 0 for every listed constraint (conjunction).
//
// Dataset file: {"inputs": [[..], ..], "targets": [[..], ..], "labels": [..]}
// with "labels" optional.

#include "nnrepair/error.hpp"
#include "nnrepair/geometry.hpp"
#include "nnrepair/model.hpp"
#include "nnrepair/property.hpp"
#include "nnrepair/reach.hpp"
#include "nnrepair/repair.hpp"

#include "json.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace nnrepair {

using Json = nlohmann::ordered_json;

namespace io {

inline Json toJson(const Vector &v)
{
    Json out = Json::array();
    for ( Index i = 0; i < v.size(); ++i )
        out.push_back(v[i]);
    return out;
}

inline Json toJson(const Matrix &m)
{
    Json out = Json::array();
    for ( Index r = 0; r < m.rows(); ++r )
        out.push_back(toJson(Vector(m.row(r).transpose())));
    return out;
}

inline Json toJson(const Polygon &polygon)
{
    Json out = Json::array();
    for ( const auto &[x, y] : polygon )
        out.push_back(Json::array({ x, y }));
    return out;
}

inline Vector vectorFromJson(const Json &j, const std::string &what)
{
    if ( !j.is_array() )
        throw Error(what + ": expected an array of numbers");
    Vector v(static_cast<Index>(j.size()));
    for ( std::size_t i = 0; i < j.size(); ++i )
    {
        if ( !j[i].is_number() )
            throw Error(what + ": entry " + std::to_string(i) + " is not a number");
        v[static_cast<Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline Json readJsonFile(const std::string &path)
{
    std::ifstream in(path);
    if ( !in )
        throw Error("cannot open '" + path + "'");
    try
    {
        return Json::parse(in);
    }
    catch ( const Json::parse_error &e )
    {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void writeJsonFile(const std::string &path, const Json &j)
{
    std::ofstream out(path);
    if ( !out )
        throw Error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline SafetyProperty propertyFromJson(const Json &j)
{
    if ( !j.is_object() )
        throw Error("property must be a JSON object");
    SafetyProperty p;
    p.name = j.value("name", std::string("property"));
    if ( !j.contains("lb") || !j.contains("ub") || !j.contains("unsafe") )
        throw Error("property '" + p.name + "' needs lb, ub and unsafe");
    p.inputLb = vectorFromJson(j.at("lb"), p.name + ".lb");
    p.inputUb = vectorFromJson(j.at("ub"), p.name + ".ub");
    if ( !j.at("unsafe").is_array() )
        throw Error("property '" + p.name + "': unsafe must be a list of constraints");
    for ( const Json &c : j.at("unsafe") )
    {
        if ( !c.is_object() || !c.contains("a") )
            throw Error("property '" + p.name + "': constraint needs 'a'");
        LinearConstraint constraint;
        constraint.a = vectorFromJson(c.at("a"), p.name + ".unsafe.a");
        constraint.b = c.value("b", 0.0);
        p.unsafe.constraints.push_back(std::move(constraint));
    }
    return p;
}

inline Json toJson(const SafetyProperty &p)
{
    Json unsafe = Json::array();
    for ( const LinearConstraint &c : p.unsafe.constraints )
        unsafe.push_back({ { "a", toJson(c.a) }, { "b", c.b } });
    return { { "name", p.name }, { "lb", toJson(p.inputLb) }, { "ub", toJson(p.inputUb) }, { "unsafe", unsafe } };
}

inline std::vector<SafetyProperty> propertiesFromJson(const Json &j)
{
    const Json &list = j.is_object() && j.contains("properties") ? j.at("properties") : j;
    std::vector<SafetyProperty> out;
    if ( list.is_array() )
    {
        for ( const Json &entry : list )
            out.push_back(propertyFromJson(entry));
    }
    else
    {
        out.push_back(propertyFromJson(list));
    }
    if ( out.empty() )
        throw Error("property file lists no properties");
    return out;
}

inline std::vector<SafetyProperty> loadProperties(const std::string &path)
{
    return propertiesFromJson(readJsonFile(path));
}

inline LabeledDataset datasetFromJson(const Json &j)
{
    if ( !j.is_object() || !j.contains("inputs") || !j.contains("targets") )
        throw Error("dataset needs 'inputs' and 'targets'");
    LabeledDataset data;
    for ( const Json &x : j.at("inputs") )
        data.inputs.push_back(vectorFromJson(x, "dataset input"));
    for ( const Json &y : j.at("targets") )
        data.targets.push_back(vectorFromJson(y, "dataset target"));
    if ( j.contains("labels") )
        for ( const Json &label : j.at("labels") )
            data.labels.push_back(label.get<Index>());
    return data;
}

inline Json toJson(const LabeledDataset &data)
{
    Json inputs = Json::array();
    Json targets = Json::array();
    for ( const Vector &x : data.inputs )
        inputs.push_back(toJson(x));
    for ( const Vector &y : data.targets )
        targets.push_back(toJson(y));
    Json out = { { "inputs", inputs }, { "targets", targets } };
    if ( !data.labels.empty() )
        out["labels"] = data.labels;
    return out;
}

inline LabeledDataset loadDataset(const std::string &path)
{
    return datasetFromJson(readJsonFile(path));
}

struct Projection
{
    Index first = 0;
    Index second = 1;
};

inline Json toJson(const UnsafeRegion &region, const std::optional<Projection> &projection)
{
    Json out = { { "property", region.propertyName },
                 { "input_vertices", toJson(region.inputPoly) },
                 { "output_vertices", toJson(region.outputPoly) } };
    if ( projection )
        out["projection"] = toJson(projectionPolygon(region.outputPoly, projection->first, projection->second));
    return out;
}

inline Json toJson(const ReachStats &stats, bool timing)
{
    Json out = { { "explored_sets", stats.exploredSets },
                 { "pruned_sets", stats.prunedSets },
                 { "leaf_sets", stats.leafSets },
                 { "peak_live_sets", stats.peakLiveSets },
                 { "degenerate_sets", stats.degenerateSets } };
    if ( timing )
        out["wall_time_ms"] = stats.wallTimeMs;
    return out;
}

inline Json toJson(const RepairReport &report, bool timing)
{
    Json iterations = Json::array();
    for ( const IterationRecord &record : report.iterations )
    {
        Json properties = Json::array();
        for ( const PropertyRecord &p : record.properties )
        {
            Json entry = { { "name", p.name },
                           { "unsafe_regions", p.regionCount },
                           { "unsafe_volume_ratio", p.unsafeVolumeRatio } };
            if ( !p.projections.empty() )
            {
                Json polys = Json::array();
                for ( const Polygon &poly : p.projections )
                    polys.push_back(toJson(poly));
                entry["projections"] = polys;
            }
            properties.push_back(std::move(entry));
        }
        Json entry = { { "iteration", record.iteration },
                       { "properties", properties },
                       { "accuracy", record.accuracy },
                       { "corrected_pairs", record.correctedPairs },
                       { "safe_pairs", record.safePairs },
                       { "training_size", record.trainingSize },
                       { "explored_sets", record.exploredSets } };
        if ( timing )
            entry["wall_time_ms"] = record.wallTimeMs;
        iterations.push_back(std::move(entry));
    }
    Json out = { { "verdict", toString(report.verdict) },
                 { "original_accuracy", report.originalAccuracy },
                 { "final_accuracy", report.finalAccuracy },
                 { "iterations", iterations } };
    if ( !report.abortReason.empty() )
        out["abort_reason"] = report.abortReason;
    return out;
}

} // namespace io
} // namespace nnrepair
