#pragma once

// Reachability-guided repair: compute exact unsafe regions, take their
// vertices as representative adversarial pairs, push each unsafe output to
// just past the nearest boundary of the unsafe domain, merge the corrected
// pairs (plus safe vertex pairs) into the training data and retrain, until
// no unsafe region is left and the accuracy gate holds.

#include "nnrepair/error.hpp"
#include "nnrepair/geometry.hpp"
#include "nnrepair/model.hpp"
#include "nnrepair/property.hpp"
#include "nnrepair/reach.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace nnrepair {

struct RepairConfig
{
    // Overshoot past the boundary when correcting an unsafe output.
    double alpha = 0.02;
    // Required accuracy change relative to the original network.
    double epsilon = 0.0;
    // Optional absolute test-accuracy floor.
    std::optional<double> accuracyFloor;
    std::size_t maxIterations = 50;
    TrainConfig train;
    ReachOptions reach;
    std::size_t volumeSamples = 2000;
    // Safe pairs merged per iteration, as a multiple of the corrected pairs.
    double safePairRatio = 4.0;
    std::optional<std::pair<Index, Index>> projectionAxes;
};

enum class RepairVerdict { Repaired, MaxIterationsExhausted, Aborted };

inline const char *toString(RepairVerdict verdict)
{
    switch ( verdict )
    {
    case RepairVerdict::Repaired:
        return "repaired";
    case RepairVerdict::MaxIterationsExhausted:
        return "max-iterations-exhausted";
    case RepairVerdict::Aborted:
        return "aborted";
    }
    return "unknown";
}

using Polygon = std::vector<std::pair<double, double>>;

struct PropertyRecord
{
    std::string name;
    std::size_t regionCount = 0;
    double unsafeVolumeRatio = 0.0;
    std::vector<Polygon> projections;
};

struct IterationRecord
{
    std::size_t iteration = 0;
    std::vector<PropertyRecord> properties;
    double accuracy = 0.0;
    std::size_t correctedPairs = 0;
    std::size_t safePairs = 0;
    std::size_t trainingSize = 0;
    std::size_t exploredSets = 0;
    double wallTimeMs = 0.0;

    std::size_t totalRegions() const
    {
        std::size_t total = 0;
        for ( const PropertyRecord &p : properties )
            total += p.regionCount;
        return total;
    }
};

struct RepairReport
{
    std::vector<IterationRecord> iterations;
    RepairVerdict verdict = RepairVerdict::MaxIterationsExhausted;
    double originalAccuracy = 0.0;
    double finalAccuracy = 0.0;
    std::string abortReason;
};

class RepairAborted : public Error
{
public:
    RepairAborted(const std::string &what, RepairReport partial)
        : Error(what)
        , _partial(std::move(partial))
    {
    }

    const RepairReport &partial() const { return _partial; }

private:
    RepairReport _partial;
};

/// (input vertex, output vertex) pairs of every region, de-duplicated by
/// input vertex (max-norm tolerance 1e-9, first occurrence wins).
inline std::vector<std::pair<Vector, Vector>> representativePairs(const std::vector<UnsafeRegion> &regions,
                                                                  double tolerance = 1e-9)
{
    std::vector<std::pair<Vector, Vector>> pairs;
    for ( const UnsafeRegion &region : regions )
    {
        for ( Index v = 0; v < region.inputPoly.rows(); ++v )
        {
            Vector x = region.inputPoly.row(v).transpose();
            bool duplicate = false;
            for ( const auto &existing : pairs )
            {
                if ( (existing.first - x).cwiseAbs().maxCoeff() <= tolerance )
                {
                    duplicate = true;
                    break;
                }
            }
            if ( !duplicate )
                pairs.emplace_back(std::move(x), region.outputPoly.row(v).transpose());
        }
    }
    return pairs;
}

/// Nearest-boundary correction of an unsafe output. For each constraint the
/// shortest step to its hyperplane is -(slack / |a|^2) a; the shortest of
/// these is taken and scaled by (1 + alpha), which leaves the unsafe domain.
/// A point exactly on the boundary is pushed by alpha along the unit normal.
inline Vector correct(const Vector &y, const UnsafeDomain &unsafe, double alpha)
{
    if ( !(alpha > 0.0) )
        throw ContractError("correction overshoot alpha must be positive");
    if ( unsafe.constraints.empty() )
        throw ContractError("unsafe domain has no constraints");
    if ( !unsafe.contains(y, kSignTolerance) )
        throw ContractError("correct: output is not inside the unsafe domain");

    std::size_t best = 0;
    double bestDistance = std::numeric_limits<double>::infinity();
    for ( std::size_t j = 0; j < unsafe.constraints.size(); ++j )
    {
        const LinearConstraint &c = unsafe.constraints[j];
        double distance = std::max(0.0, -c.slack(y)) / c.a.norm();
        if ( distance < bestDistance )
        {
            bestDistance = distance;
            best = j;
        }
    }
    const LinearConstraint &c = unsafe.constraints[best];
    const double normSq = c.a.squaredNorm();
    const double slack = c.slack(y);
    if ( slack >= 0.0 )
        return y + alpha * c.a / std::sqrt(normSq);
    Vector step = (-slack / normSq) * c.a;
    return y + (1.0 + alpha) * step;
}

/// Monte-Carlo fraction of uniform box samples lying in any region's input
/// polytope.
inline double unsafeVolumeRatio(const std::vector<UnsafeRegion> &regions,
                                const Vector &lb,
                                const Vector &ub,
                                std::size_t samples,
                                std::uint64_t seed = 0)
{
    if ( samples == 0 )
        throw ContractError("unsafeVolumeRatio needs at least one sample");
    if ( regions.empty() )
        return 0.0;
    std::vector<Halfspaces> polys;
    std::vector<std::pair<Vector, Vector>> boxes;
    for ( const UnsafeRegion &region : regions )
    {
        polys.push_back(region.inputHalfspaces());
        boxes.emplace_back(region.inputPoly.colwise().minCoeff().transpose(),
                           region.inputPoly.colwise().maxCoeff().transpose());
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t hits = 0;
    Vector x(lb.size());
    for ( std::size_t s = 0; s < samples; ++s )
    {
        for ( Index i = 0; i < lb.size(); ++i )
            x[i] = lb[i] + unit(rng) * (ub[i] - lb[i]);
        for ( std::size_t r = 0; r < polys.size(); ++r )
        {
            const auto &[low, high] = boxes[r];
            if ( ((x - low).array() < -1e-9).any() || ((x - high).array() > 1e-9).any() )
                continue;
            if ( polys[r].contains(x) )
            {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(samples);
}

/// Training set keyed by input: an input appears at most once. Corrected
/// targets overwrite whatever is stored; other additions never do.
class MergedDataset
{
public:
    explicit MergedDataset(const LabeledDataset &base)
    {
        for ( std::size_t i = 0; i < base.size(); ++i )
            insert(base.inputs[i], base.targets[i], false);
    }

    void overwrite(const Vector &x, const Vector &y) { insert(x, y, true); }
    bool addIfAbsent(const Vector &x, const Vector &y) { return insert(x, y, false); }

    const LabeledDataset &dataset() const { return _data; }
    std::size_t size() const { return _data.size(); }

private:
    using Key = std::vector<long long>;

    static Key keyOf(const Vector &x)
    {
        Key key(static_cast<std::size_t>(x.size()));
        for ( Index i = 0; i < x.size(); ++i )
            key[static_cast<std::size_t>(i)] = std::llround(x[i] * 1e9);
        return key;
    }

    bool insert(const Vector &x, const Vector &y, bool replace)
    {
        Key key = keyOf(x);
        auto it = _index.find(key);
        if ( it != _index.end() )
        {
            if ( replace )
                _data.targets[it->second] = y;
            return replace;
        }
        _index.emplace(std::move(key), _data.size());
        _data.inputs.push_back(x);
        _data.targets.push_back(y);
        return true;
    }

    LabeledDataset _data;
    std::map<Key, std::size_t> _index;
};

namespace detail {

inline std::vector<std::vector<SafetyProperty>> groupByBox(const std::vector<SafetyProperty> &properties)
{
    std::vector<std::vector<SafetyProperty>> groups;
    for ( const SafetyProperty &p : properties )
    {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&p](const std::vector<SafetyProperty> &g) { return g.front().sameBox(p); });
        if ( it == groups.end() )
            groups.push_back({ p });
        else
            it->push_back(p);
    }
    return groups;
}

} // namespace detail

/// The repair loop. Returns the final candidate with a report; throws
/// RepairAborted (carrying the partial report) when reachability hits its set
/// cap or training diverges.
inline std::pair<Network, RepairReport> repair(const Network &net,
                                               const std::vector<SafetyProperty> &properties,
                                               const LabeledDataset &trainData,
                                               const LabeledDataset &testData,
                                               const RepairConfig &cfg)
{
    if ( properties.empty() )
        throw ContractError("repair needs at least one property");
    if ( trainData.empty() || testData.empty() )
        throw ContractError("repair needs nonempty training and test data");
    if ( !(cfg.alpha > 0.0) || cfg.maxIterations == 0 )
        throw ContractError("repair needs alpha > 0 and at least one iteration");
    for ( const SafetyProperty &p : properties )
        p.validate(net);
    trainData.validate(net.inputDim(), net.outputDim());

    RepairReport report;
    report.originalAccuracy = accuracy(net, testData);
    const auto groups = detail::groupByBox(properties);
    Network candidate = net;
    MergedDataset merged(trainData);

    ReachOptions reachOpts = cfg.reach;
    reachOpts.collectSafePairs = true;

    for ( std::size_t iteration = 1; iteration <= cfg.maxIterations; ++iteration )
    {
        auto start = std::chrono::steady_clock::now();
        IterationRecord record;
        record.iteration = iteration;

        std::vector<std::pair<const SafetyProperty *, std::vector<UnsafeRegion>>> found;
        std::vector<std::pair<Vector, Vector>> safePairs;
        for ( const auto &group : groups )
        {
            ReachResult result;
            try
            {
                result = reachUnsafe(candidate, group, reachOpts);
            }
            catch ( const ReachLimitError &e )
            {
                report.verdict = RepairVerdict::Aborted;
                report.abortReason = e.what();
                report.finalAccuracy = accuracy(candidate, testData);
                throw RepairAborted(e.what(), std::move(report));
            }
            record.exploredSets += result.stats.exploredSets;
            for ( const SafetyProperty &p : group )
            {
                std::vector<UnsafeRegion> mine;
                for ( const UnsafeRegion &region : result.regions )
                    if ( region.propertyName == p.name )
                        mine.push_back(region);

                PropertyRecord pr;
                pr.name = p.name;
                pr.regionCount = mine.size();
                pr.unsafeVolumeRatio =
                    unsafeVolumeRatio(mine, p.inputLb, p.inputUb, cfg.volumeSamples, cfg.train.seed + iteration);
                if ( cfg.projectionAxes )
                    for ( const UnsafeRegion &region : mine )
                        pr.projections.push_back(projectionPolygon(region.outputPoly, cfg.projectionAxes->first,
                                                                   cfg.projectionAxes->second));
                record.properties.push_back(std::move(pr));
                found.emplace_back(&p, std::move(mine));
            }
            for ( auto &pair : result.safePairs )
                safePairs.push_back(std::move(pair));
        }

        record.accuracy = accuracy(candidate, testData);
        const bool safe = record.totalRegions() == 0;
        const bool accurate = record.accuracy - report.originalAccuracy >= cfg.epsilon &&
                              (!cfg.accuracyFloor || record.accuracy >= *cfg.accuracyFloor);
        if ( safe && accurate )
        {
            record.trainingSize = merged.size();
            record.wallTimeMs =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            report.iterations.push_back(std::move(record));
            report.verdict = RepairVerdict::Repaired;
            report.finalAccuracy = report.iterations.back().accuracy;
            return { candidate, report };
        }

        for ( const auto &[property, regions] : found )
        {
            for ( const auto &[x, y] : representativePairs(regions) )
            {
                merged.overwrite(x, correct(y, property->unsafe, cfg.alpha));
                ++record.correctedPairs;
            }
        }

        std::mt19937_64 rng(cfg.train.seed + 7919 * iteration);
        const auto safeCap = static_cast<std::size_t>(cfg.safePairRatio * static_cast<double>(record.correctedPairs));
        if ( safePairs.size() > safeCap )
        {
            std::shuffle(safePairs.begin(), safePairs.end(), rng);
            safePairs.resize(safeCap);
        }
        for ( const auto &[x, y] : safePairs )
            if ( merged.addIfAbsent(x, y) )
                ++record.safePairs;
        record.trainingSize = merged.size();

        TrainConfig trainCfg = cfg.train;
        trainCfg.seed = cfg.train.seed + iteration;
        try
        {
            candidate = train(candidate, merged.dataset(), trainCfg);
        }
        catch ( const TrainingError &e )
        {
            record.wallTimeMs =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            report.iterations.push_back(std::move(record));
            report.verdict = RepairVerdict::Aborted;
            report.abortReason = e.what();
            throw RepairAborted(e.what(), std::move(report));
        }
        record.wallTimeMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        report.iterations.push_back(std::move(record));
    }

    report.verdict = RepairVerdict::MaxIterationsExhausted;
    report.finalAccuracy = accuracy(candidate, testData);
    return { candidate, report };
}

} // namespace nnrepair
