#pragma once

// Depth-first exact reachability with over-approximation pruning, and
// backtracking of unsafe outputs to the input regions that produce them.

#include "nnrepair/error.hpp"
#include "nnrepair/fvim.hpp"
#include "nnrepair/geometry.hpp"
#include "nnrepair/model.hpp"
#include "nnrepair/property.hpp"
#include "nnrepair/vzono.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace nnrepair {

/// Unsafe input polytope I_k with its image O_k; rows correspond.
struct UnsafeRegion
{
    std::string propertyName;
    Matrix inputPoly;
    Matrix outputPoly;
    Fvim incidence;

    Halfspaces inputHalfspaces() const { return facetHalfspaces(incidence, inputPoly); }
};

struct ReachOptions
{
    bool useFilter = true;
    std::size_t workerCount = 1;
    std::size_t maxSets = 1'000'000;
    Index maxBaseVertices = 512;
    // Record (x, y) for leaf vertices whose outputs avoid every unsafe domain.
    bool collectSafePairs = false;
    // Keep every pruned set (for measuring how much of the box was pruned).
    bool collectPruned = false;
};

struct ReachStats
{
    std::size_t exploredSets = 0;
    std::size_t prunedSets = 0;
    std::size_t leafSets = 0;
    std::size_t peakLiveSets = 0;
    std::size_t degenerateSets = 0;
    double wallTimeMs = 0.0;
};

struct ReachResult
{
    std::vector<UnsafeRegion> regions;
    ReachStats stats;
    std::vector<std::pair<Vector, Vector>> safePairs;
    std::vector<TrackedSet> prunedSets;
};

/// Raised when exploration exceeds ReachOptions::maxSets. Carries everything
/// found before the cap was hit.
class ReachLimitError : public Error
{
public:
    explicit ReachLimitError(ReachResult partial)
        : Error("reachability exceeded the explored-set cap")
        , _partial(std::move(partial))
    {
    }

    const ReachResult &partial() const { return _partial; }

private:
    ReachResult _partial;
};

/// Exact image of one layer: affine map, then (for ReLU layers) a fold of
/// splitByNeuron over the neurons in ascending order. Children have their
/// cursor advanced by one.
inline std::vector<TrackedSet> layerOutput(const Network &net, const TrackedSet &s, std::size_t *degenerate = nullptr)
{
    if ( s.layerCursor >= net.numLayers() )
        throw ContractError("layerOutput: set is already at the network output");
    const Layer &layer = net.layer(s.layerCursor);
    std::vector<TrackedSet> sets;
    sets.push_back(affineMap(s, layer.weights, layer.bias));
    if ( layer.activation == Activation::Relu )
    {
        for ( Index i = 0; i < layer.outputDim(); ++i )
        {
            std::vector<TrackedSet> next;
            for ( const TrackedSet &set : sets )
                for ( TrackedSet &child : splitByNeuron(set, i, degenerate) )
                    next.push_back(std::move(child));
            sets = std::move(next);
        }
    }
    for ( TrackedSet &set : sets )
        set.layerCursor = s.layerCursor + 1;
    return sets;
}

/// One over-approximated output set for `s`, propagating a V-zono from the
/// set's current layer to the network output.
inline VZono outputOverapprox(const Network &net, const TrackedSet &s, Index maxBaseVertices = 512)
{
    VZono z = reduceBaseVertices(fromTracked(s), maxBaseVertices);
    for ( std::size_t k = s.layerCursor; k < net.numLayers(); ++k )
    {
        const Layer &layer = net.layer(k);
        z = affineMap(z, layer.weights, layer.bias);
        if ( layer.activation == Activation::Relu )
            z = reluLayer(z);
    }
    return z;
}

/// Cuts a fully propagated set with every constraint hyperplane, keeping the
/// a^T y + b <= 0 side each time. Returns the remaining region, or nothing
/// when the set meets the unsafe domain in at most a boundary face.
inline std::optional<UnsafeRegion> backtrack(const TrackedSet &s, const UnsafeDomain &unsafe, std::string name = "")
{
    TrackedSet current = s;
    for ( const LinearConstraint &c : unsafe.constraints )
    {
        SplitResult split = splitByHyperplane(current, c.a, c.b);
        if ( !split.lower )
            return std::nullopt;
        current = std::move(*split.lower);
    }
    return UnsafeRegion{ std::move(name), std::move(current.inputVertices), std::move(current.currentVertices),
                         std::move(current.fvim) };
}

/// Sorts vertex rows inside every region, then the regions themselves, so
/// results compare equal regardless of traversal schedule.
inline void canonicalize(std::vector<UnsafeRegion> &regions)
{
    for ( UnsafeRegion &region : regions )
    {
        std::vector<Index> order = lexicographicRowOrder(region.inputPoly);
        region.inputPoly = permuteRows(region.inputPoly, order);
        region.outputPoly = permuteRows(region.outputPoly, order);
        Fvim reordered(region.incidence.numVertices());
        for ( const Fvim::Row &row : region.incidence.rows() )
        {
            Fvim::Row moved(row.size());
            for ( std::size_t k = 0; k < order.size(); ++k )
                if ( row.test(static_cast<std::size_t>(order[k])) )
                    moved.set(k);
            reordered.addFacet(std::move(moved));
        }
        region.incidence = std::move(reordered);
    }
    std::stable_sort(regions.begin(), regions.end(), [](const UnsafeRegion &x, const UnsafeRegion &y) {
        if ( x.propertyName != y.propertyName )
            return x.propertyName < y.propertyName;
        return lexicographicLess(x.inputPoly, y.inputPoly);
    });
}

/// Equality of two canonicalized region lists up to `tolerance` per entry.
inline bool sameRegions(const std::vector<UnsafeRegion> &x, const std::vector<UnsafeRegion> &y, double tolerance = 1e-9)
{
    if ( x.size() != y.size() )
        return false;
    for ( std::size_t k = 0; k < x.size(); ++k )
    {
        if ( x[k].propertyName != y[k].propertyName )
            return false;
        if ( x[k].inputPoly.rows() != y[k].inputPoly.rows() || x[k].inputPoly.cols() != y[k].inputPoly.cols() ||
             x[k].outputPoly.cols() != y[k].outputPoly.cols() )
            return false;
        if ( (x[k].inputPoly - y[k].inputPoly).cwiseAbs().maxCoeff() > tolerance ||
             (x[k].outputPoly - y[k].outputPoly).cwiseAbs().maxCoeff() > tolerance )
            return false;
    }
    return true;
}

namespace detail {

struct ExploreOutcome
{
    ReachStats stats;
    bool limitHit = false;
};

// Generic depth-first driver. `prune(set)` is called on every non-leaf set
// and may discard it; `leaf(set)` receives every fully propagated set.
// Children are explored last-in-first-out. With more than one worker, sets
// are shared through a common stack and `leaf` is serialized.
template <typename Prune, typename Leaf>
ExploreOutcome explore(const Network &net, TrackedSet root, const ReachOptions &opts, Prune prune, Leaf leaf)
{
    auto start = std::chrono::steady_clock::now();
    ReachStats stats;
    std::vector<TrackedSet> stack;
    stack.push_back(std::move(root));

    std::mutex mutex;
    std::condition_variable wake;
    std::size_t busy = 0;
    bool stop = false;
    bool limitHit = false;
    std::exception_ptr failure;

    // Processes one set; returns children (empty for leaves and pruned sets).
    auto step = [&](const TrackedSet &set, ReachStats &local) -> std::vector<TrackedSet> {
        if ( set.layerCursor == net.numLayers() )
        {
            ++local.leafSets;
            leaf(set);
            return {};
        }
        if ( prune(set) )
        {
            ++local.prunedSets;
            return {};
        }
        std::vector<TrackedSet> children = layerOutput(net, set, &local.degenerateSets);
        std::reverse(children.begin(), children.end());
        return children;
    };

    const std::size_t workers = std::max<std::size_t>(1, opts.workerCount);
    if ( workers == 1 )
    {
        while ( !stack.empty() )
        {
            if ( stats.exploredSets >= opts.maxSets )
            {
                limitHit = true;
                break;
            }
            TrackedSet set = std::move(stack.back());
            stack.pop_back();
            ++stats.exploredSets;
            for ( TrackedSet &child : step(set, stats) )
                stack.push_back(std::move(child));
            stats.peakLiveSets = std::max(stats.peakLiveSets, stack.size() + 1);
        }
    }
    else
    {
        std::vector<ReachStats> locals(workers);
        auto work = [&](std::size_t id) {
            ReachStats &local = locals[id];
            std::unique_lock lock(mutex);
            while ( true )
            {
                wake.wait(lock, [&] { return stop || !stack.empty() || busy == 0; });
                if ( stop || (stack.empty() && busy == 0) )
                    break;
                if ( stats.exploredSets >= opts.maxSets )
                {
                    limitHit = true;
                    stop = true;
                    wake.notify_all();
                    break;
                }
                TrackedSet set = std::move(stack.back());
                stack.pop_back();
                ++stats.exploredSets;
                ++busy;
                stats.peakLiveSets = std::max(stats.peakLiveSets, stack.size() + busy);
                lock.unlock();

                std::vector<TrackedSet> children;
                try
                {
                    if ( set.layerCursor == net.numLayers() )
                    {
                        ++local.leafSets;
                        std::lock_guard guard(mutex);
                        leaf(set);
                    }
                    else
                    {
                        children = step(set, local);
                    }
                }
                catch ( ... )
                {
                    lock.lock();
                    failure = std::current_exception();
                    stop = true;
                    --busy;
                    wake.notify_all();
                    break;
                }

                lock.lock();
                --busy;
                for ( TrackedSet &child : children )
                    stack.push_back(std::move(child));
                stats.peakLiveSets = std::max(stats.peakLiveSets, stack.size() + busy);
                wake.notify_all();
            }
        };
        std::vector<std::thread> threads;
        for ( std::size_t id = 0; id < workers; ++id )
            threads.emplace_back(work, id);
        for ( std::thread &t : threads )
            t.join();
        for ( const ReachStats &local : locals )
        {
            stats.leafSets += local.leafSets;
            stats.prunedSets += local.prunedSets;
            stats.degenerateSets += local.degenerateSets;
        }
        if ( failure )
            std::rethrow_exception(failure);
    }

    stats.wallTimeMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return { stats, limitHit };
}

} // namespace detail

/// All unsafe input regions of `net` for properties sharing one input box.
/// A branch is pruned only when its over-approximation is provably safe for
/// every property. Results are canonicalized.
inline ReachResult reachUnsafe(const Network &net, std::span<const SafetyProperty> props, const ReachOptions &opts = {})
{
    if ( props.empty() )
        throw ContractError("reachUnsafe needs at least one property");
    for ( const SafetyProperty &p : props )
    {
        p.validate(net);
        if ( !p.sameBox(props.front()) )
            throw ContractError("properties analysed together must share one input box");
    }
    if ( opts.maxSets == 0 )
        throw ContractError("maxSets must be at least 1");

    ReachResult result;
    std::mutex pruneMutex;
    auto prune = [&](const TrackedSet &set) {
        if ( !opts.useFilter )
            return false;
        VZono z = outputOverapprox(net, set, opts.maxBaseVertices);
        for ( const SafetyProperty &p : props )
            if ( !isProvablySafe(z, p.unsafe) )
                return false;
        if ( opts.collectPruned )
        {
            std::lock_guard guard(pruneMutex);
            result.prunedSets.push_back(set);
        }
        return true;
    };
    auto leaf = [&](const TrackedSet &set) {
        for ( const SafetyProperty &p : props )
            if ( auto region = backtrack(set, p.unsafe, p.name) )
                result.regions.push_back(std::move(*region));
        if ( opts.collectSafePairs )
        {
            for ( Index v = 0; v < set.numVertices(); ++v )
            {
                Vector y = set.currentVertices.row(v).transpose();
                bool safe = true;
                for ( const SafetyProperty &p : props )
                    if ( p.unsafe.contains(y, kSignTolerance) )
                        safe = false;
                if ( safe )
                    result.safePairs.emplace_back(set.inputVertices.row(v).transpose(), std::move(y));
            }
        }
    };

    TrackedSet root = boxPolytope(props.front().inputLb, props.front().inputUb);
    detail::ExploreOutcome outcome = detail::explore(net, std::move(root), opts, prune, leaf);
    result.stats = outcome.stats;
    canonicalize(result.regions);
    std::stable_sort(result.safePairs.begin(), result.safePairs.end(), [](const auto &x, const auto &y) {
        return std::lexicographical_compare(x.first.begin(), x.first.end(), y.first.begin(), y.first.end());
    });
    if ( outcome.limitHit )
        throw ReachLimitError(std::move(result));
    return result;
}

inline ReachResult reachUnsafe(const Network &net, const SafetyProperty &prop, const ReachOptions &opts = {})
{
    return reachUnsafe(net, std::span<const SafetyProperty>(&prop, 1), opts);
}

/// Every final linear region of the box, fully propagated, without pruning.
inline std::vector<TrackedSet> exactFinalSets(const Network &net,
                                              const Vector &lb,
                                              const Vector &ub,
                                              const ReachOptions &opts = {},
                                              ReachStats *statsOut = nullptr)
{
    if ( lb.size() != net.inputDim() )
        throw DimensionError("box does not match the network input width");
    std::vector<TrackedSet> finals;
    ReachOptions serial = opts;
    serial.workerCount = 1;
    detail::ExploreOutcome outcome = detail::explore(
        net, boxPolytope(lb, ub), serial, [](const TrackedSet &) { return false; },
        [&](const TrackedSet &set) { finals.push_back(set); });
    if ( outcome.limitHit )
        throw ReachLimitError(ReachResult{ {}, outcome.stats, {}, {} });
    if ( statsOut )
        *statsOut = outcome.stats;
    return finals;
}

/// Output vertex matrices of the exact output reachable domain.
inline std::vector<Matrix> exactOutputDomain(const Network &net, const SafetyProperty &prop, const ReachOptions &opts = {})
{
    std::vector<Matrix> outputs;
    for ( TrackedSet &set : exactFinalSets(net, prop.inputLb, prop.inputUb, opts) )
        outputs.push_back(std::move(set.currentVertices));
    return outputs;
}

} // namespace nnrepair
