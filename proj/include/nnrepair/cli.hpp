#pragma once

// Command-line driver: verify, reach, repair, bench and fixture subcommands.
// runCli() is the whole program minus main(), so tests can call it in-process.
//
// Exit codes: 0 success (all safe / repaired), 1 some property unsafe,
// 2 usage, file or parse error, 3 repair exhausted its iteration budget.

#include "nnrepair/error.hpp"
#include "nnrepair/fixtures.hpp"
#include "nnrepair/io.hpp"
#include "nnrepair/nnet.hpp"
#include "nnrepair/reach.hpp"
#include "nnrepair/repair.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace nnrepair::cli {

enum ExitCode : int
{
    kOk = 0,
    kUnsafe = 1,
    kError = 2,
    kExhausted = 3,
};

struct CommonOptions
{
    std::string netPath;
    std::string propsPath;
    std::string filter = "on";
    std::size_t workers = 1;
    std::size_t maxSets = 1'000'000;
    std::uint64_t seed = 0;
    std::string outPath;
    std::string project;
    bool noTiming = false;
};

namespace detail {

inline void addCommon(CLI::App &cmd, CommonOptions &o, bool needsInputs = true)
{
    auto *net = cmd.add_option("--net", o.netPath, "network in NNet format");
    auto *props = cmd.add_option("--props", o.propsPath, "property JSON file");
    if ( needsInputs )
    {
        net->required();
        props->required();
    }
    cmd.add_option("--filter", o.filter, "over-approximation pruning")->check(CLI::IsMember({ "on", "off" }));
    cmd.add_option("--workers", o.workers, "worker threads for reachability")->check(CLI::PositiveNumber);
    cmd.add_option("--max-sets", o.maxSets, "cap on explored sets")->check(CLI::PositiveNumber);
    cmd.add_option("--seed", o.seed, "random seed");
    cmd.add_option("--out", o.outPath, "output path (stdout when omitted)");
    cmd.add_option("--project", o.project, "output axes i,j for 2-d projections");
    cmd.add_flag("--no-timing", o.noTiming, "omit wall-clock fields");
}

inline ReachOptions reachOptions(const CommonOptions &o)
{
    ReachOptions opts;
    opts.useFilter = o.filter == "on";
    opts.workerCount = o.workers;
    opts.maxSets = o.maxSets;
    return opts;
}

inline std::optional<io::Projection> parseProjection(const std::string &text, Index outputDim)
{
    if ( text.empty() )
        return std::nullopt;
    auto comma = text.find(',');
    if ( comma == std::string::npos )
        throw Error("--project expects two axes as i,j");
    io::Projection p;
    try
    {
        p.first = std::stol(text.substr(0, comma));
        p.second = std::stol(text.substr(comma + 1));
    }
    catch ( const std::exception & )
    {
        throw Error("--project expects two integer axes as i,j");
    }
    if ( p.first < 0 || p.second < 0 || p.first >= outputDim || p.second >= outputDim || p.first == p.second )
        throw Error("--project axes must be distinct and below the output width " + std::to_string(outputDim));
    return p;
}

// Peak live-set counts depend on thread scheduling when several workers
// share the stack; like wall time they are dropped under --no-timing then.
inline void stripScheduleDependent(Json &j)
{
    if ( j.is_object() )
    {
        j.erase("peak_live_sets");
        j.erase("peak_sets");
        j.erase("peak_set_reduction");
    }
    if ( j.is_structured() )
        for ( Json &child : j )
            stripScheduleDependent(child);
}

inline void emit(const CommonOptions &o, Json j, std::ostream &out)
{
    if ( o.noTiming && o.workers > 1 )
        stripScheduleDependent(j);
    if ( o.outPath.empty() )
        out << j.dump(2) << '\n';
    else
        io::writeJsonFile(o.outPath, j);
}

struct Inputs
{
    Network net;
    std::vector<SafetyProperty> props;
};

inline Inputs loadInputs(const CommonOptions &o)
{
    Inputs in{ loadNnet(o.netPath), io::loadProperties(o.propsPath) };
    for ( const SafetyProperty &p : in.props )
        p.validate(in.net);
    return in;
}

inline int verify(const CommonOptions &o, std::ostream &out)
{
    Inputs in = loadInputs(o);
    ReachOptions opts = reachOptions(o);
    Json results = Json::array();
    bool anyUnsafe = false;
    for ( const SafetyProperty &p : in.props )
    {
        ReachResult r = reachUnsafe(in.net, p, opts);
        anyUnsafe = anyUnsafe || !r.regions.empty();
        Json entry = { { "property", p.name },
                       { "verdict", r.regions.empty() ? "safe" : "unsafe" },
                       { "region_count", r.regions.size() } };
        if ( !o.noTiming )
            entry["wall_time_ms"] = r.stats.wallTimeMs;
        entry["peak_sets"] = r.stats.peakLiveSets;
        results.push_back(std::move(entry));
    }
    emit(o, { { "results", results } }, out);
    return anyUnsafe ? kUnsafe : kOk;
}

inline int reach(const CommonOptions &o, const std::string &dumpPath, std::ostream &out)
{
    Inputs in = loadInputs(o);
    ReachOptions opts = reachOptions(o);
    auto projection = parseProjection(o.project, in.net.outputDim());
    std::ofstream dump;
    if ( !dumpPath.empty() )
    {
        dump.open(dumpPath);
        if ( !dump )
            throw Error("cannot write '" + dumpPath + "'");
    }

    Json results = Json::array();
    for ( const SafetyProperty &p : in.props )
    {
        ReachStats finalStats;
        std::vector<TrackedSet> finals = exactFinalSets(in.net, p.inputLb, p.inputUb, opts, &finalStats);
        Json outputSets = Json::array();
        for ( const TrackedSet &s : finals )
        {
            Json entry = { { "vertices", io::toJson(s.currentVertices) } };
            if ( projection )
                entry["projection"] =
                    io::toJson(projectionPolygon(s.currentVertices, projection->first, projection->second));
            outputSets.push_back(std::move(entry));
            if ( dump.is_open() )
            {
                dump << "# property " << p.name << '\n';
                dumpTrackedSet(dump, s);
            }
        }
        ReachResult r = reachUnsafe(in.net, p, opts);
        Json regions = Json::array();
        for ( const UnsafeRegion &region : r.regions )
            regions.push_back(io::toJson(region, projection));
        results.push_back({ { "property", p.name },
                            { "output_sets", outputSets },
                            { "unsafe_regions", regions },
                            { "stats", io::toJson(r.stats, !o.noTiming) } });
    }
    emit(o, { { "results", results } }, out);
    return kOk;
}

struct RepairOptions
{
    std::string trainPath;
    std::string testPath;
    std::string outNet;
    double alpha = 0.02;
    double epsilon = 0.0;
    std::optional<double> accuracyFloor;
    std::size_t maxIterations = 50;
    double learningRate = 0.01;
    std::size_t batch = 16;
    std::size_t epochs = 10;
};

inline int repairCommand(const CommonOptions &o, const RepairOptions &r, std::ostream &out)
{
    Inputs in = loadInputs(o);
    LabeledDataset trainData = io::loadDataset(r.trainPath);
    LabeledDataset testData = io::loadDataset(r.testPath);
    testData.validate(in.net.inputDim(), in.net.outputDim());

    RepairConfig cfg;
    cfg.alpha = r.alpha;
    cfg.epsilon = r.epsilon;
    cfg.accuracyFloor = r.accuracyFloor;
    cfg.maxIterations = r.maxIterations;
    cfg.train.learningRate = r.learningRate;
    cfg.train.batchSize = r.batch;
    cfg.train.epochsPerIteration = r.epochs;
    cfg.train.seed = o.seed;
    cfg.reach = reachOptions(o);
    if ( auto p = parseProjection(o.project, in.net.outputDim()) )
        cfg.projectionAxes = std::make_pair(p->first, p->second);

    try
    {
        auto [repaired, report] = repair(in.net, in.props, trainData, testData, cfg);
        if ( !r.outNet.empty() )
            saveNnet(r.outNet, repaired, "repaired network");
        emit(o, io::toJson(report, !o.noTiming), out);
        return report.verdict == RepairVerdict::Repaired ? kOk : kExhausted;
    }
    catch ( const RepairAborted &e )
    {
        emit(o, io::toJson(e.partial(), !o.noTiming), out);
        throw;
    }
}

struct BenchCase
{
    std::string name;
    Network net;
    std::vector<SafetyProperty> props;
};

inline Json benchRun(const BenchCase &c, const ReachOptions &base, bool timing)
{
    ReachOptions on = base;
    on.useFilter = true;
    ReachOptions off = base;
    off.useFilter = false;
    ReachResult filtered = reachUnsafe(c.net, c.props, on);
    ReachResult plain = reachUnsafe(c.net, c.props, off);
    Json out = { { "fixture", c.name },
                 { "filter_on", io::toJson(filtered.stats, timing) },
                 { "filter_off", io::toJson(plain.stats, timing) },
                 { "explored_ratio",
                   static_cast<double>(filtered.stats.exploredSets) /
                       static_cast<double>(std::max<std::size_t>(1, plain.stats.exploredSets)) },
                 { "same_regions", sameRegions(filtered.regions, plain.regions) } };
    if ( timing )
    {
        out["speedup"] = plain.stats.wallTimeMs / std::max(1e-9, filtered.stats.wallTimeMs);
        out["peak_set_reduction"] =
            1.0 - static_cast<double>(filtered.stats.peakLiveSets) /
                      static_cast<double>(std::max<std::size_t>(1, plain.stats.peakLiveSets));
    }
    return out;
}

inline std::vector<BenchCase> builtinBenchCases(std::uint64_t seed)
{
    std::vector<BenchCase> cases;
    {
        // A single identity layer: nothing to split, nothing to prune.
        Layer layer;
        layer.weights = Matrix::Identity(2, 2);
        layer.bias = Vector::Zero(2);
        layer.activation = Activation::Identity;
        SafetyProperty p;
        p.name = "linear";
        p.inputLb = Vector::Constant(2, -1.0);
        p.inputUb = Vector::Constant(2, 1.0);
        p.unsafe = minimumOutputDomain(2, 0);
        cases.push_back({ "linear", Network({ layer }), { p } });
    }
    {
        fixtures::PruningBenchmark b = fixtures::pruningBenchmark(seed + 11);
        cases.push_back({ "mostly_safe", b.net, { b.property } });
    }
    {
        Network net = fixtures::hcasStyleNetwork(seed + 3, { 6, 6 });
        for ( const SafetyProperty &p : fixtures::hcasProperties(net.normalization()) )
            cases.push_back({ "hcas_style_" + p.name, net, { p } });
    }
    return cases;
}

inline int bench(const CommonOptions &o, std::ostream &out)
{
    ReachOptions opts = reachOptions(o);
    std::vector<BenchCase> cases;
    if ( !o.netPath.empty() || !o.propsPath.empty() )
    {
        if ( o.netPath.empty() || o.propsPath.empty() )
            throw Error("bench needs both --net and --props, or neither for the built-in fixtures");
        Inputs in = loadInputs(o);
        // Properties over different boxes are benchmarked one box at a time.
        for ( const auto &group : nnrepair::detail::groupByBox(in.props) )
            cases.push_back({ group.front().name, in.net, group });
    }
    else
    {
        cases = builtinBenchCases(o.seed);
    }
    Json rows = Json::array();
    for ( const BenchCase &c : cases )
        rows.push_back(benchRun(c, opts, !o.noTiming));
    Json report = { { "runs", rows },
                    { "reference", { { "mean_speedup", 4.7 }, { "memory_reduction", 0.645 } } } };
    emit(o, report, out);
    return kOk;
}

inline void writeDataset(const std::filesystem::path &path, const LabeledDataset &data)
{
    io::writeJsonFile(path.string(), io::toJson(data));
}

inline void writeProperties(const std::filesystem::path &path, const std::vector<SafetyProperty> &props)
{
    Json list = Json::array();
    for ( const SafetyProperty &p : props )
        list.push_back(io::toJson(p));
    io::writeJsonFile(path.string(), { { "properties", list } });
}

inline int fixture(const std::string &kind, const std::string &dir, std::uint64_t seed, std::ostream &out)
{
    std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    std::vector<std::string> written;
    auto save = [&](const std::string &name) {
        written.push_back((root / name).string());
        return root / name;
    };
    if ( kind == "toy" )
    {
        fixtures::ToyRepairCase c = fixtures::toyRepairCase(seed + 7);
        saveNnet(save("candidate.nnet").string(), c.candidate, "unsafe 2-2-2 candidate");
        saveNnet(save("teacher.nnet").string(), c.teacher, "safe 2-2-2 teacher");
        writeProperties(save("props.json"), { c.property });
        writeDataset(save("train.json"), c.train);
        writeDataset(save("test.json"), c.test);
    }
    else if ( kind == "hcas" )
    {
        Network net = fixtures::hcasStyleNetwork(seed);
        saveNnet(save("net.nnet").string(), net, "HorizontalCAS-style random network");
        writeProperties(save("props.json"), fixtures::hcasProperties(net.normalization()));
        Vector lb = Vector::Constant(5, -0.5);
        Vector ub = Vector::Constant(5, 0.5);
        writeDataset(save("train.json"), fixtures::sampleDataset(net, lb, ub, 500, seed + 1));
        writeDataset(save("test.json"), fixtures::sampleDataset(net, lb, ub, 1000, seed + 2));
    }
    else if ( kind == "pruning" )
    {
        fixtures::PruningBenchmark b = fixtures::pruningBenchmark(seed + 11);
        saveNnet(save("net.nnet").string(), b.net, "mostly-safe pruning benchmark");
        writeProperties(save("props.json"), { b.property });
    }
    else
    {
        throw Error("unknown fixture kind '" + kind + "'");
    }
    Json files = written;
    out << Json({ { "fixture", kind }, { "files", files } }).dump(2) << '\n';
    return kOk;
}

} // namespace detail

/// Runs the command line `args` (without the program name).
inline int runCli(const std::vector<std::string> &args, std::ostream &out = std::cout, std::ostream &err = std::cerr)
{
    CLI::App app{ "Reachability analysis and repair of ReLU networks" };
    app.require_subcommand(1);

    CommonOptions verifyOpts;
    CLI::App *verify = app.add_subcommand("verify", "check every property; exit 1 if any is violated");
    detail::addCommon(*verify, verifyOpts);

    CommonOptions reachOpts;
    std::string dumpPath;
    CLI::App *reach = app.add_subcommand("reach", "emit exact output sets and unsafe input regions");
    detail::addCommon(*reach, reachOpts);
    reach->add_option("--dump", dumpPath, "text dump of every final set (vertices and incidence)");

    CommonOptions repairOpts;
    detail::RepairOptions repairExtra;
    CLI::App *repairCmd = app.add_subcommand("repair", "repair a network against its properties");
    detail::addCommon(*repairCmd, repairOpts);
    repairCmd->add_option("--train", repairExtra.trainPath, "training dataset JSON")->required();
    repairCmd->add_option("--test", repairExtra.testPath, "test dataset JSON")->required();
    repairCmd->add_option("--out-net", repairExtra.outNet, "where to write the repaired network");
    repairCmd->add_option("--alpha", repairExtra.alpha, "overshoot factor for corrected outputs")
        ->check(CLI::PositiveNumber);
    repairCmd->add_option("--epsilon", repairExtra.epsilon, "required accuracy change");
    repairCmd->add_option("--accuracy-floor", repairExtra.accuracyFloor, "absolute minimum test accuracy");
    repairCmd->add_option("--max-iterations", repairExtra.maxIterations)->check(CLI::PositiveNumber);
    repairCmd->add_option("--lr", repairExtra.learningRate, "learning rate")->check(CLI::PositiveNumber);
    repairCmd->add_option("--batch", repairExtra.batch, "minibatch size")->check(CLI::PositiveNumber);
    repairCmd->add_option("--epochs", repairExtra.epochs, "epochs per iteration")->check(CLI::PositiveNumber);

    CommonOptions benchOpts;
    CLI::App *bench = app.add_subcommand("bench", "compare filtered and unfiltered reachability");
    detail::addCommon(*bench, benchOpts, false);

    std::string fixtureKind = "toy";
    std::string fixtureDir;
    std::uint64_t fixtureSeed = 0;
    CLI::App *fixture = app.add_subcommand("fixture", "write a built-in fixture to a directory");
    fixture->add_option("--kind", fixtureKind, "toy, hcas or pruning")
        ->check(CLI::IsMember({ "toy", "hcas", "pruning" }));
    fixture->add_option("--out", fixtureDir, "output directory")->required();
    fixture->add_option("--seed", fixtureSeed, "random seed");

    std::vector<const char *> argv{ "nnrepair" };
    for ( const std::string &a : args )
        argv.push_back(a.c_str());
    try
    {
        app.parse(static_cast<int>(argv.size()), argv.data());
    }
    catch ( const CLI::CallForHelp & )
    {
        out << app.help();
        return kOk;
    }
    catch ( const CLI::ParseError &e )
    {
        err << "error: " << e.what() << '\n';
        return kError;
    }

    try
    {
        if ( *verify )
            return detail::verify(verifyOpts, out);
        if ( *reach )
            return detail::reach(reachOpts, dumpPath, out);
        if ( *repairCmd )
            return detail::repairCommand(repairOpts, repairExtra, out);
        if ( *bench )
            return detail::bench(benchOpts, out);
        if ( *fixture )
            return detail::fixture(fixtureKind, fixtureDir, fixtureSeed, out);
    }
    catch ( const std::exception &e )
    {
        err << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

} // namespace nnrepair::cli
