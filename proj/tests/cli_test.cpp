#include "nnrepair/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

using namespace nnrepair;
namespace fs = std::filesystem;

namespace {

struct CliRun
{
    int code;
    std::string out;
    std::string err;
};

CliRun run(const std::vector<std::string> &args)
{
    std::ostringstream out;
    std::ostringstream err;
    int code = cli::runCli(args, out, err);
    return { code, out.str(), err.str() };
}

class CliTest : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir = fs::temp_directory_path() /
              ("nnrepair_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        ASSERT_EQ(run({ "fixture", "--kind", "toy", "--out", dir.string() }).code, 0);
    }

    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string &name) const { return (dir / name).string(); }

    fs::path dir;
};

} // namespace

TEST_F(CliTest, FixtureWritesEveryFile)
{
    for ( const char *name : { "candidate.nnet", "teacher.nnet", "props.json", "train.json", "test.json" } )
        EXPECT_TRUE(fs::exists(dir / name)) << name;
}

TEST_F(CliTest, VerifySafeUnsafeAndMissing)
{
    CliRun safe = run({ "verify", "--net", path("teacher.nnet"), "--props", path("props.json") });
    EXPECT_EQ(safe.code, 0) << safe.err;
    Json j = Json::parse(safe.out);
    EXPECT_EQ(j["results"][0]["verdict"], "safe");
    EXPECT_TRUE(j["results"][0].contains("wall_time_ms"));
    EXPECT_TRUE(j["results"][0].contains("peak_sets"));

    CliRun unsafe = run({ "verify", "--net", path("candidate.nnet"), "--props", path("props.json"), "--workers", "4" });
    EXPECT_EQ(unsafe.code, 1);
    Json u = Json::parse(unsafe.out);
    EXPECT_EQ(u["results"][0]["verdict"], "unsafe");
    EXPECT_GE(u["results"][0]["region_count"].get<int>(), 1);

    CliRun missing = run({ "verify", "--net", path("nope.nnet"), "--props", path("props.json") });
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.err.find("nope.nnet"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo)
{
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({ "verify", "--net", path("teacher.nnet") }).code, 2);
    EXPECT_EQ(run({ "verify", "--net", path("teacher.nnet"), "--props", path("props.json"), "--filter", "maybe" }).code,
              2);
    EXPECT_EQ(run({ "reach", "--net", path("teacher.nnet"), "--props", path("props.json"), "--project", "0,5" }).code,
              2);
    EXPECT_EQ(run({ "--help" }).code, 0);
}

TEST_F(CliTest, MalformedPropertyFileExitsTwo)
{
    std::ofstream(path("bad.json")) << "{\"name\": \"x\", \"lb\": [0, 0]}";
    CliRun r = run({ "verify", "--net", path("teacher.nnet"), "--props", path("bad.json") });
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("lb, ub and unsafe"), std::string::npos);
}

TEST_F(CliTest, ReachEmitsSetsProjectionsAndDump)
{
    CliRun r = run({ "reach", "--net", path("candidate.nnet"), "--props", path("props.json"), "--project", "0,1", "--dump",
                  path("sets.txt"), "--out", path("reach.json") });
    ASSERT_EQ(r.code, 0) << r.err;
    Json j = io::readJsonFile(path("reach.json"));
    const Json &entry = j["results"][0];
    EXPECT_GE(entry["output_sets"].size(), 1u);
    EXPECT_TRUE(entry["output_sets"][0].contains("projection"));
    ASSERT_GE(entry["unsafe_regions"].size(), 1u);
    EXPECT_TRUE(entry["unsafe_regions"][0].contains("projection"));
    std::ifstream dump(path("sets.txt"));
    std::string first;
    std::getline(dump, first);
    EXPECT_EQ(first, "# property toy");
}

TEST_F(CliTest, NoTimingOutputIsByteIdentical)
{
    std::vector<std::string> args = { "reach", "--net", path("candidate.nnet"), "--props", path("props.json"),
                                      "--no-timing" };
    CliRun a = run(args);
    CliRun b = run(args);
    args.push_back("--workers");
    args.push_back("8");
    CliRun c = run(args);
    CliRun d = run(args);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(c.out, d.out);
    EXPECT_EQ(a.out.find("wall_time_ms"), std::string::npos);
    EXPECT_EQ(c.out.find("peak_live_sets"), std::string::npos);
    Json serial = Json::parse(a.out)["results"][0];
    Json parallel = Json::parse(c.out)["results"][0];
    EXPECT_EQ(serial["unsafe_regions"], parallel["unsafe_regions"]);
    EXPECT_EQ(serial["output_sets"], parallel["output_sets"]);
}

TEST_F(CliTest, RepairWritesAVerifiableNetwork)
{
    std::vector<std::string> args = { "repair",      "--net",   path("candidate.nnet"), "--props", path("props.json"),
                                      "--train",     path("train.json"), "--test", path("test.json"), "--out-net",
                                      path("fixed.nnet"), "--epsilon", "-0.05", "--lr", "0.05", "--epochs", "5",
                                      "--seed",      "3",       "--no-timing" };
    CliRun r = run(args);
    ASSERT_EQ(r.code, 0) << r.err << r.out;
    Json report = Json::parse(r.out);
    EXPECT_EQ(report["verdict"], "repaired");
    CliRun again = run(args);
    EXPECT_EQ(again.out, r.out);

    CliRun check = run({ "verify", "--net", path("fixed.nnet"), "--props", path("props.json") });
    EXPECT_EQ(check.code, 0) << check.out;
}

TEST_F(CliTest, RepairOfSafeNetTakesOneIteration)
{
    CliRun r = run({ "repair", "--net", path("teacher.nnet"), "--props", path("props.json"), "--train",
                  path("train.json"), "--test", path("test.json") });
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(Json::parse(r.out)["iterations"].size(), 1u);
}

TEST_F(CliTest, ImpossibleAccuracyGateExitsThree)
{
    CliRun r = run({ "repair", "--net", path("candidate.nnet"), "--props", path("props.json"), "--train",
                  path("train.json"), "--test", path("test.json"), "--epsilon", "1", "--max-iterations", "2" });
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_EQ(Json::parse(r.out)["verdict"], "max-iterations-exhausted");
}

TEST(CliBench, BuiltinFixtures)
{
    CliRun r = run({ "bench", "--no-timing" });
    ASSERT_EQ(r.code, 0) << r.err;
    Json j = Json::parse(r.out);
    ASSERT_EQ(j["runs"].size(), 5u);
    const Json &linear = j["runs"][0];
    EXPECT_EQ(linear["fixture"], "linear");
    EXPECT_DOUBLE_EQ(linear["explored_ratio"].get<double>(), 1.0);
    const Json &mostlySafe = j["runs"][1];
    EXPECT_LT(mostlySafe["filter_on"]["explored_sets"].get<int>(), mostlySafe["filter_off"]["explored_sets"].get<int>());
    for ( const Json &row : j["runs"] )
        EXPECT_TRUE(row["same_regions"].get<bool>());
    EXPECT_DOUBLE_EQ(j["reference"]["mean_speedup"].get<double>(), 4.7);
}

TEST(CliBinary, ExitCodesPropagate)
{
    std::string command = std::string(NNREPAIR_CLI_PATH) + " verify --net /nonexistent.nnet --props x.json 2>/dev/null";
    int status = std::system(command.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 2);
}
