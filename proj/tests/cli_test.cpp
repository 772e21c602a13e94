#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "mpdcheck/cli.hpp"

using namespace mpdcheck;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    std::vector<const char*> argv{"mpdcheck"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// Runs the installed binary; stdout only.
Run run_binary(const std::string& args) {
    const std::string cmd = std::string(MPDCHECK_BINARY) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    std::array<char, 4096> buf{};
    while (const std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out, ""};
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("mpdcheck_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                           "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Verify, BarrierOfThreeTable) {
    const auto r = run_cli({"verify", "--algorithm", "barrier", "--size", "3"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find("| Correctness Property | Model Size | Time (s) | States Stored/Matched | Search Depth |"),
              std::string::npos);
    EXPECT_NE(r.out.find("| BARRIER_END+BARRIER_INVARIANT | 3 |"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("outcome: VERIFIED"), std::string::npos);
}

TEST(Verify, ModelSizeCountsInserters) {
    const auto r = run_cli({"verify", "--algorithm", "ring-par", "--size", "1", "--inserters", "2", "--no-time"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find(" | 3 | - | "), std::string::npos) << r.out;
}

TEST_F(TempDir, SequentialBugWritesReplayableTrace) {
    const std::string trace = path("bug.trace");
    const auto r = run_cli({"verify", "--algorithm", "ring-seq", "--size", "2", "--inserters", "2", "--trace-out", trace});
    ASSERT_EQ(r.code, cli::kExitViolation) << r.out;
    EXPECT_NE(r.out.find("violated: RING_TOPOLOGY"), std::string::npos);
    EXPECT_NE(r.err.find("trace written to " + trace), std::string::npos);
    ASSERT_TRUE(fs::exists(trace));
    EXPECT_EQ(slurp(trace).rfind(cli::kTraceMagic, 0), 0u);

    const auto rep = run_cli({"replay", "--trace", trace});
    EXPECT_EQ(rep.code, cli::kExitViolation) << rep.out;
    EXPECT_NE(rep.out.find("initial state:"), std::string::npos);
    EXPECT_NE(rep.out.find("step 1: "), std::string::npos);
    EXPECT_NE(rep.out.find("outcome: VIOLATION"), std::string::npos);
}

TEST_F(TempDir, BlockingReadsVerify) {
    const auto r = run_cli({"verify", "--algorithm", "ring-seq", "--size", "2", "--inserters", "2", "--reads", "blocking",
                            "--trace-out", path("none.trace")});
    EXPECT_EQ(r.code, cli::kExitOk) << r.out;
    EXPECT_FALSE(fs::exists(path("none.trace")));
}

TEST_F(TempDir, ReplayOfEmptyTraceShowsInitialState) {
    const std::string trace = path("empty.trace");
    std::ofstream(trace) << cli::kTraceMagic << "\n# algorithm=barrier\n# size=2\n";
    const auto r = run_cli({"replay", "--trace", trace});
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_NE(r.out.find("initial state:"), std::string::npos);
    EXPECT_EQ(r.out.find("step 1:"), std::string::npos);
    EXPECT_NE(r.out.find("outcome: CLEAN"), std::string::npos);
}

TEST_F(TempDir, ReplayWithConflictingSizeIsAMismatch) {
    const std::string trace = path("bug.trace");
    ASSERT_EQ(run_cli({"verify", "--algorithm", "ring-seq", "--size", "2", "--inserters", "2", "--trace-out", trace}).code,
              cli::kExitViolation);
    const auto r = run_cli({"replay", "--trace", trace, "--size", "3"});
    EXPECT_EQ(r.code, cli::kExitMismatch);
    EXPECT_NE(r.err.find("--size"), std::string::npos);
}

TEST_F(TempDir, ReplayOfIllegalStepIsAMismatch) {
    const std::string trace = path("bad.trace");
    std::ofstream(trace) << cli::kTraceMagic << "\n# algorithm=barrier\n# size=2\n"
                         << to_string(ScheduleStep::spontaneous(0, Action::StartTrace)) << "\n";
    EXPECT_EQ(run_cli({"replay", "--trace", trace}).code, cli::kExitMismatch);
}

TEST_F(TempDir, ReplayContradictingRecordedOutcomeIsAMismatch) {
    const std::string trace = path("lie.trace");
    std::ofstream(trace) << cli::kTraceMagic << "\n# algorithm=barrier\n# size=1\n# outcome=VIOLATION\n";
    EXPECT_EQ(run_cli({"replay", "--trace", trace}).code, cli::kExitMismatch);
}

TEST_F(TempDir, MalformedTraceIsAUsageError) {
    const std::string trace = path("junk.trace");
    std::ofstream(trace) << "hello\n";
    EXPECT_EQ(run_cli({"replay", "--trace", trace}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"replay", "--trace", path("missing.trace")}).code, cli::kExitUsage);
}

TEST(Usage, BadInvocationsExit64) {
    EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--algorithm", "ring-spiral"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--size", "0"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--algorithm", "recovery", "--size", "1"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--algorithm", "ring-par", "--failure", "1"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--algorithm", "recovery", "--size", "3", "--failure", "7"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--algorithm", "ring-seq", "--inserters", "0"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"replay"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"verify", "--help"}).code, cli::kExitOk);
}

TEST(Limits, StateLimitExits2) {
    const auto r = run_cli({"verify", "--algorithm", "barrier", "--size", "6", "--max-states", "10"});
    EXPECT_EQ(r.code, cli::kExitResourceLimit);
    EXPECT_NE(r.out.find("outcome: RESOURCE_LIMIT"), std::string::npos);
}

TEST(Json, ReportSchema) {
    const auto r = run_cli({"verify", "--algorithm", "recovery", "--size", "3", "--output", "json", "--no-time"});
    ASSERT_EQ(r.code, cli::kExitOk);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["schema"], cli::kReportSchema);
    EXPECT_EQ(j["scenario"]["algorithm"], "recovery");
    EXPECT_EQ(j["scenario"]["model_size"], 3);
    EXPECT_TRUE(j["elapsed_seconds"].is_null());
    EXPECT_EQ(j["outcome"], "VERIFIED");
    EXPECT_TRUE(j["failure"].is_null());
    EXPECT_TRUE(j["trace"].empty());
    EXPECT_GT(j["states_stored"].get<std::uint64_t>(), 0u);
}

TEST_F(TempDir, JsonViolationCarriesTrace) {
    const auto r = run_cli({"verify", "--algorithm", "ring-seq", "--size", "2", "--inserters", "2", "--output", "json",
                            "--trace-out", path("t")});
    ASSERT_EQ(r.code, cli::kExitViolation);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["failure"]["property"], "RING_TOPOLOGY");
    ASSERT_FALSE(j["trace"].empty());
    for (const auto& step : j["trace"]) {
        EXPECT_TRUE(step.contains("pid"));
        EXPECT_TRUE(step["kind"] == "message" || step["kind"] == "connect" || step["kind"] == "eof" ||
                    step["kind"] == "action");
    }
}

TEST(Determinism, VerifyNoTimeIsByteIdentical) {
    const std::vector<std::string> args{"verify", "--algorithm", "trace", "--size", "2", "--inserters", "1", "--no-time"};
    EXPECT_EQ(run_cli(args).out, run_cli(args).out);
}

TEST(Determinism, TimeColumnIsPresentByDefault) {
    const auto r = run_cli({"verify", "--algorithm", "barrier", "--size", "2"});
    EXPECT_EQ(r.out.find(" | - | "), std::string::npos);
}

TEST_F(TempDir, SimulateRoundTripsThroughReplay) {
    const std::string trace = path("sim.trace");
    const auto sim = run_cli({"simulate", "--algorithm", "ring-par", "--size", "1", "--inserters", "3", "--seed", "7",
                              "--trace-out", trace});
    ASSERT_EQ(sim.code, cli::kExitOk) << sim.out;
    EXPECT_NE(sim.out.find("outcome: CLEAN"), std::string::npos);
    const auto rep = run_cli({"replay", "--trace", trace});
    EXPECT_EQ(rep.code, cli::kExitOk) << rep.out;
}

TEST(Simulate, DepthLimitExits2) {
    const auto r = run_cli({"simulate", "--algorithm", "barrier", "--size", "4", "--max-depth", "3"});
    EXPECT_EQ(r.code, cli::kExitResourceLimit);
    EXPECT_NE(r.out.find("outcome: DEPTH_LIMIT"), std::string::npos);
}

TEST(Binary, SimulateIsByteIdenticalAcrossProcesses) {
    const std::string args = "simulate --algorithm ring-par --size 1 --inserters 3 --seed 7";
    const auto a = run_binary(args);
    const auto b = run_binary(args);
    EXPECT_EQ(a.code, 0);
    EXPECT_FALSE(a.out.empty());
    EXPECT_EQ(a.out, b.out);
}

TEST(Binary, ExitCodesSurviveTheProcessBoundary) {
    EXPECT_EQ(run_binary("verify --algorithm barrier --size 3").code, 0);
    EXPECT_EQ(run_binary("verify --algorithm nope").code, 64);
    EXPECT_EQ(run_binary("verify --algorithm ring-seq --size 2 --inserters 2 --trace-out /dev/null").code, 1);
}

TEST(TraceFileFormat, WriteThenReadIsIdentity) {
    cli::TraceFile t;
    t.scenario.algorithm = cli::Algorithm::Recovery;
    t.scenario.size = 4;
    t.scenario.inserters = 0;
    t.scenario.failure = 2;
    t.outcome = "VIOLATION";
    t.failure = Failure{PropertyKind::NeighborState, "d1 rhs2 stale"};
    t.steps = {ScheduleStep::spontaneous(2, Action::InjectFailure), ScheduleStep::spontaneous(0, Action::StartTrace)};
    std::stringstream ss;
    cli::write_trace(ss, t);
    const auto back = cli::read_trace(ss);
    EXPECT_EQ(back.scenario.algorithm, t.scenario.algorithm);
    EXPECT_EQ(back.scenario.size, 4);
    EXPECT_EQ(back.scenario.failure, std::optional<Pid>(2));
    EXPECT_EQ(back.outcome, "VIOLATION");
    EXPECT_EQ(back.failure, t.failure);
    EXPECT_EQ(back.steps, t.steps);
}
