#include <gtest/gtest.h>

#include <map>
#include <set>

#include "mpdcheck/explorer.hpp"
#include "mpdcheck/models.hpp"
#include "support/bfs_oracle.hpp"

using namespace mpdcheck;

namespace {

// Two counters, each advanced by its own process up to `limit`. The state
// graph is a (limit+1)^2 grid, so every count is known in closed form.
struct GridModel {
    struct State {
        int a = 0;
        int b = 0;
    };
    int limit = 2;
    std::optional<std::pair<int, int>> bad;      // quiescent-only property fails here
    std::optional<std::pair<int, int>> raising;  // entering this state raises

    State initial() const { return {}; }
    std::vector<ScheduleStep> enabled_steps(const State& s) const {
        std::vector<ScheduleStep> out;
        if (s.a < limit) out.push_back(ScheduleStep::spontaneous(0, Action::BeginInsertion));
        if (s.b < limit) out.push_back(ScheduleStep::spontaneous(1, Action::BeginInsertion));
        return out;
    }
    bool quiescent(const State& s) const { return enabled_steps(s).empty(); }
    State apply(const State& s, const ScheduleStep& step) const { return apply_enabled(s, step); }
    State apply_enabled(const State& s, const ScheduleStep& step) const {
        State t = s;
        (step.pid == 0 ? t.a : t.b) += 1;
        if (raising && t.a == raising->first && t.b == raising->second) throw ProtocolViolation("grid handler raised");
        return t;
    }
    void encode(const State& s, std::string& out) const {
        out.push_back(static_cast<char>(s.a));
        out.push_back(static_cast<char>(s.b));
    }
    std::optional<Failure> check_every(const State&) const { return std::nullopt; }
    std::optional<Failure> check_quiescent(const State& s) const {
        if (bad && s.a == bad->first && s.b == bad->second) return Failure{PropertyKind::RingTopology, "grid corner"};
        return std::nullopt;
    }
    std::string dump(const State& s) const { return std::to_string(s.a) + "," + std::to_string(s.b) + "\n"; }
};

static_assert(ExplorableModel<GridModel>);
static_assert(ExplorableModel<DaemonModel>);
static_assert(ExplorableModel<BarrierModel>);

RingScenario parallel(int initial, int inserters) {
    RingScenario sc;
    sc.initial_size = initial;
    sc.inserters = inserters;
    return sc;
}

RingScenario buggy() {
    RingScenario sc = parallel(2, 2);
    sc.variant = Variant::Sequential;
    sc.check_neighbor_state = false;
    return sc;
}

template <typename M>
std::string enc(const M& m, const typename M::State& s) {
    std::string out;
    m.encode(s, out);
    return out;
}

}  // namespace

TEST(ExploreGrid, CountsMatchClosedForm) {
    for (int limit : {1, 2, 3, 5}) {
        GridModel g;
        g.limit = limit;
        const auto r = explore(g);
        const std::uint64_t states = static_cast<std::uint64_t>((limit + 1) * (limit + 1));
        const std::uint64_t edges = static_cast<std::uint64_t>(2 * limit * (limit + 1));
        EXPECT_EQ(r.outcome, Outcome::Verified);
        EXPECT_EQ(r.states_stored, states);
        EXPECT_EQ(r.states_matched, edges - (states - 1));
        EXPECT_EQ(r.max_depth, static_cast<std::uint64_t>(2 * limit));
    }
}

TEST(ExploreGrid, QuiescentFailureCarriesTrace) {
    GridModel g;
    g.bad = std::pair{2, 2};
    const auto r = explore(g);
    ASSERT_EQ(r.outcome, Outcome::Violation);
    EXPECT_EQ(r.failure->property, PropertyKind::RingTopology);
    ASSERT_EQ(r.trace.size(), 4u);
    const auto rep = replay(g, r.trace);
    EXPECT_EQ(rep.failure, r.failure);
}

TEST(ExploreGrid, RaisedHandlerErrorIsAViolation) {
    GridModel g;
    g.raising = std::pair{1, 1};
    const auto r = explore(g);
    ASSERT_EQ(r.outcome, Outcome::Violation);
    EXPECT_EQ(r.failure->property, PropertyKind::HandlerError);
    EXPECT_EQ(r.trace.size(), 2u);
}

TEST(ExploreGrid, StateLimitStopsWithPartialCounts) {
    GridModel g;
    g.limit = 10;
    const auto r = explore(g, ExploreOptions{Limits{10'000, 20}});
    EXPECT_EQ(r.outcome, Outcome::ResourceLimit);
    EXPECT_GT(r.states_stored, 20u);
    EXPECT_LE(r.states_stored, 21u);
}

TEST(ExploreGrid, DepthLimitStops) {
    GridModel g;
    g.limit = 10;
    EXPECT_EQ(explore(g, ExploreOptions{Limits{5, 1'000'000}}).outcome, Outcome::ResourceLimit);
}

TEST(EnabledSteps, QuiescenceIsEmpty) {
    const BarrierModel m(BarrierScenario{2});
    const auto sim = simulate(m, 4);
    ASSERT_FALSE(sim.failure);
    EXPECT_TRUE(m.enabled_steps(sim.final_state).empty());
    EXPECT_TRUE(m.quiescent(sim.final_state));
}

TEST(EnabledSteps, TwoInsertersReadyToBegin) {
    const DaemonModel m(parallel(1, 2));
    const auto steps = m.enabled_steps(m.initial());
    ASSERT_EQ(steps.size(), 2u);
    EXPECT_EQ(steps[0], ScheduleStep::spontaneous(1, Action::BeginInsertion));
    EXPECT_EQ(steps[1], ScheduleStep::spontaneous(2, Action::BeginInsertion));
}

TEST(EnabledSteps, OrderedByPidThenFd) {
    const DaemonModel m(parallel(1, 3));
    auto s = m.initial();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto sim = simulate(m, seed);
        replay(m, sim.trace, [&](const DaemonSystem& before, const ScheduleStep&, const DaemonSystem&) {
            const auto steps = m.enabled_steps(before);
            for (std::size_t i = 1; i < steps.size(); ++i) {
                const auto& a = steps[i - 1];
                const auto& b = steps[i];
                ASSERT_LE(a.pid, b.pid);
                if (a.pid == b.pid && a.kind != StepKind::Action && b.kind != StepKind::Action) {
                    ASSERT_LT(a.fd.index, b.fd.index);
                }
                if (a.pid == b.pid) ASSERT_FALSE(a.kind == StepKind::Action && b.kind != StepKind::Action);
            }
        });
    }
}

TEST(Apply, IsDeterministicAndPure) {
    const DaemonModel m(parallel(1, 2));
    const auto s = m.initial();
    const auto snapshot = enc(m, s);
    for (const auto& step : m.enabled_steps(s)) {
        EXPECT_EQ(enc(m, m.apply(s, step)), enc(m, m.apply(s, step)));
    }
    EXPECT_EQ(enc(m, s), snapshot);
}

TEST(Apply, RejectsStepThatIsNotEnabled) {
    const DaemonModel m(parallel(1, 1));
    EXPECT_THROW(m.apply(m.initial(), ScheduleStep::spontaneous(0, Action::BeginInsertion)), ContractViolation);
    const BarrierModel b(BarrierScenario{2});
    EXPECT_THROW(b.apply(b.initial(), ScheduleStep::spontaneous(0, Action::StartTrace)), ContractViolation);
}

TEST(Encode, PerturbingOneMessageChangesEncoding) {
    const DaemonModel m(parallel(1, 3));
    int perturbed = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto sim = simulate(m, seed);
        replay(m, sim.trace, [&](const DaemonSystem&, const ScheduleStep&, const DaemonSystem& after) {
            for (std::size_t i = 0; i < after.sockets.conn_max(); ++i) {
                const FileDescriptor fd{static_cast<std::uint16_t>(i)};
                if (after.sockets.channel(fd).empty()) continue;
                // Rebuild the channel through the public API with the head's hop count bumped.
                auto copy = after;
                auto& table = copy.sockets;
                const Pid owner = table.descriptor(fd).owner_pid;
                std::vector<Message> q;
                while (!table.channel(fd).empty()) q.push_back(table.read(owner, fd));
                q.front().hops ^= 1;
                const FileDescriptor writer = table.descriptor(fd).other_fd;
                if (!writer.valid()) continue;
                const Pid wpid = table.descriptor(writer).owner_pid;
                for (auto& msg : q) table.write(wpid, writer, msg);
                table.rearm(owner);
                EXPECT_NE(enc(m, after), enc(m, copy));
                ++perturbed;
            }
        });
    }
    EXPECT_GT(perturbed, 0);
}

TEST(Encode, BarrierInitialStateIsStable) {
    const BarrierModel m(BarrierScenario{2});
    std::string hex;
    for (unsigned char c : enc(m, m.initial())) {
        static const char* digits = "0123456789abcdef";
        hex += digits[c >> 4];
        hex += digits[c & 15];
    }
    // Frozen bytes: a change here invalidates stored traces and counts.
    EXPECT_EQ(hex, "03010100040000000303000004020100000002010000030000000000000000000000000000000000");
}

TEST(Encode, EqualEncodingsHaveEqualFutures) {
    const DaemonModel m(parallel(1, 2));
    std::map<std::string, std::vector<std::string>> seen;
    int repeats = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto sim = simulate(m, seed);
        replay(m, sim.trace, [&](const DaemonSystem& before, const ScheduleStep&, const DaemonSystem&) {
            std::vector<std::string> future;
            for (const auto& step : m.enabled_steps(before)) future.push_back(to_string(step) + enc(m, m.apply(before, step)));
            auto [it, inserted] = seen.emplace(enc(m, before), future);
            if (!inserted) {
                ++repeats;
                EXPECT_EQ(it->second, future);
            }
        });
    }
    EXPECT_GT(repeats, 0);
}

TEST(Explore, ParallelSingleDaemonIsTiny) {
    const auto r = explore(DaemonModel(parallel(1, 0)));
    EXPECT_EQ(r.outcome, Outcome::Verified);
    EXPECT_LT(r.states_stored, 10u);
}

TEST(Explore, SequentialBugTraceShowsSharedDRight) {
    const DaemonModel m(buggy());
    const auto r = explore(m);
    ASSERT_EQ(r.outcome, Outcome::Violation);
    const auto rep = replay(m, r.trace);
    ASSERT_TRUE(rep.failure);
    EXPECT_EQ(rep.failure->property, PropertyKind::RingTopology);
    const auto& d = rep.final_state.daemons;
    EXPECT_EQ(d[2].rhs_id, d[3].rhs_id);
}

TEST(Explore, BarrierOfThreeVerifies) {
    EXPECT_EQ(explore(BarrierModel(BarrierScenario{3})).outcome, Outcome::Verified);
}

TEST(Explore, QuiescentCallbackSeesEachFinalState) {
    std::set<std::vector<Pid>> orders;
    const DaemonModel m(parallel(1, 2));
    const auto r = explore(m, {}, [&](const DaemonSystem& s) { orders.insert(follow_rhs(s, 0, 3)); });
    EXPECT_EQ(r.outcome, Outcome::Verified);
    EXPECT_EQ(orders, (std::set<std::vector<Pid>>{{0, 1, 2}, {0, 2, 1}}));
}

TEST(Explore, MonotoneInModelSize) {
    std::uint64_t prev = 0;
    for (int n = 1; n <= 6; ++n) {
        const auto r = explore(BarrierModel(BarrierScenario{n}));
        EXPECT_GT(r.states_stored, prev);
        prev = r.states_stored;
    }
    prev = 0;
    for (int k = 0; k <= 2; ++k) {
        const auto r = explore(DaemonModel(parallel(1, k)));
        EXPECT_GT(r.states_stored, prev);
        prev = r.states_stored;
    }
}

TEST(Explore, MatchesBruteForceOnSmallModels) {
    auto pruned = [](const auto& m) {
        std::set<std::string> q;
        const auto r = explore(m, {}, [&](const auto& s) { q.insert(enc(m, s)); });
        EXPECT_EQ(r.outcome, Outcome::Verified);
        return q;
    };
    const DaemonModel ring(parallel(1, 1));
    const auto bfs_ring = oracle::brute_force_quiescent(ring, 64);
    ASSERT_TRUE(bfs_ring.exhausted);
    EXPECT_EQ(pruned(ring), bfs_ring.quiescent);

    const BarrierModel barrier(BarrierScenario{2});
    const auto bfs_barrier = oracle::brute_force_quiescent(barrier, 64);
    ASSERT_TRUE(bfs_barrier.exhausted);
    EXPECT_EQ(pruned(barrier), bfs_barrier.quiescent);
}

TEST(Simulate, SameSeedSameTrace) {
    const DaemonModel m(parallel(1, 3));
    const auto a = simulate(m, 7);
    const auto b = simulate(m, 7);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_EQ(enc(m, a.final_state), enc(m, b.final_state));
}

TEST(Simulate, ParallelFourPassesForAnySeed) {
    const DaemonModel m(parallel(1, 3));
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto sim = simulate(m, seed);
        EXPECT_FALSE(sim.failure) << "seed " << seed;
        EXPECT_FALSE(sim.depth_limited);
    }
}

TEST(Simulate, SeedSweepFindsSequentialBug) {
    const DaemonModel m(buggy());
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const auto sim = simulate(m, seed);
        if (sim.failure && sim.failure->property == PropertyKind::RingTopology) ++hits;
    }
    EXPECT_GT(hits, 0);
}

TEST(Simulate, DepthLimitIsReported) {
    GridModel g;
    g.limit = 10;
    const auto sim = simulate(g, 1, 5);
    EXPECT_TRUE(sim.depth_limited);
    EXPECT_EQ(sim.trace.size(), 5u);
}

TEST(Replay, MismatchNamesTheStep) {
    const DaemonModel m(parallel(1, 1));
    std::vector<ScheduleStep> bogus{ScheduleStep::spontaneous(1, Action::BeginInsertion),
                                    ScheduleStep::spontaneous(1, Action::BeginInsertion)};
    try {
        replay(m, bogus);
        FAIL() << "expected a mismatch";
    } catch (const ReplayMismatch& e) {
        EXPECT_EQ(e.index, 1u);
    }
}

TEST(Topology, HardCodedRingOfThreePasses) {
    const DaemonModel m(parallel(3, 0));
    EXPECT_FALSE(check_ring_topology(m.initial(), {0, 1, 2}));
}

TEST(Topology, DanglingLinkFails) {
    const DaemonModel m(parallel(3, 0));
    auto s = m.initial();
    s.sockets.close(1, s.daemons[1].lhs_fd);
    s.daemons[1].lhs_fd = INVALID_FD;
    EXPECT_TRUE(check_ring_topology(s, {0, 1, 2}));
}

TEST(Topology, RingOfWrongSizeFails) {
    const DaemonModel m(parallel(3, 0));
    EXPECT_TRUE(check_ring_topology(m.initial(), {0, 1}));
}

TEST(NeighborState, SmallRings) {
    const DaemonModel one(parallel(1, 0));
    EXPECT_FALSE(check_neighbor_state(one.initial()));
    const DaemonModel two(parallel(2, 0));
    const auto s = two.initial();
    EXPECT_FALSE(check_neighbor_state(s));
    EXPECT_EQ(s.daemons[0].rhs2_id, identity_for(0));
    EXPECT_EQ(s.daemons[1].rhs2_id, identity_for(1));
}

TEST(NeighborState, StaleRhs2Fails) {
    const DaemonModel m(parallel(3, 0));
    auto s = m.initial();
    s.daemons[2].rhs2_id = identity_for(2);
    EXPECT_TRUE(check_neighbor_state(s));
}

TEST(Properties, EvaluationPoints) {
    EXPECT_EQ(evaluation_point(PropertyKind::BarrierInvariant), EvaluationPoint::EveryState);
    EXPECT_EQ(evaluation_point(PropertyKind::SocketInvariants), EvaluationPoint::EveryState);
    EXPECT_EQ(evaluation_point(PropertyKind::RingTopology), EvaluationPoint::QuiescenceOnly);
    EXPECT_EQ(evaluation_point(PropertyKind::NeighborState), EvaluationPoint::QuiescenceOnly);
    EXPECT_EQ(evaluation_point(PropertyKind::TraceDone), EvaluationPoint::QuiescenceOnly);
    EXPECT_EQ(evaluation_point(PropertyKind::BarrierEnd), EvaluationPoint::QuiescenceOnly);
}

TEST(ScheduleSteps, RoundTripThroughText) {
    const DaemonModel m(parallel(1, 2));
    const auto sim = simulate(m, 3);
    for (const auto& step : sim.trace) {
        const auto parsed = parse_step(to_string(step));
        ASSERT_TRUE(parsed) << to_string(step);
        EXPECT_EQ(*parsed, step);
    }
    EXPECT_FALSE(parse_step("pid=1 kind=message fd=3 cmd=nonsense"));
    EXPECT_FALSE(parse_step("pid=x kind=action fd=- cmd=start_trace"));
    EXPECT_FALSE(parse_step("pid=1 kind=eof fd=2"));
}
