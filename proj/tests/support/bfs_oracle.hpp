#pragma once

// Brute-force reachability without a visited set: every interleaving is
// expanded level by level, so states reached along different paths are
// expanded again. Used as an independent check of the pruned search.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mpdcheck::oracle {

struct BfsResult {
    std::set<std::string> quiescent;  // encodings of states with no enabled step
    std::size_t paths = 0;            // nodes of the unfolded tree
    bool exhausted = false;           // frontier emptied within the depth bound
};

template <typename Model>
BfsResult brute_force_quiescent(const Model& model, std::size_t depth_bound) {
    using State = typename Model::State;
    BfsResult out;
    std::vector<State> frontier{model.initial()};
    for (std::size_t depth = 0; depth <= depth_bound && !frontier.empty(); ++depth) {
        std::vector<State> next;
        for (const State& s : frontier) {
            ++out.paths;
            const auto steps = model.enabled_steps(s);
            if (steps.empty()) {
                std::string key;
                model.encode(s, key);
                out.quiescent.insert(std::move(key));
                continue;
            }
            for (const auto& step : steps) next.push_back(model.apply(s, step));
        }
        frontier = std::move(next);
    }
    out.exhausted = frontier.empty();
    return out;
}

}  // namespace mpdcheck::oracle
