#pragma once

#include <string>
#include <vector>

namespace pnr {

/// One response in the candidate pool.
struct Candidate {
    std::string text;
    int plan_index = 0;
    int edit_depth = 0;  // 0 for the initial generation
    double temperature = 0.0;
};

/// All responses of one run, ordered by (plan_index, edit_depth).
struct CandidatePool {
    std::vector<Candidate> candidates;
    int n_plans = 0;
    int rounds = 0;

    std::size_t size() const noexcept { return candidates.size(); }
    bool empty() const noexcept { return candidates.empty(); }
};

}  // namespace pnr
