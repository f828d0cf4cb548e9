#pragma once

#include <string>
#include <vector>

#include "giftlab/envs.hpp"
#include "giftlab/objectives.hpp"
#include "giftlab/policy.hpp"

namespace giftlab {

// Exhaustive enumeration of a prompt's response space with exact
// probabilities under the trained policy and the reference. Probabilities
// plus the reported truncation mass sum to 1 under each policy.
struct OracleTable {
    std::vector<int> prompt;
    std::vector<std::vector<int>> responses;  // EOS-terminated unless kept by include_truncated
    std::vector<double> logp_policy;
    std::vector<double> logp_ref;
    std::vector<double> prob_policy;
    std::vector<double> prob_ref;
    std::vector<double> rewards;
    double z = 0.0;  // sum of prob_ref * exp(reward), the partition sum at c = 1
    double truncation_policy = 0.0;
    double truncation_ref = 0.0;

    int size() const { return static_cast<int>(responses.size()); }
};

// Walks the full token tree to depth max_len. Rejected when V^max_len
// exceeds 10^6; the message carries the count. With include_truncated,
// non-EOS prefixes of length max_len are kept as responses (the single-step
// bandit reading) and the truncation mass is zero.
OracleTable enumerate_responses(const PolicyParams& policy, const PolicyParams& ref,
                                const Task& task, const std::vector<int>& prompt, int max_len,
                                bool include_truncated = false);

// Partition sum of prob_ref * exp(c * reward) over the enumerated responses.
double partition_function(const OracleTable& table, double c);

// Closed-form KL-regularized optimum: prob_ref * exp(c * reward) normalized
// over the table. c plays the role of an inverse temperature.
std::vector<double> optimal_policy(const OracleTable& table, double c);

struct AffineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;  // always clamped to [0, 1]
};

// Least squares of log(pi/pi_ref) against reward, weighted by the policy
// probability of each response. Rejected when all rewards are equal. The
// overload fits a hypothetical distribution over the same response space.
AffineFit affine_fit(const OracleTable& table);
AffineFit affine_fit(const OracleTable& table, const std::vector<double>& probs);

struct PopulationLoss {
    double value = 0.0;
    bool degenerate_rewards = false;
};

// Group-matching loss with normalization statistics taken over the full
// enumerated distribution (probability-weighted mean and std). Degenerate
// rewards return 0 with the flag set. A policy with zero implicit spread,
// the reference itself being the canonical case, evaluates via the
// expansion 1 + beta^2 - 2*beta*corr at corr = 0.
PopulationLoss exact_population_loss(const OracleTable& table, const ObjectiveConfig& cfg);
PopulationLoss exact_population_loss(const OracleTable& table, const std::vector<double>& probs,
                                     const ObjectiveConfig& cfg);

struct OracleReportRow {
    int prompt_id = 0;
    double z = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
    double exact_loss = 0.0;
};

void write_oracle_report(const std::string& path, const std::vector<OracleReportRow>& rows);

}  // namespace giftlab
