#pragma once

#include <string>
#include <utility>
#include <vector>

#include "giftlab/policy.hpp"

namespace giftlab {

// Default threshold below which a group's standard deviation counts as zero.
inline constexpr double kNormEps = 1e-6;

enum class Aggregation { kl_sum, kl_average };

Aggregation parse_aggregation(const std::string& name);
std::string aggregation_name(Aggregation agg);

// Joins tokens with single spaces after trimming and strips leading zeros from
// purely numeric tokens, so "07" and " 7 " both compare equal to "7".
std::string canonicalize_answer(const std::string& text);

// 1 iff the decoded response equals the gold answer after canonicalization.
// Unparsable or mismatched responses score 0; they are never errors.
double verifiable_reward(const std::string& response_text, const std::string& gold);

// Log-probability ratio of the whole response: sum or average of per-token
// log(pi_theta) - log(pi_ref). Exactly 0 when the policy equals the reference.
double implicit_reward(const Response& response, Aggregation agg);

struct GroupStats {
    double mean = 0.0;
    double stddev = 0.0;  // population convention, divisor N
    int n = 0;
};

GroupStats group_stats(const std::vector<double>& values);

// (v - mean) / stddev per element. Degenerate groups (stddev < eps) map to the
// all-zero vector instead of dividing by ~0.
std::pair<std::vector<double>, GroupStats> group_normalize(const std::vector<double>& values,
                                                           double eps = kNormEps);

// True iff normalizing scale*raw + shift reproduces normalizing raw within
// 1e-9 elementwise. Positive scales always pass; that is the cancellation of
// the per-prompt partition constant and of the beta coefficient.
bool z_cancellation_check(const std::vector<double>& raw, double shift, double scale,
                          double eps = kNormEps);

}  // namespace giftlab
