#pragma once

#include <string>
#include <vector>

#include "giftlab/autodiff.hpp"
#include "giftlab/policy.hpp"
#include "giftlab/rewards.hpp"

namespace giftlab {

enum class ObjectiveKind { gift, grpo, dpo, una };

ObjectiveKind parse_objective(const std::string& name);
std::string objective_name(ObjectiveKind kind);

// In-graph variance floor for the implicit side. Much larger than the strict
// zeroing eps: the escape gradient out of a spreadless row scales like
// 1/floor, and a 1e6-sized spike would poison an adaptive optimizer's second
// moments for thousands of steps. 1e-2 keeps the scale continuous as the
// spread grows through the floor.
inline constexpr double kNormFloor = 1e-2;

struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::gift;
    double beta = 1.0;
    Aggregation aggregation = Aggregation::kl_sum;
    bool grad_through_group_stats = true;
    double clip_ratio = 0.2;         // grpo only
    double kl_penalty_coeff = 0.001; // grpo only
    double norm_eps = kNormEps;      // strict rule, explicit side
    double norm_floor = kNormFloor;  // in-graph denominator floor, implicit side

    void validate() const;
};

// N responses to one prompt plus their verifiable rewards.
struct RolloutGroup {
    std::vector<int> prompt;
    std::vector<Response> responses;
    std::vector<double> explicit_rewards;

    int size() const { return static_cast<int>(responses.size()); }
};

struct PreferencePair {
    Response winner;
    Response loser;
};

// Best-vs-worst explicit reward per group. Groups whose rewards are all equal
// or whose extremes decode to the same token sequence yield no pair.
std::vector<PreferencePair> make_preference_pairs(const std::vector<RolloutGroup>& groups);

// 1xN row of per-response log-ratio rewards under the staged parameters. The
// reference side comes from the recorded rollout log-probs, which equal a
// fresh reference forward pass bit for bit. Group members share a prompt, so
// passing a cache collapses their repeated context-window forwards.
ad::Var implicit_reward_row(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                            Aggregation agg, ForwardCache* cache = nullptr);

// In-graph group normalization of a 1xN row. The denominator is
// sqrt(max(variance, eps^2)), so a degenerate row collapses to zeros (exactly
// so for the all-zero cold-start row) while its gradient stays finite and can
// re-spread the values; with grad_through_stats=false the mean and
// denominator are detached constants of the same numeric value.
ad::Var normalize_row(ad::Tape& tape, ad::Var row, bool grad_through_stats,
                      double eps = kNormFloor);

// Mean squared gap between fixed normalized explicit rewards and beta times a
// normalized implicit row already on the tape.
ad::Var gift_loss_from_normalized(ad::Tape& tape, ad::Var norm_implicit,
                                  const std::vector<double>& norm_explicit, double beta);

ad::Var gift_loss(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                  const ObjectiveConfig& cfg);

// Token-level clipped surrogate with a KL penalty. Old per-token log-probs are
// the rollout-time records carried by each Response.
ad::Var grpo_loss(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                  const ObjectiveConfig& cfg);

ad::Var dpo_loss(ad::Tape& tape, const ParamVars& pv, const std::vector<PreferencePair>& pairs,
                 const ObjectiveConfig& cfg);

ad::Var una_loss(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                 const ObjectiveConfig& cfg);

// Plain-value GIFT loss over raw reward vectors, both sides normalized with
// the strict rule. Used for logging and the oracle cross-checks.
double gift_loss_value(const std::vector<double>& implicit_raw,
                       const std::vector<double>& explicit_raw, double beta,
                       double eps = kNormEps);

}  // namespace giftlab
