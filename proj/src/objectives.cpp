#include "giftlab/objectives.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace giftlab {

ObjectiveKind parse_objective(const std::string& name) {
    if (name == "gift") return ObjectiveKind::gift;
    if (name == "grpo") return ObjectiveKind::grpo;
    if (name == "dpo") return ObjectiveKind::dpo;
    if (name == "una") return ObjectiveKind::una;
    throw std::invalid_argument("objective: expected gift|grpo|dpo|una, got '" + name + "'");
}

std::string objective_name(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::gift: return "gift";
        case ObjectiveKind::grpo: return "grpo";
        case ObjectiveKind::dpo: return "dpo";
        case ObjectiveKind::una: return "una";
    }
    throw std::logic_error("objective_name: bad enum");
}

void ObjectiveConfig::validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("objective: beta must be > 0");
    if (!(clip_ratio > 0.0 && clip_ratio < 1.0))
        throw std::invalid_argument("objective: clip_ratio must lie in (0,1)");
    if (kl_penalty_coeff < 0.0)
        throw std::invalid_argument("objective: kl_penalty_coeff must be >= 0");
    if (!(norm_eps > 0.0)) throw std::invalid_argument("objective: norm_eps must be > 0");
    if (!(norm_floor >= norm_eps))
        throw std::invalid_argument("objective: norm_floor must be >= norm_eps");
}

namespace {

void check_group(const RolloutGroup& group, const char* what, bool need_rewards = true) {
    if (group.size() < 2)
        throw std::invalid_argument(std::string(what) + ": group needs at least 2 responses, got " +
                                    std::to_string(group.size()));
    if (need_rewards && group.explicit_rewards.size() != group.responses.size())
        throw std::invalid_argument(std::string(what) + ": explicit rewards missing (" +
                                    std::to_string(group.explicit_rewards.size()) + " for " +
                                    std::to_string(group.responses.size()) + " responses)");
    for (const Response& r : group.responses) {
        if (r.tokens.empty()) throw std::invalid_argument(std::string(what) + ": empty response");
        if (r.logp_policy.size() != r.tokens.size() || r.logp_ref.size() != r.tokens.size())
            throw std::invalid_argument(std::string(what) +
                                        ": response log-prob records do not match length");
    }
}

double ref_log_prob_sum(const Response& r) {
    double s = 0.0;
    for (double v : r.logp_ref) s += v;
    return s;
}

// log pi_theta(y|x) - log pi_ref(y|x) for one response, on the tape
ad::Var implicit_reward_node(ad::Tape& tape, const ParamVars& pv, const std::vector<int>& prompt,
                             const Response& r, Aggregation agg, ForwardCache* cache = nullptr) {
    ad::Var s = ad::sum(token_log_probs(tape, pv, prompt, r.tokens, cache));
    ad::Var out = ad::sub(s, ad::constant(tape, ref_log_prob_sum(r)));
    if (agg == Aggregation::kl_average)
        out = ad::scale(out, 1.0 / static_cast<double>(r.tokens.size()));
    return out;
}

}  // namespace

std::vector<PreferencePair> make_preference_pairs(const std::vector<RolloutGroup>& groups) {
    std::vector<PreferencePair> pairs;
    for (const RolloutGroup& g : groups) {
        if (g.size() < 2 || g.explicit_rewards.size() != g.responses.size()) continue;
        size_t best = 0, worst = 0;
        for (size_t i = 1; i < g.explicit_rewards.size(); ++i) {
            if (g.explicit_rewards[i] > g.explicit_rewards[best]) best = i;
            if (g.explicit_rewards[i] < g.explicit_rewards[worst]) worst = i;
        }
        if (g.explicit_rewards[best] == g.explicit_rewards[worst]) continue;
        if (g.responses[best].tokens == g.responses[worst].tokens) continue;
        pairs.push_back({g.responses[best], g.responses[worst]});
    }
    return pairs;
}

ad::Var implicit_reward_row(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                            Aggregation agg, ForwardCache* cache) {
    check_group(group, "implicit_reward_row", false);
    std::vector<ad::Var> parts;
    parts.reserve(group.responses.size());
    for (const Response& r : group.responses)
        parts.push_back(implicit_reward_node(tape, pv, group.prompt, r, agg, cache));
    return ad::concat_cols(tape, parts);
}

ad::Var normalize_row(ad::Tape& tape, ad::Var row, bool grad_through_stats, double eps) {
    if (row.value().rows != 1 || row.value().cols < 2)
        throw std::invalid_argument("normalize_row: need a 1xN row with N >= 2, got " +
                                    row.value().shape_str());
    (void)tape;
    ad::Var mu = ad::mean(row);
    ad::Var diff = ad::sub(row, mu);
    ad::Var var = ad::mean(ad::square(diff));
    ad::Var denom = ad::sqrt(ad::clip(var, eps * eps, std::numeric_limits<double>::infinity()));
    if (grad_through_stats) return ad::div(diff, denom);
    return ad::div(ad::sub(row, ad::stop_gradient(mu)), ad::stop_gradient(denom));
}

ad::Var gift_loss_from_normalized(ad::Tape& tape, ad::Var norm_implicit,
                                  const std::vector<double>& norm_explicit, double beta) {
    if (norm_implicit.value().rows != 1 ||
        norm_implicit.value().cols != static_cast<int>(norm_explicit.size()))
        throw std::invalid_argument("gift_loss_from_normalized: reward vectors disagree in size");
    ad::Var target = ad::constant(tape, Mat::row(norm_explicit));
    return ad::mean(ad::square(ad::sub(target, ad::scale(norm_implicit, beta))));
}

ad::Var gift_loss(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                  const ObjectiveConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ObjectiveKind::gift)
        throw std::invalid_argument("gift_loss: config kind is not gift");
    check_group(group, "gift_loss");
    ForwardCache cache;
    ad::Var u = implicit_reward_row(tape, pv, group, cfg.aggregation, &cache);
    ad::Var nu = normalize_row(tape, u, cfg.grad_through_group_stats, cfg.norm_floor);
    const auto norm_explicit = group_normalize(group.explicit_rewards, cfg.norm_eps).first;
    return gift_loss_from_normalized(tape, nu, norm_explicit, cfg.beta);
}

ad::Var grpo_loss(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                  const ObjectiveConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ObjectiveKind::grpo)
        throw std::invalid_argument("grpo_loss: config kind is not grpo");
    check_group(group, "grpo_loss");

    const auto advantages = group_normalize(group.explicit_rewards, cfg.norm_eps).first;
    ForwardCache cache;
    std::vector<ad::Var> surrogate_parts, kl_parts;
    for (size_t i = 0; i < group.responses.size(); ++i) {
        const Response& r = group.responses[i];
        ad::Var lp = token_log_probs(tape, pv, group.prompt, r.tokens, &cache);
        ad::Var old_lp = ad::constant(tape, Mat::row(r.logp_policy));
        ad::Var rho = ad::exp(ad::sub(lp, old_lp));
        ad::Var clipped = ad::clip(rho, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
        const double a = advantages[i];
        surrogate_parts.push_back(ad::minimum(ad::scale(rho, a), ad::scale(clipped, a)));

        // nonnegative estimator rho_ref - 1 - log rho_ref with rho_ref = pi_ref/pi_theta
        ad::Var d = ad::sub(ad::constant(tape, Mat::row(r.logp_ref)), lp);
        kl_parts.push_back(ad::sub(ad::exp(d), ad::add_const(d, 1.0)));
    }
    ad::Var surrogate = ad::mean(ad::concat_cols(tape, surrogate_parts));
    ad::Var kl = ad::mean(ad::concat_cols(tape, kl_parts));
    return ad::add(ad::scale(surrogate, -1.0), ad::scale(kl, cfg.kl_penalty_coeff));
}

ad::Var dpo_loss(ad::Tape& tape, const ParamVars& pv, const std::vector<PreferencePair>& pairs,
                 const ObjectiveConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ObjectiveKind::dpo)
        throw std::invalid_argument("dpo_loss: config kind is not dpo");
    if (pairs.empty()) throw std::invalid_argument("dpo_loss: empty pair batch");

    ForwardCache cache;
    std::vector<ad::Var> parts;
    parts.reserve(pairs.size());
    for (const PreferencePair& p : pairs) {
        if (p.winner.tokens == p.loser.tokens && p.winner.prompt == p.loser.prompt)
            throw std::invalid_argument("dpo_loss: winner and loser are the same response");
        ad::Var rw = implicit_reward_node(tape, pv, p.winner.prompt, p.winner,
                                          Aggregation::kl_sum, &cache);
        ad::Var rl = implicit_reward_node(tape, pv, p.loser.prompt, p.loser,
                                          Aggregation::kl_sum, &cache);
        ad::Var margin = ad::scale(ad::sub(rw, rl), cfg.beta);
        parts.push_back(ad::scale(ad::logsigmoid(margin), -1.0));
    }
    return ad::mean(ad::concat_cols(tape, parts));
}

ad::Var una_loss(ad::Tape& tape, const ParamVars& pv, const RolloutGroup& group,
                 const ObjectiveConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ObjectiveKind::una)
        throw std::invalid_argument("una_loss: config kind is not una");
    if (group.responses.empty()) throw std::invalid_argument("una_loss: empty batch");
    if (group.explicit_rewards.size() != group.responses.size())
        throw std::invalid_argument("una_loss: explicit rewards missing");
    for (const Response& r : group.responses)
        if (r.tokens.empty()) throw std::invalid_argument("una_loss: empty response");

    ForwardCache cache;
    std::vector<ad::Var> parts;
    parts.reserve(group.responses.size());
    for (size_t i = 0; i < group.responses.size(); ++i) {
        ad::Var u =
            implicit_reward_node(tape, pv, group.responses[i].prompt, group.responses[i],
                                 cfg.aggregation, &cache);
        ad::Var gap = ad::sub(ad::constant(tape, group.explicit_rewards[i]), ad::scale(u, cfg.beta));
        parts.push_back(ad::square(gap));
    }
    return ad::mean(ad::concat_cols(tape, parts));
}

double gift_loss_value(const std::vector<double>& implicit_raw,
                       const std::vector<double>& explicit_raw, double beta, double eps) {
    if (implicit_raw.size() != explicit_raw.size())
        throw std::invalid_argument("gift_loss_value: reward vectors disagree in size");
    const auto u = group_normalize(implicit_raw, eps).first;
    const auto e = group_normalize(explicit_raw, eps).first;
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        const double gap = e[i] - beta * u[i];
        acc += gap * gap;
    }
    return acc / static_cast<double>(u.size());
}

}  // namespace giftlab
