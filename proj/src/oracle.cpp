#include "giftlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "giftlab/rewards.hpp"

namespace giftlab {

namespace {

constexpr uint64_t kBudget = 1000000;

uint64_t saturating_pow(uint64_t base, int exp) {
    const uint64_t cap = uint64_t{1} << 62;
    uint64_t out = 1;
    for (int i = 0; i < exp; ++i) {
        if (out > cap / base) return cap;
        out *= base;
    }
    return out;
}

struct TreeWalker {
    const PolicyParams& policy;
    const PolicyParams& ref;
    const Task& task;
    const std::vector<int>& prompt;
    const std::string gold;
    int max_len;
    bool include_truncated;
    OracleTable& table;
    std::vector<int> prefix;

    void record(double lp_pol, double lp_ref) {
        table.responses.push_back(prefix);
        table.logp_policy.push_back(lp_pol);
        table.logp_ref.push_back(lp_ref);
        table.prob_policy.push_back(std::exp(lp_pol));
        table.prob_ref.push_back(std::exp(lp_ref));
        table.rewards.push_back(verifiable_reward(task.vocab.decode(prefix), gold));
    }

    void walk(double lp_pol, double lp_ref) {
        const int depth = static_cast<int>(prefix.size());
        const auto next_pol =
            next_log_probs(policy, context_window(policy.dims, prompt, prefix, depth));
        const auto next_ref = next_log_probs(ref, context_window(ref.dims, prompt, prefix, depth));
        for (int t = 0; t < task.vocab.size(); ++t) {
            const double cp = lp_pol + next_pol[t];
            const double cr = lp_ref + next_ref[t];
            prefix.push_back(t);
            if (t == task.vocab.eos_id) {
                record(cp, cr);
            } else if (depth + 1 == max_len) {
                if (include_truncated) {
                    record(cp, cr);
                } else {
                    table.truncation_policy += std::exp(cp);
                    table.truncation_ref += std::exp(cr);
                }
            } else {
                walk(cp, cr);
            }
            prefix.pop_back();
        }
    }
};

struct WeightedStats {
    double mean = 0.0;
    double var = 0.0;
};

// Population statistics under weights normalized to sum 1. Zero-weight rows
// contribute nothing.
WeightedStats weighted_stats(const std::vector<double>& weights, const std::vector<double>& values,
                             double total) {
    WeightedStats s;
    for (size_t i = 0; i < values.size(); ++i)
        if (weights[i] > 0.0) s.mean += weights[i] / total * values[i];
    for (size_t i = 0; i < values.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        const double d = values[i] - s.mean;
        s.var += weights[i] / total * d * d;
    }
    return s;
}

double weight_total(const std::vector<double>& weights, const char* who) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument(std::string(who) + ": negative weight");
        total += w;
    }
    if (total <= 0.0) throw std::invalid_argument(std::string(who) + ": all weights are zero");
    return total;
}

// Log-ratio of a hypothetical distribution against the reference, skipping
// zero-probability rows (their weight removes them from every sum).
std::vector<double> log_ratio_at(const OracleTable& table, const std::vector<double>& probs) {
    if (static_cast<int>(probs.size()) != table.size())
        throw std::invalid_argument("oracle: distribution size does not match the table");
    std::vector<double> u(probs.size(), 0.0);
    for (size_t i = 0; i < probs.size(); ++i)
        if (probs[i] > 0.0) u[i] = std::log(probs[i]) - table.logp_ref[i];
    return u;
}

AffineFit fit_weighted(const OracleTable& table, const std::vector<double>& weights,
                       const std::vector<double>& u) {
    const auto [rmin, rmax] = std::minmax_element(table.rewards.begin(), table.rewards.end());
    if (table.rewards.empty() || *rmin == *rmax)
        throw std::invalid_argument("affine_fit: rewards are all equal, fit undefined");
    const double total = weight_total(weights, "affine_fit");

    const WeightedStats sr = weighted_stats(weights, table.rewards, total);
    const WeightedStats su = weighted_stats(weights, u, total);
    if (sr.var <= 0.0)
        throw std::invalid_argument("affine_fit: rewards carry no variation under the weights");

    double cov = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        cov += weights[i] / total * (table.rewards[i] - sr.mean) * (u[i] - su.mean);
    }

    AffineFit fit;
    fit.slope = cov / sr.var;
    fit.intercept = su.mean - fit.slope * sr.mean;
    double ss_res = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        const double e = u[i] - (fit.slope * table.rewards[i] + fit.intercept);
        ss_res += weights[i] / total * e * e;
    }
    fit.r2 = su.var > 0.0 ? std::clamp(1.0 - ss_res / su.var, 0.0, 1.0) : 1.0;
    return fit;
}

PopulationLoss population_loss_weighted(const OracleTable& table,
                                        const std::vector<double>& weights, std::vector<double> u,
                                        const ObjectiveConfig& cfg) {
    cfg.validate();
    const double total = weight_total(weights, "exact_population_loss");
    if (cfg.aggregation == Aggregation::kl_average)
        for (size_t i = 0; i < u.size(); ++i) u[i] /= table.responses[i].size();

    const WeightedStats sr = weighted_stats(weights, table.rewards, total);
    if (std::sqrt(sr.var) < cfg.norm_eps) return {0.0, true};
    const WeightedStats su = weighted_stats(weights, u, total);
    if (std::sqrt(su.var) < cfg.norm_eps) return {1.0 + cfg.beta * cfg.beta, false};

    const double sd_r = std::sqrt(sr.var), sd_u = std::sqrt(su.var);
    double loss = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        const double gap =
            (table.rewards[i] - sr.mean) / sd_r - cfg.beta * (u[i] - su.mean) / sd_u;
        loss += weights[i] / total * gap * gap;
    }
    return {loss, false};
}

}  // namespace

OracleTable enumerate_responses(const PolicyParams& policy, const PolicyParams& ref,
                                const Task& task, const std::vector<int>& prompt, int max_len,
                                bool include_truncated) {
    const int v = task.vocab.size();
    if (policy.dims.vocab != v || ref.dims.vocab != v)
        throw std::invalid_argument("enumerate_responses: policy vocab does not match the task");
    if (max_len < 1) throw std::invalid_argument("enumerate_responses: max_len must be >= 1");
    if (prompt.empty()) throw std::invalid_argument("enumerate_responses: empty prompt");
    for (int t : prompt)
        if (t < 0 || t >= v) throw std::invalid_argument("enumerate_responses: bad prompt token");

    const uint64_t count = saturating_pow(static_cast<uint64_t>(v), max_len);
    if (count > kBudget)
        throw std::invalid_argument("enumerate_responses: " + std::to_string(count) +
                                    " sequences exceed the budget of " + std::to_string(kBudget));

    OracleTable table;
    table.prompt = prompt;
    TreeWalker walker{policy, ref,  task, prompt, gold_answer(task, prompt), max_len,
                      include_truncated, table,   {}};
    walker.walk(0.0, 0.0);
    table.z = partition_function(table, 1.0);
    return table;
}

double partition_function(const OracleTable& table, double c) {
    double z = 0.0;
    for (int i = 0; i < table.size(); ++i) z += table.prob_ref[i] * std::exp(c * table.rewards[i]);
    return z;
}

std::vector<double> optimal_policy(const OracleTable& table, double c) {
    if (!(c >= 0.0) || !std::isfinite(c))
        throw std::invalid_argument("optimal_policy: c must be finite and nonnegative");
    if (table.size() == 0) throw std::invalid_argument("optimal_policy: empty table");
    const double z = partition_function(table, c);
    std::vector<double> out(table.size());
    for (int i = 0; i < table.size(); ++i)
        out[i] = table.prob_ref[i] * std::exp(c * table.rewards[i]) / z;
    return out;
}

AffineFit affine_fit(const OracleTable& table) {
    std::vector<double> u(table.size());
    for (int i = 0; i < table.size(); ++i) u[i] = table.logp_policy[i] - table.logp_ref[i];
    return fit_weighted(table, table.prob_policy, u);
}

AffineFit affine_fit(const OracleTable& table, const std::vector<double>& probs) {
    return fit_weighted(table, probs, log_ratio_at(table, probs));
}

PopulationLoss exact_population_loss(const OracleTable& table, const ObjectiveConfig& cfg) {
    std::vector<double> u(table.size());
    for (int i = 0; i < table.size(); ++i) u[i] = table.logp_policy[i] - table.logp_ref[i];
    return population_loss_weighted(table, table.prob_policy, std::move(u), cfg);
}

PopulationLoss exact_population_loss(const OracleTable& table, const std::vector<double>& probs,
                                     const ObjectiveConfig& cfg) {
    return population_loss_weighted(table, probs, log_ratio_at(table, probs), cfg);
}

void write_oracle_report(const std::string& path, const std::vector<OracleReportRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_oracle_report: cannot open " + path);
    out << "prompt_id,z,slope,r2,exact_loss\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g,%.12g\n", r.prompt_id, r.z, r.slope,
                      r.r2, r.exact_loss);
        out << line;
    }
    if (!out) throw std::runtime_error("write_oracle_report: write failed for " + path);
}

}  // namespace giftlab
