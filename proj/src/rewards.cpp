#include "giftlab/rewards.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace giftlab {

Aggregation parse_aggregation(const std::string& name) {
    if (name == "kl_sum") return Aggregation::kl_sum;
    if (name == "kl_average") return Aggregation::kl_average;
    throw std::invalid_argument("aggregation: expected kl_sum or kl_average, got '" + name + "'");
}

std::string aggregation_name(Aggregation agg) {
    return agg == Aggregation::kl_sum ? "kl_sum" : "kl_average";
}

std::string canonicalize_answer(const std::string& text) {
    std::istringstream in(text);
    std::string tok, out;
    while (in >> tok) {
        bool numeric = !tok.empty();
        for (char ch : tok)
            if (!std::isdigit(static_cast<unsigned char>(ch))) numeric = false;
        if (numeric) {
            size_t i = 0;
            while (i + 1 < tok.size() && tok[i] == '0') ++i;
            tok = tok.substr(i);
        }
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

double verifiable_reward(const std::string& response_text, const std::string& gold) {
    if (gold.empty()) throw std::invalid_argument("verifiable_reward: empty gold answer");
    return canonicalize_answer(response_text) == canonicalize_answer(gold) ? 1.0 : 0.0;
}

double implicit_reward(const Response& response, Aggregation agg) {
    const size_t n = response.tokens.size();
    if (n == 0) throw std::invalid_argument("implicit_reward: empty response");
    if (response.logp_policy.size() != n || response.logp_ref.size() != n)
        throw std::invalid_argument("implicit_reward: log-prob records do not match length");
    double s = 0.0;
    for (size_t j = 0; j < n; ++j) s += response.logp_policy[j] - response.logp_ref[j];
    return agg == Aggregation::kl_sum ? s : s / static_cast<double>(n);
}

GroupStats group_stats(const std::vector<double>& values) {
    GroupStats st;
    st.n = static_cast<int>(values.size());
    if (st.n == 0) return st;
    double sum = 0.0;
    for (double v : values) sum += v;
    st.mean = sum / st.n;
    double sq = 0.0;
    for (double v : values) sq += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(sq / st.n);
    return st;
}

std::pair<std::vector<double>, GroupStats> group_normalize(const std::vector<double>& values,
                                                           double eps) {
    if (values.size() < 2)
        throw std::invalid_argument("group_normalize: need at least 2 values, got " +
                                    std::to_string(values.size()));
    const GroupStats st = group_stats(values);
    std::vector<double> out(values.size(), 0.0);
    if (st.stddev >= eps)
        for (size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - st.mean) / st.stddev;
    return {std::move(out), st};
}

bool z_cancellation_check(const std::vector<double>& raw, double shift, double scale, double eps) {
    std::vector<double> transformed(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) transformed[i] = scale * raw[i] + shift;
    const auto base = group_normalize(raw, eps).first;
    const auto moved = group_normalize(transformed, eps).first;
    for (size_t i = 0; i < raw.size(); ++i)
        if (std::fabs(base[i] - moved[i]) > 1e-9) return false;
    return true;
}

}  // namespace giftlab
