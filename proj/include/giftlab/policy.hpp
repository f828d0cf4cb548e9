#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "giftlab/autodiff.hpp"
#include "giftlab/mat.hpp"

namespace giftlab {

// Token ids are dense 0..V-1. BOS and EOS are ordinary vocabulary entries; the
// policy may emit either, they just never match a gold answer.
struct Vocab {
    std::vector<std::string> tokens;
    int bos_id = 0;
    int eos_id = 1;

    int size() const { return static_cast<int>(tokens.size()); }

    // Joins non-special tokens with single spaces. Stops before the first EOS.
    std::string decode(const std::vector<int>& ids) const;
    // Splits on whitespace; unknown symbols are rejected.
    std::vector<int> encode(const std::string& text) const;
    int id_of(const std::string& token) const;
};

Vocab make_vocab(const std::vector<std::string>& payload_symbols);

struct PolicyDims {
    int vocab = 0;   // V
    int embed = 0;   // d
    int window = 8;  // k, context window over the last k tokens
};

// Feed-forward autoregressive model: the last `window` tokens are embedded,
// concatenated, passed through one tanh layer of width `embed`, then projected
// to vocabulary logits.
struct PolicyParams {
    PolicyDims dims;
    Mat emb;   // V x d
    Mat w1;    // (k*d) x d
    Mat b1;    // 1 x d
    Mat wout;  // d x V
    Mat bout;  // 1 x V

    bool all_finite() const;
};

PolicyParams init_params(PolicyDims dims, uint64_t seed);

struct Response {
    std::vector<int> prompt;
    std::vector<int> tokens;  // ends with EOS or truncated at max length
    std::vector<double> logp_policy;  // per token, temperature 1
    std::vector<double> logp_ref;

    int length() const { return static_cast<int>(tokens.size()); }
};

inline constexpr int kMaxSequenceLen = 4096;

// Last-k context ending just before response position `pos` (0-based within
// the response). The stream is [BOS] + prompt + response, left-padded with BOS.
std::vector<int> context_window(const PolicyDims& dims, const std::vector<int>& prompt,
                                const std::vector<int>& response, int pos);

// Log-probabilities over the next token for one context window (plain path).
std::vector<double> next_log_probs(const PolicyParams& params, const std::vector<int>& window);

// Per-token log-probabilities of an existing response under `params`.
std::vector<double> response_log_probs(const PolicyParams& params, const std::vector<int>& prompt,
                                       const std::vector<int>& tokens);

double sum_log_prob(const PolicyParams& params, const std::vector<int>& prompt,
                    const std::vector<int>& tokens);

// Memoizes next-token log-prob rows (policy, reference) by context window.
// Group rollouts draw many responses from one prompt, so early windows
// repeat; the rows are pure functions of the window at fixed parameters.
// Scope a cache to one parameter snapshot and drop it when either changes.
struct SampleCache {
    std::map<std::vector<int>, std::pair<std::vector<double>, std::vector<double>>> rows;
};

// Draws tokens from softmax(logits/temperature) until EOS or max_len. The
// recorded log-probs are at temperature 1 under both the policy and `ref`.
Response sample_response(const PolicyParams& params, const PolicyParams& ref,
                         const std::vector<int>& prompt, double temperature, int max_len,
                         std::mt19937_64& rng, SampleCache* cache = nullptr);

std::vector<int> greedy_decode(const PolicyParams& params, const std::vector<int>& prompt,
                               int max_len);

// ---- tape forward, used by the objectives ----

struct ParamVars {
    PolicyDims dims;
    ad::Var emb, w1, b1, wout, bout;
};

ParamVars stage_params(ad::Tape& tape, const PolicyParams& params);

// Memoizes per-window forward passes within one tape. Rollout groups score
// many responses against the same prompt, so their context windows repeat;
// sharing the log-softmax node is exact (reverse mode sums gradients over
// uses) and skips rebuilding identical subgraphs. Never reuse across tapes.
struct ForwardCache {
    std::map<std::vector<int>, ad::Var> rows;
};

// 1xT row of per-token log-probabilities of `tokens` given `prompt`. The
// arithmetic matches response_log_probs bit for bit.
ad::Var token_log_probs(ad::Tape& tape, const ParamVars& pv, const std::vector<int>& prompt,
                        const std::vector<int>& tokens, ForwardCache* cache = nullptr);

// ---- checkpoint I/O ----
// Little-endian binary: magic, version, V, d, k as u32, then the parameter
// arrays of the policy followed by the reference snapshot, in declaration
// order (emb, w1, b1, wout, bout) as raw doubles. Round-trips bit-exactly.

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const PolicyParams& reference);
std::pair<PolicyParams, PolicyParams> load_checkpoint(const std::string& path);

}  // namespace giftlab
