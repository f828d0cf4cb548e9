#include "giftlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace giftlab {

namespace {

double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

void check_token_ids(const std::vector<int>& ids, int vocab, const char* what) {
    for (int t : ids) {
        if (t < 0 || t >= vocab)
            throw std::invalid_argument(std::string(what) + ": token id " + std::to_string(t) +
                                        " outside vocab of size " + std::to_string(vocab));
    }
}

void log_softmax_inplace(std::vector<double>& x) {
    double mx = x[0];
    for (size_t i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : x) v -= lse;
}

}  // namespace

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int t : ids) {
        if (t == eos_id) break;
        if (!out.empty()) out += ' ';
        out += tokens[t];
    }
    return out;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(id_of(tok));
    return out;
}

int Vocab::id_of(const std::string& token) const {
    for (int i = 0; i < size(); ++i)
        if (tokens[i] == token) return i;
    throw std::invalid_argument("vocab: unknown token '" + token + "'");
}

Vocab make_vocab(const std::vector<std::string>& payload_symbols) {
    Vocab v;
    v.tokens = {"<bos>", "<eos>"};
    v.bos_id = 0;
    v.eos_id = 1;
    for (const auto& s : payload_symbols) v.tokens.push_back(s);
    if (v.size() > 64) throw std::invalid_argument("vocab: size exceeds 64");
    return v;
}

bool PolicyParams::all_finite() const {
    for (const Mat* m : {&emb, &w1, &b1, &wout, &bout})
        for (double v : m->data)
            if (!std::isfinite(v)) return false;
    return true;
}

PolicyParams init_params(PolicyDims dims, uint64_t seed) {
    if (dims.vocab < 2 || dims.embed < 1 || dims.window < 1)
        throw std::invalid_argument("init_params: bad dims");
    PolicyParams p;
    p.dims = dims;
    p.emb = Mat(dims.vocab, dims.embed);
    p.w1 = Mat(dims.window * dims.embed, dims.embed);
    p.b1 = Mat(1, dims.embed);
    p.wout = Mat(dims.embed, dims.vocab);
    p.bout = Mat(1, dims.vocab);

    std::mt19937_64 rng(seed);
    auto fill = [&](Mat& m, double scale) {
        for (double& v : m.data) v = (2.0 * uniform_unit(rng) - 1.0) * scale;
    };
    // Two-scale init. Embedding and hidden weights are sized so tanh
    // pre-activations have O(1) spread at any width (a product of two
    // uniform(-a,a) entries has variance a^4/9; summing k*d of them gives
    // spread ~ sqrt(k*d)*a^2/3, which this choice pins near 1). The readout
    // starts two orders smaller so initial logits sit within a few
    // hundredths of a nat of uniform: the starting policy is near-uniform
    // while the feature layer is already expressive enough to train.
    const double kd = static_cast<double>(dims.window) * static_cast<double>(dims.embed);
    const double feature_scale = 1.7 / std::pow(kd, 0.25);
    const double readout_scale = 0.05 / std::sqrt(static_cast<double>(dims.embed));
    fill(p.emb, feature_scale);
    fill(p.w1, feature_scale);
    fill(p.wout, readout_scale);
    // biases stay zero
    return p;
}

std::vector<int> context_window(const PolicyDims& dims, const std::vector<int>& prompt,
                                const std::vector<int>& response, int pos) {
    const int k = dims.window;
    const int np = static_cast<int>(prompt.size());
    std::vector<int> w(k);
    const int total = 1 + np + pos;  // stream is [BOS] + prompt + response[0..pos)
    for (int j = 0; j < k; ++j) {
        const int idx = total - k + j;
        if (idx <= 0)
            w[j] = 0;  // BOS padding; make_vocab pins bos_id to 0
        else if (idx <= np)
            w[j] = prompt[idx - 1];
        else
            w[j] = response[idx - 1 - np];
    }
    return w;
}

std::vector<double> next_log_probs(const PolicyParams& params, const std::vector<int>& window) {
    const PolicyDims& d = params.dims;
    if (static_cast<int>(window.size()) != d.window)
        throw std::invalid_argument("next_log_probs: window size " + std::to_string(window.size()) +
                                    " != " + std::to_string(d.window));
    check_token_ids(window, d.vocab, "next_log_probs");

    // concatenated context embedding, then one tanh layer, then logits;
    // loop order matches the tape ops so both paths are bit-identical
    std::vector<double> x(static_cast<size_t>(d.window) * d.embed);
    for (int j = 0; j < d.window; ++j)
        for (int c = 0; c < d.embed; ++c) x[static_cast<size_t>(j) * d.embed + c] = params.emb.at(window[j], c);

    std::vector<double> h(d.embed);
    for (int c = 0; c < d.embed; ++c) {
        double acc = 0.0;
        for (int i = 0; i < d.window * d.embed; ++i) acc += x[i] * params.w1.at(i, c);
        h[c] = std::tanh(acc + params.b1[c]);
    }

    std::vector<double> logits(d.vocab);
    for (int v = 0; v < d.vocab; ++v) {
        double acc = 0.0;
        for (int c = 0; c < d.embed; ++c) acc += h[c] * params.wout.at(c, v);
        logits[v] = acc + params.bout[v];
    }
    log_softmax_inplace(logits);
    return logits;
}

std::vector<double> response_log_probs(const PolicyParams& params, const std::vector<int>& prompt,
                                       const std::vector<int>& tokens) {
    check_token_ids(prompt, params.dims.vocab, "response_log_probs");
    check_token_ids(tokens, params.dims.vocab, "response_log_probs");
    std::vector<double> out(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto w = context_window(params.dims, prompt, tokens, static_cast<int>(i));
        out[i] = next_log_probs(params, w)[tokens[i]];
    }
    return out;
}

double sum_log_prob(const PolicyParams& params, const std::vector<int>& prompt,
                    const std::vector<int>& tokens) {
    double s = 0.0;
    for (double v : response_log_probs(params, prompt, tokens)) s += v;
    return s;
}

Response sample_response(const PolicyParams& params, const PolicyParams& ref,
                         const std::vector<int>& prompt, double temperature, int max_len,
                         std::mt19937_64& rng, SampleCache* cache) {
    if (!(temperature > 0.0)) throw std::invalid_argument("sample_response: temperature must be > 0");
    if (max_len < 1) throw std::invalid_argument("sample_response: max_len must be >= 1");
    if (static_cast<int>(prompt.size()) + max_len > kMaxSequenceLen)
        throw std::invalid_argument("sample_response: prompt + max_len exceeds sequence budget");

    Response r;
    r.prompt = prompt;
    const int vocab = params.dims.vocab;
    const int eos = 1;
    auto logp_rows = [&](const std::vector<int>& w)
        -> const std::pair<std::vector<double>, std::vector<double>>& {
        static thread_local std::pair<std::vector<double>, std::vector<double>> local;
        if (!cache) {
            local = {next_log_probs(params, w), next_log_probs(ref, w)};
            return local;
        }
        auto it = cache->rows.find(w);
        if (it == cache->rows.end())
            it = cache->rows.emplace(w, std::make_pair(next_log_probs(params, w),
                                                       next_log_probs(ref, w))).first;
        return it->second;
    };
    for (int step = 0; step < max_len; ++step) {
        const auto w = context_window(params.dims, prompt, r.tokens, step);
        const auto& [lp, lp_ref] = logp_rows(w);

        // softmax(logits/T) equals softmax(lp/T): lp only shifts logits by a constant
        double mx = lp[0];
        for (int v = 1; v < vocab; ++v) mx = std::max(mx, lp[v]);
        std::vector<double> weight(vocab);
        double total = 0.0;
        for (int v = 0; v < vocab; ++v) {
            weight[v] = std::exp((lp[v] - mx) / temperature);
            total += weight[v];
        }
        const double target = uniform_unit(rng) * total;
        int tok = vocab - 1;
        double acc = 0.0;
        for (int v = 0; v < vocab; ++v) {
            acc += weight[v];
            if (acc > target) {
                tok = v;
                break;
            }
        }

        r.tokens.push_back(tok);
        r.logp_policy.push_back(lp[tok]);
        r.logp_ref.push_back(lp_ref[tok]);
        if (tok == eos) break;
    }
    return r;
}

std::vector<int> greedy_decode(const PolicyParams& params, const std::vector<int>& prompt,
                               int max_len) {
    std::vector<int> tokens;
    const int eos = 1;
    for (int step = 0; step < max_len; ++step) {
        const auto w = context_window(params.dims, prompt, tokens, step);
        const std::vector<double> lp = next_log_probs(params, w);
        int best = 0;
        for (int v = 1; v < params.dims.vocab; ++v)
            if (lp[v] > lp[best]) best = v;
        tokens.push_back(best);
        if (best == eos) break;
    }
    return tokens;
}

ParamVars stage_params(ad::Tape& tape, const PolicyParams& params) {
    ParamVars pv;
    pv.dims = params.dims;
    pv.emb = ad::constant(tape, params.emb);
    pv.w1 = ad::constant(tape, params.w1);
    pv.b1 = ad::constant(tape, params.b1);
    pv.wout = ad::constant(tape, params.wout);
    pv.bout = ad::constant(tape, params.bout);
    return pv;
}

ad::Var token_log_probs(ad::Tape& tape, const ParamVars& pv, const std::vector<int>& prompt,
                        const std::vector<int>& tokens, ForwardCache* cache) {
    if (tokens.empty()) throw std::invalid_argument("token_log_probs: empty response");
    auto window_row = [&](const std::vector<int>& w) -> ad::Var {
        if (cache) {
            auto it = cache->rows.find(w);
            if (it != cache->rows.end()) return it->second;
        }
        std::vector<ad::Var> embeds;
        embeds.reserve(w.size());
        for (int t : w) embeds.push_back(ad::row(pv.emb, t));
        ad::Var ctx = ad::concat_cols(tape, embeds);
        ad::Var hidden = ad::tanh(ad::add(ad::matmul(ctx, pv.w1), pv.b1));
        ad::Var logits = ad::add(ad::matmul(hidden, pv.wout), pv.bout);
        ad::Var lsm = ad::log_softmax(logits);
        if (cache) cache->rows.emplace(w, lsm);
        return lsm;
    };
    std::vector<ad::Var> per_token;
    per_token.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto w = context_window(pv.dims, prompt, tokens, static_cast<int>(i));
        per_token.push_back(ad::gather(window_row(w), {tokens[i]}));
    }
    return ad::concat_cols(tape, per_token);
}

// ---- checkpoint I/O ----

namespace {

constexpr uint32_t kMagic = 0x31504C47;  // "GLP1"
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_mat(std::ostream& out, const Mat& m) {
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

void read_mat(std::istream& in, Mat& m) {
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated parameter data");
}

void write_params(std::ostream& out, const PolicyParams& p) {
    write_mat(out, p.emb);
    write_mat(out, p.w1);
    write_mat(out, p.b1);
    write_mat(out, p.wout);
    write_mat(out, p.bout);
}

void read_params(std::istream& in, PolicyParams& p) {
    read_mat(in, p.emb);
    read_mat(in, p.w1);
    read_mat(in, p.b1);
    read_mat(in, p.wout);
    read_mat(in, p.bout);
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const PolicyParams& reference) {
    if (params.dims.vocab != reference.dims.vocab || params.dims.embed != reference.dims.embed ||
        params.dims.window != reference.dims.window)
        throw std::invalid_argument("save_checkpoint: policy and reference dims differ");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    write_u32(out, kMagic);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(params.dims.vocab));
    write_u32(out, static_cast<uint32_t>(params.dims.embed));
    write_u32(out, static_cast<uint32_t>(params.dims.window));
    write_params(out, params);
    write_params(out, reference);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<PolicyParams, PolicyParams> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    if (read_u32(in) != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = read_u32(in);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    PolicyDims dims;
    dims.vocab = static_cast<int>(read_u32(in));
    dims.embed = static_cast<int>(read_u32(in));
    dims.window = static_cast<int>(read_u32(in));
    if (dims.vocab < 2 || dims.vocab > 64 || dims.embed < 1 || dims.window < 1)
        throw std::runtime_error("checkpoint: implausible header dims");

    auto blank = [&dims]() {
        PolicyParams p;
        p.dims = dims;
        p.emb = Mat(dims.vocab, dims.embed);
        p.w1 = Mat(dims.window * dims.embed, dims.embed);
        p.b1 = Mat(1, dims.embed);
        p.wout = Mat(dims.embed, dims.vocab);
        p.bout = Mat(1, dims.vocab);
        return p;
    };
    PolicyParams params = blank();
    PolicyParams reference = blank();
    read_params(in, params);
    read_params(in, reference);
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("checkpoint: trailing bytes in " + path);
    return {std::move(params), std::move(reference)};
}

}  // namespace giftlab
