#include "giftlab/envs.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "giftlab/rewards.hpp"

namespace giftlab {

namespace {

constexpr uint64_t kSpaceCap = uint64_t(1) << 62;
constexpr uint64_t kEnumerationBudget = 1000000;

uint64_t draw_below(std::mt19937_64& rng, uint64_t n) { return rng() % n; }

std::vector<int> nth_prompt(const Task& task, int len, uint64_t index) {
    std::vector<int> prompt(len);
    for (int i = len - 1; i >= 0; --i) {
        prompt[i] = static_cast<int>(index % task.n_symbols) + 2;
        index /= task.n_symbols;
    }
    return prompt;
}

}  // namespace

TaskKind parse_task(const std::string& name) {
    if (name == "modsum") return TaskKind::modsum;
    if (name == "copy") return TaskKind::copy;
    if (name == "reverse") return TaskKind::reverse;
    throw std::invalid_argument("task: expected modsum|copy|reverse, got '" + name + "'");
}

std::string task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::modsum: return "modsum";
        case TaskKind::copy: return "copy";
        case TaskKind::reverse: return "reverse";
    }
    throw std::logic_error("task_name: bad enum");
}

Task make_task(TaskKind kind, int n_symbols, int prompt_len_min, int prompt_len_max) {
    if (kind == TaskKind::modsum && n_symbols != 10)
        throw std::invalid_argument("task: modsum requires n_symbols=10 (digit sums mod 10)");
    if (n_symbols < 2 || n_symbols > 26)
        throw std::invalid_argument("task: n_symbols must lie in [2,26]");
    if (prompt_len_min < 1 || prompt_len_max < prompt_len_min)
        throw std::invalid_argument("task: bad prompt length range");

    Task t;
    t.kind = kind;
    t.n_symbols = n_symbols;
    t.prompt_len_min = prompt_len_min;
    t.prompt_len_max = prompt_len_max;
    std::vector<std::string> symbols;
    for (int i = 0; i < n_symbols; ++i) {
        if (kind == TaskKind::modsum)
            symbols.push_back(std::string(1, static_cast<char>('0' + i)));
        else
            symbols.push_back(std::string(1, static_cast<char>('a' + i)));
    }
    t.vocab = make_vocab(symbols);
    return t;
}

std::string gold_answer(const Task& task, const std::vector<int>& prompt) {
    if (prompt.empty()) throw std::invalid_argument("gold_answer: empty prompt");
    for (int t : prompt)
        if (t < 2 || t >= task.vocab.size())
            throw std::invalid_argument("gold_answer: prompt token outside payload range");
    switch (task.kind) {
        case TaskKind::modsum: {
            int s = 0;
            for (int t : prompt) s += t - 2;
            return std::string(1, static_cast<char>('0' + s % 10));
        }
        case TaskKind::copy:
            return task.vocab.decode(prompt);
        case TaskKind::reverse: {
            std::vector<int> rev(prompt.rbegin(), prompt.rend());
            return task.vocab.decode(rev);
        }
    }
    throw std::logic_error("gold_answer: bad enum");
}

int max_answer_tokens(const Task& task) {
    return task.kind == TaskKind::modsum ? 1 : task.prompt_len_max;
}

uint64_t prompt_space_size(const Task& task) {
    uint64_t total = 0;
    for (int len = task.prompt_len_min; len <= task.prompt_len_max; ++len) {
        uint64_t count = 1;
        for (int i = 0; i < len; ++i) {
            if (count > kSpaceCap / task.n_symbols) return kSpaceCap;
            count *= task.n_symbols;
        }
        if (total > kSpaceCap - count) return kSpaceCap;
        total += count;
    }
    return total;
}

std::pair<Dataset, Dataset> generate_dataset(const Task& task, int n_train, int n_eval,
                                             uint64_t seed) {
    if (n_train < 0 || n_eval < 0 || n_train + n_eval < 1)
        throw std::invalid_argument("generate_dataset: need at least one item");
    const uint64_t need = static_cast<uint64_t>(n_train) + static_cast<uint64_t>(n_eval);
    const uint64_t space = prompt_space_size(task);
    if (need > space)
        throw std::invalid_argument("generate_dataset: requested " + std::to_string(need) +
                                    " prompts but the task only has " + std::to_string(space));

    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> prompts;
    if (space <= kEnumerationBudget) {
        prompts.reserve(space);
        for (int len = task.prompt_len_min; len <= task.prompt_len_max; ++len) {
            uint64_t count = 1;
            for (int i = 0; i < len; ++i) count *= task.n_symbols;
            for (uint64_t idx = 0; idx < count; ++idx) prompts.push_back(nth_prompt(task, len, idx));
        }
        // Fisher-Yates with an explicit draw keeps the order seed-stable
        for (size_t i = prompts.size(); i > 1; --i)
            std::swap(prompts[i - 1], prompts[draw_below(rng, i)]);
    } else {
        // space too large to enumerate: draw distinct prompts directly
        std::vector<double> weight;
        for (int len = task.prompt_len_min; len <= task.prompt_len_max; ++len) {
            double w = 1.0;
            for (int i = 0; i < len; ++i) w *= task.n_symbols;
            weight.push_back(w);
        }
        double total_w = 0.0;
        for (double w : weight) total_w += w;
        std::set<std::vector<int>> seen;
        while (prompts.size() < need) {
            const double pick = (static_cast<double>(rng() >> 11) * 0x1.0p-53) * total_w;
            int len = task.prompt_len_min;
            double acc = 0.0;
            for (size_t i = 0; i < weight.size(); ++i) {
                acc += weight[i];
                if (pick < acc) {
                    len = task.prompt_len_min + static_cast<int>(i);
                    break;
                }
            }
            std::vector<int> p(len);
            for (int& t : p) t = static_cast<int>(draw_below(rng, task.n_symbols)) + 2;
            if (seen.insert(p).second) prompts.push_back(std::move(p));
        }
    }

    Dataset train, eval;
    for (int i = 0; i < n_train; ++i)
        train.items.push_back({prompts[i], gold_answer(task, prompts[i])});
    for (int i = 0; i < n_eval; ++i)
        eval.items.push_back({prompts[n_train + i], gold_answer(task, prompts[n_train + i])});
    return {std::move(train), std::move(eval)};
}

void write_jsonl(const std::string& path, const Task& task, const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_jsonl: cannot open " + path);
    for (const DatasetItem& item : dataset.items) {
        nlohmann::json j;
        j["prompt"] = task.vocab.decode(item.prompt);
        j["gold"] = item.gold;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write_jsonl: write failed for " + path);
}

Dataset read_jsonl(const std::string& path, const Task& task) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_jsonl: cannot open " + path);
    Dataset out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("read_jsonl: " + path + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
        if (!j.contains("prompt") || !j.contains("gold"))
            throw std::runtime_error("read_jsonl: " + path + ":" + std::to_string(lineno) +
                                     ": missing prompt/gold");
        DatasetItem item;
        item.prompt = task.vocab.encode(j["prompt"].get<std::string>());
        item.gold = j["gold"].get<std::string>();
        out.items.push_back(std::move(item));
    }
    return out;
}

double pass_at_1(const PolicyParams& params, const Task& task, const Dataset& dataset,
                 int max_len) {
    if (dataset.items.empty()) throw std::invalid_argument("pass_at_1: empty dataset");
    double correct = 0.0;
    for (const DatasetItem& item : dataset.items) {
        const auto tokens = greedy_decode(params, item.prompt, max_len);
        correct += verifiable_reward(task.vocab.decode(tokens), item.gold);
    }
    return correct / static_cast<double>(dataset.items.size());
}

}  // namespace giftlab
