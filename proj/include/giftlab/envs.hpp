#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "giftlab/policy.hpp"

namespace giftlab {

enum class TaskKind { modsum, copy, reverse };

TaskKind parse_task(const std::string& name);
std::string task_name(TaskKind kind);

// A verifiable task over a tiny symbol vocabulary. Every prompt has exactly
// one gold answer expressible in the vocab.
struct Task {
    TaskKind kind = TaskKind::modsum;
    int n_symbols = 10;
    int prompt_len_min = 2;
    int prompt_len_max = 4;
    Vocab vocab;
};

// modsum uses digits 0-9 (n_symbols pinned to 10 so every digit sum stays
// expressible); copy and reverse use letters.
Task make_task(TaskKind kind, int n_symbols, int prompt_len_min, int prompt_len_max);

std::string gold_answer(const Task& task, const std::vector<int>& prompt);

// Number of answer tokens the gold response needs, excluding EOS.
int max_answer_tokens(const Task& task);

// Count of distinct prompts the task admits, saturating at 2^62.
uint64_t prompt_space_size(const Task& task);

struct DatasetItem {
    std::vector<int> prompt;
    std::string gold;
};

struct Dataset {
    std::vector<DatasetItem> items;
};

// Deterministic for a fixed seed; train and eval prompts are disjoint.
std::pair<Dataset, Dataset> generate_dataset(const Task& task, int n_train, int n_eval,
                                             uint64_t seed);

void write_jsonl(const std::string& path, const Task& task, const Dataset& dataset);
Dataset read_jsonl(const std::string& path, const Task& task);

// Fraction of prompts whose greedy decode scores reward 1.
double pass_at_1(const PolicyParams& params, const Task& task, const Dataset& dataset,
                 int max_len);

}  // namespace giftlab
