#include "giftlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "giftlab/autodiff.hpp"
#include "giftlab/rewards.hpp"

namespace giftlab {

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer: " + name);
}

std::string optimizer_name(OptimizerKind kind) {
    return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

void TrainConfig::validate() const {
    objective.validate();
    if (n_train < 1 || n_eval < 1) throw std::invalid_argument("train: empty data split");
    if (embed_dim < 1 || window < 1) throw std::invalid_argument("train: bad policy dims");
    if (max_response_len < 0)
        throw std::invalid_argument("train: max_response_len must be >= 0");
    if (n_rollouts < 1) throw std::invalid_argument("train: n_rollouts must be >= 1");
    if ((objective.kind == ObjectiveKind::gift || objective.kind == ObjectiveKind::grpo) &&
        n_rollouts < 2)
        throw std::invalid_argument("train: group objectives need n_rollouts >= 2");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (mini_batch < 1 || train_batch < 1 || mini_batch > train_batch)
        throw std::invalid_argument("train: need 1 <= mini_batch <= train_batch");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("train: temperature must be > 0");
    if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
    if (max_steps < 0) throw std::invalid_argument("train: max_steps must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
        !(adam_eps > 0.0))
        throw std::invalid_argument("train: bad adam parameters");
    if (!(grad_clip >= 0.0)) throw std::invalid_argument("train: grad_clip must be >= 0");
    if (threads < 1) throw std::invalid_argument("train: threads must be >= 1");
}

namespace {

const char* const kKnownKeys[] = {
    "task",        "n_symbols",     "prompt_len_min", "prompt_len_max",
    "n_train",     "n_eval",        "data_seed",      "embed_dim",
    "window",      "max_response_len", "objective",   "beta",
    "aggregation", "grad_through_group_stats",        "clip_ratio",
    "kl_penalty_coeff", "n_rollouts", "learning_rate", "train_batch",
    "mini_batch",  "epochs",        "temperature",    "eval_every",
    "max_steps",   "seed",          "optimizer",      "adam_beta1",
    "adam_beta2",  "adam_eps",      "grad_clip",      "threads",
    "wall_clock"};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KVConfig& kv) {
    for (const auto& [key, value] : kv.entries()) {
        (void)value;
        if (std::find_if(std::begin(kKnownKeys), std::end(kKnownKeys),
                         [&](const char* k) { return key == k; }) == std::end(kKnownKeys))
            throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    TrainConfig cfg;
    cfg.task = parse_task(kv.get_string("task", task_name(cfg.task)));
    cfg.n_symbols = kv.get_int("n_symbols", cfg.n_symbols);
    cfg.prompt_len_min = kv.get_int("prompt_len_min", cfg.prompt_len_min);
    cfg.prompt_len_max = kv.get_int("prompt_len_max", cfg.prompt_len_max);
    cfg.n_train = kv.get_int("n_train", cfg.n_train);
    cfg.n_eval = kv.get_int("n_eval", cfg.n_eval);
    cfg.data_seed = kv.get_u64("data_seed", cfg.data_seed);
    cfg.embed_dim = kv.get_int("embed_dim", cfg.embed_dim);
    cfg.window = kv.get_int("window", cfg.window);
    cfg.max_response_len = kv.get_int("max_response_len", cfg.max_response_len);
    cfg.objective.kind = parse_objective(kv.get_string("objective", objective_name(cfg.objective.kind)));
    cfg.objective.beta = kv.get_double("beta", cfg.objective.beta);
    cfg.objective.aggregation =
        parse_aggregation(kv.get_string("aggregation", aggregation_name(cfg.objective.aggregation)));
    cfg.objective.grad_through_group_stats =
        kv.get_bool("grad_through_group_stats", cfg.objective.grad_through_group_stats);
    cfg.objective.clip_ratio = kv.get_double("clip_ratio", cfg.objective.clip_ratio);
    cfg.objective.kl_penalty_coeff = kv.get_double("kl_penalty_coeff", cfg.objective.kl_penalty_coeff);
    cfg.n_rollouts = kv.get_int("n_rollouts", cfg.n_rollouts);
    cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
    cfg.train_batch = kv.get_int("train_batch", cfg.train_batch);
    cfg.mini_batch = kv.get_int("mini_batch", cfg.mini_batch);
    cfg.epochs = kv.get_int("epochs", cfg.epochs);
    cfg.temperature = kv.get_double("temperature", cfg.temperature);
    cfg.eval_every = kv.get_int("eval_every", cfg.eval_every);
    cfg.max_steps = kv.get_int("max_steps", cfg.max_steps);
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.optimizer = parse_optimizer(kv.get_string("optimizer", optimizer_name(cfg.optimizer)));
    cfg.adam_beta1 = kv.get_double("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = kv.get_double("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = kv.get_double("adam_eps", cfg.adam_eps);
    cfg.grad_clip = kv.get_double("grad_clip", cfg.grad_clip);
    cfg.threads = kv.get_int("threads", cfg.threads);
    cfg.wall_clock = kv.get_bool("wall_clock", cfg.wall_clock);
    cfg.validate();
    return cfg;
}

KVConfig TrainConfig::to_kv() const {
    KVConfig kv;
    kv.set("task", task_name(task));
    kv.set("n_symbols", std::to_string(n_symbols));
    kv.set("prompt_len_min", std::to_string(prompt_len_min));
    kv.set("prompt_len_max", std::to_string(prompt_len_max));
    kv.set("n_train", std::to_string(n_train));
    kv.set("n_eval", std::to_string(n_eval));
    kv.set("data_seed", std::to_string(data_seed));
    kv.set("embed_dim", std::to_string(embed_dim));
    kv.set("window", std::to_string(window));
    kv.set("max_response_len", std::to_string(max_response_len));
    kv.set("objective", objective_name(objective.kind));
    kv.set("beta", fmt_double(objective.beta));
    kv.set("aggregation", aggregation_name(objective.aggregation));
    kv.set("grad_through_group_stats", objective.grad_through_group_stats ? "true" : "false");
    kv.set("clip_ratio", fmt_double(objective.clip_ratio));
    kv.set("kl_penalty_coeff", fmt_double(objective.kl_penalty_coeff));
    kv.set("n_rollouts", std::to_string(n_rollouts));
    kv.set("learning_rate", fmt_double(learning_rate));
    kv.set("train_batch", std::to_string(train_batch));
    kv.set("mini_batch", std::to_string(mini_batch));
    kv.set("epochs", std::to_string(epochs));
    kv.set("temperature", fmt_double(temperature));
    kv.set("eval_every", std::to_string(eval_every));
    kv.set("max_steps", std::to_string(max_steps));
    kv.set("seed", std::to_string(seed));
    kv.set("optimizer", optimizer_name(optimizer));
    kv.set("adam_beta1", fmt_double(adam_beta1));
    kv.set("adam_beta2", fmt_double(adam_beta2));
    kv.set("adam_eps", fmt_double(adam_eps));
    kv.set("grad_clip", fmt_double(grad_clip));
    kv.set("threads", std::to_string(threads));
    kv.set("wall_clock", wall_clock ? "true" : "false");
    return kv;
}

std::string format_metrics_row(const MetricsRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f", r.step, r.train_pass1,
                  r.eval_pass1, r.loss, r.mean_reward, r.mean_abs_implicit, r.mean_len, r.seconds);
    return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("metrics: cannot open " + path);
    out << kMetricsHeader << "\n";
    for (const auto& r : rows) out << format_metrics_row(r) << "\n";
    if (!out) throw std::runtime_error("metrics: write failed for " + path);
}

bool PolicyGrads::all_finite() const {
    for (const Mat* m : {&emb, &w1, &b1, &wout, &bout})
        for (double x : m->data)
            if (!std::isfinite(x)) return false;
    return true;
}

double PolicyGrads::global_norm() const {
    double sq = 0.0;
    for (const Mat* m : {&emb, &w1, &b1, &wout, &bout})
        for (double x : m->data) sq += x * x;
    return std::sqrt(sq);
}

void PolicyGrads::scale(double s) {
    for (Mat* m : {&emb, &w1, &b1, &wout, &bout})
        for (double& x : m->data) x *= s;
}

PolicyGrads extract_grads(const ParamVars& pv) {
    return {pv.emb.grad(), pv.w1.grad(), pv.b1.grad(), pv.wout.grad(), pv.bout.grad()};
}

Optimizer::Optimizer(const TrainConfig& cfg, const PolicyDims& dims)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
    if (kind_ == OptimizerKind::adam) {
        const int kd = dims.window * dims.embed;
        for (auto [r, c] : {std::pair{dims.vocab, dims.embed}, {kd, dims.embed}, {1, dims.embed},
                            {dims.embed, dims.vocab}, {1, dims.vocab}}) {
            m_.emplace_back(r, c);
            v_.emplace_back(r, c);
        }
    }
}

void Optimizer::apply(PolicyParams& params, const PolicyGrads& grads) {
    Mat* ps[] = {&params.emb, &params.w1, &params.b1, &params.wout, &params.bout};
    const Mat* gs[] = {&grads.emb, &grads.w1, &grads.b1, &grads.wout, &grads.bout};
    ++t_;
    for (int i = 0; i < 5; ++i) {
        if (ps[i]->rows != gs[i]->rows || ps[i]->cols != gs[i]->cols)
            throw std::invalid_argument("optimizer: gradient shape mismatch");
        if (kind_ == OptimizerKind::sgd) {
            for (size_t j = 0; j < ps[i]->data.size(); ++j)
                ps[i]->data[j] -= lr_ * gs[i]->data[j];
            continue;
        }
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t j = 0; j < ps[i]->data.size(); ++j) {
            const double g = gs[i]->data[j];
            double& m = m_[i].data[j];
            double& v = v_[i].data[j];
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g * g;
            ps[i]->data[j] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        }
    }
}

namespace {

// One private stream per (phase, prompt) pins the draws no matter how
// rollouts are scheduled across threads.
std::mt19937_64 derived_rng(uint64_t seed, uint64_t stream, uint64_t index) {
    std::seed_seq seq{static_cast<uint32_t>(seed),   static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32),
                      static_cast<uint32_t>(index),  0x9e3779b9u};
    return std::mt19937_64(seq);
}

std::vector<const DatasetItem*> next_batch(const Dataset& ds, std::vector<int>& order,
                                           size_t& cursor, int count, std::mt19937_64& rng) {
    std::vector<const DatasetItem*> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        if (cursor == order.size()) {
            for (size_t j = order.size(); j > 1; --j) std::swap(order[j - 1], order[rng() % j]);
            cursor = 0;
        }
        out.push_back(&ds.items[order[cursor++]]);
    }
    return out;
}

std::vector<RolloutGroup> rollout_phase(const TrainConfig& cfg, const Task& task,
                                        const PolicyParams& params, const PolicyParams& ref,
                                        const std::vector<const DatasetItem*>& batch, int budget,
                                        uint64_t phase) {
    std::vector<RolloutGroup> groups(batch.size());
    auto fill = [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) {
            auto rng = derived_rng(cfg.seed, phase, i);
            RolloutGroup g;
            g.prompt = batch[i]->prompt;
            SampleCache cache;  // params are frozen for the phase, so rows are reusable
            for (int n = 0; n < cfg.n_rollouts; ++n) {
                Response r =
                    sample_response(params, ref, g.prompt, cfg.temperature, budget, rng, &cache);
                g.explicit_rewards.push_back(
                    verifiable_reward(task.vocab.decode(r.tokens), batch[i]->gold));
                g.responses.push_back(std::move(r));
            }
            groups[i] = std::move(g);
        }
    };
    const int workers = std::min<int>(cfg.threads, static_cast<int>(batch.size()));
    if (workers <= 1) {
        fill(0, batch.size());
        return groups;
    }
    std::vector<std::thread> pool;
    const size_t per = (batch.size() + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const size_t lo = w * per;
        const size_t hi = std::min(batch.size(), lo + per);
        if (lo < hi) pool.emplace_back(fill, lo, hi);
    }
    for (auto& t : pool) t.join();
    return groups;
}

struct PhaseStats {
    double mean_reward = 0.0;
    double mean_abs_implicit = 0.0;
    double mean_len = 0.0;
};

PhaseStats phase_stats(const std::vector<RolloutGroup>& groups, Aggregation agg) {
    PhaseStats s;
    int n = 0;
    for (const auto& g : groups) {
        for (int i = 0; i < g.size(); ++i) {
            s.mean_reward += g.explicit_rewards[i];
            s.mean_abs_implicit += std::fabs(implicit_reward(g.responses[i], agg));
            s.mean_len += g.responses[i].length();
            ++n;
        }
    }
    if (n > 0) {
        s.mean_reward /= n;
        s.mean_abs_implicit /= n;
        s.mean_len /= n;
    }
    return s;
}

int count_degenerate(const std::vector<RolloutGroup>& groups) {
    int n = 0;
    for (const auto& g : groups) {
        const auto [lo, hi] = std::minmax_element(g.explicit_rewards.begin(),
                                                  g.explicit_rewards.end());
        if (*lo == *hi) ++n;
    }
    return n;
}

[[noreturn]] void abort_run(int step, const std::string& what, const PolicyParams& params,
                            const PolicyParams& ref, const std::string& out_dir) {
    std::string ckpt;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        ckpt = out_dir + "/crash_step" + std::to_string(step) + ".ckpt";
        save_checkpoint(ckpt, params, ref);
    }
    throw TrainAbort(step, "train: " + what + " at step " + std::to_string(step), ckpt);
}

// One optimizer step over a span of groups. Returns the loss value, or no
// update and a zero loss when dpo finds no preference pair in the span.
double minibatch_step(const TrainConfig& cfg, PolicyParams& params, const PolicyParams& ref,
                      Optimizer& opt, const std::vector<RolloutGroup>& groups, size_t lo, size_t hi,
                      int step, const std::string& out_dir, int& pairless) {
    ad::Tape tape;
    ParamVars pv = stage_params(tape, params);
    ad::Var loss;
    if (cfg.objective.kind == ObjectiveKind::dpo) {
        std::vector<RolloutGroup> span(groups.begin() + lo, groups.begin() + hi);
        const auto pairs = make_preference_pairs(span);
        if (pairs.empty()) {
            ++pairless;
            return 0.0;
        }
        loss = dpo_loss(tape, pv, pairs, cfg.objective);
    } else {
        ad::Var acc;
        for (size_t i = lo; i < hi; ++i) {
            ad::Var one;
            switch (cfg.objective.kind) {
                case ObjectiveKind::gift: one = gift_loss(tape, pv, groups[i], cfg.objective); break;
                case ObjectiveKind::grpo: one = grpo_loss(tape, pv, groups[i], cfg.objective); break;
                default: one = una_loss(tape, pv, groups[i], cfg.objective); break;
            }
            acc = i == lo ? one : ad::add(acc, one);
        }
        loss = ad::scale(acc, 1.0 / static_cast<double>(hi - lo));
    }

    const double value = loss.value()[0];
    if (!std::isfinite(value)) abort_run(step, "non-finite loss", params, ref, out_dir);
    tape.backward(loss);
    PolicyGrads grads = extract_grads(pv);
    if (!grads.all_finite()) abort_run(step, "non-finite gradient", params, ref, out_dir);
    if (cfg.objective.kind == ObjectiveKind::grpo && cfg.grad_clip > 0.0) {
        const double norm = grads.global_norm();
        if (norm > cfg.grad_clip) grads.scale(cfg.grad_clip / norm);
    }
    opt.apply(params, grads);
    if (!params.all_finite()) abort_run(step, "non-finite parameters", params, ref, out_dir);
    return value;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                  const EvalObserver& observer) {
    cfg.validate();
    const Task task = make_task(cfg.task, cfg.n_symbols, cfg.prompt_len_min, cfg.prompt_len_max);
    const auto [train_set, eval_set] = generate_dataset(task, cfg.n_train, cfg.n_eval, cfg.data_seed);
    const int budget =
        cfg.max_response_len > 0 ? cfg.max_response_len : max_answer_tokens(task) + 1;

    TrainResult result;
    result.params = init_params({task.vocab.size(), cfg.embed_dim, cfg.window}, cfg.seed);
    result.reference = result.params;  // frozen snapshot, taken once before step 0
    Optimizer opt(cfg, result.params.dims);

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&]() -> double {
        if (!cfg.wall_clock) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    auto emit = [&](int step, double loss, const PhaseStats& stats) {
        MetricsRow row;
        row.step = step;
        row.train_pass1 = pass_at_1(result.params, task, train_set, budget);
        row.eval_pass1 = pass_at_1(result.params, task, eval_set, budget);
        row.loss = loss;
        row.mean_reward = stats.mean_reward;
        row.mean_abs_implicit = stats.mean_abs_implicit;
        row.mean_len = stats.mean_len;
        row.seconds = elapsed();
        result.metrics.push_back(row);
        if (observer) observer(step, result.params, result.reference);
    };

    emit(0, 0.0, PhaseStats{});

    std::mt19937_64 shuffle_rng = derived_rng(cfg.seed, 0x5u, 0);
    std::vector<int> order(train_set.items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    size_t cursor = order.size();  // forces a shuffle on first use

    int step = 0;
    uint64_t phase = 0;
    while (step < cfg.max_steps) {
        const auto batch =
            next_batch(train_set, order, cursor, cfg.train_batch, shuffle_rng);
        const auto groups = rollout_phase(cfg, task, result.params, result.reference, batch,
                                          budget, phase++);
        result.degenerate_groups += count_degenerate(groups);
        const PhaseStats stats = phase_stats(groups, cfg.objective.aggregation);
        for (int e = 0; e < cfg.epochs && step < cfg.max_steps; ++e) {
            for (size_t lo = 0; lo < groups.size() && step < cfg.max_steps;
                 lo += cfg.mini_batch) {
                const size_t hi = std::min(groups.size(), lo + cfg.mini_batch);
                const double loss = minibatch_step(cfg, result.params, result.reference, opt,
                                                   groups, lo, hi, step + 1, out_dir,
                                                   result.pairless_updates);
                ++step;
                if (step % cfg.eval_every == 0 || step == cfg.max_steps) emit(step, loss, stats);
            }
        }
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_metrics_csv(out_dir + "/metrics.csv", result.metrics);
        save_checkpoint(out_dir + "/final.ckpt", result.params, result.reference);
    }
    return result;
}

SweepAxis parse_axis(const std::string& name) {
    if (name == "n_rollouts") return SweepAxis::n_rollouts;
    if (name == "aggregation") return SweepAxis::aggregation;
    if (name == "objective") return SweepAxis::objective;
    throw std::invalid_argument("unknown sweep axis: " + name);
}

std::string axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::n_rollouts: return "n_rollouts";
        case SweepAxis::aggregation: return "aggregation";
        default: return "objective";
    }
}

SweepResult sweep(const TrainConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                  const std::string& out_dir) {
    if (values.empty()) throw std::invalid_argument("sweep: no values");
    if (out_dir.empty()) throw std::invalid_argument("sweep: output directory required");
    SweepResult result;
    for (const std::string& value : values) {
        TrainConfig cfg = base;
        switch (axis) {
            case SweepAxis::n_rollouts: {
                size_t used = 0;
                cfg.n_rollouts = std::stoi(value, &used);
                if (used != value.size())
                    throw std::invalid_argument("sweep: bad n_rollouts value '" + value + "'");
                break;
            }
            case SweepAxis::aggregation: cfg.objective.aggregation = parse_aggregation(value); break;
            case SweepAxis::objective: cfg.objective.kind = parse_objective(value); break;
        }
        cfg.validate();
        result.values.push_back(value);
        result.runs.push_back(train(cfg, out_dir + "/" + axis_name(axis) + "=" + value));
    }

    // eval curves side by side; the runs share one schedule
    std::ofstream combined(out_dir + "/combined.csv", std::ios::binary);
    if (!combined) throw std::runtime_error("sweep: cannot open " + out_dir + "/combined.csv");
    combined << "step";
    for (const std::string& value : values)
        combined << ",eval_pass1_" << axis_name(axis) << "_" << value;
    combined << "\n";
    size_t nrows = result.runs[0].metrics.size();
    for (const auto& run : result.runs) nrows = std::min(nrows, run.metrics.size());
    char cell[64];
    for (size_t r = 0; r < nrows; ++r) {
        combined << result.runs[0].metrics[r].step;
        for (const auto& run : result.runs) {
            std::snprintf(cell, sizeof(cell), ",%.6f", run.metrics[r].eval_pass1);
            combined << cell;
        }
        combined << "\n";
    }
    if (!combined) throw std::runtime_error("sweep: write failed for combined.csv");
    return result;
}

}  // namespace giftlab
