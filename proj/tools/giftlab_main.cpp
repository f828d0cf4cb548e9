// giftlab: train / eval / sweep / oracle-check / gen-data entry point.
//
// Exit codes are stable: 0 success, 1 validation error (bad flags, bad
// config, failed oracle invariants), 2 runtime abort (non-finite training,
// I/O failure). Every verb that writes outputs drops a run.cfg snapshot of
// the fully resolved config next to them.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "giftlab/envs.hpp"
#include "giftlab/oracle.hpp"
#include "giftlab/rewards.hpp"
#include "giftlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace giftlab;

namespace {

struct CommonOpts {
    std::string config;
    std::string out;
    std::string task;
    std::string objective;
    std::string aggregation;
    uint64_t seed = 0;
    int n_rollouts = 0;
    double beta = 0.0;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* task_opt = nullptr;
    CLI::Option* objective_opt = nullptr;
    CLI::Option* n_rollouts_opt = nullptr;
    CLI::Option* beta_opt = nullptr;
    CLI::Option* aggregation_opt = nullptr;
};

void add_common_options(CLI::App* cmd, CommonOpts& o, const char* seed_help) {
    cmd->add_option("--config", o.config, "flat key=value config file");
    cmd->add_option("--out", o.out, "output directory");
    o.seed_opt = cmd->add_option("--seed", o.seed, seed_help);
    o.task_opt = cmd->add_option("--task", o.task, "task override: modsum, copy, reverse");
    o.objective_opt =
        cmd->add_option("--objective", o.objective, "objective override: gift, grpo, dpo, una");
    o.n_rollouts_opt =
        cmd->add_option("--n-rollouts", o.n_rollouts, "rollout group size override");
    o.beta_opt = cmd->add_option("--beta", o.beta, "implicit-reward scale override");
    o.aggregation_opt =
        cmd->add_option("--aggregation", o.aggregation, "kl_sum or kl_average override");
}

// Config file first, then same-name flag overrides on top.
TrainConfig resolve_config(const CommonOpts& o, bool seed_is_data_seed = false) {
    KVConfig kv = o.config.empty() ? KVConfig() : KVConfig::parse_file(o.config);
    if (o.seed_opt->count())
        kv.set(seed_is_data_seed ? "data_seed" : "seed", std::to_string(o.seed));
    if (o.task_opt->count()) kv.set("task", o.task);
    if (o.objective_opt->count()) kv.set("objective", o.objective);
    if (o.n_rollouts_opt->count()) kv.set("n_rollouts", std::to_string(o.n_rollouts));
    if (o.beta_opt->count()) kv.set("beta", std::to_string(o.beta));
    if (o.aggregation_opt->count()) kv.set("aggregation", o.aggregation);
    TrainConfig cfg = TrainConfig::from_kv(kv);
    cfg.validate();
    return cfg;
}

std::string ensure_out_dir(std::string out, const char* fallback) {
    if (out.empty()) out = fallback;
    fs::create_directories(out);
    return out;
}

void write_snapshot(const TrainConfig& cfg, const std::string& out) {
    cfg.to_kv().write_file(out + "/run.cfg");
}

int response_budget(const TrainConfig& cfg, const Task& task) {
    return cfg.max_response_len > 0 ? cfg.max_response_len : max_answer_tokens(task) + 1;
}

int run_train(const CommonOpts& o) {
    const TrainConfig cfg = resolve_config(o);
    const std::string out = ensure_out_dir(o.out, "runs/train");
    write_snapshot(cfg, out);  // before training, so an abort still has provenance

    const TrainResult res = train(cfg, out);
    const MetricsRow& last = res.metrics.back();
    std::printf("train: %s steps=%d train_pass1=%.4f eval_pass1=%.4f loss=%.6f\n",
                objective_name(cfg.objective.kind).c_str(), last.step, last.train_pass1,
                last.eval_pass1, last.loss);
    std::printf("train: outputs in %s (metrics.csv, final.ckpt, run.cfg)\n", out.c_str());
    return 0;
}

int run_eval(const CommonOpts& o, const std::string& checkpoint) {
    const TrainConfig cfg = resolve_config(o);
    const Task task = make_task(cfg.task, cfg.n_symbols, cfg.prompt_len_min, cfg.prompt_len_max);
    const auto [train_set, eval_set] =
        generate_dataset(task, cfg.n_train, cfg.n_eval, cfg.data_seed);

    const auto [params, reference] = load_checkpoint(checkpoint);
    if (params.dims.vocab != task.vocab.size())
        throw std::invalid_argument("eval: checkpoint vocab " +
                                    std::to_string(params.dims.vocab) + " does not match task");

    const int budget = response_budget(cfg, task);
    const double train_p = pass_at_1(params, task, train_set, budget);
    const double eval_p = pass_at_1(params, task, eval_set, budget);
    std::printf("eval: checkpoint=%s train_pass1=%.4f eval_pass1=%.4f gap=%.4f\n",
                checkpoint.c_str(), train_p, eval_p, train_p - eval_p);

    if (!o.out.empty()) {
        const std::string out = ensure_out_dir(o.out, "");
        write_snapshot(cfg, out);
        std::ofstream csv(out + "/eval.csv", std::ios::binary);
        if (!csv) throw std::runtime_error("eval: cannot open " + out + "/eval.csv");
        csv << "split,pass1\n";
        char line[64];
        std::snprintf(line, sizeof(line), "train,%.6f\n", train_p);
        csv << line;
        std::snprintf(line, sizeof(line), "eval,%.6f\n", eval_p);
        csv << line;
    }
    return 0;
}

int run_sweep(const CommonOpts& o, const std::string& axis_name_str,
              const std::string& values_csv) {
    const TrainConfig base = resolve_config(o);
    const SweepAxis axis = parse_axis(axis_name_str);

    std::vector<std::string> values;
    std::string cur;
    for (char ch : values_csv + ",") {
        if (ch == ',') {
            if (!cur.empty()) values.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (values.empty()) throw std::invalid_argument("sweep: --values is empty");

    const std::string out = ensure_out_dir(o.out, "runs/sweep");
    write_snapshot(base, out);
    const SweepResult res = sweep(base, axis, values, out);
    for (size_t i = 0; i < res.values.size(); ++i)
        std::printf("sweep: %s=%s final eval_pass1=%.4f\n", axis_name(axis).c_str(),
                    res.values[i].c_str(), res.runs[i].metrics.back().eval_pass1);
    std::printf("sweep: outputs in %s (per-value dirs, combined.csv)\n", out.c_str());
    return 0;
}

int run_gen_data(const CommonOpts& o) {
    const TrainConfig cfg = resolve_config(o, /*seed_is_data_seed=*/true);
    const Task task = make_task(cfg.task, cfg.n_symbols, cfg.prompt_len_min, cfg.prompt_len_max);
    const auto [train_set, eval_set] =
        generate_dataset(task, cfg.n_train, cfg.n_eval, cfg.data_seed);

    const std::string out = ensure_out_dir(o.out, "runs/data");
    write_snapshot(cfg, out);
    write_jsonl(out + "/train.jsonl", task, train_set);
    write_jsonl(out + "/eval.jsonl", task, eval_set);
    std::printf("gen-data: task=%s wrote %zu train + %zu eval prompts to %s\n",
                task_name(cfg.task).c_str(), train_set.items.size(), eval_set.items.size(),
                out.c_str());
    return 0;
}

// The oracle invariant suite over exact enumeration: normalization is
// shift/scale invariant, enumerated probabilities are complete, and every
// member of the optimal-policy family sits on an exact affine line with
// zero matching loss.
int run_oracle_check(const CommonOpts& o) {
    const TrainConfig cfg = resolve_config(o);
    const Task task = make_task(cfg.task, cfg.n_symbols, cfg.prompt_len_min, cfg.prompt_len_max);
    const auto [train_set, eval_set] =
        generate_dataset(task, cfg.n_train, cfg.n_eval, cfg.data_seed);
    const int budget = response_budget(cfg, task);

    const PolicyParams reference =
        init_params({task.vocab.size(), cfg.embed_dim, cfg.window}, cfg.seed);
    PolicyParams policy = reference;
    {
        std::mt19937_64 rng(cfg.seed + 1);
        std::uniform_real_distribution<double> d(-0.3, 0.3);
        for (Mat* m : {&policy.emb, &policy.w1, &policy.wout})
            for (double& v : m->data) v += d(rng);
    }

    bool all_ok = true;
    auto verdict = [&](bool ok) {
        all_ok = all_ok && ok;
        return ok ? "pass" : "FAIL";
    };

    // shift/scale invariance of group normalization
    {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_int_distribution<int> size_d(2, 64);
        std::uniform_real_distribution<double> val_d(-1.0, 1.0);
        std::uniform_real_distribution<double> shift_d(-100.0, 100.0);
        std::uniform_real_distribution<double> scale_d(1e-3, 10.0);
        double worst = 0.0;
        for (int i = 0; i < 500; ++i) {
            const int n = size_d(rng);
            std::vector<double> v(n), w(n);
            for (int j = 0; j < n; ++j) v[j] = val_d(rng);
            v[0] += 2.0;  // guarantees spread
            const double shift = shift_d(rng), scale = scale_d(rng);
            for (int j = 0; j < n; ++j) w[j] = scale * v[j] + shift;
            const auto nv = group_normalize(v, kNormEps).first;
            const auto nw = group_normalize(w, kNormEps).first;
            for (int j = 0; j < n; ++j) worst = std::max(worst, std::fabs(nv[j] - nw[j]));
        }
        std::printf("normalization shift/scale invariance over 500 groups: max|delta|=%.3g  %s\n",
                    worst, verdict(worst <= 1e-9));
    }

    const int n_prompts = std::min<int>(4, static_cast<int>(train_set.items.size()));
    const double kC[] = {0.5, 1.0, 2.0, 4.0};
    std::vector<OracleReportRow> rows;
    ObjectiveConfig ocfg;  // gift, beta 1

    std::printf("%-8s %-5s %-12s %-14s %-14s %-12s %s\n", "prompt", "c", "Z", "slope", "r2",
                "exact_loss", "verdict");
    for (int p = 0; p < n_prompts; ++p) {
        const OracleTable table = enumerate_responses(policy, reference, task,
                                                      train_set.items[p].prompt, budget,
                                                      /*include_truncated=*/budget == 1);
        double ref_mass = table.truncation_ref;
        for (double q : table.prob_ref) ref_mass += q;
        const bool mass_ok = std::fabs(ref_mass - 1.0) <= 1e-12;
        const bool z_ok = std::isfinite(table.z) && table.z > 0.0;
        if (!mass_ok || !z_ok) all_ok = false;

        for (double c : kC) {
            const std::vector<double> probs = optimal_policy(table, c);
            const AffineFit fit = affine_fit(table, probs);
            const PopulationLoss loss = exact_population_loss(table, probs, ocfg);
            const bool ok = mass_ok && z_ok && !loss.degenerate_rewards &&
                            std::fabs(fit.slope - c) <= 1e-9 * std::max(1.0, c) &&
                            fit.r2 >= 1.0 - 1e-9 && std::fabs(loss.value) <= 1e-9;
            std::printf("%-8d %-5.2f %-12.6g %-14.10g %-14.12g %-12.3g %s\n", p, c, table.z,
                        fit.slope, fit.r2, loss.value, verdict(ok));
            if (c == 1.0)
                rows.push_back({p, table.z, fit.slope, fit.r2, loss.value});
        }
    }

    if (!o.out.empty()) {
        const std::string out = ensure_out_dir(o.out, "");
        write_snapshot(cfg, out);
        write_oracle_report(out + "/oracle_report.csv", rows);
        std::printf("oracle-check: report in %s/oracle_report.csv\n", out.c_str());
    }
    std::printf("oracle-check: %s\n", all_ok ? "all invariants hold" : "INVARIANT VIOLATION");
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"giftlab: desk-scale laboratory for group-matching alignment objectives"};
    app.require_subcommand(1);

    CommonOpts train_o, eval_o, sweep_o, gen_o, oracle_o;
    std::string checkpoint, axis, values;

    CLI::App* train_cmd = app.add_subcommand("train", "train a policy; writes metrics + checkpoint");
    add_common_options(train_cmd, train_o, "training seed override");

    CLI::App* eval_cmd = app.add_subcommand("eval", "pass@1 of a saved checkpoint on both splits");
    add_common_options(eval_cmd, eval_o, "training seed override");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file to evaluate")->required();

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "one run per axis value plus a combined CSV");
    add_common_options(sweep_cmd, sweep_o, "training seed override");
    sweep_cmd->add_option("--axis", axis, "n_rollouts, aggregation, or objective")->required();
    sweep_cmd->add_option("--values", values, "comma-separated axis values")->required();

    CLI::App* gen_cmd = app.add_subcommand("gen-data", "write the train/eval splits as JSONL");
    add_common_options(gen_cmd, gen_o, "data split seed override");

    CLI::App* oracle_cmd =
        app.add_subcommand("oracle-check", "exact-enumeration invariant suite, pass/fail table");
    add_common_options(oracle_cmd, oracle_o, "policy init seed override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help exits clean, every parse error is a validation error
    }

    try {
        if (train_cmd->parsed()) return run_train(train_o);
        if (eval_cmd->parsed()) return run_eval(eval_o, checkpoint);
        if (sweep_cmd->parsed()) return run_sweep(sweep_o, axis, values);
        if (gen_cmd->parsed()) return run_gen_data(gen_o);
        if (oracle_cmd->parsed()) return run_oracle_check(oracle_o);
    } catch (const TrainAbort& e) {
        std::fprintf(stderr, "giftlab: training aborted at step %d: %s\n", e.step, e.what());
        if (!e.checkpoint_path.empty())
            std::fprintf(stderr, "giftlab: crash checkpoint: %s\n", e.checkpoint_path.c_str());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "giftlab: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "giftlab: %s\n", e.what());
        return 2;
    }
    return 1;  // unreachable with require_subcommand(1)
}
