#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "giftlab/config.hpp"
#include "giftlab/envs.hpp"
#include "giftlab/objectives.hpp"
#include "giftlab/policy.hpp"

namespace giftlab {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct TrainConfig {
    // task and data
    TaskKind task = TaskKind::modsum;
    int n_symbols = 10;
    int prompt_len_min = 2;
    int prompt_len_max = 2;
    int n_train = 64;
    int n_eval = 16;
    uint64_t data_seed = 0;  // shared across seeds so runs compare on one split

    // policy
    int embed_dim = 32;
    int window = 4;
    // Response token budget including EOS for sampling and greedy eval.
    // 0 derives it from the task (answer tokens plus one for EOS); 1 gives
    // the single-step bandit where a lone answer token needs no EOS.
    int max_response_len = 0;

    ObjectiveConfig objective;

    // loop
    int n_rollouts = 16;
    double learning_rate = 1e-3;
    int train_batch = 16;   // prompts rolled out per phase
    int mini_batch = 8;     // prompts per optimizer step
    int epochs = 1;         // gradient epochs over each phase's groups
    double temperature = 1.0;
    int eval_every = 25;
    int max_steps = 500;
    uint64_t seed = 1;

    OptimizerKind optimizer = OptimizerKind::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;  // global-norm cap, applied to grpo only

    int threads = 1;          // rollout fan-out; updates are always serialized
    bool wall_clock = false;  // false pins the seconds column to zero

    void validate() const;

    // Flat key=value round trip. Unknown keys are rejected; to_kv emits every
    // key so a snapshot reproduces the run exactly.
    static TrainConfig from_kv(const KVConfig& kv);
    KVConfig to_kv() const;
};

struct MetricsRow {
    int step = 0;
    double train_pass1 = 0.0;
    double eval_pass1 = 0.0;
    double loss = 0.0;
    double mean_reward = 0.0;
    double mean_abs_implicit = 0.0;
    double mean_len = 0.0;
    double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,train_pass1,eval_pass1,loss,mean_reward,mean_abs_implicit,mean_len,seconds";

std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Gradients for the five parameter tensors, in declaration order.
struct PolicyGrads {
    Mat emb, w1, b1, wout, bout;

    bool all_finite() const;
    double global_norm() const;
    void scale(double s);
};

PolicyGrads extract_grads(const ParamVars& pv);

// SGD or bias-corrected Adam over the five tensors.
class Optimizer {
  public:
    Optimizer(const TrainConfig& cfg, const PolicyDims& dims);
    void apply(PolicyParams& params, const PolicyGrads& grads);
    int steps_taken() const { return t_; }

  private:
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Mat> m_, v_;
};

struct TrainResult {
    PolicyParams params;
    PolicyParams reference;
    std::vector<MetricsRow> metrics;
    int degenerate_groups = 0;   // rollout groups whose rewards were all equal
    int pairless_updates = 0;    // dpo steps with no preference pair (no-op)
};

// Raised on NaN/Inf in the loss, gradients, or parameters. Carries the
// offending step; the crash checkpoint path is empty when no out_dir was set.
struct TrainAbort : std::runtime_error {
    int step;
    std::string checkpoint_path;
    TrainAbort(int step_, const std::string& msg, std::string ckpt)
        : std::runtime_error(msg), step(step_), checkpoint_path(std::move(ckpt)) {}
};

// Invoked whenever a metrics row is recorded (step 0, each eval_every
// boundary, and the final step) with the live parameters and the frozen
// reference. Metrics rows carry only scalars; this is the hook for probes
// that need the mid-run policy itself.
using EvalObserver =
    std::function<void(int step, const PolicyParams& params, const PolicyParams& reference)>;

// Runs the rollout / reward / normalize / minimize loop with the reference
// snapshotted once before step 0. With an out_dir, writes metrics.csv and
// final.ckpt there. Bit-reproducible for a fixed config and seed; the
// observer only watches, it cannot perturb the run.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir = "",
                  const EvalObserver& observer = {});

enum class SweepAxis { n_rollouts, aggregation, objective };

SweepAxis parse_axis(const std::string& name);
std::string axis_name(SweepAxis axis);

struct SweepResult {
    std::vector<std::string> values;
    std::vector<TrainResult> runs;
};

// One full train() per value under <out_dir>/<axis>=<value>/, sharing the
// base config's data split, plus combined.csv with the eval curves side by
// side for plotting.
SweepResult sweep(const TrainConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                  const std::string& out_dir);

}  // namespace giftlab
