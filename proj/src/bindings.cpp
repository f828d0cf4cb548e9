// Thin notebook surface over the core: run training with flat config
// overrides, score checkpoints, and poke the normalization primitives. The
// CLI and formats stay the canonical interface; nothing here adds semantics.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "giftlab/objectives.hpp"
#include "giftlab/trainer.hpp"

namespace py = pybind11;
using namespace giftlab;

namespace {

py::dict row_to_dict(const MetricsRow& r) {
    py::dict d;
    d["step"] = r.step;
    d["train_pass1"] = r.train_pass1;
    d["eval_pass1"] = r.eval_pass1;
    d["loss"] = r.loss;
    d["mean_reward"] = r.mean_reward;
    d["mean_abs_implicit"] = r.mean_abs_implicit;
    d["mean_len"] = r.mean_len;
    d["seconds"] = r.seconds;
    return d;
}

// Defaults first, overrides second, so unknown keys fail the same way a bad
// config file does.
TrainConfig config_from_overrides(const py::dict& overrides) {
    KVConfig kv = TrainConfig{}.to_kv();
    for (auto item : overrides)
        kv.set(py::str(item.first).cast<std::string>(),
               py::str(item.second).cast<std::string>());
    TrainConfig cfg = TrainConfig::from_kv(kv);
    cfg.validate();
    return cfg;
}

int response_budget(const TrainConfig& cfg, const Task& task) {
    return cfg.max_response_len > 0 ? cfg.max_response_len : max_answer_tokens(task) + 1;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "group-normalized reward matching on tiny autoregressive policies";
    m.attr("__version__") = "0.1.0";

    m.def(
        "default_config",
        []() {
            const KVConfig kv = TrainConfig{}.to_kv();
            py::dict d;
            for (const auto& [key, value] : kv.entries()) d[py::str(key)] = value;
            return d;
        },
        "Every training config key with its default value, as strings.");

    m.def(
        "train",
        [](const py::dict& overrides, const std::string& out_dir) {
            const TrainConfig cfg = config_from_overrides(overrides);
            TrainResult res;
            {
                py::gil_scoped_release release;
                res = train(cfg, out_dir);
            }
            py::list rows;
            for (const MetricsRow& r : res.metrics) rows.append(row_to_dict(r));
            py::dict out;
            out["metrics"] = rows;
            out["degenerate_groups"] = res.degenerate_groups;
            out["pairless_updates"] = res.pairless_updates;
            out["final_train_pass1"] = res.metrics.back().train_pass1;
            out["final_eval_pass1"] = res.metrics.back().eval_pass1;
            return out;
        },
        py::arg("overrides") = py::dict(), py::arg("out_dir") = std::string(),
        "Run the training loop. Overrides use the same flat keys as config "
        "files; with out_dir set, metrics.csv and final.ckpt are written "
        "there.");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const py::dict& overrides) {
            const TrainConfig cfg = config_from_overrides(overrides);
            const Task task =
                make_task(cfg.task, cfg.n_symbols, cfg.prompt_len_min, cfg.prompt_len_max);
            const auto params = load_checkpoint(checkpoint).first;
            if (params.dims.vocab != task.vocab.size())
                throw std::invalid_argument("checkpoint vocab " +
                                            std::to_string(params.dims.vocab) +
                                            " does not match the task");
            const auto split = generate_dataset(task, cfg.n_train, cfg.n_eval, cfg.data_seed);
            const int budget = response_budget(cfg, task);
            py::dict out;
            out["train_pass1"] = pass_at_1(params, task, split.first, budget);
            out["eval_pass1"] = pass_at_1(params, task, split.second, budget);
            return out;
        },
        py::arg("checkpoint"), py::arg("overrides") = py::dict(),
        "Greedy pass@1 of a saved checkpoint on the config's data splits.");

    m.def(
        "group_normalize",
        [](const std::vector<double>& values, double eps) {
            return group_normalize(values, eps).first;
        },
        py::arg("values"), py::arg("eps") = kNormEps,
        "Standardize to mean 0, population std 1; degenerate groups map to "
        "all zeros.");

    m.def("z_cancellation_check", &z_cancellation_check, py::arg("raw"), py::arg("shift"),
          py::arg("scale"), py::arg("eps") = kNormEps,
          "True iff normalizing scale*raw + shift reproduces normalizing raw.");

    m.def("gift_loss_value", &gift_loss_value, py::arg("implicit"), py::arg("explicit"),
          py::arg("beta") = 1.0, py::arg("eps") = kNormEps,
          "Plain group-matching loss between raw implicit and explicit reward "
          "vectors, both sides normalized.");
}
