#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "msgnet/msgnet.hpp"

namespace fs = std::filesystem;
using namespace msgnet;

namespace {

// Flags shared by commands that build a model from a run configuration.
struct RunFlags {
    std::optional<std::string> config;
    KeyValues overrides;

    void attach(CLI::App* cmd)
    {
        cmd->add_option("--config", config, "flat key = value run configuration file");
        auto opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
            cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { overrides[key] = v; },
                                                  help);
        };
        opt("--data", "data", "input CSV (time column first)");
        opt("--out", "out", "output directory or file");
        opt("--seed", "seed", "seed for initialisation and shuffling (fallback: MSGNET_SEED)");
        opt("--horizons", "horizons", "comma-separated forecast horizons, e.g. 96,192,336,720");
        opt("--lookback", "lookback", "lookback window L");
        opt("--k", "k", "number of scales");
        opt("--d-model", "d_model", "model width");
        opt("--blocks", "blocks", "number of residual blocks");
        opt("--mixhop-order", "mixhop_order", "largest adjacency power");
        opt("--heads", "heads", "attention heads");
        opt("--node-dim", "node_dim", "node embedding width");
        opt("--ratios", "ratios", "train/val/test split, e.g. 0.7,0.1,0.2 or 4:4:2");
        opt("--lr", "lr", "learning rate");
        opt("--batch", "batch", "batch size");
        opt("--epochs", "epochs", "maximum epochs");
        opt("--patience", "patience", "early-stopping patience");
        opt("--max-batches", "max_batches", "cap on batches per epoch (0: all)");
    }

    RunConfig resolve() const { return resolve_run_config(config, overrides); }
};

std::uint64_t seed_or_env(const std::optional<std::uint64_t>& flag, std::uint64_t fallback)
{
    if (flag)
        return *flag;
    if (const char* env = std::getenv("MSGNET_SEED"); env && *env) {
        RunConfig tmp;
        apply_setting(tmp, "seed", env);
        return tmp.model.seed;
    }
    return fallback;
}

void ensure_parent(const std::string& path)
{
    const fs::path p(path);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
}

Json ratios_json(const SplitRatios& r) { return Json::array({r.train, r.val, r.test}); }

DataStats stats_of(const SeriesDataset& ds) { return {ds.names, ds.train_mean, ds.train_std}; }

int cmd_train(const RunFlags& flags)
{
    const RunConfig rc = flags.resolve();
    if (rc.data.empty())
        throw ConfigError("train: --data (or 'data' in the config file) is required");
    const SeriesDataset ds = split_and_standardize(load_csv(rc.data), rc.ratios);
    fs::create_directories(rc.out);
    const std::string log_path = (fs::path(rc.out) / "train_log.jsonl").string();
    std::ofstream log(log_path);
    if (!log)
        throw ConfigError("cannot write " + log_path);

    Json per_horizon = Json::array();
    Json checkpoints = Json::array();
    for (std::size_t h : rc.horizons) {
        ModelConfig mc = rc.model_for(h);
        mc.n_vars = ds.n_vars();
        MsgNet model(mc);
        auto on_epoch = [&](const EpochRecord& e) {
            Json line{{"schema", kEpochLogSchema}, {"horizon", h},          {"epoch", e.epoch},
                      {"train_mse", e.train_mse},  {"val_mse", e.val_mse}, {"seconds", e.seconds}};
            log << line.dump() << '\n';
            log.flush();
            std::fprintf(stderr, "T=%zu epoch %zu  train %.6f  val %.6f  (%.1fs)\n", h, e.epoch, e.train_mse,
                         e.val_mse, e.seconds);
        };
        const TrainResult res = train(model, ds, rc.train, on_epoch);
        const std::string ckpt = (fs::path(rc.out) / ("checkpoint_T" + std::to_string(h) + ".json")).string();
        save_checkpoint(model, ckpt, stats_of(ds));
        checkpoints.push_back(fs::path(ckpt).filename().string());

        Json train_curve = Json::array(), val_curve = Json::array();
        for (const auto& e : res.epochs) {
            train_curve.push_back(e.train_mse);
            val_curve.push_back(e.val_mse);
        }
        per_horizon.push_back({{"horizon", h},
                               {"mse", res.test.mse},
                               {"mae", res.test.mae},
                               {"test_windows", res.test.windows},
                               {"best_epoch", res.best_epoch},
                               {"best_val_mse", res.best_val_mse},
                               {"epochs_run", res.epochs.size()},
                               {"train_curve", train_curve},
                               {"val_curve", val_curve}});
        std::printf("horizon %4zu  test MSE %.6f  MAE %.6f  (best epoch %zu)\n", h, res.test.mse, res.test.mae,
                    res.best_epoch);
    }
    if (!log)
        throw ConfigError("failed writing " + log_path);
    Json metrics;
    metrics["schema"] = kMetricsSchema;
    metrics["data"] = fs::path(rc.data).filename().string();
    metrics["ratios"] = ratios_json(rc.ratios);
    metrics["lookback"] = rc.model.lookback;
    metrics["seed"] = rc.model.seed;
    metrics["batch"] = rc.train.batch_size;
    metrics["checkpoints"] = checkpoints;
    metrics["horizons"] = per_horizon;
    write_json_file((fs::path(rc.out) / "metrics.json").string(), metrics);
    return 0;
}

int cmd_init(const RunFlags& flags, const std::string& mode, const std::string& out)
{
    const RunConfig rc = flags.resolve();
    if (mode != "zero" && mode != "random")
        throw ConfigError("init: --init must be 'zero' or 'random'");
    ModelConfig mc = rc.model_for(rc.horizons.front());
    std::optional<DataStats> stats;
    if (!rc.data.empty()) {
        const SeriesDataset ds = split_and_standardize(load_csv(rc.data), rc.ratios);
        mc.n_vars = ds.n_vars();
        stats = stats_of(ds);
    }
    MsgNet model(mc);
    if (mode == "zero")
        zero_parameters(model.parameters());
    ensure_parent(out);
    save_checkpoint(model, out, stats);
    std::printf("wrote %s (%zu parameters)\n", out.c_str(), parameter_count(model.parameters()));
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data, const std::string& ratios, const std::string& split,
                 std::size_t batch, const std::string& out)
{
    if (split != "train" && split != "val" && split != "test")
        throw ConfigError("evaluate: --split must be train, val or test");
    if (batch == 0)
        throw ConfigError("evaluate: --batch must be positive");
    const Split s = split == "train" ? Split::train : split == "val" ? Split::val : Split::test;
    const auto loaded = load_checkpoint(ckpt);
    const SeriesDataset ds = split_and_standardize(load_csv(data), parse_ratios(ratios));
    const Metrics m = evaluate(loaded.model, ds, s, batch);
    Json j;
    j["schema"] = kMetricsSchema;
    j["data"] = fs::path(data).filename().string();
    j["ratios"] = ratios_json(ds.ratios);
    j["split"] = split;
    j["horizons"] = Json::array({{{"horizon", loaded.model.config().horizon},
                                  {"mse", m.mse},
                                  {"mae", m.mae},
                                  {"windows", m.windows},
                                  {"batch", batch}}});
    if (!out.empty()) {
        ensure_parent(out);
        write_json_file(out, j);
    }
    std::printf("%s MSE %.6f  MAE %.6f  over %zu windows\n", split.c_str(), m.mse, m.mae, m.windows);
    return 0;
}

int cmd_forecast(const std::string& ckpt, const std::string& data, std::optional<std::size_t> horizon,
                 const std::string& out)
{
    const auto loaded = load_checkpoint(ckpt);
    const SeriesDataset ds = load_csv(data);
    const ForecastFrame f =
        forecast_last_window(loaded.model, loaded.stats, ds, horizon.value_or(loaded.model.config().horizon));
    ensure_parent(out);
    save_csv(forecast_as_dataset(f, ds), out);
    std::printf("wrote %zu x %zu forecast to %s\n", f.values.dim(0), f.values.dim(1), out.c_str());
    return 0;
}

int cmd_scales(const std::string& data, std::size_t lookback, std::size_t k, std::optional<std::size_t> stride,
               const std::string& out)
{
    const SeriesDataset ds = load_csv(data);
    const Json j = scales_report(ds, lookback, k, stride.value_or(lookback));
    ensure_parent(out);
    write_json_file(out, j);
    for (const auto& h : j["histogram"])
        std::printf("frequency %4zu  period %4zu  share %.3f\n", h["frequency"].get<std::size_t>(),
                    h["period"].get<std::size_t>(), h["share"].get<double>());
    return 0;
}

int cmd_graph_export(const std::string& ckpt, const std::string& data, const std::string& out)
{
    const auto loaded = load_checkpoint(ckpt);
    Json j;
    if (!data.empty()) {
        const SeriesDataset ds = load_csv(data);
        const ForecastFrame f = forecast_last_window(loaded.model, loaded.stats, ds, loaded.model.config().horizon);
        j = graph_export(loaded.model, &f.scales);
    } else {
        j = graph_export(loaded.model);
    }
    ensure_parent(out);
    write_json_file(out, j);
    std::printf("wrote %zu adjacency matrices to %s\n", j["graphs"].size(), out.c_str());
    return 0;
}

int cmd_delta(std::size_t seeds, std::uint64_t base, const std::string& out)
{
    if (seeds < 1)
        throw ConfigError("delta-experiment: --seeds must be positive");
    const DeltaSummary s = delta_experiment_sweep(seeds, base);
    std::printf("%6s  %14s  %14s\n", "seed", "mixhop_mse", "mlp_mse");
    Json runs = Json::array();
    for (std::size_t i = 0; i < s.runs.size(); ++i) {
        std::printf("%6llu  %14.6e  %14.6e\n", static_cast<unsigned long long>(base + i), s.runs[i].mixhop_loss,
                    s.runs[i].mlp_loss);
        runs.push_back({{"seed", base + i}, {"mixhop_loss", s.runs[i].mixhop_loss}, {"mlp_loss", s.runs[i].mlp_loss}});
    }
    std::printf("mixhop wins %.1f%%  median mixhop %.3e  median mlp %.3e\n", 100.0 * s.mixhop_win_rate,
                s.mixhop_median, s.mlp_median);
    if (!out.empty()) {
        Json j;
        j["schema"] = kDeltaSchema;
        j["runs"] = runs;
        j["mixhop_win_rate"] = s.mixhop_win_rate;
        j["mixhop_median"] = s.mixhop_median;
        j["mlp_median"] = s.mlp_median;
        ensure_parent(out);
        write_json_file(out, j);
    }
    return 0;
}

int cmd_synth(const std::string& kind, std::size_t vars, std::size_t rows, double noise, std::uint64_t seed,
              const std::string& out)
{
    SeriesDataset ds;
    if (kind == "two-tone")
        ds = synth_two_tone(vars, rows, {24, 12}, noise, seed);
    else if (kind == "level-shift")
        ds = synth_level_shift(vars, rows, noise, seed);
    else
        throw ConfigError("synth: --kind must be two-tone or level-shift");
    ensure_parent(out);
    save_csv(ds, out);
    std::printf("wrote %zu rows x %zu variables to %s\n", ds.rows(), ds.n_vars(), out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"msgnet: multi-scale graph forecaster for multivariate time series"};
    app.require_subcommand(1);
    // A repeated flag overrides the earlier one.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    RunFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "train one model per horizon; write checkpoints, log and metrics");
    train_flags.attach(train_cmd);

    RunFlags init_flags;
    std::string init_mode = "random", init_out;
    auto* init_cmd = app.add_subcommand("init", "write an untrained checkpoint");
    init_flags.attach(init_cmd);
    init_cmd->add_option("--init", init_mode, "zero or random")->check(CLI::IsMember({"zero", "random"}));
    init_cmd->add_option("--checkpoint", init_out, "checkpoint file to write")->required();

    std::string ckpt, data, out, split = "test", ratios = "0.7,0.1,0.2";
    std::optional<std::size_t> horizon, stride;
    auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on one split of a CSV");
    eval_cmd->add_option("--checkpoint", ckpt)->required();
    eval_cmd->add_option("--data", data)->required();
    eval_cmd->add_option("--ratios", ratios);
    eval_cmd->add_option("--split", split);
    std::size_t eval_batch = 32;
    eval_cmd->add_option("--batch", eval_batch, "windows per forward; scale selection averages over a batch");
    eval_cmd->add_option("--out", out, "metrics JSON file");

    auto* fc_cmd = app.add_subcommand("forecast", "forecast past the end of a CSV");
    fc_cmd->add_option("--checkpoint", ckpt)->required();
    fc_cmd->add_option("--data", data)->required();
    fc_cmd->add_option("--horizon", horizon, "steps to emit (default: checkpoint horizon)");
    fc_cmd->add_option("--out", out, "forecast CSV")->required();

    std::size_t lookback = 96, k = 3;
    auto* sc_cmd = app.add_subcommand("scales", "report dominant periods per window");
    sc_cmd->add_option("--data", data)->required();
    sc_cmd->add_option("--lookback", lookback);
    sc_cmd->add_option("--k", k);
    sc_cmd->add_option("--stride", stride, "window step (default: lookback)");
    sc_cmd->add_option("--out", out, "scale report JSON")->required();

    auto* gx_cmd = app.add_subcommand("graph-export", "dump learned adjacency matrices");
    gx_cmd->add_option("--checkpoint", ckpt)->required();
    gx_cmd->add_option("--data", data, "optional CSV whose last window labels the scale periods");
    gx_cmd->add_option("--out", out, "adjacency JSON")->required();

    std::size_t seeds = 50;
    std::optional<std::uint64_t> seed;
    auto* dx_cmd = app.add_subcommand("delta-experiment", "Mixhop vs graph-free MLP on two-hop delta targets");
    dx_cmd->add_option("--seeds", seeds);
    dx_cmd->add_option("--seed", seed, "first seed (fallback: MSGNET_SEED, then 0)");
    dx_cmd->add_option("--out", out, "summary JSON");

    std::string kind = "two-tone";
    std::size_t vars = 4, rows = 2000;
    double noise = 0.1;
    auto* sy_cmd = app.add_subcommand("synth", "write a synthetic CSV fixture");
    sy_cmd->add_option("--kind", kind)->check(CLI::IsMember({"two-tone", "level-shift"}));
    sy_cmd->add_option("--vars", vars);
    sy_cmd->add_option("--rows", rows);
    sy_cmd->add_option("--noise", noise);
    sy_cmd->add_option("--seed", seed, "generator seed (fallback: MSGNET_SEED, then 2024)");
    sy_cmd->add_option("--out", out, "CSV file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd)
            return cmd_train(train_flags);
        if (*init_cmd)
            return cmd_init(init_flags, init_mode, init_out);
        if (*eval_cmd)
            return cmd_evaluate(ckpt, data, ratios, split, eval_batch, out);
        if (*fc_cmd)
            return cmd_forecast(ckpt, data, horizon, out);
        if (*sc_cmd)
            return cmd_scales(data, lookback, k, stride, out);
        if (*gx_cmd)
            return cmd_graph_export(ckpt, data, out);
        if (*dx_cmd)
            return cmd_delta(seeds, seed_or_env(seed, 0), out);
        if (*sy_cmd)
            return cmd_synth(kind, vars, rows, noise, seed_or_env(seed, 2024), out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
