#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "msgnet/checkpoint.hpp"
#include "msgnet/reports.hpp"
#include "msgnet/run_config.hpp"

using namespace msgnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& body = {})
{
    const fs::path p = fs::temp_directory_path() / ("msgnet_cc_" + name);
    if (!body.empty()) {
        std::ofstream out(p);
        out << body;
    }
    return p;
}

ModelConfig small_model()
{
    ModelConfig c;
    c.n_vars = 3;
    c.lookback = 32;
    c.horizon = 8;
    c.d_model = 8;
    c.k = 2;
    c.n_blocks = 2;
    c.n_heads = 2;
    c.node_dim = 4;
    c.seed = 11;
    return c;
}

std::string config_error(const std::function<void()>& f)
{
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(RunConfig, DefaultsAreValid)
{
    const RunConfig rc = resolve_run_config(std::nullopt, {}, nullptr);
    EXPECT_EQ(rc.horizons, (std::vector<std::size_t>{96}));
    EXPECT_EQ(rc.ratios, (SplitRatios{0.7, 0.1, 0.2}));
    EXPECT_EQ(rc.train.patience, 3u);
}

TEST(RunConfig, ParsesFileWithComments)
{
    const auto kv = parse_config_text("# header\nlookback = 48  # trailing\n\nhorizons = 12, 24\nratios=4:4:2\n");
    EXPECT_EQ(kv.at("lookback"), "48");
    RunConfig rc;
    for (const auto& [k, v] : kv)
        apply_setting(rc, k, v);
    EXPECT_EQ(rc.model.lookback, 48u);
    EXPECT_EQ(rc.horizons, (std::vector<std::size_t>{12, 24}));
    EXPECT_EQ(rc.ratios, (SplitRatios{0.4, 0.4, 0.2}));
    EXPECT_EQ(rc.model_for(24).horizon, 24u);
}

TEST(RunConfig, UnknownKeyNamesKeyAndLine)
{
    const std::string e = config_error([] { parse_config_text("lookback = 48\nlookbak = 96\n", "run.cfg"); });
    EXPECT_NE(e.find("lookbak"), std::string::npos) << e;
    EXPECT_NE(e.find("run.cfg:2"), std::string::npos) << e;
    EXPECT_NE(config_error([] { parse_config_text("just words\n"); }).find("key = value"), std::string::npos);
    RunConfig rc;
    EXPECT_NE(config_error([&] { apply_setting(rc, "colour", "red"); }).find("colour"), std::string::npos);
}

TEST(RunConfig, ValueErrors)
{
    RunConfig rc;
    EXPECT_THROW(apply_setting(rc, "lookback", "-3"), ConfigError);
    EXPECT_THROW(apply_setting(rc, "lr", "fast"), ConfigError);
    EXPECT_THROW(apply_setting(rc, "ratios", "0.5,0.3,0.2"), ConfigError);
    EXPECT_THROW(apply_setting(rc, "ratios", "1,2"), ConfigError);
    EXPECT_THROW(resolve_run_config(std::nullopt, {{"k", "0"}}, nullptr), ConfigError);
    EXPECT_THROW(resolve_run_config(std::nullopt, {{"horizons", ""}}, nullptr), ConfigError);
    EXPECT_THROW(resolve_run_config(std::string("/nonexistent/run.cfg"), {}, nullptr), ConfigError);
}

TEST(RunConfig, RatioForms)
{
    EXPECT_EQ(parse_ratios("0.7,0.1,0.2"), (SplitRatios{0.7, 0.1, 0.2}));
    EXPECT_EQ(parse_ratios("7:1:2"), (SplitRatios{0.7, 0.1, 0.2}));
    EXPECT_EQ(parse_ratios("6/2/2"), (SplitRatios{0.6, 0.2, 0.2}));
}

TEST(RunConfig, PrecedenceOverridesThenFileThenEnvironment)
{
    const fs::path p = temp_file("prec.cfg", "seed = 5\nlookback = 48\nk = 2\n");
    EXPECT_EQ(resolve_run_config(p.string(), {}, "9").model.seed, 5u);
    EXPECT_EQ(resolve_run_config(p.string(), {{"seed", "7"}}, "9").train.seed, 7u);
    const RunConfig over = resolve_run_config(p.string(), {{"lookback", "64"}}, nullptr);
    EXPECT_EQ(over.model.lookback, 64u);
    EXPECT_EQ(over.model.k, 2u);
    fs::remove(p);
    const RunConfig env = resolve_run_config(std::nullopt, {}, "9");
    EXPECT_EQ(env.model.seed, 9u);
    EXPECT_EQ(env.train.seed, 9u);
    EXPECT_THROW(resolve_run_config(std::nullopt, {}, "nine"), ConfigError);
}

TEST(Checkpoint, ConfigJsonRoundTrip)
{
    const ModelConfig c = small_model();
    EXPECT_EQ(config_from_json(config_to_json(c)), c);
    Json bad = config_to_json(c);
    bad["k"] = 0;
    EXPECT_THROW(config_from_json(bad), ConfigError);
}

TEST(Checkpoint, SaveLoadReproducesPredictions)
{
    MsgNet model(small_model());
    const fs::path p = temp_file("ckpt.json");
    const DataStats stats{{"a", "b", "c"}, {1.0, 2.0, 3.0}, {0.5, 1.5, 2.5}};
    save_checkpoint(model, p.string(), stats);
    const LoadedCheckpoint back = load_checkpoint(p.string());
    fs::remove(p);
    ASSERT_TRUE(back.stats);
    EXPECT_EQ(back.stats->mean, stats.mean);
    EXPECT_EQ(back.stats->names, stats.names);
    const auto a = model.parameters(), b = back.model.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(a[i].var.value(), b[i].var.value()) << a[i].name;
    Rng rng(3);
    Tensor x({2, 3, 32});
    for (auto& v : x.data())
        v = rng.uniform(-1, 1);
    const auto marks = TimeFeatures::zeros(2, 32);
    EXPECT_EQ(model.predict(x, marks), back.model.predict(x, marks));
}

TEST(Checkpoint, MismatchesAreRejected)
{
    MsgNet model(small_model());
    const Json good = checkpoint_to_json(model);

    ModelConfig other = small_model();
    other.d_model = 16;
    MsgNet wider(other);
    EXPECT_NE(config_error([&] { load_parameters_into(wider, good); }).find("config"), std::string::npos);

    Json renamed = good;
    renamed["parameters"][0]["name"] = "nope";
    EXPECT_NE(config_error([&] { load_parameters_into(model, renamed); }).find("nope"), std::string::npos);

    Json reshaped = good;
    reshaped["parameters"][0]["shape"] = {1};
    EXPECT_THROW(load_parameters_into(model, reshaped), ConfigError);

    Json truncated = good;
    truncated["parameters"].erase(truncated["parameters"].size() - 1);
    EXPECT_THROW(load_parameters_into(model, truncated), ConfigError);

    Json schema = good;
    schema["schema"] = "msgnet.checkpoint/0";
    EXPECT_THROW(load_parameters_into(model, schema), ConfigError);

    const fs::path p = temp_file("broken.json", "{ not json");
    EXPECT_THROW(load_checkpoint(p.string()), ConfigError);
    fs::remove(p);
}

TEST(Reports, ScalesReportHistogram)
{
    const SeriesDataset ds = synth_two_tone(2, 300, {24, 12}, 0.0, 1);
    const Json j = scales_report(ds, 96, 2, 50);
    EXPECT_EQ(j["schema"], kScalesSchema);
    EXPECT_EQ(j["windows"].size(), 5u); // starts 0, 50, ..., 200
    double share = 0.0;
    std::size_t count = 0;
    for (const auto& h : j["histogram"]) {
        share += h["share"].get<double>();
        count += h["count"].get<std::size_t>();
    }
    EXPECT_NEAR(share, 1.0, 1e-12);
    EXPECT_EQ(count, 10u);
    ASSERT_EQ(j["histogram"].size(), 2u);
    EXPECT_EQ(j["histogram"][0]["period"], 24u);
    EXPECT_EQ(j["histogram"][1]["period"], 12u);
}

TEST(Reports, ForecastUsesStoredStatistics)
{
    ModelConfig c = small_model();
    MsgNet model(c);
    ParameterList params = model.parameters();
    zero_parameters(params);
    const SeriesDataset ds = synth_two_tone(3, 100, {24, 12}, 0.1, 2);
    const DataStats stats{ds.names, {10.0, 20.0, 30.0}, {2.0, 2.0, 2.0}};
    const ForecastFrame f = forecast_last_window(model, stats, ds, 5);
    ASSERT_EQ(f.values.shape(), (Shape{5, 3}));
    EXPECT_EQ(f.timestamps.front(), ds.timestamps.back() + ds.step);
    // A zeroed head returns the window mean, mapped back to raw units.
    for (std::size_t n = 0; n < 3; ++n) {
        double m = 0.0;
        for (std::size_t t = 68; t < 100; ++t)
            m += (ds.value(t, n) - stats.mean[n]) / stats.std[n];
        m = m / 32.0 * stats.std[n] + stats.mean[n];
        for (std::size_t t = 0; t < 5; ++t)
            EXPECT_NEAR(f.values[t * 3 + n], m, 1e-9);
    }
    EXPECT_THROW(forecast_last_window(model, stats, ds, 9), RangeError);
    EXPECT_THROW(forecast_last_window(model, stats, synth_two_tone(2, 100, {24, 12}, 0.1, 2), 4), SchemaError);
}

TEST(Reports, GraphExportShape)
{
    MsgNet model(small_model());
    const Json j = graph_export(model);
    EXPECT_EQ(j["schema"], kGraphsSchema);
    ASSERT_EQ(j["graphs"].size(), 4u);
    for (const auto& g : j["graphs"]) {
        EXPECT_TRUE(g["scale_period"].is_null());
        const auto m = g["matrix"].get<std::vector<double>>();
        ASSERT_EQ(m.size(), 9u);
        for (std::size_t r = 0; r < 3; ++r)
            EXPECT_NEAR(m[r * 3] + m[r * 3 + 1] + m[r * 3 + 2], 1.0, 1e-12);
    }
    EXPECT_EQ(graph_export(model).dump(), j.dump());
}
