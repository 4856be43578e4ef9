#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "msgnet/checkpoint.hpp"
#include "msgnet/reports.hpp"

using namespace msgnet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("msgnet_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path at(const std::string& name) const { return dir / name; }

    /// Runs the CLI with `args`; stdout and stderr land in `last_output`.
    int run(const std::string& args, const std::string& env = {})
    {
        const fs::path log = at("last_output.txt");
        const std::string cmd = (env.empty() ? "" : env + " ") + std::string(MSGNET_BIN) + " " + args + " > " +
                                log.string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        last_output = slurp(log);
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    void synth(const std::string& name, std::size_t vars = 3, std::size_t rows = 800)
    {
        ASSERT_EQ(run("synth --kind two-tone --vars " + std::to_string(vars) + " --rows " + std::to_string(rows) +
                      " --seed 1 --out " + at(name).string()),
                  0)
            << last_output;
    }

    std::string tiny_model_flags() const
    {
        return " --lookback 48 --k 2 --d-model 8 --blocks 1 --heads 2 --node-dim 4";
    }

    std::string tiny_train(const std::string& data, const std::string& out) const
    {
        return "train --data " + at(data).string() + " --out " + at(out).string() + tiny_model_flags() +
               " --horizons 12,24 --epochs 2 --max-batches 3 --batch 16 --lr 1e-3";
    }

    std::string last_output;
};

} // namespace

TEST_F(Cli, TrainWritesArtifacts)
{
    synth("s.csv");
    ASSERT_EQ(run(tiny_train("s.csv", "run")), 0) << last_output;
    for (const char* f : {"metrics.json", "train_log.jsonl", "checkpoint_T12.json", "checkpoint_T24.json"})
        EXPECT_TRUE(fs::exists(at("run") / f)) << f;
    const Json m = read_json_file((at("run") / "metrics.json").string());
    EXPECT_EQ(m["schema"], kMetricsSchema);
    ASSERT_EQ(m["horizons"].size(), 2u);
    std::size_t epochs = 0;
    for (const auto& h : m["horizons"]) {
        EXPECT_GT(h["test_windows"].get<std::size_t>(), 0u);
        EXPECT_EQ(h["train_curve"].size(), h["epochs_run"].get<std::size_t>());
        epochs += h["epochs_run"].get<std::size_t>();
    }
    std::ifstream log(at("run") / "train_log.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        EXPECT_EQ(Json::parse(line)["schema"], kEpochLogSchema);
        ++lines;
    }
    EXPECT_EQ(lines, epochs);
}

TEST_F(Cli, TrainingIsByteReproducible)
{
    synth("s.csv");
    const std::string before = slurp(at("s.csv"));
    ASSERT_EQ(run(tiny_train("s.csv", "a")), 0) << last_output;
    ASSERT_EQ(run(tiny_train("s.csv", "b")), 0) << last_output;
    EXPECT_EQ(slurp(at("a") / "metrics.json"), slurp(at("b") / "metrics.json"));
    EXPECT_EQ(slurp(at("a") / "checkpoint_T24.json"), slurp(at("b") / "checkpoint_T24.json"));
    EXPECT_EQ(slurp(at("s.csv")), before);
}

TEST_F(Cli, SeedFallsBackToEnvironment)
{
    synth("s.csv");
    ASSERT_EQ(run(tiny_train("s.csv", "run") + " --horizons 12 --epochs 1", "MSGNET_SEED=77"), 0) << last_output;
    EXPECT_EQ(read_json_file((at("run") / "metrics.json").string())["seed"], 77u);
    ASSERT_EQ(run(tiny_train("s.csv", "run2") + " --horizons 12 --epochs 1 --seed 5", "MSGNET_SEED=77"), 0);
    EXPECT_EQ(read_json_file((at("run2") / "metrics.json").string())["seed"], 5u);
}

TEST_F(Cli, EvaluateReproducesTrainingMetric)
{
    synth("s.csv");
    ASSERT_EQ(run(tiny_train("s.csv", "run")), 0) << last_output;
    ASSERT_EQ(run("evaluate --checkpoint " + (at("run") / "checkpoint_T12.json").string() + " --data " +
                  at("s.csv").string() + " --batch 16 --out " + at("e.json").string()),
              0)
        << last_output;
    const Json m = read_json_file((at("run") / "metrics.json").string());
    const Json e = read_json_file(at("e.json").string());
    EXPECT_EQ(e["horizons"][0]["mse"], m["horizons"][0]["mse"]);
    EXPECT_EQ(e["horizons"][0]["windows"], m["horizons"][0]["test_windows"]);
}

TEST_F(Cli, ConfigFileAndUnknownKey)
{
    synth("s.csv");
    {
        std::ofstream cfg(at("run.cfg"));
        cfg << "# tiny run\nlookback = 48\nk = 2\nd_model = 8\nblocks = 1\nheads = 2\nhorizons = 12\nepochs = 1\n"
               "max_batches = 2\n";
    }
    ASSERT_EQ(run("train --config " + at("run.cfg").string() + " --data " + at("s.csv").string() + " --out " +
                  at("run").string()),
              0)
        << last_output;
    EXPECT_EQ(read_json_file((at("run") / "metrics.json").string())["lookback"], 48u);
    {
        std::ofstream cfg(at("bad.cfg"));
        cfg << "lookback = 48\nlookbak = 96\n";
    }
    EXPECT_EQ(run("train --config " + at("bad.cfg").string() + " --data " + at("s.csv").string()), 2);
    EXPECT_NE(last_output.find("lookbak"), std::string::npos) << last_output;
    EXPECT_FALSE(fs::exists(at("msgnet-out")));
}

TEST_F(Cli, ZeroCheckpointForecastsWindowMean)
{
    synth("s.csv");
    ASSERT_EQ(run("init --init zero --data " + at("s.csv").string() + tiny_model_flags() +
                  " --horizons 12 --checkpoint " + at("z.json").string()),
              0)
        << last_output;
    ASSERT_EQ(run("forecast --checkpoint " + at("z.json").string() + " --data " + at("s.csv").string() +
                  " --out " + at("f.csv").string()),
              0)
        << last_output;
    const SeriesDataset src = load_csv(at("s.csv").string());
    const SeriesDataset f = load_csv(at("f.csv").string());
    ASSERT_EQ(f.values.shape(), (Shape{12, 3}));
    EXPECT_EQ(f.timestamps.front(), src.timestamps.back() + src.step);
    for (std::size_t n = 0; n < 3; ++n) {
        double m = 0.0;
        for (std::size_t t = src.rows() - 48; t < src.rows(); ++t)
            m += src.value(t, n);
        m /= 48.0;
        for (std::size_t t = 0; t < 12; ++t)
            EXPECT_NEAR(f.value(t, n), m, 1e-9);
    }
}

TEST_F(Cli, ForecastMatchesInProcess)
{
    synth("s.csv");
    ASSERT_EQ(run(tiny_train("s.csv", "run")), 0) << last_output;
    const std::string ckpt = (at("run") / "checkpoint_T24.json").string();
    ASSERT_EQ(run("forecast --checkpoint " + ckpt + " --data " + at("s.csv").string() + " --horizon 10 --out " +
                  at("f.csv").string()),
              0)
        << last_output;
    const auto loaded = load_checkpoint(ckpt);
    const SeriesDataset src = load_csv(at("s.csv").string());
    const ForecastFrame want = forecast_last_window(loaded.model, loaded.stats, src, 10);
    const SeriesDataset got = load_csv(at("f.csv").string());
    ASSERT_EQ(got.values.shape(), want.values.shape());
    EXPECT_EQ(got.timestamps, want.timestamps);
    for (std::size_t i = 0; i < want.values.numel(); ++i)
        EXPECT_NEAR(got.values[i], want.values[i], 1e-9);
}

TEST_F(Cli, ForecastRejectsMismatchedInputs)
{
    synth("s.csv");
    synth("wide.csv", 4, 200);
    ASSERT_EQ(run("init --data " + at("s.csv").string() + tiny_model_flags() + " --horizons 12 --checkpoint " +
                  at("c.json").string()),
              0)
        << last_output;
    EXPECT_EQ(run("forecast --checkpoint " + at("c.json").string() + " --data " + at("wide.csv").string() +
                  " --out " + at("f.csv").string()),
              1);
    EXPECT_NE(last_output.find("variables"), std::string::npos) << last_output;
    EXPECT_EQ(run("forecast --checkpoint " + at("c.json").string() + " --data " + at("s.csv").string() +
                  " --horizon 13 --out " + at("f.csv").string()),
              1);
    EXPECT_FALSE(fs::exists(at("f.csv")));
}

TEST_F(Cli, ScalesOnSingleTone)
{
    SeriesDataset ds = synth_two_tone(2, 480, {24, 12}, 0.0, 3);
    for (std::size_t r = 0; r < ds.rows(); ++r)
        for (std::size_t n = 0; n < 2; ++n)
            ds.values[r * 2 + n] = std::sin(2.0 * 3.141592653589793 * static_cast<double>(r) / 24.0 + n);
    save_csv(ds, at("tone.csv").string());
    ASSERT_EQ(run("scales --data " + at("tone.csv").string() + " --lookback 96 --k 1 --out " +
                  at("sc.json").string()),
              0)
        << last_output;
    const Json j = read_json_file(at("sc.json").string());
    EXPECT_EQ(j["schema"], kScalesSchema);
    EXPECT_EQ(j["windows"].size(), 5u);
    ASSERT_EQ(j["histogram"].size(), 1u);
    EXPECT_EQ(j["histogram"][0]["period"], 24u);
    EXPECT_EQ(j["histogram"][0]["share"], 1.0);
}

TEST_F(Cli, GraphExportOfZeroInitIsUniform)
{
    synth("s.csv");
    ASSERT_EQ(run("init --init zero --data " + at("s.csv").string() + tiny_model_flags() +
                  " --blocks 2 --k 3 --horizons 12 --checkpoint " + at("z.json").string()),
              0)
        << last_output;
    ASSERT_EQ(run("graph-export --checkpoint " + at("z.json").string() + " --out " + at("g1.json").string()), 0);
    ASSERT_EQ(run("graph-export --checkpoint " + at("z.json").string() + " --out " + at("g2.json").string()), 0);
    EXPECT_EQ(slurp(at("g1.json")), slurp(at("g2.json")));
    const Json g = read_json_file(at("g1.json").string());
    ASSERT_EQ(g["graphs"].size(), 6u);
    for (const auto& e : g["graphs"])
        for (double v : e["matrix"].get<std::vector<double>>())
            EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    ASSERT_EQ(run("graph-export --checkpoint " + at("z.json").string() + " --data " + at("s.csv").string() +
                  " --out " + at("g3.json").string()),
              0)
        << last_output;
    EXPECT_TRUE(read_json_file(at("g3.json").string())["graphs"][0]["scale_period"].is_number());
}

TEST_F(Cli, DeltaExperimentSummary)
{
    ASSERT_EQ(run("delta-experiment --seeds 3 --out " + at("d.json").string()), 0) << last_output;
    const Json j = read_json_file(at("d.json").string());
    EXPECT_EQ(j["schema"], kDeltaSchema);
    EXPECT_EQ(j["runs"].size(), 3u);
    EXPECT_GE(j["mixhop_win_rate"].get<double>(), 0.0);
}

TEST_F(Cli, BadArgumentsFail)
{
    EXPECT_NE(run("train --colour red"), 0);
    EXPECT_NE(run("no-such-command"), 0);
    EXPECT_EQ(run("forecast --checkpoint " + at("missing.json").string() + " --data x.csv --out y.csv"), 2);
    EXPECT_EQ(run("evaluate --checkpoint a --data b --split holdout"), 2);
}
