#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msgnet/errors.hpp"
#include "msgnet/model.hpp"

namespace msgnet {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCheckpointSchema = "msgnet.checkpoint/1";

inline Json config_to_json(const ModelConfig& c)
{
    Json j;
    j["n_vars"] = c.n_vars;
    j["lookback"] = c.lookback;
    j["horizon"] = c.horizon;
    j["d_model"] = c.d_model;
    j["k"] = c.k;
    j["n_blocks"] = c.n_blocks;
    j["n_heads"] = c.n_heads;
    j["mixhop_order"] = c.mixhop_order;
    j["node_dim"] = c.node_dim;
    j["alpha"] = c.alpha;
    j["dropout"] = c.dropout;
    j["time_vocab"] = c.time_vocab;
    j["seed"] = c.seed;
    return j;
}

inline ModelConfig config_from_json(const Json& j)
{
    try {
        ModelConfig c;
        c.n_vars = j.at("n_vars").get<std::size_t>();
        c.lookback = j.at("lookback").get<std::size_t>();
        c.horizon = j.at("horizon").get<std::size_t>();
        c.d_model = j.at("d_model").get<std::size_t>();
        c.k = j.at("k").get<std::size_t>();
        c.n_blocks = j.at("n_blocks").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.mixhop_order = j.at("mixhop_order").get<std::size_t>();
        c.node_dim = j.at("node_dim").get<std::size_t>();
        c.alpha = j.at("alpha").get<double>();
        c.dropout = j.at("dropout").get<double>();
        c.time_vocab = j.at("time_vocab").get<std::array<std::size_t, kTimeFeatureCount>>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
}

/// Train-split standardization carried with a checkpoint so raw CSVs can be
/// forecast in their own units.
struct DataStats {
    std::vector<std::string> names;
    std::vector<double> mean, std;
};

inline Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
}

/// Writes `j` and reads it back; a file that does not parse to the same
/// document is an error.
inline void write_json_file(const std::string& path, const Json& j)
{
    {
        std::ofstream out(path);
        if (!out)
            throw ConfigError("cannot write " + path);
        out << j.dump(2) << '\n';
        if (!out)
            throw ConfigError("failed writing " + path);
    }
    if (read_json_file(path) != j)
        throw ConfigError(path + ": written artifact does not read back identically");
}

inline void require_schema(const Json& j, const std::string& schema, const std::string& what)
{
    if (!j.is_object() || !j.contains("schema") || j["schema"] != schema)
        throw ConfigError(what + ": expected schema " + schema);
}

inline Json checkpoint_to_json(const MsgNet& model, const std::optional<DataStats>& stats = std::nullopt)
{
    Json j;
    j["schema"] = kCheckpointSchema;
    j["config"] = config_to_json(model.config());
    if (stats) {
        j["data_stats"] = {{"names", stats->names}, {"mean", stats->mean}, {"std", stats->std}};
    }
    Json params = Json::array();
    for (const auto& p : model.parameters()) {
        const Tensor& v = p.var.value();
        params.push_back({{"name", p.name}, {"shape", v.shape()}, {"data", v.values()}});
    }
    j["parameters"] = std::move(params);
    return j;
}

inline void save_checkpoint(const MsgNet& model, const std::string& path,
                            const std::optional<DataStats>& stats = std::nullopt)
{
    write_json_file(path, checkpoint_to_json(model, stats));
}

/// Copies stored tensors into `model`; the stored config must equal the model's.
inline void load_parameters_into(MsgNet& model, const Json& j)
{
    require_schema(j, kCheckpointSchema, "checkpoint");
    const ModelConfig stored = config_from_json(j.at("config"));
    if (!(stored == model.config()))
        throw ConfigError("checkpoint config does not match the model config");
    const auto params = model.parameters();
    const auto& stored_params = j.at("parameters");
    if (stored_params.size() != params.size())
        throw ConfigError("checkpoint holds " + std::to_string(stored_params.size()) + " tensors, model has " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = stored_params[i];
        const auto name = e.at("name").get<std::string>();
        if (name != params[i].name)
            throw ConfigError("checkpoint tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                              params[i].name + "'");
        const auto shape = e.at("shape").get<Shape>();
        if (shape != params[i].var.shape())
            throw ConfigError("checkpoint tensor " + name + " has shape " + shape_str(shape) + ", expected " +
                              shape_str(params[i].var.shape()));
        Tensor t(shape, e.at("data").get<std::vector<double>>());
        if (!t.all_finite())
            throw NumericError("checkpoint tensor " + name + " holds non-finite values");
        Var v = params[i].var;
        v.mutable_value() = std::move(t);
    }
}

struct LoadedCheckpoint {
    MsgNet model;
    std::optional<DataStats> stats;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path)
{
    const Json j = read_json_file(path);
    require_schema(j, kCheckpointSchema, path);
    LoadedCheckpoint out{MsgNet(config_from_json(j.at("config"))), std::nullopt};
    load_parameters_into(out.model, j);
    if (j.contains("data_stats")) {
        const auto& s = j["data_stats"];
        out.stats = DataStats{s.at("names").get<std::vector<std::string>>(), s.at("mean").get<std::vector<double>>(),
                              s.at("std").get<std::vector<double>>()};
        if (out.stats->mean.size() != out.model.config().n_vars || out.stats->std.size() != out.stats->mean.size())
            throw ConfigError(path + ": data statistics do not match n_vars");
    }
    return out;
}

} // namespace msgnet
