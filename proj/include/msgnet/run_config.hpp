#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msgnet/data.hpp"
#include "msgnet/errors.hpp"
#include "msgnet/model.hpp"
#include "msgnet/training.hpp"

// Flat key = value run configuration. Precedence: command-line override,
// then config file, then built-in default. MSGNET_SEED supplies the seed only
// when neither of the first two does.
namespace msgnet {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data;
    std::string out = "msgnet-out";
    SplitRatios ratios;
    std::vector<std::size_t> horizons{96};

    /// Model config for one of the requested horizons.
    ModelConfig model_for(std::size_t horizon) const
    {
        ModelConfig c = model;
        c.horizon = horizon;
        return c;
    }

    void validate() const
    {
        if (horizons.empty())
            throw ConfigError("at least one horizon is required");
        for (auto h : horizons)
            model_for(h).validate();
        train.validate();
    }
};

using KeyValues = std::map<std::string, std::string>;

/// Keys accepted in config files and as overrides.
inline const std::vector<std::string>& run_config_keys()
{
    static const std::vector<std::string> keys{
        "data",  "out",      "seed",  "horizons", "lookback", "k",     "d_model",     "blocks",
        "heads", "mixhop_order", "node_dim", "alpha", "dropout", "ratios", "lr", "batch", "epochs", "patience",
        "max_batches"};
    return keys;
}

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end)
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v)
{
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return d;
}

inline std::vector<std::string> split_list(const std::string& v, const std::string& seps)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (seps.find(c) != std::string::npos) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace detail

/// "0.7,0.1,0.2" or "7:1:2"; parts are normalised by their sum.
inline SplitRatios parse_ratios(const std::string& v)
{
    const auto parts = detail::split_list(v, ",:/");
    if (parts.size() != 3)
        throw ConfigError("ratios: expected three parts, got '" + v + "'");
    double r[3];
    for (int i = 0; i < 3; ++i)
        r[i] = detail::parse_double("ratios", parts[static_cast<std::size_t>(i)]);
    const double total = r[0] + r[1] + r[2];
    if (r[0] <= 0 || r[1] <= 0 || r[2] <= 0)
        throw ConfigError("ratios: every part must be positive");
    SplitRatios out{r[0] / total, r[1] / total, r[2] / total};
    for (const auto& p : kProtocolRatios)
        if (std::abs(p.train - out.train) < 1e-9 && std::abs(p.val - out.val) < 1e-9 &&
            std::abs(p.test - out.test) < 1e-9)
            return p;
    throw ConfigError("ratios: '" + v + "' is not one of 0.7/0.1/0.2, 0.6/0.2/0.2 or 0.4/0.4/0.2");
}

inline void apply_setting(RunConfig& rc, const std::string& key, const std::string& raw)
{
    using detail::parse_double;
    using detail::parse_unsigned;
    const std::string v = detail::trim(raw);
    if (key == "data")
        rc.data = v;
    else if (key == "out")
        rc.out = v;
    else if (key == "seed")
        rc.model.seed = rc.train.seed = parse_unsigned(key, v);
    else if (key == "horizons") {
        rc.horizons.clear();
        for (const auto& h : detail::split_list(v, ", "))
            if (!h.empty())
                rc.horizons.push_back(parse_unsigned(key, h));
    } else if (key == "lookback")
        rc.model.lookback = parse_unsigned(key, v);
    else if (key == "k")
        rc.model.k = parse_unsigned(key, v);
    else if (key == "d_model")
        rc.model.d_model = parse_unsigned(key, v);
    else if (key == "blocks")
        rc.model.n_blocks = parse_unsigned(key, v);
    else if (key == "heads")
        rc.model.n_heads = parse_unsigned(key, v);
    else if (key == "mixhop_order")
        rc.model.mixhop_order = parse_unsigned(key, v);
    else if (key == "node_dim")
        rc.model.node_dim = parse_unsigned(key, v);
    else if (key == "alpha")
        rc.model.alpha = parse_double(key, v);
    else if (key == "dropout")
        rc.model.dropout = parse_double(key, v);
    else if (key == "ratios")
        rc.ratios = parse_ratios(v);
    else if (key == "lr")
        rc.train.learning_rate = parse_double(key, v);
    else if (key == "batch")
        rc.train.batch_size = parse_unsigned(key, v);
    else if (key == "epochs")
        rc.train.max_epochs = parse_unsigned(key, v);
    else if (key == "patience")
        rc.train.patience = parse_unsigned(key, v);
    else if (key == "max_batches")
        rc.train.max_batches_per_epoch = parse_unsigned(key, v);
    else
        throw ConfigError("unknown config key '" + key + "'");
}

/// Lines of `key = value`; '#' starts a comment.
inline KeyValues parse_config_text(const std::string& text, const std::string& origin = "config")
{
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        if (std::find(run_config_keys().begin(), run_config_keys().end(), key) == run_config_keys().end())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
        kv[key] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

/// Merges defaults, file settings and overrides, then validates the result.
inline RunConfig resolve_run_config(const std::optional<std::string>& config_path, const KeyValues& overrides,
                                    const char* env_seed = std::getenv("MSGNET_SEED"))
{
    RunConfig rc;
    const KeyValues file = config_path ? read_config_file(*config_path) : KeyValues{};
    if (!file.count("seed") && !overrides.count("seed") && env_seed && *env_seed)
        apply_setting(rc, "seed", env_seed);
    for (const auto& [k, v] : file)
        apply_setting(rc, k, v);
    for (const auto& [k, v] : overrides)
        apply_setting(rc, k, v);
    rc.validate();
    return rc;
}

} // namespace msgnet
