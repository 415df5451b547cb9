#include "fluoro/trainer/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fluoro/errors.hpp"

namespace fluoro::trainer {

std::string to_string(ModelKind k) { return k == ModelKind::channel_mean ? "channel-mean" : "fluoroformer"; }

ModelKind model_kind_from_string(std::string_view s) {
    if (s == "fluoroformer") return ModelKind::fluoroformer;
    if (s == "channel-mean") return ModelKind::channel_mean;
    throw ConfigError("unknown model '" + std::string(s) + "' (expected fluoroformer or channel-mean)");
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (num_bins < 2) throw ConfigError("num_bins must be at least 2");
    if (folds < 3) throw ConfigError("cross-validation needs at least 3 folds (train, validation, test)");
    if (attention_dim < 1) throw ConfigError("attention_dim must be positive");
    if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
}

std::size_t TrainConfig::resolved_hidden_dim(std::size_t embed_dim) const {
    if (hidden_dim != 0) return hidden_dim;
    return std::clamp<std::size_t>(embed_dim / 4, 1, 256);
}

nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"lr", c.lr},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"adam_eps", c.adam_eps},
        {"weight_decay", c.weight_decay},
        {"epochs", c.epochs},
        {"num_bins", c.num_bins},
        {"folds", c.folds},
        {"seed", c.seed},
        {"hidden_dim", c.hidden_dim},
        {"attention_dim", c.attention_dim},
        {"qkv_bias", c.qkv_bias},
        {"norm_eps", c.norm_eps},
        {"precision", nx::to_string(c.precision)},
        {"model", to_string(c.model)},
    };
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known = {"lr",         "beta1",         "beta2",    "adam_eps", "weight_decay",
                                                "epochs",     "num_bins",      "folds",    "seed",     "hidden_dim",
                                                "attention_dim", "qkv_bias",   "norm_eps", "precision", "model"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    try {
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        take("lr", c.lr);
        take("beta1", c.beta1);
        take("beta2", c.beta2);
        take("adam_eps", c.adam_eps);
        take("weight_decay", c.weight_decay);
        take("epochs", c.epochs);
        take("num_bins", c.num_bins);
        take("folds", c.folds);
        take("seed", c.seed);
        take("hidden_dim", c.hidden_dim);
        take("attention_dim", c.attention_dim);
        take("qkv_bias", c.qkv_bias);
        take("norm_eps", c.norm_eps);
        if (j.contains("precision")) c.precision = nx::precision_from_string(j.at("precision").get<std::string>());
        if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

}  // namespace fluoro::trainer
