#include "fluoro/trainer/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <random>

#include <json.hpp>

#include "fluoro/errors.hpp"
#include "fluoro/metrics/metrics.hpp"
#include "fluoro/numerics/ops.hpp"
#include "fluoro/numerics/precision.hpp"
#include "fluoro/survival/survival.hpp"
#include "fluoro/trainer/adamw.hpp"

namespace fluoro::trainer {

namespace {

struct Outcomes {
    std::vector<double> times;
    std::unique_ptr<bool[]> censored;
    std::size_t size = 0;

    std::span<const bool> flags() const { return {censored.get(), size}; }
};

Outcomes outcomes(const std::vector<const Sample*>& samples) {
    Outcomes o{{}, std::make_unique<bool[]>(samples.size()), samples.size()};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        o.times.push_back(samples[i]->entry.time_days);
        o.censored[i] = samples[i]->entry.censored;
    }
    return o;
}

std::optional<double> try_c_index(const std::vector<double>& scores, const std::vector<const Sample*>& samples) {
    const auto o = outcomes(samples);
    try {
        return metrics::c_index(scores, o.times, o.flags());
    } catch (const UndefinedMetricError&) {
        return std::nullopt;
    }
}

}  // namespace

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fold)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<double> score_samples(const Model& model, const std::vector<const Sample*>& samples,
                                  nx::Precision precision) {
    nx::PrecisionScope scope(precision);
    nx::NoGradScope no_grad;
    std::vector<double> risks;
    risks.reserve(samples.size());
    for (const auto* s : samples) risks.push_back(model.forward(s->embeddings).risk.item());
    return risks;
}

FoldResult train_fold(const Fold& fold, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (fold.train.empty() || fold.val.empty()) {
        throw ContractError("fold " + std::to_string(fold.index) + " needs non-empty train and validation splits");
    }
    nx::PrecisionScope scope(config.precision);
    const auto train = data.select(fold.train);
    const auto val = data.select(fold.val);

    const auto train_outcomes = outcomes(train);
    const auto bins = survival::make_bins(train_outcomes.times, train_outcomes.flags(), config.num_bins);
    std::vector<survival::SurvivalTarget> targets;
    for (const auto* s : train) targets.push_back(survival::make_target(s->entry.time_days, s->entry.censored, bins));

    const auto seed = fold_seed(config.seed, fold.index);
    Model model = Model::init(config, data.embed_dim(), seed);
    AdamW optimizer(model.named_parameters(),
                    AdamWConfig{config.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay},
                    config.precision);
    std::mt19937_64 shuffle_rng(seed ^ 0x9e3779b97f4a7c15ull);

    FoldResult result;
    result.best = Checkpoint::capture(model, config, bins, 0, std::numeric_limits<double>::quiet_NaN());
    std::optional<double> best;
    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng() % i)]);
        }
        double loss_sum = 0.0;
        for (auto i : order) {
            optimizer.zero_grad();
            auto out = model.forward(train[i]->embeddings);
            auto loss = survival::nll_loss(out.hazards, targets[i]);
            loss_sum += loss.item();
            nx::backward(loss);
            optimizer.step();
        }
        EpochLog entry{epoch, loss_sum / static_cast<double>(order.size()), std::nullopt, false};
        entry.val_c_index = try_c_index(score_samples(model, val, config.precision), val);
        if (entry.val_c_index && (!best || *entry.val_c_index > *best)) {
            best = entry.val_c_index;
            result.best = Checkpoint::capture(model, config, bins, epoch, *best);
            entry.checkpointed = true;
        }
        result.log.push_back(entry);
    }
    if (!best) {
        result.warnings.push_back("fold " + std::to_string(fold.index) +
                                  ": validation C-index undefined (no comparable pairs); keeping the last epoch");
        result.best = Checkpoint::capture(model, config, bins, config.epochs, std::numeric_limits<double>::quiet_NaN());
        if (!result.log.empty()) result.log.back().checkpointed = true;
    }
    return result;
}

Evaluation evaluate(const Checkpoint& checkpoint, const std::vector<const Sample*>& samples) {
    const auto model = checkpoint.restore();
    Evaluation ev;
    ev.risks = score_samples(model, samples, checkpoint.config.precision);
    const auto o = outcomes(samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ev.sample_ids.push_back(samples[i]->entry.sample_id);
        ev.censored.push_back(o.censored[i]);
    }
    ev.times = o.times;
    ev.c_index = metrics::c_index(ev.risks, ev.times, o.flags());
    return ev;
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& e : log) {
        nlohmann::json j{{"epoch", e.epoch}, {"loss", e.train_loss}, {"checkpointed", e.checkpointed}};
        j["val_c_index"] = e.val_c_index ? nlohmann::json(*e.val_c_index) : nlohmann::json(nullptr);
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fluoro::trainer
