#include "fluoro/trainer/folds.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "fluoro/errors.hpp"

namespace fluoro::trainer {

std::vector<Fold> make_folds(std::span<const pipeline::ManifestEntry> manifest, std::size_t k, std::uint64_t seed) {
    if (k < 3) throw ConfigError("need at least 3 folds (train, validation, test), got " + std::to_string(k));
    std::vector<std::string> patients;
    for (const auto& e : manifest) {
        if (std::find(patients.begin(), patients.end(), e.patient_id) == patients.end()) {
            patients.push_back(e.patient_id);
        }
    }
    if (patients.size() < k) {
        throw ConfigError(std::to_string(patients.size()) + " patients cannot fill " + std::to_string(k) + " folds");
    }
    std::sort(patients.begin(), patients.end());
    std::mt19937_64 rng(seed);
    // Fisher-Yates with an explicit draw so the split does not depend on the
    // standard library's shuffle.
    for (std::size_t i = patients.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(patients[i - 1], patients[j]);
    }
    std::map<std::string, std::size_t> group;
    for (std::size_t i = 0; i < patients.size(); ++i) group[patients[i]] = i % k;

    std::vector<Fold> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        folds[f].index = f;
        for (const auto& e : manifest) {
            const auto g = group.at(e.patient_id);
            if (g == f) {
                folds[f].test.push_back(e.sample_id);
            } else if (g == (f + 1) % k) {
                folds[f].val.push_back(e.sample_id);
            } else {
                folds[f].train.push_back(e.sample_id);
            }
        }
        check_no_leakage(folds[f], manifest);
    }
    return folds;
}

void check_no_leakage(const Fold& fold, std::span<const pipeline::ManifestEntry> manifest) {
    std::map<std::string, std::string> patient_of;
    for (const auto& e : manifest) patient_of[e.sample_id] = e.patient_id;
    std::map<std::string, int> split_of_patient;
    std::set<std::string> seen;
    auto visit = [&](const std::vector<std::string>& ids, int split) {
        for (const auto& id : ids) {
            auto it = patient_of.find(id);
            if (it == patient_of.end()) throw ContractError("fold " + std::to_string(fold.index) + ": unknown sample " + id);
            if (!seen.insert(id).second) {
                throw ContractError("fold " + std::to_string(fold.index) + ": sample " + id + " assigned twice");
            }
            auto [pos, inserted] = split_of_patient.emplace(it->second, split);
            if (!inserted && pos->second != split) {
                throw ContractError("fold " + std::to_string(fold.index) + ": patient " + it->second +
                                    " crosses split boundaries");
            }
        }
    };
    visit(fold.train, 0);
    visit(fold.val, 1);
    visit(fold.test, 2);
    if (seen.size() != patient_of.size()) {
        throw ContractError("fold " + std::to_string(fold.index) + ": " + std::to_string(patient_of.size() - seen.size()) +
                            " samples unassigned");
    }
}

}  // namespace fluoro::trainer
