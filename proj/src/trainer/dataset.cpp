#include "fluoro/trainer/dataset.hpp"

#include "fluoro/errors.hpp"
#include "fluoro/pipeline/bag_io.hpp"

namespace fluoro::trainer {

std::size_t Dataset::num_markers() const { return samples.empty() ? 0 : samples.front().bag.num_markers; }

std::size_t Dataset::embed_dim() const { return samples.empty() ? 0 : samples.front().bag.embed_dim; }

std::vector<pipeline::ManifestEntry> Dataset::manifest() const {
    std::vector<pipeline::ManifestEntry> out;
    for (const auto& s : samples) out.push_back(s.entry);
    return out;
}

const Sample& Dataset::at(const std::string& sample_id) const {
    auto it = by_id.find(sample_id);
    if (it == by_id.end()) throw ContractError("no sample '" + sample_id + "' in dataset");
    return samples[it->second];
}

std::vector<const Sample*> Dataset::select(std::span<const std::string> ids) const {
    std::vector<const Sample*> out;
    for (const auto& id : ids) out.push_back(&at(id));
    return out;
}

Dataset Dataset::from_bags(std::vector<pipeline::ManifestEntry> entries, std::vector<fusion::EmbeddedBag> bags) {
    if (entries.size() != bags.size()) throw ContractError("manifest and bag counts differ");
    Dataset ds;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& bag = bags[i];
        bag.validate();
        if (bag.num_patches == 0) throw FormatError("bag '" + entries[i].sample_id + "' has no patches");
        if (!ds.samples.empty()) {
            const auto& first = ds.samples.front().bag;
            if (bag.num_markers != first.num_markers || bag.embed_dim != first.embed_dim) {
                throw FormatError("bag '" + entries[i].sample_id + "' is " + std::to_string(bag.num_markers) + "x" +
                                  std::to_string(bag.embed_dim) + ", cohort is " + std::to_string(first.num_markers) +
                                  "x" + std::to_string(first.embed_dim));
            }
        }
        bag.sample_id = entries[i].sample_id;
        nx::Tensor t = bag.tensor();
        ds.by_id.emplace(entries[i].sample_id, ds.samples.size());
        ds.samples.push_back({std::move(entries[i]), std::move(bag), std::move(t)});
    }
    return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    auto entries = pipeline::read_manifest(dir / pipeline::kManifestName);
    if (entries.empty()) throw FormatError((dir / pipeline::kManifestName).string() + ": no samples");
    std::vector<fusion::EmbeddedBag> bags;
    for (const auto& e : entries) bags.push_back(pipeline::read_bag(dir / e.bag_path));
    return Dataset::from_bags(std::move(entries), std::move(bags));
}

}  // namespace fluoro::trainer
