#include "fluoro/pipeline/manifest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fluoro/errors.hpp"

namespace fluoro::pipeline {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string format_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", t);
    return buf;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) throw FormatError("manifest header must be '" + std::string(kManifestHeader) + "'");

    std::vector<ManifestEntry> entries;
    std::set<std::string> ids;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto where = "manifest line " + std::to_string(lineno);
        const auto f = split_csv(line);
        if (f.size() != 5) throw FormatError(where + ": expected 5 fields");
        ManifestEntry e;
        e.sample_id = f[0];
        e.patient_id = f[1];
        try {
            std::size_t used = 0;
            e.time_days = std::stod(f[2], &used);
            if (used != f[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw FormatError(where + ": time_days '" + f[2] + "' is not a number");
        }
        if (!std::isfinite(e.time_days) || e.time_days < 0) throw FormatError(where + ": negative or non-finite time");
        if (f[3] != "0" && f[3] != "1") throw FormatError(where + ": censored must be 0 or 1");
        e.censored = f[3] == "1";
        e.bag_path = f[4];
        if (e.sample_id.empty() || e.patient_id.empty()) throw FormatError(where + ": empty id");
        if (!ids.insert(e.sample_id).second) throw FormatError(where + ": duplicate sample_id '" + e.sample_id + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << kManifestHeader << '\n';
    for (const auto& e : entries) {
        for (const auto* field : {&e.sample_id, &e.patient_id, &e.bag_path}) {
            if (field->find_first_of(",\n") != std::string::npos) {
                throw FormatError("manifest field '" + *field + "' contains a comma or newline");
            }
        }
        out << e.sample_id << ',' << e.patient_id << ',' << format_time(e.time_days) << ','
            << (e.censored ? 1 : 0) << ',' << e.bag_path << '\n';
    }
}

}  // namespace fluoro::pipeline
