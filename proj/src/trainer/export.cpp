#include "fluoro/trainer/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fluoro/errors.hpp"
#include "fluoro/numerics/precision.hpp"
#include "fluoro/pipeline/image.hpp"

namespace fluoro::trainer {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Tab10-like palette, cycled; index 255 is background.
std::vector<std::uint8_t> marker_palette() {
    static const std::uint8_t base[10][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                                             {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
                                             {188, 189, 34}, {23, 190, 207}};
    std::vector<std::uint8_t> pal;
    for (int i = 0; i < 256; ++i) {
        const auto* c = i == 255 ? nullptr : base[i % 10];
        for (int j = 0; j < 3; ++j) pal.push_back(c ? c[j] : 0);
    }
    return pal;
}

void write_slide(const std::filesystem::path& out, const SlideExport& s, const std::vector<GridCoord>& coords,
                 const std::vector<std::string>& channel_names) {
    {
        auto csv = open_out(out / "attention" / (s.sample_id + ".csv"));
        csv << "row,col,attention\n";
        for (std::size_t k = 0; k < coords.size(); ++k) {
            csv << coords[k].row << ',' << coords[k].col << ',' << num(s.patch_attention[k]) << '\n';
        }
    }
    pipeline::Channel img{s.rows, s.cols, 8, std::vector<std::uint16_t>(s.rows * s.cols, 0)};
    const double peak = *std::max_element(s.patch_attention.begin(), s.patch_attention.end());
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const double v = peak > 0.0 ? s.patch_attention[k] / peak : 0.0;
        img.pixels[coords[k].row * s.cols + coords[k].col] = static_cast<std::uint16_t>(std::lround(255.0 * v));
    }
    pipeline::write_png_gray(out / "attention" / (s.sample_id + ".png"), img);

    if (s.argmax_marker.empty()) return;
    {
        auto csv = open_out(out / "argmax" / (s.sample_id + ".csv"));
        csv << "row,col,marker_index,marker\n";
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const auto m = static_cast<std::size_t>(s.argmax_marker[k]);
            csv << coords[k].row << ',' << coords[k].col << ',' << m << ',' << channel_names.at(m) << '\n';
        }
    }
    std::vector<std::uint8_t> indices(s.rows * s.cols, 255);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        indices[coords[k].row * s.cols + coords[k].col] = static_cast<std::uint8_t>(s.argmax_marker[k] % 255);
    }
    pipeline::write_png_indexed(out / "argmax" / (s.sample_id + ".png"), s.rows, s.cols, indices, marker_palette());
}

}  // namespace

InterpretabilityReport export_interpretability(const Model& model, const std::vector<const Sample*>& samples,
                                               const std::filesystem::path& out, nx::Precision precision,
                                               double top_fraction) {
    InterpretabilityReport report;
    if (samples.empty()) return report;
    nx::PrecisionScope scope(precision);
    nx::NoGradScope no_grad;
    report.channel_names = samples.front()->bag.channel_names;

    std::vector<nx::Tensor> marker_attn, patch_attn;
    for (const auto* sample : samples) {
        const auto& coords = sample->bag.coords;
        auto fwd = model.forward(sample->embeddings);
        SlideExport s;
        s.sample_id = sample->entry.sample_id;
        s.patch_attention.assign(fwd.patch_attention.data().begin(), fwd.patch_attention.data().end());
        const auto grid = metrics::HeatmapGrid::from_patches(coords, s.patch_attention);
        s.rows = grid.rows;
        s.cols = grid.cols;
        try {
            s.morans_i = metrics::morans_i(grid);
        } catch (const UndefinedMetricError&) {
        }
        if (fwd.marker_attention.numel() > 0) {
            const auto heat = metrics::argmax_marker_heatmap(fwd.marker_attention, coords);
            for (const auto& c : coords) s.argmax_marker.push_back(heat.values[c.row * heat.cols + c.col]);
            marker_attn.push_back(fwd.marker_attention);
            patch_attn.push_back(fwd.patch_attention);
        }
        if (!out.empty()) write_slide(out, s, coords, report.channel_names);
        report.slides.push_back(std::move(s));
    }
    if (!marker_attn.empty()) {
        report.marker_attention = metrics::avg_marker_attention(marker_attn, patch_attn, top_fraction);
    }
    if (out.empty()) return report;

    auto mi = open_out(out / "morans_i.csv");
    mi << "sample_id,rows,cols,morans_i\n";
    for (const auto& s : report.slides) {
        mi << s.sample_id << ',' << s.rows << ',' << s.cols << ',' << (s.morans_i ? num(*s.morans_i) : "nan") << '\n';
    }
    if (report.marker_attention) {
        const auto& summary = *report.marker_attention;
        auto csv = open_out(out / "marker_attention.csv");
        csv << "query";
        for (const auto& n : report.channel_names) csv << ',' << n;
        csv << '\n';
        for (std::size_t i = 0; i < summary.num_markers; ++i) {
            csv << report.channel_names[i];
            for (std::size_t j = 0; j < summary.num_markers; ++j) csv << ',' << num(summary.zscored[i * summary.num_markers + j]);
            csv << '\n';
        }
    }
    return report;
}

}  // namespace fluoro::trainer
