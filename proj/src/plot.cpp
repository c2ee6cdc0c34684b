// SPDX-License-Identifier: Apache-2.0

#include "serp/plot.hpp"

#include "serp/scenario_io.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace serp {

namespace {

std::string f2(double v) { return format_fixed(v, 2); }

std::string header(double w, double h)
{
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(w) + "\" height=\"" + f2(h) +
           "\" viewBox=\"0 0 " + f2(w) + " " + f2(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, int size = 12)
{
    return "<text x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" font-family=\"sans-serif\" font-size=\"" +
           std::to_string(size) + "\">" + s + "</text>\n";
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

} // namespace

std::string trajectory_svg(const EpisodeReport& r)
{
    const double px = 10.0;   // pixels per cell
    const int rows = static_cast<int>(r.final_grid.size());
    const int cols = rows ? static_cast<int>(decode_rle_row(r.final_grid.front()).size()) : 0;
    const double res = r.grid_resolution;
    const double W = cols * px;
    const double H = rows * px + 24.0;
    std::ostringstream out;
    out << header(W, H);
    // y grows upwards in the world, downwards in SVG.
    for (int row = 0; row < rows; ++row) {
        const auto cells = decode_rle_row(r.final_grid[static_cast<std::size_t>(row)]);
        for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
            if (!cells[static_cast<std::size_t>(c)]) continue;
            out << "<rect x=\"" << f2(c * px) << "\" y=\"" << f2((rows - 1 - row) * px) << "\" width=\"" << f2(px)
                << "\" height=\"" << f2(px) << "\" fill=\"#555\"/>\n";
        }
    }
    auto sx = [&](double x) { return x / res * px; };
    auto sy = [&](double y) { return rows * px - y / res * px; };
    if (!r.trace.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
        for (const auto& s : r.trace) out << f2(sx(s.x)) << "," << f2(sy(s.y)) << " ";
        out << "\"/>\n";
    }
    out << "<circle cx=\"" << f2(sx(r.start.x)) << "\" cy=\"" << f2(sy(r.start.y)) << "\" r=\"4\" fill=\"#2ca02c\"/>\n";
    out << "<circle cx=\"" << f2(sx(r.goal_position.x)) << "\" cy=\"" << f2(sy(r.goal_position.y))
        << "\" r=\"5\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    out << text(4, rows * px + 17, r.scenario_id + " " + r.outcome + " path " + f2(r.path_length) + " m");
    out << "</svg>\n";
    return out.str();
}

std::string loss_svg(const EpisodeReport& r)
{
    const double W = 480, H = 300, L = 60, B = 40, T = 20, R = 20;
    std::ostringstream out;
    out << header(W, H);
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << text(W / 2 - 20, H - 8, "epoch") << text(4, T + 4, "loss");
    if (!r.evolution.empty()) {
        double lo = r.evolution.front().record.loss, hi = lo;
        int emax = 1;
        for (const auto& row : r.evolution) {
            lo = std::min(lo, row.record.loss);
            hi = std::max(hi, row.record.loss);
            emax = std::max(emax, row.record.epoch);
        }
        if (hi - lo < 1e-12) hi = lo + 1.0;
        auto X = [&](int e) { return L + (W - L - R) * e / emax; };
        auto Y = [&](double v) { return H - B - (H - B - T) * (v - lo) / (hi - lo); };
        int phase = -1;
        for (const auto& row : r.evolution) {
            if (row.phase != phase) {
                if (phase >= 0) out << "\"/>\n";
                phase = row.phase;
                out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << kPalette[phase % 6] << "\" points=\"";
            }
            out << f2(X(row.record.epoch)) << "," << f2(Y(row.record.loss)) << " ";
        }
        out << "\"/>\n";
        for (const auto& row : r.evolution)
            if (row.record.mode == "IL")
                out << "<circle cx=\"" << f2(X(row.record.epoch)) << "\" cy=\"" << f2(Y(row.record.loss))
                    << "\" r=\"4\" fill=\"#ff7f0e\"/>\n";
        out << text(4, Y(hi) + 4, format_fixed(hi, 0), 10) << text(4, Y(lo), format_fixed(lo, 0), 10);
    }
    out << "</svg>\n";
    return out.str();
}

std::string params_svg(const EpisodeReport& r)
{
    const double cw = 24, ch = 24, L = 50, T = 10;
    const int n = static_cast<int>(r.evolution.size());
    const double W = L + std::max(n, 1) * cw + 10, H = T + 3 * ch + 30;
    std::ostringstream out;
    out << header(W, H);
    const char* names[] = {"q_s", "p_v", "eta"};
    for (int p = 0; p < 3; ++p) {
        auto get = [&](const EvolutionTraceRow& row) {
            return p == 0 ? row.record.params.q_s : p == 1 ? row.record.params.p_v : row.record.params.eta;
        };
        double lo = 0, hi = 0;
        if (n) {
            lo = hi = get(r.evolution.front());
            for (const auto& row : r.evolution) {
                lo = std::min(lo, get(row));
                hi = std::max(hi, get(row));
            }
        }
        out << text(4, T + p * ch + 16, names[p]);
        for (int i = 0; i < n; ++i) {
            const double v = get(r.evolution[static_cast<std::size_t>(i)]);
            const double t = hi - lo > 1e-12 ? (v - lo) / (hi - lo) : 0.5;
            const int red = static_cast<int>(255 * t), blue = 255 - red;
            out << "<rect x=\"" << f2(L + i * cw) << "\" y=\"" << f2(T + p * ch) << "\" width=\"" << f2(cw)
                << "\" height=\"" << f2(ch) << "\" fill=\"rgb(" << red << ",80," << blue << ")\"><title>"
                << names[p] << "=" << format_fixed(v, 4) << "</title></rect>\n";
        }
    }
    out << text(L, T + 3 * ch + 20, "epoch rows per local phase, each parameter scaled to its own range", 10);
    out << "</svg>\n";
    return out.str();
}

std::vector<std::filesystem::path> write_plots(const EpisodeReport& report, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const std::array<std::pair<const char*, std::string>, 3> files{
        {{"trajectory.svg", trajectory_svg(report)}, {"loss.svg", loss_svg(report)}, {"params.svg", params_svg(report)}}};
    std::vector<std::filesystem::path> out;
    for (const auto& [name, body] : files) {
        const auto p = dir / name;
        std::ofstream f(p, std::ios::binary);
        if (!f) throw Error("cannot write " + p.string());
        f << body;
        out.push_back(p);
    }
    return out;
}

} // namespace serp
