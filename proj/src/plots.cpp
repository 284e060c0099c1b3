#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "skipq/harness.hpp"
#include "skipq/serialize.hpp"

namespace skipq {

namespace {

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string tick_label(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

std::string gap_svg(const std::vector<Aggregate>& aggs) {
    const double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 60;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    std::vector<double> xs;
    for (const auto& a : aggs) xs.push_back(std::log10(static_cast<double>(std::max<std::size_t>(a.n, 1))));
    const double xmin = *std::min_element(xs.begin(), xs.end());
    const double xmax = *std::max_element(xs.begin(), xs.end());
    double ymax = 0.0;
    for (const auto& a : aggs) ymax = std::max(ymax, a.q3);
    ymax = ymax > 0.0 ? 1.1 * ymax : 1.0;

    auto px = [&](double x) {
        return xmax > xmin ? left + (x - xmin) / (xmax - xmin) * plot_w : left + plot_w / 2;
    };
    auto py = [&](double y) { return top + plot_h - std::clamp(y, 0.0, ymax) / ymax * plot_h; };

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">suboptimality gap vs n (median, IQR)</text>\n";
    // axes
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + plot_h) + "\" x2=\"" + num(left + plot_w) + "\" y2=\"" +
         num(top + plot_h) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + plot_h) +
         "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = ymax * i / 4.0;
        s += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(py(y)) + "\" x2=\"" + num(left) + "\" y2=\"" +
             num(py(y)) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(y) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(y) + "</text>\n";
    }
    for (std::size_t i = 0; i < aggs.size(); ++i) {
        s += "<text x=\"" + num(px(xs[i])) + "\" y=\"" + num(top + plot_h + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(aggs[i].n) +
             "</text>\n";
    }
    s += "<text x=\"" + num(left + plot_w / 2) + "\" y=\"" + num(height - 15) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">n (log scale)</text>\n";
    s += "<text x=\"18\" y=\"" + num(top + plot_h / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 " + num(top + plot_h / 2) + ")\">gap</text>\n";

    std::string points;
    for (std::size_t i = 0; i < aggs.size(); ++i) {
        const double x = px(xs[i]);
        s += "<line x1=\"" + num(x) + "\" y1=\"" + num(py(aggs[i].q1)) + "\" x2=\"" + num(x) + "\" y2=\"" +
             num(py(aggs[i].q3)) + "\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
        for (double q : {aggs[i].q1, aggs[i].q3}) {
            s += "<line x1=\"" + num(x - 6) + "\" y1=\"" + num(py(q)) + "\" x2=\"" + num(x + 6) + "\" y2=\"" +
                 num(py(q)) + "\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
        }
        points += (i ? " " : "") + num(x) + "," + num(py(aggs[i].median));
    }
    if (aggs.size() > 1) {
        s += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"darkred\" stroke-width=\"1.5\"/>\n";
    }
    for (std::size_t i = 0; i < aggs.size(); ++i) {
        s += "<circle cx=\"" + num(px(xs[i])) + "\" cy=\"" + num(py(aggs[i].median)) +
             "\" r=\"4\" fill=\"darkred\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace

bool emit_plots(const std::vector<ReplicateResult>& rows, const std::filesystem::path& dir, std::string* warning) {
    if (rows.empty()) {
        if (warning != nullptr) *warning = "empty result table, no plot written";
        return false;
    }
    const std::vector<Aggregate> aggs = aggregate(rows);
    std::string csv = "n,median,q1,q3\n";
    for (const auto& a : aggs) {
        csv += std::to_string(a.n) + "," + format_real(a.median) + "," + format_real(a.q1) + "," + format_real(a.q3) +
               "\n";
    }
    std::filesystem::create_directories(dir);
    write_text(dir / "summary.csv", csv);
    write_text(dir / "gap_vs_n.svg", gap_svg(aggs));
    return true;
}

}  // namespace skipq
