#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "infoneat/criteria.hpp"
#include "infoneat/ensemble.hpp"
#include "infoneat/errors.hpp"
#include "infoneat/evaluation.hpp"

namespace infoneat {

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw IoError("write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

inline std::string rank_curve_csv(const RankCurve& curve) {
    std::ostringstream out;
    out << "n_traces,mean_rank,min_rank,median_rank\n";
    for (std::size_t i = 0; i < curve.trace_counts.size(); ++i) {
        out << curve.trace_counts[i] << ',' << detail::format_g17(curve.avg_rank[i]) << ','
            << detail::format_g17(curve.min_rank[i]) << ','
            << detail::format_g17(curve.median_rank[i]) << '\n';
    }
    return out.str();
}

inline RankCurve parse_rank_curve_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "n_traces,mean_rank,min_rank,median_rank") {
        throw FormatError("rank curve csv: unexpected header");
    }
    RankCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string n, mean, lo, med;
        if (!std::getline(fields, n, ',') || !std::getline(fields, mean, ',') ||
            !std::getline(fields, lo, ',') || !std::getline(fields, med)) {
            throw FormatError("rank curve csv: malformed row");
        }
        curve.trace_counts.push_back(std::stoi(n));
        curve.avg_rank.push_back(std::stod(mean));
        curve.min_rank.push_back(std::stod(lo));
        curve.median_rank.push_back(std::stod(med));
    }
    return curve;
}

// Threshold table; unreached thresholds print the "F" marker.
inline std::string tge_csv(const std::vector<TgeRow>& rows) {
    std::ostringstream out;
    out << "threshold,traces\n";
    for (const TgeRow& row : rows) {
        out << detail::format_g17(row.threshold) << ',';
        if (row.traces) {
            out << *row.traces;
        } else {
            out << 'F';
        }
        out << '\n';
    }
    return out.str();
}

// Minimal standalone SVG line chart of the mean rank (solid) and median rank
// (dashed) against the attack-trace count.
inline std::string svg_rank_chart(const RankCurve& curve, int width = 640, int height = 400) {
    if (curve.trace_counts.empty()) throw InputError("svg_rank_chart: empty curve");
    const double margin = 48.0;
    const double plot_w = width - 2 * margin;
    const double plot_h = height - 2 * margin;
    const double x_max = static_cast<double>(curve.trace_counts.back());
    double y_max = 1.0;
    for (double v : curve.avg_rank) y_max = std::max(y_max, v);
    for (double v : curve.median_rank) y_max = std::max(y_max, v);

    auto xpos = [&](double traces) { return margin + plot_w * (traces / x_max); };
    auto ypos = [&](double rank_value) { return margin + plot_h * (1.0 - rank_value / y_max); };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "  <line x1=\"" << fmt(margin) << "\" y1=\"" << fmt(margin + plot_h) << "\" x2=\""
        << fmt(margin + plot_w) << "\" y2=\"" << fmt(margin + plot_h)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "  <line x1=\"" << fmt(margin) << "\" y1=\"" << fmt(margin) << "\" x2=\"" << fmt(margin)
        << "\" y2=\"" << fmt(margin + plot_h) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    auto polyline = [&](const std::vector<double>& ys, const char* stroke, const char* dash) {
        svg << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"";
        if (dash[0] != '\0') svg << " stroke-dasharray=\"" << dash << "\"";
        svg << " points=\"";
        for (std::size_t i = 0; i < curve.trace_counts.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt(xpos(curve.trace_counts[i])) << ',' << fmt(ypos(ys[i]));
        }
        svg << "\"/>\n";
    };
    polyline(curve.avg_rank, "#1f5fbf", "");
    polyline(curve.median_rank, "#bf5f1f", "6,3");

    svg << "  <text x=\"" << fmt(margin + plot_w / 2) << "\" y=\"" << fmt(height - 10.0)
        << "\" font-size=\"13\" text-anchor=\"middle\">attack traces</text>\n";
    svg << "  <text x=\"14\" y=\"" << fmt(margin + plot_h / 2)
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << fmt(margin + plot_h / 2) << ")\">average rank</text>\n";
    svg << "  <text x=\"" << fmt(margin + 8) << "\" y=\"" << fmt(margin - 10)
        << "\" font-size=\"12\">mean (solid), median (dashed), repetitions="
        << curve.n_repetitions << "</text>\n";
    svg << "  <text x=\"" << fmt(margin - 6) << "\" y=\"" << fmt(margin + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(y_max) << "</text>\n";
    svg << "  <text x=\"" << fmt(margin - 6) << "\" y=\"" << fmt(margin + plot_h + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">0</text>\n";
    svg << "  <text x=\"" << fmt(margin + plot_w) << "\" y=\"" << fmt(margin + plot_h + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << curve.trace_counts.back()
        << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

struct SubModelSummary {
    int class_id = 0;
    std::uint32_t generations = 0;
    std::string stop_reason;
    std::size_t nodes = 0;
    std::size_t enabled_connections = 0;
    std::size_t parameters = 0;
    std::uint32_t species_count = 0;
    double final_loss = 0.0;
    double last_cmi = std::numeric_limits<double>::quiet_NaN();
};

inline SubModelSummary summarize(const SubModel& sub) {
    SubModelSummary s;
    s.class_id = sub.class_id;
    s.generations = sub.generations;
    s.stop_reason = to_string(sub.stop_reason);
    s.nodes = sub.genome.nodes.size();
    for (const ConnectionGene& c : sub.genome.connections) {
        if (c.enabled) ++s.enabled_connections;
    }
    s.parameters = trainable_parameters(sub.genome);
    s.species_count = sub.species_count;
    s.final_loss = sub.final_loss;
    if (!sub.trace.empty()) s.last_cmi = sub.trace.back().last_layer_cmi;
    return s;
}

// Consolidated markdown report: per-class training summaries with totals,
// plus attack results when present.
inline std::string run_report(const StackedModel& model, const RankCurve* curve,
                              const std::vector<TgeRow>* tge) {
    std::ostringstream out;
    out << "# Run report\n\n";
    out << "## Stacked model\n\n";
    out << "- classes: " << model.n_classes << "\n";
    out << "- trace features: " << model.n_features << "\n";
    out << "- meta-learner: multinomial logistic regression on " << model.feature_spec << "\n";
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx",
                  static_cast<unsigned long long>(model.config_fingerprint));
    out << "- config fingerprint: " << fp << "\n\n";

    out << "## Sub-models\n\n";
    out << "| class | generations | stop reason | nodes | enabled conns | trainable params | "
           "species | final loss | last CMI |\n";
    out << "|---|---|---|---|---|---|---|---|---|\n";
    std::size_t total_params = 0;
    std::size_t total_nodes = 0;
    std::size_t total_conns = 0;
    char buf[64];
    for (const SubModel& sub : model.sub_models) {
        const SubModelSummary s = summarize(sub);
        total_params += s.parameters;
        total_nodes += s.nodes;
        total_conns += s.enabled_connections;
        std::snprintf(buf, sizeof(buf), "%.6g", s.final_loss);
        out << "| " << s.class_id << " | " << s.generations << " | " << s.stop_reason << " | "
            << s.nodes << " | " << s.enabled_connections << " | " << s.parameters << " | "
            << s.species_count << " | " << buf << " | ";
        std::snprintf(buf, sizeof(buf), "%.6g", s.last_cmi);
        out << buf << " |\n";
    }
    out << "\n";
    out << "- total nodes: " << total_nodes << "\n";
    out << "- total enabled connections: " << total_conns << "\n";
    out << "- total trainable parameters (meta layer excluded): " << total_params << "\n";
    out << "- meta-learner parameters: "
        << model.meta.coef.size() + model.meta.intercept.size() << "\n\n";

    out << "## Attack\n\n";
    if (curve == nullptr || curve->trace_counts.empty()) {
        out << "No attack results recorded for this run.\n";
        return out.str();
    }
    out << "Average rank over " << curve->n_repetitions << " independent attacks:\n\n";
    out << "| traces | mean rank | min rank | median rank |\n|---|---|---|---|\n";
    for (std::size_t i = 0; i < curve->trace_counts.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.3f", curve->avg_rank[i]);
        out << "| " << curve->trace_counts[i] << " | " << buf;
        std::snprintf(buf, sizeof(buf), "%.3f", curve->min_rank[i]);
        out << " | " << buf;
        std::snprintf(buf, sizeof(buf), "%.3f", curve->median_rank[i]);
        out << " | " << buf << " |\n";
    }
    out << "\n";
    if (tge != nullptr && !tge->empty()) {
        out << "| metric | traces |\n|---|---|\n";
        for (const TgeRow& row : *tge) {
            out << "| T_GE" << static_cast<int>(row.threshold) << " | ";
            if (row.traces) {
                out << *row.traces;
            } else {
                out << "F";
            }
            out << " |\n";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace infoneat
