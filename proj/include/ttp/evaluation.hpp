#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ttp/error.hpp"
#include "ttp/extraction.hpp"
#include "ttp/tactic.hpp"

namespace ttp {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const Prf&) const = default;
};

inline double harmonic_f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

struct SampleResult {
    std::string procedure_id;
    TacticSet gold;
    TacticSet predicted;
    Prf scores;
};

/// Set-based precision/recall/F1 for one sample. An empty prediction scores
/// precision 0.
inline Prf sample_prf(TacticSet gold, TacticSet predicted) {
    if (gold.empty()) throw ContractError("sample has an empty gold tactic set");
    const double hit = static_cast<double>((gold & predicted).size());
    Prf s;
    s.precision = predicted.empty() ? 0.0 : hit / static_cast<double>(predicted.size());
    s.recall = hit / static_cast<double>(gold.size());
    s.f1 = harmonic_f1(s.precision, s.recall);
    return s;
}

inline SampleResult score_sample(std::string procedure_id, TacticSet gold, TacticSet predicted) {
    return {std::move(procedure_id), gold, predicted, sample_prf(gold, predicted)};
}

/// Column-wise means of the per-sample triples.
inline Prf samples_average(const std::vector<SampleResult>& results) {
    if (results.empty()) throw ContractError("samples average of an empty result list");
    Prf sum;
    for (const auto& r : results) {
        sum.precision += r.scores.precision;
        sum.recall += r.scores.recall;
        sum.f1 += r.scores.f1;
    }
    const double n = static_cast<double>(results.size());
    return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

struct TacticScore {
    Prf scores;
    std::size_t support = 0;
    std::size_t true_positives = 0;
    std::size_t predicted_positives = 0;

    bool operator==(const TacticScore&) const = default;
};

using PerTacticTable = std::array<TacticScore, kTacticCount>;

/// Binary P/R/F1 per tactic across samples. Zero predicted positives gives
/// precision 0; zero support gives recall 0.
inline PerTacticTable per_tactic_prf(const std::vector<SampleResult>& results) {
    PerTacticTable table{};
    for (const auto& r : results) {
        for (Tactic t : kAllTactics) {
            auto& row = table[index_of(t)];
            const bool g = r.gold.contains(t), p = r.predicted.contains(t);
            if (g) ++row.support;
            if (p) ++row.predicted_positives;
            if (g && p) ++row.true_positives;
        }
    }
    for (auto& row : table) {
        const double tp = static_cast<double>(row.true_positives);
        row.scores.precision = row.predicted_positives ? tp / static_cast<double>(row.predicted_positives) : 0.0;
        row.scores.recall = row.support ? tp / static_cast<double>(row.support) : 0.0;
        row.scores.f1 = harmonic_f1(row.scores.precision, row.scores.recall);
    }
    return table;
}

enum class Subgroup { All, MatchedUrl, UnmatchedUrl };

inline std::string_view to_string(Subgroup g) {
    switch (g) {
        case Subgroup::All: return "all";
        case Subgroup::MatchedUrl: return "matched-url";
        case Subgroup::UnmatchedUrl: return "unmatched-url";
    }
    return "?";
}

inline Subgroup subgroup_from_string(std::string_view s) {
    for (auto g : {Subgroup::All, Subgroup::MatchedUrl, Subgroup::UnmatchedUrl})
        if (to_string(g) == s) return g;
    throw ParseError("unknown subgroup '" + std::string(s) + "'");
}

struct EvalReport {
    Subgroup subgroup = Subgroup::All;
    std::size_t n_samples = 0;
    Prf samples_avg;
    PerTacticTable per_tactic{};
    std::size_t total_support = 0;
    // Diagnostics only; the samples average is the headline metric.
    Prf micro;
    Prf macro;
    Prf weighted;

    bool operator==(const EvalReport&) const = default;
};

inline EvalReport build_report(const std::vector<SampleResult>& results, Subgroup subgroup = Subgroup::All) {
    EvalReport rep;
    rep.subgroup = subgroup;
    rep.n_samples = results.size();
    rep.samples_avg = samples_average(results);
    rep.per_tactic = per_tactic_prf(results);
    std::size_t tp = 0, pp = 0;
    for (const auto& row : rep.per_tactic) {
        rep.total_support += row.support;
        tp += row.true_positives;
        pp += row.predicted_positives;
        rep.macro.precision += row.scores.precision / kTacticCount;
        rep.macro.recall += row.scores.recall / kTacticCount;
        rep.macro.f1 += row.scores.f1 / kTacticCount;
    }
    rep.micro.precision = pp ? static_cast<double>(tp) / static_cast<double>(pp) : 0.0;
    rep.micro.recall = rep.total_support ? static_cast<double>(tp) / static_cast<double>(rep.total_support) : 0.0;
    rep.micro.f1 = harmonic_f1(rep.micro.precision, rep.micro.recall);
    if (rep.total_support) {
        for (const auto& row : rep.per_tactic) {
            const double w = static_cast<double>(row.support) / static_cast<double>(rep.total_support);
            rep.weighted.precision += w * row.scores.precision;
            rep.weighted.recall += w * row.scores.recall;
            rep.weighted.f1 += w * row.scores.f1;
        }
    }
    return rep;
}

/// Partition by the url_matched flag; order within each side is preserved.
inline std::pair<std::vector<Prediction>, std::vector<Prediction>> subgroup_split(
    const std::vector<Prediction>& predictions) {
    std::pair<std::vector<Prediction>, std::vector<Prediction>> out;
    for (const auto& p : predictions) (p.url_matched ? out.first : out.second).push_back(p);
    return out;
}

enum class ReportFormat { Csv, Markdown, MarkdownF1Only };

namespace detail {

inline std::string full_precision(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline constexpr std::string_view kConventionNote =
    "empty predictions score precision = recall = F1 = 0";

inline void csv_row(std::ostringstream& out, std::string_view label, const Prf& s, std::size_t support) {
    out << label << ',' << full_precision(s.precision) << ',' << full_precision(s.recall) << ','
        << full_precision(s.f1) << ',' << support << ",,\n";
}

}  // namespace detail

/// Deterministic renderings. CSV carries full precision and reparses
/// losslessly; Markdown mirrors the published per-tactic tables.
inline std::string render_report(const EvalReport& r, ReportFormat format) {
    using namespace detail;
    std::ostringstream out;
    if (format == ReportFormat::Csv) {
        out << "# subgroup=" << to_string(r.subgroup) << '\n';
        out << "# samples=" << r.n_samples << '\n';
        out << "# convention: " << kConventionNote << '\n';
        out << "row,precision,recall,f1,support,true_positives,predicted_positives\n";
        for (Tactic t : kAllTactics) {
            const auto& row = r.per_tactic[index_of(t)];
            out << canonical_name(t) << ',' << full_precision(row.scores.precision) << ','
                << full_precision(row.scores.recall) << ',' << full_precision(row.scores.f1) << ',' << row.support
                << ',' << row.true_positives << ',' << row.predicted_positives << '\n';
        }
        csv_row(out, "samples_average", r.samples_avg, r.total_support);
        csv_row(out, "micro", r.micro, r.total_support);
        csv_row(out, "macro", r.macro, r.total_support);
        csv_row(out, "weighted", r.weighted, r.total_support);
        return out.str();
    }
    const bool full = format == ReportFormat::Markdown;
    out << "<!-- " << kConventionNote << " -->\n";
    out << "Subgroup: " << to_string(r.subgroup) << " (" << r.n_samples << " procedures)\n\n";
    if (full) {
        out << "| Tactics | Precision | Recall | F1 | Support |\n|---|---:|---:|---:|---:|\n";
        for (Tactic t : kAllTactics) {
            const auto& row = r.per_tactic[index_of(t)];
            out << "| " << table_label(t) << " | " << two_decimals(row.scores.precision) << " | "
                << two_decimals(row.scores.recall) << " | " << two_decimals(row.scores.f1) << " | " << row.support
                << " |\n";
        }
        out << "| **Samples Average** | **" << two_decimals(r.samples_avg.precision) << "** | **"
            << two_decimals(r.samples_avg.recall) << "** | **" << two_decimals(r.samples_avg.f1) << "** | **"
            << r.total_support << "** |\n";
    } else {
        out << "| Tactics | F1 Score | Support |\n|---|---:|---:|\n";
        for (Tactic t : kAllTactics) {
            const auto& row = r.per_tactic[index_of(t)];
            out << "| " << table_label(t) << " | " << two_decimals(row.scores.f1) << " | " << row.support << " |\n";
        }
        out << "| **Samples Avg. F1** | **" << two_decimals(r.samples_avg.f1) << "** | **" << r.total_support
            << "** |\n";
    }
    out << "\nSupplementary averages\n\n| Average | Precision | Recall | F1 |\n|---|---:|---:|---:|\n";
    for (auto [label, s] : {std::pair{"Micro", r.micro}, std::pair{"Macro", r.macro}, std::pair{"Weighted", r.weighted}})
        out << "| " << label << " | " << two_decimals(s.precision) << " | " << two_decimals(s.recall) << " | "
            << two_decimals(s.f1) << " |\n";
    return out.str();
}

struct ReportColumn {
    std::string label;
    EvalReport report;
};

/// Several reports in one Markdown table. F1-only puts one F1 column per
/// report and a shared support column, which requires equal supports (same
/// procedure set, different modes). The full layout gives every report its
/// own precision, recall, F1 and support columns (disjoint subgroups).
inline std::string render_side_by_side(const std::vector<ReportColumn>& cols, ReportFormat format) {
    using namespace detail;
    if (cols.empty()) throw ContractError("side-by-side table needs at least one report");
    if (format == ReportFormat::Csv) throw ContractError("side-by-side tables are Markdown only");
    std::ostringstream out;
    out << "<!-- " << kConventionNote << " -->\n";
    if (format == ReportFormat::MarkdownF1Only) {
        for (const auto& c : cols) {
            for (std::size_t i = 0; i < kTacticCount; ++i)
                if (c.report.per_tactic[i].support != cols.front().report.per_tactic[i].support)
                    throw ContractError("reports '" + cols.front().label + "' and '" + c.label +
                                        "' cover different procedure sets");
        }
        out << "| Tactics |";
        for (const auto& c : cols) out << ' ' << c.label << " F1 |";
        out << " Support |\n|---|";
        for (std::size_t i = 0; i < cols.size(); ++i) out << "---:|";
        out << "---:|\n";
        for (Tactic t : kAllTactics) {
            out << "| " << table_label(t) << " |";
            for (const auto& c : cols) out << ' ' << two_decimals(c.report.per_tactic[index_of(t)].scores.f1) << " |";
            out << ' ' << cols.front().report.per_tactic[index_of(t)].support << " |\n";
        }
        out << "| **Samples Avg. F1** |";
        for (const auto& c : cols) out << " **" << two_decimals(c.report.samples_avg.f1) << "** |";
        out << " **" << cols.front().report.total_support << "** |\n";
        return out.str();
    }
    out << "| Tactics |";
    for (const auto& c : cols)
        out << ' ' << c.label << " Precision | " << c.label << " Recall | " << c.label << " F1 | " << c.label
            << " Support |";
    out << "\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out << "---:|---:|---:|---:|";
    out << '\n';
    for (Tactic t : kAllTactics) {
        out << "| " << table_label(t) << " |";
        for (const auto& c : cols) {
            const auto& row = c.report.per_tactic[index_of(t)];
            out << ' ' << two_decimals(row.scores.precision) << " | " << two_decimals(row.scores.recall) << " | "
                << two_decimals(row.scores.f1) << " | " << row.support << " |";
        }
        out << '\n';
    }
    out << "| **Samples Average** |";
    for (const auto& c : cols) {
        const auto& s = c.report.samples_avg;
        out << " **" << two_decimals(s.precision) << "** | **" << two_decimals(s.recall) << "** | **"
            << two_decimals(s.f1) << "** | **" << c.report.total_support << "** |";
    }
    out << "\n\n";
    for (const auto& c : cols) out << c.label << ": " << c.report.n_samples << " procedures\n";
    return out.str();
}

/// Inverse of render_report(..., Csv).
inline EvalReport parse_report_csv(std::string_view csv) {
    EvalReport r;
    std::istringstream in{std::string(csv)};
    std::string line;
    auto parse_double = [](const std::string& s) {
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "' in report");
        return v;
    };
    auto parse_size = [](const std::string& s) {
        std::size_t v = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad count '" + s + "' in report");
        return v;
    };
    std::array<bool, kTacticCount> seen{};
    bool have_avg = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.starts_with("# subgroup=")) {
            r.subgroup = subgroup_from_string(line.substr(11));
            continue;
        }
        if (line.starts_with("# samples=")) {
            r.n_samples = parse_size(line.substr(10));
            continue;
        }
        if (line[0] == '#' || line.starts_with("row,")) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) throw ParseError("short report row: " + line);
        Prf s{parse_double(cells[1]), parse_double(cells[2]), parse_double(cells[3])};
        std::size_t support = parse_size(cells[4]);
        if (auto t = tactic_from_name(cells[0])) {
            if (cells.size() != 7) throw ParseError("tactic row needs 7 cells: " + line);
            auto& row = r.per_tactic[index_of(*t)];
            row = {s, support, parse_size(cells[5]), parse_size(cells[6])};
            seen[index_of(*t)] = true;
        } else if (cells[0] == "samples_average") {
            r.samples_avg = s;
            r.total_support = support;
            have_avg = true;
        } else if (cells[0] == "micro") {
            r.micro = s;
        } else if (cells[0] == "macro") {
            r.macro = s;
        } else if (cells[0] == "weighted") {
            r.weighted = s;
        } else {
            throw ParseError("unknown report row '" + cells[0] + "'");
        }
    }
    for (bool b : seen)
        if (!b) throw ParseError("report is missing a tactic row");
    if (!have_avg) throw ParseError("report is missing the samples_average row");
    return r;
}

}  // namespace ttp
