#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "histsumm/corpus.hpp"

namespace histsumm {

enum class RougeVariant { r1, r2, rl };

struct RougeScore {
    RougeVariant variant = RougeVariant::r1;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Unit unit = Unit::word;
    /// Set when precision or recall had an empty denominator and was scored 0.
    bool undefined = false;
};

/// f1 = 2PR/(P+R), 0 when P+R = 0.
double f_measure(double precision, double recall);

/// Clipped n-gram overlap.
RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n, Unit unit);

/// Longest-common-subsequence based score.
RougeScore rouge_l(std::string_view candidate, std::string_view reference, Unit unit);

/// LCS length over token sequences.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct DocumentRouge {
    std::string id;
    RougeScore r1, r2, rl;
};

struct RougeReport {
    Unit unit = Unit::word;
    std::vector<DocumentRouge> documents;
    /// Unweighted means of per-document F1, in [0,1].
    double mean_r1 = 0.0;
    double mean_r2 = 0.0;
    double mean_rl = 0.0;
};

/// Scores every id; throws ValidationError listing ids present on only one side.
RougeReport evaluate_set(const std::map<std::string, std::string>& candidates,
                         const std::map<std::string, std::string>& references, Unit unit);

/// Percentage with two decimals, e.g. 0.5 -> "50.00".
std::string format_percent(double fraction);

/// id -> text from JSONL records {"id": ..., <field>: ...}. Falls back to "text" or "summary".
std::map<std::string, std::string> load_id_text(const std::filesystem::path& path, std::string_view field = "summary");

void write_report_tsv(const RougeReport& report, const std::filesystem::path& path);
void write_report_json(const RougeReport& report, const std::filesystem::path& path);

}  // namespace histsumm
