#include "histsumm/eval.hpp"

#include "histsumm/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace histsumm {

double f_measure(double precision, double recall) {
    return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& units, int n, std::size_t& total) {
    NgramCounts counts;
    total = 0;
    const auto nn = static_cast<std::size_t>(n);
    if (units.size() < nn) return counts;
    for (std::size_t i = 0; i + nn <= units.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < nn; ++k) {
            if (k) key.push_back('\x1f');
            key += units[i + k];
        }
        ++counts[key];
        ++total;
    }
    return counts;
}

}  // namespace

RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n, Unit unit) {
    if (n < 1) throw ConfigError("rouge_n: n must be >= 1");
    RougeScore s;
    s.variant = n == 1 ? RougeVariant::r1 : RougeVariant::r2;
    s.unit = unit;
    std::size_t cand_total = 0, ref_total = 0;
    const auto cand = ngrams(tokenize(candidate, unit), n, cand_total);
    const auto ref = ngrams(tokenize(reference, unit), n, ref_total);
    std::size_t overlap = 0;
    for (const auto& [gram, c] : cand)
        if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
    if (cand_total == 0 || ref_total == 0) s.undefined = true;
    s.precision = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
    s.recall = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
    s.f1 = f_measure(s.precision, s.recall);
    return s;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference, Unit unit) {
    RougeScore s;
    s.variant = RougeVariant::rl;
    s.unit = unit;
    const auto cand = tokenize(candidate, unit);
    const auto ref = tokenize(reference, unit);
    if (cand.empty() || ref.empty()) {
        s.undefined = true;
        return s;
    }
    const double lcs = static_cast<double>(lcs_length(cand, ref));
    s.precision = lcs / static_cast<double>(cand.size());
    s.recall = lcs / static_cast<double>(ref.size());
    s.f1 = f_measure(s.precision, s.recall);
    return s;
}

RougeReport evaluate_set(const std::map<std::string, std::string>& candidates,
                         const std::map<std::string, std::string>& references, Unit unit) {
    std::vector<std::string> no_candidate, no_reference;
    for (const auto& [id, _] : references)
        if (!candidates.count(id)) no_candidate.push_back(id);
    for (const auto& [id, _] : candidates)
        if (!references.count(id)) no_reference.push_back(id);
    if (!no_candidate.empty() || !no_reference.empty()) {
        std::string msg = "evaluate_set: id sets differ.";
        auto list = [&](const char* label, const std::vector<std::string>& ids) {
            if (ids.empty()) return;
            msg += std::string(" ") + label + ":";
            for (const auto& id : ids) msg += " " + id;
            msg += ".";
        };
        list("missing candidates", no_candidate);
        list("missing references", no_reference);
        throw ValidationError(msg);
    }

    RougeReport report;
    report.unit = unit;
    for (const auto& [id, ref] : references) {
        const auto& cand = candidates.at(id);
        DocumentRouge d{id, rouge_n(cand, ref, 1, unit), rouge_n(cand, ref, 2, unit), rouge_l(cand, ref, unit)};
        report.mean_r1 += d.r1.f1;
        report.mean_r2 += d.r2.f1;
        report.mean_rl += d.rl.f1;
        report.documents.push_back(std::move(d));
    }
    if (!report.documents.empty()) {
        const auto n = static_cast<double>(report.documents.size());
        report.mean_r1 /= n;
        report.mean_r2 /= n;
        report.mean_rl /= n;
    }
    return report;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

std::map<std::string, std::string> load_id_text(const std::filesystem::path& path, std::string_view field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string())
            throw ParseError("record needs a string 'id'", lineno);
        const nlohmann::json* text = nullptr;
        for (std::string_view key : {field, std::string_view("text"), std::string_view("summary")}) {
            auto it = obj.find(std::string(key));
            if (it != obj.end() && it->is_string()) {
                text = &*it;
                break;
            }
        }
        if (!text) throw ParseError("record has no text field '" + std::string(field) + "'", lineno);
        auto id = obj["id"].get<std::string>();
        if (!out.emplace(id, text->get<std::string>()).second) throw ValidationError("duplicate id '" + id + "'");
    }
    return out;
}

void write_report_tsv(const RougeReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "id\trouge1_f\trouge2_f\trougeL_f\n";
    for (const auto& d : report.documents)
        out << d.id << '\t' << format_percent(d.r1.f1) << '\t' << format_percent(d.r2.f1) << '\t'
            << format_percent(d.rl.f1) << '\n';
    out << "MEAN\t" << format_percent(report.mean_r1) << '\t' << format_percent(report.mean_r2) << '\t'
        << format_percent(report.mean_rl) << '\n';
}

void write_report_json(const RougeReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    nlohmann::json j = {
        {"unit", std::string(to_string(report.unit))},
        {"documents", report.documents.size()},
        {"rouge1", format_percent(report.mean_r1)},
        {"rouge2", format_percent(report.mean_r2)},
        {"rougeL", format_percent(report.mean_rl)},
    };
    out << j.dump(2) << '\n';
}

}  // namespace histsumm
