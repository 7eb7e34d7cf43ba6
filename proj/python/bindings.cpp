#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include <json.hpp>

#include "histsumm/corpus.hpp"
#include "histsumm/embeddings.hpp"
#include "histsumm/error.hpp"
#include "histsumm/eval.hpp"
#include "histsumm/hashing.hpp"
#include "histsumm/mapping.hpp"
#include "histsumm/pipeline.hpp"
#include "histsumm/synthetic.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace histsumm;
using nlohmann::json;

namespace {

json to_json(const py::object& obj) {
    if (obj.is_none()) return json::object();
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict score_dict(const RougeScore& s) {
    py::dict d;
    d["precision"] = s.precision;
    d["recall"] = s.recall;
    d["f1"] = s.f1;
    d["undefined"] = s.undefined;
    return d;
}

NormRuleSet rules_from(const std::vector<std::tuple<std::string, std::string, std::string>>& rows, bool case_sensitive) {
    NormRuleSet r;
    r.case_sensitive = case_sensitive;
    for (const auto& [pat, rep, scope] : rows) {
        if (scope != "token" && scope != "substr") throw ConfigError("rule scope must be 'token' or 'substr'");
        r.rules.push_back({pat, rep, scope == "token" ? RuleScope::whole_token : RuleScope::substring});
    }
    return r;
}

SeedDictionary dict_from(const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs) {
    SeedDictionary d;
    d.pairs = pairs;
    return d;
}

}  // namespace

PYBIND11_MODULE(_histsumm, m) {
    m.doc() = "Historical text summarisation: corpus tools, embeddings, alignment, ROUGE and the pipeline runner";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());

    // corpus
    m.def("clean_text", [](const std::string& text, const std::string& profile) {
        return clean_text(text, parse_clean_profile(profile));
    }, py::arg("text"), py::arg("profile") = "alphabetic-modern");
    m.def("segment_sentences", [](const std::string& text, const std::string& mode) {
        return segment_sentences(text, parse_segment_mode(mode));
    }, py::arg("text"), py::arg("mode") = "punctuation");
    m.def("normalize_spelling", [](const std::string& text,
                                   const std::vector<std::tuple<std::string, std::string, std::string>>& rules,
                                   bool case_sensitive) {
        return normalize_spelling(text, rules_from(rules, case_sensitive));
    }, py::arg("text"), py::arg("rules"), py::arg("case_sensitive") = true,
       "rules: (pattern, replacement, 'token'|'substr') tuples, applied in order");
    m.def("convert_glyphs", [](const std::string& text, const std::vector<std::pair<std::string, std::string>>& table) {
        GlyphLexicon lex;
        for (const auto& [k, v] : table) lex.add(k, v);
        return convert_glyphs(text, lex);
    }, py::arg("text"), py::arg("table"));
    m.def("compute_stats", [](const fs::path& path, const std::string& format, const std::string& unit) {
        const auto s = compute_stats(load_documents(path, parse_corpus_format(format)), parse_unit(unit));
        py::dict d;
        d["mean_story_len"] = s.mean_story_len;
        d["mean_summ_len"] = s.mean_summ_len;
        d["compression_rate"] = s.compression_rate;
        return d;
    }, py::arg("path"), py::arg("format") = "jsonl", py::arg("unit") = "word");

    // embeddings
    m.def("fnv1a", [](const std::string& s) { return fnv1a(s); });
    m.def("feature_ngrams", [](const std::string& token, int n_min, int n_max) {
        return feature_ngrams(token, FeatureScheme::char_ngrams(n_min, n_max));
    }, py::arg("token"), py::arg("n_min") = 3, py::arg("n_max") = 6);
    m.def("load_embeddings", [](const fs::path& path) {
        const auto t = load_embeddings(path);
        return py::make_tuple(t.tokens(), t.vectors());
    }, py::arg("path"), "(tokens, matrix) from the text embedding format");

    // mapping
    m.def("procrustes", [](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                           const std::optional<std::vector<std::pair<std::int64_t, std::int64_t>>>& pairs) {
        if (pairs) return procrustes(X, Y, dict_from(*pairs));
        SeedDictionary d;
        for (Eigen::Index i = 0; i < std::min(X.rows(), Y.rows()); ++i) d.pairs.emplace_back(i, i);
        return procrustes(X, Y, d);
    }, py::arg("X"), py::arg("Y"), py::arg("pairs") = py::none(), "orthogonal W maximising sum <x_i W, y_j> over pairs");
    m.def("csls_scores", [](const Eigen::MatrixXd& sim, int k) {
        return csls_scores(sim, {k, CslsDirection::symmetric});
    }, py::arg("sim"), py::arg("k") = 10);
    m.def("normalize_spaces", [](const Eigen::MatrixXd& X) { return normalize_spaces(X).matrix; });
    m.def("self_learn", [](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                           const std::vector<std::pair<std::int64_t, std::int64_t>>& seed, int k, int max_iter) {
        SelfLearnConfig cfg;
        cfg.csls.k = k;
        cfg.max_iter = max_iter;
        const auto r = self_learn(X, Y, dict_from(seed), cfg);
        py::dict d;
        d["transform"] = r.transform;
        d["dictionary"] = r.final_dictionary.pairs;
        d["objective_trace"] = r.objective_trace;
        d["iterations"] = r.iterations;
        return d;
    }, py::arg("X"), py::arg("Y"), py::arg("seed"), py::arg("k") = 10, py::arg("max_iter") = 50);

    // eval
    m.def("rouge_n", [](const std::string& c, const std::string& r, int n, const std::string& unit) {
        return score_dict(rouge_n(c, r, n, parse_unit(unit)));
    }, py::arg("candidate"), py::arg("reference"), py::arg("n") = 1, py::arg("unit") = "word");
    m.def("rouge_l", [](const std::string& c, const std::string& r, const std::string& unit) {
        return score_dict(rouge_l(c, r, parse_unit(unit)));
    }, py::arg("candidate"), py::arg("reference"), py::arg("unit") = "word");
    m.def("evaluate", [](const std::map<std::string, std::string>& cand, const std::map<std::string, std::string>& ref,
                         const std::string& unit) {
        const auto rep = evaluate_set(cand, ref, parse_unit(unit));
        py::dict d;
        d["rouge1"] = rep.mean_r1;
        d["rouge2"] = rep.mean_r2;
        d["rougeL"] = rep.mean_rl;
        return d;
    }, py::arg("candidates"), py::arg("references"), py::arg("unit") = "word", "unweighted mean F1 in [0, 1]");

    // pipeline
    m.def("load_config", [](const fs::path& path, const py::object& overrides) {
        const auto cfg = load_pipeline_config(path, to_json(overrides));
        check_paths(cfg);
        return from_json(histsumm::to_json(cfg));
    }, py::arg("path"), py::arg("overrides") = py::none(), "validated effective configuration as a dict");
    m.def("run", [](const fs::path& path, const std::optional<std::vector<std::string>>& stages,
                    const py::object& overrides) {
        const auto cfg = load_pipeline_config(path, to_json(overrides));
        check_paths(cfg);
        std::set<Stage> wanted;
        if (stages)
            for (const auto& s : *stages) wanted.insert(parse_stage(s));
        else
            wanted.insert(std::begin(kAllStages), std::end(kAllStages));
        std::ostringstream log;
        int code;
        {
            py::gil_scoped_release release;
            code = run_pipeline(cfg, wanted, log);
        }
        return py::make_tuple(code, log.str());
    }, py::arg("config"), py::arg("stages") = py::none(), py::arg("overrides") = py::none(),
       "runs the pipeline; returns (exit_code, log)");
    m.def("write_toy_corpus", [](const fs::path& dir, std::uint64_t seed, std::size_t modern, std::size_t historical,
                                 std::size_t pairs, std::size_t tests) {
        toy::LanguageConfig lc;
        lc.seed = seed;
        const auto files = toy::write_corpus(toy::make_language(lc), dir, {modern, historical, pairs, tests}, seed + 1);
        return from_json(toy::run_config(files, seed));
    }, py::arg("dir"), py::arg("seed") = 7, py::arg("modern_sentences") = 20000, py::arg("historical_sentences") = 20000,
       py::arg("train_pairs") = 2000, py::arg("test_docs") = 200,
       "writes the synthetic corpus into dir and returns a matching run configuration");
}
