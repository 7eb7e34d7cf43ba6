// histsumm: command-line driver for the historical summarisation pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "histsumm/corpus.hpp"
#include "histsumm/error.hpp"
#include "histsumm/pipeline.hpp"

using namespace histsumm;
using nlohmann::json;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::string output_dir, language_profile, mapping_mode;
    std::vector<std::string> enhancement;
    std::optional<int> threads, beam_size, max_steps;
    std::vector<std::string> set;

    json patch() const {
        json p = json::object();
        if (seed) p["seed"] = *seed;
        if (!output_dir.empty()) p["output_dir"] = output_dir;
        if (!language_profile.empty()) p["language_profile"] = language_profile;
        if (!mapping_mode.empty()) p["mapping_mode"] = mapping_mode;
        if (!enhancement.empty()) p["enhancement"] = enhancement;
        if (threads) p["embeddings"]["threads"] = *threads;
        if (beam_size) p["decode"]["beam_size"] = *beam_size;
        if (max_steps) p["summarizer"]["max_steps"] = *max_steps;
        for (const auto& kv : set) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + kv + "'");
            const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
            json value = json::parse(raw, nullptr, false);
            if (value.is_discarded()) value = raw;
            json* node = &p;
            std::size_t start = 0;
            for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1)
                node = &(*node)[key.substr(start, dot - start)];
            (*node)[key.substr(start)] = value;
        }
        return p;
    }
};

void add_overrides(CLI::App* cmd, std::string& config, Overrides& o) {
    cmd->add_option("-c,--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--output-dir", o.output_dir, "output directory");
    cmd->add_option("--language-profile", o.language_profile, "alphabetic|ideographic");
    cmd->add_option("--mapping-mode", o.mapping_mode, "IdMap|UspMap");
    cmd->add_option("--enhancement", o.enhancement, "NORM and/or CONV");
    cmd->add_option("--threads", o.threads, "embedding training threads (1 = deterministic)");
    cmd->add_option("--beam-size", o.beam_size, "decoder beam width");
    cmd->add_option("--max-steps", o.max_steps, "summariser training steps");
    cmd->add_option("--set", o.set, "override any config field, e.g. --set embeddings.dim=50");
}

PipelineConfig load(const std::string& config, const Overrides& o) {
    auto cfg = load_pipeline_config(config, o.patch());
    check_paths(cfg);
    return cfg;
}

int cmd_stats(const std::string& input, const std::string& format, const std::string& unit_name,
              const std::string& clean, bool as_json) {
    const auto unit = parse_unit(unit_name);
    auto docs = load_documents(input, parse_corpus_format(format));
    if (!clean.empty()) {
        const auto profile = parse_clean_profile(clean);
        std::vector<Document> cleaned;
        for (auto d : docs) {
            d.story = clean_text(d.story, profile);
            if (d.summary) d.summary = clean_text(*d.summary, profile);
            cleaned.push_back(std::move(d));
        }
        docs = DocumentSet(std::move(cleaned));
    }
    const auto s = compute_stats(docs, unit);
    if (as_json) {
        std::cout << json{{"documents", docs.size()},
                          {"unit", std::string(to_string(unit))},
                          {"mean_story_len", s.mean_story_len},
                          {"mean_summ_len", s.mean_summ_len},
                          {"compression_rate", s.compression_rate}}
                         .dump(2)
                  << '\n';
    } else {
        std::printf("documents\t%zu\nunit\t%s\nL_story\t%.1f\nL_summ\t%.1f\nCR\t%.1f%%\n", docs.size(),
                    std::string(to_string(unit)).c_str(), s.mean_story_len, s.mean_summ_len,
                    s.compression_rate * 100.0);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Historical text summarisation through embedding alignment and encoder swap"};
    app.require_subcommand(1);

    std::string config;
    Overrides ov;

    auto* validate = app.add_subcommand("validate", "check a configuration and print the effective settings");
    add_overrides(validate, config, ov);

    auto* run = app.add_subcommand("run", "run the pipeline (all stages unless --stages is given)");
    add_overrides(run, config, ov);
    std::vector<std::string> stage_names;
    run->add_option("--stages", stage_names, "subset of: preprocess train-emb map train-summ swap summarise eval")
        ->delimiter(',');

    std::vector<std::pair<CLI::App*, Stage>> single;
    for (Stage s : kAllStages) {
        static const char* help[] = {"clean, enhance and segment the corpora", "train both embedding spaces",
                                     "align historical embeddings to the modern space",
                                     "train the summariser with a frozen modern encoder table",
                                     "swap in the aligned historical encoder table",
                                     "decode the historical test documents", "score decodes with ROUGE"};
        auto* cmd = app.add_subcommand(std::string(to_string(s)), help[static_cast<int>(s)]);
        add_overrides(cmd, config, ov);
        single.emplace_back(cmd, s);
    }

    auto* stats = app.add_subcommand("stats", "mean story/summary length and compression rate");
    std::string input, format = "jsonl", unit = "word", clean;
    bool as_json = false;
    stats->add_option("-i,--input", input, "document file")->required()->check(CLI::ExistingFile);
    stats->add_option("--format", format, "jsonl|tsv|plain")->capture_default_str();
    stats->add_option("--unit", unit, "word|character")->capture_default_str();
    stats->add_option("--clean", clean, "apply a cleaning profile first");
    stats->add_flag("--json", as_json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*stats) return cmd_stats(input, format, unit, clean, as_json);

        const auto cfg = load(config, ov);
        if (*validate) {
            std::cout << to_json(cfg).dump(2) << '\n';
            return kExitOk;
        }
        std::set<Stage> stages;
        if (*run) {
            for (const auto& n : stage_names) stages.insert(parse_stage(n));
            if (stages.empty()) stages.insert(std::begin(kAllStages), std::end(kAllStages));
        }
        for (auto [cmd, s] : single)
            if (*cmd) stages.insert(s);
        return run_pipeline(cfg, stages, std::cerr);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStageFailure;
    }
}
