#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "histsumm/error.hpp"
#include "histsumm/hashing.hpp"
#include "histsumm/pipeline.hpp"
#include "histsumm/synthetic.hpp"

using namespace histsumm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Fixture {
    fs::path dir;
    json config;

    Fixture() {
        dir = fs::temp_directory_path() / "histsumm_pipeline_test";
        fs::remove_all(dir);
        const auto lang = toy::make_language();
        toy::CorpusSizes sizes{3000, 3000, 150, 12};
        const auto files = toy::write_corpus(lang, dir, sizes, 3);
        config = toy::run_config(files, 3);
        config["embeddings"] = {{"dim", 12}, {"epochs", 2}, {"bucket_count", 4000}};
        config["mapping"] = {{"max_iter", 3}};
        config["summarizer"] = {{"hidden_dim", 12}, {"max_story_len", 40}, {"max_summary_len", 5},
                                {"optimizer", "adagrad"}, {"batch_size", 4}, {"max_steps", 40}};
        config["decode"] = {{"beam_size", 2}, {"copy_normalize", true}};
    }
    ~Fixture() { fs::remove_all(dir); }

    PipelineConfig parse(const json& patch = json::object()) const {
        json doc = config;
        doc.merge_patch(patch);
        return parse_pipeline_config(doc, dir);
    }
    fs::path write_config(const std::string& name, const json& patch = json::object()) const {
        json doc = config;
        doc.merge_patch(patch);
        const auto p = dir / name;
        std::ofstream(p) << doc.dump(2);
        return p;
    }
};

std::set<Stage> all_stages() { return {std::begin(kAllStages), std::end(kAllStages)}; }

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
    return out;
}

std::map<std::string, fs::file_time_type> tree_times(const fs::path& root) {
    std::map<std::string, fs::file_time_type> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = e.last_write_time();
    return out;
}

json read_json(const fs::path& p) {
    std::ifstream f(p);
    return json::parse(f);
}

std::string config_error(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HISTSUMM_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config validation") {
    Fixture fx;
    SUBCASE("CONV with the alphabetic profile is rejected") {
        const auto msg = config_error([&] { fx.parse({{"enhancement", {"CONV"}}, {"paths", {{"glyph_lexicon", "x.tsv"}}}}); });
        CHECK(msg.find("enhancement") != std::string::npos);
        CHECK(msg.find("CONV") != std::string::npos);
    }
    SUBCASE("NORM with the ideographic profile is rejected") {
        const auto msg = config_error([&] {
            fx.parse({{"language_profile", "ideographic"}, {"enhancement", {"NORM"}}, {"paths", {{"stroke_table", "s.tsv"}}}});
        });
        CHECK(msg.find("NORM") != std::string::npos);
    }
    SUBCASE("unknown keys are named") {
        CHECK(config_error([&] { fx.parse({{"embeddings", {{"dimm", 5}}}}); }).find("embeddings.dimm") != std::string::npos);
        CHECK(config_error([&] { fx.parse({{"bogus", 1}}); }).find("bogus") != std::string::npos);
    }
    SUBCASE("type errors are named") {
        CHECK(config_error([&] { fx.parse({{"summarizer", {{"hidden_dim", "big"}}}}); }).find("summarizer.hidden_dim") !=
              std::string::npos);
    }
    SUBCASE("stroke features need a stroke table that exists") {
        const auto msg = config_error([&] { fx.parse({{"language_profile", "ideographic"}, {"decode", {{"copy_normalize", false}}}}); });
        CHECK(msg.find("stroke_table") != std::string::npos);
        const auto cfg = fx.parse({{"language_profile", "ideographic"},
                                   {"paths", {{"stroke_table", "missing.tsv"}}},
                                   {"decode", {{"copy_normalize", false}}}});
        CHECK(cfg.embeddings.feature == FeatureKind::stroke_ngram);
        CHECK(cfg.embeddings.n_max == 12);
        CHECK(config_error([&] { check_paths(cfg); }).find("paths.stroke_table") != std::string::npos);
    }
    SUBCASE("missing corpus is a path error") {
        const auto cfg = fx.parse({{"paths", {{"modern_corpus", "nope.txt"}}}});
        CHECK(config_error([&] { check_paths(cfg); }).find("paths.modern_corpus") != std::string::npos);
    }
    SUBCASE("emb_dim must match the embeddings") {
        CHECK(config_error([&] { fx.parse({{"summarizer", {{"emb_dim", 99}}}}); }).find("summarizer.emb_dim") !=
              std::string::npos);
    }
}

TEST_CASE("minimal config echoes every default") {
    const auto cfg = parse_pipeline_config(json::object(), "/tmp");
    const auto j = to_json(cfg);
    CHECK(j["language_profile"] == "alphabetic");
    CHECK(j["mapping_mode"] == "IdMap");
    CHECK(j["enhancement"] == json::array());
    CHECK(j["embeddings"]["dim"] == 100);
    CHECK(j["embeddings"]["window"] == 5);
    CHECK(j["embeddings"]["negatives"] == 5);
    CHECK(j["embeddings"]["epochs"] == 5);
    CHECK(j["embeddings"]["initial_lr"] == 0.05);
    CHECK(j["embeddings"]["subsample_t"] == 1e-4);
    CHECK(j["embeddings"]["min_count"] == 1);
    CHECK(j["embeddings"]["feature"] == "char-ngram");
    CHECK(j["embeddings"]["n_min"] == 3);
    CHECK(j["embeddings"]["n_max"] == 6);
    CHECK(j["embeddings"]["bucket_count"] == 2000000);
    CHECK(j["embeddings"]["max_vocab"] == 50000);
    CHECK(j["mapping"]["csls_k"] == 10);
    CHECK(j["mapping"]["top_frequent"] == 20000);
    CHECK(j["summarizer"]["hidden_dim"] == 128);
    CHECK(j["summarizer"]["coverage"] == false);
    CHECK(j["summarizer"]["clip_norm"] == 2.0);
    CHECK(j["summarizer"]["optimizer"] == "sgd");
    CHECK(j["decode"]["beam_size"] == 4);
    // the echo is itself a valid config
    CHECK(to_json(parse_pipeline_config(j, "/tmp")) == j);
}

TEST_CASE("seeds fan out by fixed offsets") {
    const auto s = stage_seeds(1000);
    CHECK(s.modern_embeddings == 1101);
    CHECK(s.historical_embeddings == 1102);
    CHECK(s.mapping == 1201);
    CHECK(s.summarizer == 1301);
}

TEST_CASE("full run, manifest completeness, stage isolation and failures") {
    Fixture fx;
    auto cfg = fx.parse();
    std::ostringstream log;
    REQUIRE(run_pipeline(cfg, all_stages(), log) == kExitOk);
    INFO(log.str());

    const auto manifest = read_json(cfg.output_dir / "manifest.json");
    for (Stage s : kAllStages) CHECK(manifest["stages"][std::string(to_string(s))]["status"] == "ok");
    CHECK(manifest["seeds"]["master"] == 3);
    CHECK(manifest["inputs"].contains("modern_corpus"));

    SUBCASE("every written file is listed with its hash") {
        std::map<std::string, std::string> listed;
        for (const auto& [stage, entry] : manifest["stages"].items())
            for (const auto& [rel, sha] : entry["outputs"].items()) listed[rel] = sha;
        listed["config.json"] = manifest["config_file"]["sha256"];
        for (const auto& [rel, sha] : tree_hashes(cfg.output_dir)) {
            if (rel == "manifest.json") continue;
            INFO(rel);
            REQUIRE(listed.count(rel));
            CHECK(listed[rel] == sha);
        }
        for (const char* f : {"decode/summaries.jsonl", "eval/report.tsv", "eval/report.json", "summarizer/model.ckpt",
                              "summarizer/swapped.ckpt", "mapping/historical.vec", "embeddings/modern.vec"})
            CHECK(listed.count(f));
    }

    SUBCASE("eval alone rewrites only the report") {
        const auto before = tree_times(cfg.output_dir);
        const auto hashes = tree_hashes(cfg.output_dir);
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        fs::remove_all(cfg.output_dir / "eval");
        REQUIRE(run_pipeline(cfg, {Stage::eval}, log) == kExitOk);
        const auto after = tree_times(cfg.output_dir);
        const auto after_hashes = tree_hashes(cfg.output_dir);
        for (const auto& [rel, t] : before) {
            if (rel.rfind("eval/", 0) == 0 || rel == "manifest.json" || rel == "config.json") continue;
            INFO(rel);
            CHECK(after.at(rel) == t);
            CHECK(after_hashes.at(rel) == hashes.at(rel));
        }
        CHECK(after_hashes.at("eval/report.tsv") == hashes.at("eval/report.tsv"));
    }

    SUBCASE("a failing stage is marked and downstream stages are untouched") {
        fs::remove(cfg.output_dir / "summarizer" / "swapped.ckpt");
        const auto report_time = fs::last_write_time(cfg.output_dir / "eval" / "report.tsv");
        const auto decode_hash = sha256_file(cfg.output_dir / "decode" / "summaries.jsonl");
        CHECK(run_pipeline(cfg, {Stage::summarise, Stage::eval}, log) == kExitStageFailure);
        const auto m = read_json(cfg.output_dir / "manifest.json");
        CHECK(m["stages"]["summarise"]["status"] == "failed");
        CHECK(m["stages"]["summarise"]["error"].get<std::string>().find("swapped.ckpt") != std::string::npos);
        CHECK(fs::last_write_time(cfg.output_dir / "eval" / "report.tsv") == report_time);
        CHECK(sha256_file(cfg.output_dir / "decode" / "summaries.jsonl") == decode_hash);
    }
}

TEST_CASE("identical runs into different directories are identical") {
    Fixture fx;
    const auto a = fx.parse({{"output_dir", "run_a"}});
    const auto b = fx.parse({{"output_dir", "run_b"}});
    std::ostringstream log;
    REQUIRE(run_pipeline(a, all_stages(), log) == kExitOk);
    REQUIRE(run_pipeline(b, all_stages(), log) == kExitOk);
    CHECK(tree_hashes(a.output_dir) == tree_hashes(b.output_dir));
    CHECK(sha256_file(a.output_dir / "manifest.json") == sha256_file(b.output_dir / "manifest.json"));

    const auto c = fx.parse({{"output_dir", "run_c"}, {"seed", 4}});
    REQUIRE(run_pipeline(c, all_stages(), log) == kExitOk);
    CHECK(read_json(c.output_dir / "manifest.json")["config_hash"] != read_json(a.output_dir / "manifest.json")["config_hash"]);
}

TEST_CASE("CLI exit codes") {
    Fixture fx;
    const auto good = fx.write_config("good.json");
    const auto bad = fx.write_config("bad.json", {{"enhancement", {"CONV"}}});
    CHECK(run_cli("validate -c " + good.string()) == kExitOk);
    CHECK(run_cli("validate -c " + bad.string()) == kExitValidation);
    CHECK(run_cli("validate -c " + good.string() + " --set embeddings.dimm=3") == kExitValidation);
    CHECK(run_cli("run -c " + good.string() + " --stages preprocess,train-emb") == kExitOk);
    // map needs train-emb outputs; summarise needs a swapped checkpoint that does not exist yet
    CHECK(run_cli("summarise -c " + good.string()) == kExitStageFailure);
    CHECK(run_cli("run -c " + good.string() + " --stages nonsense") == kExitValidation);
    CHECK(run_cli("stats -i " + (fx.dir / "train.jsonl").string()) == kExitOk);
}
