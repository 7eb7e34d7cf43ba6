#include "histsumm/pipeline.hpp"

#include "histsumm/error.hpp"
#include "histsumm/eval.hpp"
#include "histsumm/hashing.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <type_traits>

namespace histsumm {

namespace fs = std::filesystem;
using nlohmann::json;

LanguageProfile parse_language_profile(std::string_view name) {
    if (name == "alphabetic") return LanguageProfile::alphabetic;
    if (name == "ideographic") return LanguageProfile::ideographic;
    throw ConfigError("unknown value '" + std::string(name) + "' (expected alphabetic|ideographic)");
}

std::string_view to_string(LanguageProfile profile) {
    return profile == LanguageProfile::alphabetic ? "alphabetic" : "ideographic";
}

Enhancement parse_enhancement(std::string_view name) {
    if (name == "NORM") return Enhancement::norm;
    if (name == "CONV") return Enhancement::conv;
    throw ConfigError("enhancement: unknown value '" + std::string(name) + "' (expected NORM|CONV)");
}

std::string_view to_string(Enhancement e) { return e == Enhancement::norm ? "NORM" : "CONV"; }

Stage parse_stage(std::string_view name) {
    for (Stage s : kAllStages)
        if (to_string(s) == name) return s;
    throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::preprocess: return "preprocess";
        case Stage::train_emb: return "train-emb";
        case Stage::map: return "map";
        case Stage::train_summ: return "train-summ";
        case Stage::swap: return "swap";
        case Stage::summarise: return "summarise";
        case Stage::eval: return "eval";
    }
    return "?";
}

StageSeeds stage_seeds(std::uint64_t master) { return {master + 101, master + 102, master + 201, master + 301}; }

std::vector<std::string> split_tokens(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == '\n')) ++i;
        std::size_t j = i;
        while (j < line.size() && !(line[j] == ' ' || line[j] == '\t' || line[j] == '\r' || line[j] == '\n')) ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

// config ---------------------------------------------------------------------

namespace {

std::string_view format_name(CorpusFormat f) {
    switch (f) {
        case CorpusFormat::jsonl: return "jsonl";
        case CorpusFormat::tsv: return "tsv";
        case CorpusFormat::plain: return "plain";
    }
    return "?";
}

std::string_view segment_name(SegmentMode m) { return m == SegmentMode::punctuation ? "punctuation" : "pre-segmented"; }
std::string_view direction_name(CslsDirection d) { return d == CslsDirection::forward ? "forward" : "symmetric"; }

/// Reads the keys of one config object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError(label() + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        const json* v = find(key);
        if (!v) return;
        try {
            if constexpr (std::is_arithmetic_v<T> && !std::is_same_v<T, bool>) {
                if (!v->is_number()) throw ConfigError("");
                if constexpr (std::is_integral_v<T>) {
                    if (!v->is_number_integer()) throw ConfigError("");
                    if constexpr (std::is_unsigned_v<T>)
                        if (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)
                            throw ConfigError("");
                }
            }
            out = v->get<T>();
        } catch (const std::exception&) {
            throw ConfigError(field(key) + ": expected " + expected<T>() + ", got " + v->dump());
        }
    }

    template <typename T>
    void get(const char* key, std::optional<T>& out) {
        if (!find(key)) return;
        T value{};
        get(key, value);
        out = value;
    }

    template <typename Parse>
    void get_enum(const char* key, Parse&& parse) {
        std::optional<std::string> s;
        get(key, s);
        if (!s) return;
        try {
            parse(*s);
        } catch (const ConfigError& e) {
            throw ConfigError(field(key) + ": " + e.what());
        }
    }

    std::optional<Section> child(const char* key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return Section(*v, field(key));
    }

    const json* find(const char* key) {
        auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) {
            if (it != obj_.end()) seen_.insert(key);
            return nullptr;
        }
        seen_.insert(key);
        return &*it;
    }

    std::string field(std::string_view key) const { return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key); }

    void finish() const {
        for (const auto& [k, _] : obj_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config field '" + field(k) + "'");
    }

private:
    std::string label() const { return prefix_.empty() ? "config" : prefix_; }

    template <typename T>
    static std::string expected() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) return "a non-negative integer";
        else if constexpr (std::is_integral_v<T>) return "an integer";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else return "a string";
    }

    const json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace

PipelineConfig parse_pipeline_config(const json& doc, const fs::path& base_dir) {
    PipelineConfig cfg;
    Section top(doc, "");
    top.get_enum("language_profile", [&](const std::string& s) { cfg.language_profile = parse_language_profile(s); });
    if (const json* e = top.find("enhancement")) {
        const auto items = e->is_array() ? *e : json::array({*e});
        for (const auto& item : items) {
            require(item.is_string(), "enhancement: expected a list of NORM|CONV");
            cfg.enhancement.insert(parse_enhancement(item.get<std::string>()));
        }
    }
    top.get_enum("mapping_mode", [&](const std::string& s) { cfg.mapping_mode = parse_mapping_mode(s); });
    top.get("seed", cfg.seed);
    std::string output_dir = cfg.output_dir.string();
    top.get("output_dir", output_dir);
    require(!output_dir.empty(), "output_dir: must not be empty");
    cfg.output_dir = resolve(base_dir, output_dir);

    if (auto s = top.child("paths")) {
        auto path = [&](const char* key, fs::path& out) {
            std::string v;
            s->get(key, v);
            out = resolve(base_dir, v);
        };
        path("modern_corpus", cfg.paths.modern_corpus);
        path("historical_corpus", cfg.paths.historical_corpus);
        path("train_pairs", cfg.paths.train_pairs);
        path("test_docs", cfg.paths.test_docs);
        path("norm_rules", cfg.paths.norm_rules);
        path("glyph_lexicon", cfg.paths.glyph_lexicon);
        path("stroke_table", cfg.paths.stroke_table);
        s->finish();
    }

    if (auto s = top.child("preprocess")) {
        auto& p = cfg.preprocess;
        s->get_enum("corpus_format", [&](const std::string& v) { p.corpus_format = parse_corpus_format(v); });
        s->get_enum("pairs_format", [&](const std::string& v) { p.pairs_format = parse_corpus_format(v); });
        s->get_enum("segment", [&](const std::string& v) { p.segment = parse_segment_mode(v); });
        s->get("min_sentence_units", p.min_sentence_units);
        s->finish();
    }

    auto& e = cfg.embeddings;
    const bool ideo = cfg.language_profile == LanguageProfile::ideographic;
    e.feature = ideo ? FeatureKind::stroke_ngram : FeatureKind::char_ngram;
    std::optional<int> n_min, n_max;
    if (auto s = top.child("embeddings")) {
        s->get("dim", e.sgns.dim);
        s->get("window", e.sgns.window);
        s->get("negatives", e.sgns.negatives);
        s->get("epochs", e.sgns.epochs);
        s->get("initial_lr", e.sgns.initial_lr);
        s->get("min_count", e.sgns.min_count);
        s->get("subsample_t", e.sgns.subsample_t);
        s->get("threads", e.sgns.threads);
        s->get_enum("feature", [&](const std::string& v) { e.feature = parse_feature_kind(v); });
        s->get("n_min", n_min);
        s->get("n_max", n_max);
        s->get("bucket_count", e.bucket_count);
        s->get("max_vocab", e.max_vocab);
        s->finish();
    }
    e.n_min = n_min.value_or(3);
    e.n_max = n_max.value_or(e.feature == FeatureKind::stroke_ngram ? 12 : 6);

    auto& m = cfg.mapping;
    if (auto s = top.child("mapping")) {
        s->get("csls_k", m.self_learning.csls.k);
        s->get_enum("csls_direction",
                    [&](const std::string& v) { m.self_learning.csls.direction = parse_csls_direction(v); });
        s->get("max_iter", m.self_learning.max_iter);
        s->get("top_frequent", m.self_learning.top_frequent);
        s->get("tolerance", m.self_learning.tolerance);
        s->get("init_max_vocab", m.init.max_vocab);
        s->get("init_column_keep", m.init.column_keep);
        s->get("restarts", m.restarts);
        s->finish();
    }
    m.mode = cfg.mapping_mode;

    auto& sm = cfg.summarizer;
    if (auto s = top.child("summarizer")) {
        std::optional<int> emb_dim;
        s->get("emb_dim", emb_dim);
        if (emb_dim && *emb_dim != e.sgns.dim)
            throw ConfigError("summarizer.emb_dim: must equal embeddings.dim (" + std::to_string(e.sgns.dim) + ")");
        s->get("hidden_dim", sm.hidden_dim);
        s->get("max_story_len", sm.max_story_len);
        s->get("max_summary_len", sm.max_summary_len);
        s->get("coverage", sm.coverage_enabled);
        s->get("coverage_weight", sm.coverage_weight);
        s->get("lr", sm.lr);
        s->get("batch_size", sm.batch_size);
        s->get("max_steps", sm.max_steps);
        s->get_enum("optimizer", [&](const std::string& v) { sm.optimizer = parse_optimizer(v); });
        s->get("clip_norm", sm.clip_norm);
        s->get("adagrad_init", sm.adagrad_init);
        s->get("decoder_vocab_size", cfg.decoder_vocab_size);
        s->finish();
    }
    if (auto s = top.child("decode")) {
        s->get("beam_size", cfg.decode_beam_size);
        s->get("copy_normalize", cfg.decode_copy_normalize);
        s->finish();
    }
    top.finish();

    // derived values
    const auto seeds = stage_seeds(cfg.seed);
    e.sgns.seed = seeds.modern_embeddings;
    m.init.seed = seeds.mapping;
    sm.seed = seeds.summarizer;
    sm.emb_dim = e.sgns.dim;
    sm.beam_size = cfg.decode_beam_size;

    // invariants
    if (cfg.enhancement.count(Enhancement::conv))
        require(ideo, "enhancement: CONV requires language_profile=ideographic");
    if (cfg.enhancement.count(Enhancement::norm))
        require(!ideo, "enhancement: NORM requires language_profile=alphabetic");
    if (cfg.enhancement.count(Enhancement::norm))
        require(!cfg.paths.norm_rules.empty(), "paths.norm_rules: required when enhancement includes NORM");
    if (cfg.enhancement.count(Enhancement::conv))
        require(!cfg.paths.glyph_lexicon.empty(), "paths.glyph_lexicon: required when enhancement includes CONV");
    if (cfg.decode_copy_normalize)
        require(!cfg.paths.norm_rules.empty(), "paths.norm_rules: required by decode.copy_normalize");
    if (e.feature == FeatureKind::stroke_ngram)
        require(!cfg.paths.stroke_table.empty(), "paths.stroke_table: required by embeddings.feature=stroke-ngram");
    require(cfg.preprocess.min_sentence_units >= 1, "preprocess.min_sentence_units: must be >= 1");
    require(e.feature == FeatureKind::none || (e.n_min >= 1 && e.n_max >= e.n_min),
            "embeddings.n_min/n_max: need 1 <= n_min <= n_max");
    require(e.bucket_count >= 1, "embeddings.bucket_count: must be >= 1");
    require(e.max_vocab >= 1, "embeddings.max_vocab: must be >= 1");
    require(m.self_learning.csls.k >= 1, "mapping.csls_k: must be >= 1");
    require(m.self_learning.max_iter >= 0, "mapping.max_iter: must be >= 0");
    require(m.self_learning.tolerance >= 0, "mapping.tolerance: must be >= 0");
    require(m.init.max_vocab >= 1, "mapping.init_max_vocab: must be >= 1");
    require(m.init.column_keep > 0 && m.init.column_keep <= 1, "mapping.init_column_keep: must be in (0, 1]");
    require(m.restarts >= 1, "mapping.restarts: must be >= 1");
    require(cfg.decode_beam_size >= 1, "decode.beam_size: must be >= 1");
    require(cfg.decoder_vocab_size >= 1, "summarizer.decoder_vocab_size: must be >= 1");
    try {
        e.sgns.validate();
    } catch (const ConfigError& err) {
        throw ConfigError(std::string("embeddings: ") + err.what());
    }
    sm.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path, const json& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!overrides.is_null() && !overrides.empty()) doc.merge_patch(overrides);
    return parse_pipeline_config(doc, fs::absolute(path).parent_path());
}

void check_paths(const PipelineConfig& cfg) {
    const std::pair<const char*, const fs::path*> required[] = {
        {"paths.modern_corpus", &cfg.paths.modern_corpus},
        {"paths.historical_corpus", &cfg.paths.historical_corpus},
        {"paths.train_pairs", &cfg.paths.train_pairs},
        {"paths.test_docs", &cfg.paths.test_docs},
    };
    for (const auto& [name, p] : required) {
        require(!p->empty(), std::string(name) + ": required");
        require(fs::is_regular_file(*p), std::string(name) + ": file not found: " + p->string());
    }
    const std::pair<const char*, const fs::path*> optional[] = {
        {"paths.norm_rules", &cfg.paths.norm_rules},
        {"paths.glyph_lexicon", &cfg.paths.glyph_lexicon},
        {"paths.stroke_table", &cfg.paths.stroke_table},
    };
    for (const auto& [name, p] : optional)
        if (!p->empty()) require(fs::is_regular_file(*p), std::string(name) + ": file not found: " + p->string());
}

json to_json(const PipelineConfig& cfg) {
    json enh = json::array();
    for (auto e : cfg.enhancement) enh.push_back(std::string(to_string(e)));
    const auto& e = cfg.embeddings;
    const auto& m = cfg.mapping;
    const auto& s = cfg.summarizer;
    return {
        {"language_profile", std::string(to_string(cfg.language_profile))},
        {"enhancement", enh},
        {"mapping_mode", std::string(to_string(cfg.mapping_mode))},
        {"seed", cfg.seed},
        {"output_dir", cfg.output_dir.string()},
        {"paths",
         {{"modern_corpus", cfg.paths.modern_corpus.string()},
          {"historical_corpus", cfg.paths.historical_corpus.string()},
          {"train_pairs", cfg.paths.train_pairs.string()},
          {"test_docs", cfg.paths.test_docs.string()},
          {"norm_rules", cfg.paths.norm_rules.string()},
          {"glyph_lexicon", cfg.paths.glyph_lexicon.string()},
          {"stroke_table", cfg.paths.stroke_table.string()}}},
        {"preprocess",
         {{"corpus_format", std::string(format_name(cfg.preprocess.corpus_format))},
          {"pairs_format", std::string(format_name(cfg.preprocess.pairs_format))},
          {"segment", std::string(segment_name(cfg.preprocess.segment))},
          {"min_sentence_units", cfg.preprocess.min_sentence_units}}},
        {"embeddings",
         {{"dim", e.sgns.dim},
          {"window", e.sgns.window},
          {"negatives", e.sgns.negatives},
          {"epochs", e.sgns.epochs},
          {"initial_lr", e.sgns.initial_lr},
          {"min_count", e.sgns.min_count},
          {"subsample_t", e.sgns.subsample_t},
          {"threads", e.sgns.threads},
          {"feature", std::string(to_string(e.feature))},
          {"n_min", e.n_min},
          {"n_max", e.n_max},
          {"bucket_count", e.bucket_count},
          {"max_vocab", e.max_vocab}}},
        {"mapping",
         {{"csls_k", m.self_learning.csls.k},
          {"csls_direction", std::string(direction_name(m.self_learning.csls.direction))},
          {"max_iter", m.self_learning.max_iter},
          {"top_frequent", m.self_learning.top_frequent},
          {"tolerance", m.self_learning.tolerance},
          {"init_max_vocab", m.init.max_vocab},
          {"init_column_keep", m.init.column_keep},
          {"restarts", m.restarts}}},
        {"summarizer",
         {{"emb_dim", s.emb_dim},
          {"hidden_dim", s.hidden_dim},
          {"max_story_len", s.max_story_len},
          {"max_summary_len", s.max_summary_len},
          {"coverage", s.coverage_enabled},
          {"coverage_weight", s.coverage_weight},
          {"lr", s.lr},
          {"batch_size", s.batch_size},
          {"max_steps", s.max_steps},
          {"optimizer", std::string(to_string(s.optimizer))},
          {"clip_norm", s.clip_norm},
          {"adagrad_init", s.adagrad_init},
          {"decoder_vocab_size", cfg.decoder_vocab_size}}},
        {"decode", {{"beam_size", cfg.decode_beam_size}, {"copy_normalize", cfg.decode_copy_normalize}}},
    };
}

// stages ----------------------------------------------------------------------

namespace {

struct StageFailure : Error {
    using Error::Error;
};

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

class Runner {
public:
    Runner(const PipelineConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log), seeds_(stage_seeds(cfg.seed)) {}

    std::vector<std::string> run(Stage stage) {
        written_.clear();
        switch (stage) {
            case Stage::preprocess: preprocess(); break;
            case Stage::train_emb: train_embeddings(); break;
            case Stage::map: map(); break;
            case Stage::train_summ: train_summarizer(); break;
            case Stage::swap: swap(); break;
            case Stage::summarise: summarise(); break;
            case Stage::eval: evaluate(); break;
        }
        return written_;
    }

    const std::vector<std::string>& written() const { return written_; }

private:
    fs::path out(const std::string& rel) {
        const fs::path p = cfg_.output_dir / rel;
        fs::create_directories(p.parent_path());
        written_.push_back(rel);
        return p;
    }

    fs::path in(const std::string& rel) const {
        const fs::path p = cfg_.output_dir / rel;
        if (!fs::is_regular_file(p)) throw StageFailure("missing upstream artifact '" + rel + "'");
        return p;
    }

    std::ofstream open(const std::string& rel) {
        std::ofstream f(out(rel), std::ios::binary);
        if (!f) throw StageFailure("cannot write '" + rel + "'");
        return f;
    }

    bool ideographic() const { return cfg_.language_profile == LanguageProfile::ideographic; }
    bool has(Enhancement e) const { return cfg_.enhancement.count(e) > 0; }
    CleanProfile modern_profile() const {
        return ideographic() ? CleanProfile::ideographic : CleanProfile::alphabetic_modern;
    }
    CleanProfile historical_profile() const {
        return ideographic() ? CleanProfile::ideographic : CleanProfile::alphabetic_historical;
    }

    void load_enhancers() {
        if (has(Enhancement::norm) && !norm_) norm_ = NormRuleSet::load(cfg_.paths.norm_rules);
        if (has(Enhancement::conv) && !glyphs_) glyphs_ = GlyphLexicon::load(cfg_.paths.glyph_lexicon);
    }

    // Glyph conversion enriches every encoder-side text; spelling normalisation targets historical text.
    std::string enhance(std::string text, bool historical) const {
        if (historical && norm_) text = normalize_spelling(text, *norm_);
        if (glyphs_) text = convert_glyphs(text, *glyphs_);
        return text;
    }

    std::vector<std::string> sentences(const fs::path& path, bool historical) const {
        std::vector<std::string> raw;
        if (cfg_.preprocess.corpus_format == CorpusFormat::plain) {
            raw = load_lines(path);
        } else {
            for (const auto& d : load_documents(path, cfg_.preprocess.corpus_format)) raw.push_back(d.story);
        }
        std::vector<std::string> cleaned;
        const auto profile = historical ? historical_profile() : modern_profile();
        for (const auto& text : raw)
            for (const auto& s : segment_sentences(text, cfg_.preprocess.segment)) {
                auto c = enhance(clean_text(s, profile), historical);
                if (!c.empty()) cleaned.push_back(join(tokenize(c, cfg_.unit()), " "));
            }
        return filter_short(cleaned, cfg_.preprocess.min_sentence_units, Unit::word);
    }

    void preprocess() {
        load_enhancers();
        for (auto [name, path, historical] : {std::tuple{"modern", cfg_.paths.modern_corpus, false},
                                              std::tuple{"historical", cfg_.paths.historical_corpus, true}}) {
            const auto lines = sentences(path, historical);
            if (lines.empty()) throw EmptyInputError(std::string(name) + " corpus has no sentences after filtering");
            save_lines(lines, out(std::string("preprocess/") + name + ".txt"));
            log_ << "preprocess: " << name << " corpus " << lines.size() << " sentences\n";
        }

        const auto pairs = load_documents(cfg_.paths.train_pairs, cfg_.preprocess.pairs_format);
        auto pf = open("preprocess/train_pairs.jsonl");
        std::vector<Document> kept;
        std::size_t dropped = 0;
        for (const auto& d : pairs) {
            if (!d.summary) throw ValidationError("training pair '" + d.id + "' has no summary");
            const auto story = tokenize(enhance(clean_text(d.story, modern_profile()), false), cfg_.unit());
            const auto summary = tokenize(clean_text(*d.summary, modern_profile()), cfg_.unit());
            if (story.empty() || summary.empty()) {
                ++dropped;
                continue;
            }
            pf << json{{"id", d.id}, {"story", join(story, " ")}, {"summary", join(summary, " ")}}.dump() << '\n';
            kept.push_back(Document{d.id, join(story, " "), join(summary, " "), {}, {}, {}});
        }
        if (kept.empty()) throw EmptyInputError("no usable training pairs");
        log_ << "preprocess: " << kept.size() << " training pairs (" << dropped << " dropped as empty)\n";

        const auto tests = load_documents(cfg_.paths.test_docs, cfg_.preprocess.pairs_format);
        auto tf = open("preprocess/test_docs.jsonl");
        std::vector<std::string> refs;
        std::vector<Document> test_kept;
        for (const auto& d : tests) {
            const auto story = tokenize(enhance(clean_text(d.story, historical_profile()), true), cfg_.unit());
            if (story.empty()) throw ValidationError("test document '" + d.id + "' is empty after cleaning");
            tf << json{{"id", d.id}, {"story", join(story, " ")}}.dump() << '\n';
            if (d.summary) {
                const auto ref = clean_text(*d.summary, modern_profile());
                refs.push_back(json{{"id", d.id}, {"summary", ref}}.dump());
                test_kept.push_back(Document{d.id, join(story, " "), ref, {}, {}, {}});
            }
        }
        if (tests.empty()) throw EmptyInputError("no test documents");
        if (!refs.empty()) save_lines(refs, out("preprocess/references.jsonl"));

        json stats;
        auto put = [&](const char* key, const std::vector<Document>& docs) {
            const auto s = compute_stats(DocumentSet(docs), cfg_.unit());
            stats[key] = {{"documents", docs.size()},
                          {"mean_story_len", s.mean_story_len},
                          {"mean_summ_len", s.mean_summ_len},
                          {"compression_rate", s.compression_rate},
                          {"unit", std::string(to_string(s.unit))}};
        };
        put("train_pairs", kept);
        if (!test_kept.empty()) put("test_docs", test_kept);
        open("preprocess/stats.json") << stats.dump(2) << '\n';
    }

    FeatureScheme scheme() const {
        const auto& e = cfg_.embeddings;
        switch (e.feature) {
            case FeatureKind::char_ngram: return FeatureScheme::char_ngrams(e.n_min, e.n_max, e.bucket_count);
            case FeatureKind::stroke_ngram:
                return FeatureScheme::stroke_ngrams(load_stroke_table(cfg_.paths.stroke_table), e.n_min, e.n_max,
                                                    e.bucket_count);
            case FeatureKind::none: return FeatureScheme::none();
        }
        return FeatureScheme::none();
    }

    void train_embeddings() {
        const auto sch = scheme();
        for (auto [name, seed] : {std::pair{"modern", seeds_.modern_embeddings},
                                  std::pair{"historical", seeds_.historical_embeddings}}) {
            std::vector<std::vector<std::string>> corpus;
            for (const auto& line : load_lines(in(std::string("preprocess/") + name + ".txt")))
                corpus.push_back(split_tokens(line));
            SgnsConfig sg = cfg_.embeddings.sgns;
            sg.seed = seed;
            const auto vocab = build_vocab(corpus, sg.min_count, cfg_.embeddings.max_vocab);
            SgnsReport report;
            const auto model = train_sgns(corpus, vocab, sch, sg, &report);
            save_table(to_table(model), out(std::string("embeddings/") + name + ".vec"));
            json j = {{"vocab_size", vocab.size()},
                      {"seed", seed},
                      {"epoch_loss", report.epoch_loss},
                      {"trained_pairs", report.trained_pairs},
                      {"skipped_tokens", report.skipped_tokens},
                      {"warnings", report.warnings}};
            open(std::string("embeddings/") + name + ".report.json") << j.dump(2) << '\n';
            log_ << "train-emb: " << name << " vocab " << vocab.size() << ", final loss "
                 << (report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()) << '\n';
        }
    }

    void map() {
        const auto source = load_embeddings(in("embeddings/historical.vec"));
        const auto target = load_embeddings(in("embeddings/modern.vec"));
        AlignConfig ac = cfg_.mapping;
        ac.init.seed = seeds_.mapping;
        const auto a = align(source, target, ac);
        const Eigen::MatrixXd mapped = a.source.matrix * a.result.transform;
        save_table(EmbeddingTable(source.tokens(), mapped), out("mapping/historical.vec"));
        save_table(EmbeddingTable(target.tokens(), a.target.matrix), out("mapping/modern.vec"));
        {
            auto f = open("mapping/transform.txt");
            const auto& W = a.result.transform;
            f << W.rows() << ' ' << W.cols() << '\n';
            for (Eigen::Index i = 0; i < W.rows(); ++i) {
                for (Eigen::Index j = 0; j < W.cols(); ++j) f << (j ? " " : "") << fmt_double(W(i, j));
                f << '\n';
            }
        }
        save_dictionary(a.result.final_dictionary, source.tokens(), target.tokens(), out("mapping/dictionary.tsv"));
        json j = {{"mode", std::string(to_string(ac.mode))},
                  {"seed_size", a.result.seed_size},
                  {"iterations", a.result.iterations},
                  {"objective_trace", a.result.objective_trace},
                  {"dictionary_size", a.result.final_dictionary.size()},
                  {"log", a.result.log}};
        open("mapping/report.json") << j.dump(2) << '\n';
        log_ << "map: " << to_string(ac.mode) << " seed " << a.result.seed_size << " pairs, final dictionary "
             << a.result.final_dictionary.size() << " after " << a.result.iterations << " iterations\n";
    }

    static std::vector<json> read_jsonl(const fs::path& path) {
        std::vector<json> out;
        for (const auto& line : load_lines(path))
            if (!line.empty()) out.push_back(json::parse(line));
        return out;
    }

    void train_summarizer() {
        const auto table = load_embeddings(in("mapping/modern.vec"));
        std::vector<TokenPair> pairs;
        for (const auto& j : read_jsonl(in("preprocess/train_pairs.jsonl")))
            pairs.emplace_back(split_tokens(j.at("story").get<std::string>()),
                               split_tokens(j.at("summary").get<std::string>()));
        // decoder vocabulary: the most frequent modern embedding tokens (table rows are frequency ordered)
        const auto& tokens = table.tokens();
        const std::vector<std::string> dec(tokens.begin(),
                                           tokens.begin() + static_cast<std::ptrdiff_t>(
                                                                std::min(tokens.size(), cfg_.decoder_vocab_size)));
        auto model = build_model(cfg_.summarizer, table, dec);
        const auto report = train(model, pairs);
        {
            auto f = open("summarizer/train_log.tsv");
            f << "step\tloss\n";
            for (std::size_t i = 0; i < report.losses.size(); ++i) f << i + 1 << '\t' << fmt_double(report.losses[i]) << '\n';
        }
        if (report.diverged) {
            save_checkpoint(model, out("summarizer/model.last_good.ckpt"));
            throw StageFailure("summarizer training diverged: " + report.diagnostic +
                               " (last good parameters in summarizer/model.last_good.ckpt)");
        }
        save_checkpoint(model, out("summarizer/model.ckpt"));
        log_ << "train-summ: " << report.steps << " steps, decoder vocab " << model.decoder_vocab.size()
             << ", last loss " << (report.losses.empty() ? 0.0 : report.losses.back()) << '\n';
    }

    void swap() {
        auto model = load_checkpoint(in("summarizer/model.ckpt"));
        swap_encoder_embeddings(model, load_embeddings(in("mapping/historical.vec")));
        save_checkpoint(model, out("summarizer/swapped.ckpt"));
        log_ << "swap: encoder now holds " << model.encoder_tokens.size() << " historical tokens\n";
    }

    void summarise() {
        const auto model = load_checkpoint(in("summarizer/swapped.ckpt"));
        const auto docs = read_jsonl(in("preprocess/test_docs.jsonl"));
        DecodeOptions opts;
        opts.beam_size = cfg_.decode_beam_size;
        std::optional<NormRuleSet> rules;
        if (cfg_.decode_copy_normalize) {
            rules = NormRuleSet::load(cfg_.paths.norm_rules);
            opts.copy_norm = &*rules;
        }
        auto f = open("decode/summaries.jsonl");
        for (const auto& d : docs) {
            const auto r = decode(model, split_tokens(d.at("story").get<std::string>()), opts);
            json copied = json::array();
            for (auto [o, s] : r.copied_positions) copied.push_back({o, s});
            f << json{{"id", d.at("id")},
                      {"summary", join(r.tokens, ideographic() ? "" : " ")},
                      {"score", r.normalized_score},
                      {"copied_positions", copied}}
                     .dump()
              << '\n';
        }
        log_ << "summarise: " << docs.size() << " documents\n";
    }

    void evaluate() {
        const auto candidates = load_id_text(in("decode/summaries.jsonl"));
        const fs::path refs = cfg_.output_dir / "preprocess/references.jsonl";
        if (!fs::is_regular_file(refs)) throw StageFailure("no reference summaries: test documents carry no 'summary'");
        const auto report = evaluate_set(candidates, load_id_text(refs), cfg_.unit());
        write_report_tsv(report, out("eval/report.tsv"));
        write_report_json(report, out("eval/report.json"));
        log_ << "eval: ROUGE-1 " << format_percent(report.mean_r1) << " ROUGE-2 " << format_percent(report.mean_r2)
             << " ROUGE-L " << format_percent(report.mean_rl) << '\n';
    }

    const PipelineConfig& cfg_;
    std::ostream& log_;
    StageSeeds seeds_;
    std::vector<std::string> written_;
    std::optional<NormRuleSet> norm_;
    std::optional<GlyphLexicon> glyphs_;
};

json load_manifest(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return json::object();
    try {
        return json::parse(f);
    } catch (const json::exception&) {
        return json::object();
    }
}

void save_manifest(const json& manifest, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        f << manifest.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

}  // namespace

int run_pipeline(const PipelineConfig& cfg, const std::set<Stage>& stages, std::ostream& log) {
    // where a run is stored does not change what it computes
    json effective = to_json(cfg);
    effective.erase("output_dir");
    const std::string config_hash = sha256_hex(effective.dump());

    try {
        fs::create_directories(cfg.output_dir);
    } catch (const fs::filesystem_error& e) {
        log << "error: cannot create output directory: " << e.what() << '\n';
        return kExitStageFailure;
    }
    const fs::path manifest_path = cfg.output_dir / "manifest.json";
    json manifest = load_manifest(manifest_path);
    if (manifest.value("config_hash", "") != config_hash) manifest = json::object();

    {
        std::ofstream f(cfg.output_dir / "config.json", std::ios::binary);
        f << effective.dump(2) << '\n';
    }
    const auto seeds = stage_seeds(cfg.seed);
    manifest["config_hash"] = config_hash;
    manifest["config_file"] = {{"path", "config.json"}, {"sha256", sha256_file(cfg.output_dir / "config.json")}};
    manifest["seeds"] = {{"master", cfg.seed},
                         {"modern_embeddings", seeds.modern_embeddings},
                         {"historical_embeddings", seeds.historical_embeddings},
                         {"mapping", seeds.mapping},
                         {"summarizer", seeds.summarizer}};
    json inputs = json::object();
    for (auto [key, p] : {std::pair{"modern_corpus", &cfg.paths.modern_corpus},
                          std::pair{"historical_corpus", &cfg.paths.historical_corpus},
                          std::pair{"train_pairs", &cfg.paths.train_pairs},
                          std::pair{"test_docs", &cfg.paths.test_docs},
                          std::pair{"norm_rules", &cfg.paths.norm_rules},
                          std::pair{"glyph_lexicon", &cfg.paths.glyph_lexicon},
                          std::pair{"stroke_table", &cfg.paths.stroke_table}})
        if (!p->empty() && fs::is_regular_file(*p)) inputs[key] = sha256_file(*p);
    manifest["inputs"] = inputs;
    if (!manifest.contains("stages")) manifest["stages"] = json::object();
    save_manifest(manifest, manifest_path);

    Runner runner(cfg, log);
    for (Stage stage : kAllStages) {
        if (!stages.count(stage)) continue;
        const std::string name(to_string(stage));
        log << "[" << name << "]\n";
        try {
            const auto written = runner.run(stage);
            json outputs = json::object();
            for (const auto& rel : written) outputs[rel] = sha256_file(cfg.output_dir / rel);
            manifest["stages"][name] = {{"status", "ok"}, {"outputs", outputs}};
            save_manifest(manifest, manifest_path);
        } catch (const std::exception& e) {
            log << "error: stage " << name << " failed: " << e.what() << '\n';
            json partial = json::object();
            for (const auto& rel : runner.written())
                if (fs::is_regular_file(cfg.output_dir / rel)) partial[rel] = sha256_file(cfg.output_dir / rel);
            manifest["stages"][name] = {{"status", "failed"}, {"error", e.what()}, {"outputs", partial}};
            save_manifest(manifest, manifest_path);
            return kExitStageFailure;
        }
    }
    return kExitOk;
}

}  // namespace histsumm
