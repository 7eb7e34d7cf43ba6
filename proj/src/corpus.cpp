#include "histsumm/corpus.hpp"

#include "histsumm/error.hpp"
#include "histsumm/unicode.hpp"

#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace histsumm {

using nlohmann::json;

Unit parse_unit(std::string_view name) {
    if (name == "word") return Unit::word;
    if (name == "character" || name == "char") return Unit::character;
    throw ConfigError("unknown unit '" + std::string(name) + "' (expected word|character)");
}

std::string_view to_string(Unit unit) { return unit == Unit::word ? "word" : "character"; }

CorpusFormat parse_corpus_format(std::string_view name) {
    if (name == "jsonl") return CorpusFormat::jsonl;
    if (name == "tsv") return CorpusFormat::tsv;
    if (name == "plain") return CorpusFormat::plain;
    throw ConfigError("unknown corpus format '" + std::string(name) + "' (expected jsonl|tsv|plain)");
}

CleanProfile parse_clean_profile(std::string_view name) {
    if (name == "alphabetic-historical") return CleanProfile::alphabetic_historical;
    if (name == "alphabetic-modern") return CleanProfile::alphabetic_modern;
    if (name == "ideographic") return CleanProfile::ideographic;
    throw ConfigError("unknown cleaning profile '" + std::string(name) +
                      "' (expected alphabetic-historical|alphabetic-modern|ideographic)");
}

SegmentMode parse_segment_mode(std::string_view name) {
    if (name == "punctuation") return SegmentMode::punctuation;
    if (name == "pre-segmented") return SegmentMode::pre_segmented;
    throw ConfigError("unknown segmentation mode '" + std::string(name) + "' (expected punctuation|pre-segmented)");
}

// DocumentSet ------------------------------------------------------------

DocumentSet::DocumentSet(std::vector<Document> docs) : docs_(std::move(docs)) {
    index_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        const auto& id = docs_[i].id;
        if (id.empty()) throw ValidationError("document #" + std::to_string(i + 1) + " has an empty id");
        if (!index_.emplace(id, i).second) throw ValidationError("duplicate document id '" + id + "'");
    }
}

const Document* DocumentSet::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &docs_[it->second];
}

// GlyphLexicon -----------------------------------------------------------

void GlyphLexicon::add(std::string_view source, std::string_view target) {
    auto key = utf8::decode(source);
    if (key.empty()) throw ValidationError("glyph lexicon: empty key");
    longest_ = std::max(longest_, key.size());
    entries_.try_emplace(std::move(key), std::string(target));
}

const std::string* GlyphLexicon::lookup(std::u32string_view key) const {
    auto it = entries_.find(std::u32string(key));
    return it == entries_.end() ? nullptr : &it->second;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        cols.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return cols;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

GlyphLexicon GlyphLexicon::load(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    GlyphLexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_tabs(line);
        if (cols.size() < 2) throw ParseError("glyph lexicon: expected 2 tab-separated columns", lineno);
        if (cols[0].empty()) throw ParseError("glyph lexicon: empty source glyph", lineno);
        lex.add(cols[0], cols[1]);
    }
    return lex;
}

NormRuleSet NormRuleSet::load(const std::filesystem::path& path, bool case_sensitive) {
    std::istringstream in(read_file(path));
    NormRuleSet set;
    set.case_sensitive = case_sensitive;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_tabs(line);
        if (cols.size() != 3) throw ParseError("norm rules: expected 3 tab-separated columns", lineno);
        if (cols[0].empty()) throw ParseError("norm rules: empty pattern", lineno);
        NormRule rule{cols[0], cols[1], RuleScope::whole_token};
        if (cols[2] == "token") {
            rule.scope = RuleScope::whole_token;
        } else if (cols[2] == "substr") {
            rule.scope = RuleScope::substring;
        } else {
            throw ParseError("norm rules: scope must be 'token' or 'substr', got '" + cols[2] + "'", lineno);
        }
        set.rules.push_back(std::move(rule));
    }
    return set;
}

// loading ------------------------------------------------------------------

namespace {

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t lineno) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string", lineno);
    return it->get<std::string>();
}

Document parse_json_record(const std::string& line, std::size_t lineno) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!obj.is_object()) throw ParseError("record is not a JSON object", lineno);
    Document doc;
    auto id = optional_string(obj, "id", lineno);
    auto story = optional_string(obj, "story", lineno);
    if (!id) throw ParseError("missing required field 'id'", lineno);
    if (!story) throw ParseError("missing required field 'story'", lineno);
    doc.id = std::move(*id);
    doc.story = std::move(*story);
    doc.summary = optional_string(obj, "summary", lineno);
    doc.topic = optional_string(obj, "topic", lineno);
    doc.source = optional_string(obj, "source", lineno);
    if (auto it = obj.find("year"); it != obj.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw ParseError("field 'year' must be an integer", lineno);
        doc.year = it->get<int>();
    }
    return doc;
}

std::optional<std::string> nonempty(std::string s) {
    if (s.empty()) return std::nullopt;
    return s;
}

Document parse_tsv_record(const std::string& line, std::size_t lineno) {
    auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 6)
        throw ParseError("expected 2-6 tab-separated columns (id, story, summary, year, topic, source)", lineno);
    cols.resize(6);
    Document doc;
    doc.id = cols[0];
    doc.story = cols[1];
    doc.summary = nonempty(cols[2]);
    if (!cols[3].empty()) {
        int year = 0;
        auto [ptr, ec] = std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), year);
        if (ec != std::errc() || ptr != cols[3].data() + cols[3].size())
            throw ParseError("year column is not an integer: '" + cols[3] + "'", lineno);
        doc.year = year;
    }
    doc.topic = nonempty(cols[4]);
    doc.source = nonempty(cols[5]);
    return doc;
}

}  // namespace

DocumentSet parse_documents(std::string_view content, CorpusFormat format) {
    std::istringstream in{std::string(content)};
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        bool blank = line.find_first_not_of(" \t") == std::string::npos;
        if (blank) continue;
        switch (format) {
            case CorpusFormat::jsonl:
                docs.push_back(parse_json_record(line, lineno));
                break;
            case CorpusFormat::tsv:
                if (lineno == 1 && line.rfind("id\tstory", 0) == 0) continue;
                docs.push_back(parse_tsv_record(line, lineno));
                break;
            case CorpusFormat::plain:
                docs.push_back(Document{"line-" + std::to_string(lineno), line, {}, {}, {}, {}});
                break;
        }
        if (docs.back().story.empty()) throw ValidationError("empty story at line " + std::to_string(lineno));
    }
    return DocumentSet(std::move(docs));
}

DocumentSet load_documents(const std::filesystem::path& path, CorpusFormat format) {
    if (!std::filesystem::exists(path)) throw ParseError("no such file: '" + path.string() + "'");
    return parse_documents(read_file(path), format);
}

void save_documents_jsonl(const DocumentSet& docs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    for (const auto& d : docs) {
        json obj = {{"id", d.id}, {"story", d.story}};
        if (d.summary) obj["summary"] = *d.summary;
        if (d.year) obj["year"] = *d.year;
        if (d.topic) obj["topic"] = *d.topic;
        if (d.source) obj["source"] = *d.source;
        out << obj.dump() << '\n';
    }
}

std::vector<std::string> load_lines(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        strip_cr(line);
        if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(line);
    }
    return lines;
}

void save_lines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    for (const auto& l : lines) out << l << '\n';
}

// cleaning -------------------------------------------------------------------

namespace {

const std::regex& url_pattern() {
    static const std::regex re(R"((?:https?|ftp)://\S+|www\.\S+)", std::regex::ECMAScript | std::regex::icase);
    return re;
}

}  // namespace

std::string clean_text(std::string_view raw, CleanProfile profile) {
    // 1. drop control and emoji-class code points
    std::string stripped;
    stripped.reserve(raw.size());
    for (char32_t cp : utf8::decode(raw)) {
        if (utf8::is_control(cp) || utf8::is_emoji_or_symbol(cp)) continue;
        utf8::append(stripped, cp);
    }
    // 2. links
    std::string no_links = std::regex_replace(stripped, url_pattern(), " ");

    // 3. profile-specific rewriting and whitespace collapsing
    const bool lower = profile != CleanProfile::ideographic;
    const bool slash = profile == CleanProfile::alphabetic_historical;
    std::string out;
    out.reserve(no_links.size());
    bool pending_space = false;
    for (char32_t cp : utf8::decode(no_links)) {
        if (utf8::is_space(cp)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        if (slash && cp == U'/') cp = U',';
        if (lower) cp = utf8::to_lower(cp);
        utf8::append(out, cp);
    }
    return out;
}

namespace {

bool is_sentence_final(char32_t cp) {
    switch (cp) {
        case U'.': case U'!': case U'?':
        case U'。': case U'！': case U'？': case U'；':
            return true;
        default:
            return false;
    }
}

std::string trim(std::string_view s) {
    auto cps = utf8::decode(s);
    std::size_t b = 0, e = cps.size();
    while (b < e && utf8::is_space(cps[b])) ++b;
    while (e > b && utf8::is_space(cps[e - 1])) --e;
    return utf8::encode(std::u32string_view(cps).substr(b, e - b));
}

}  // namespace

std::vector<std::string> segment_sentences(std::string_view text, SegmentMode mode) {
    std::vector<std::string> out;
    if (mode == SegmentMode::pre_segmented) {
        std::size_t start = 0;
        while (start <= text.size()) {
            auto pos = text.find('\n', start);
            auto piece = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
            if (!piece.empty()) out.push_back(std::move(piece));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return out;
    }
    auto cps = utf8::decode(text);
    std::u32string current;
    auto flush = [&] {
        auto s = trim(utf8::encode(current));
        if (!s.empty()) out.push_back(std::move(s));
        current.clear();
    };
    for (std::size_t i = 0; i < cps.size(); ++i) {
        current.push_back(cps[i]);
        if (is_sentence_final(cps[i])) {
            // runs such as "?!" stay with their sentence
            while (i + 1 < cps.size() && is_sentence_final(cps[i + 1])) current.push_back(cps[++i]);
            flush();
        }
    }
    flush();
    return out;
}

std::vector<std::string> tokenize(std::string_view text, Unit unit) {
    return unit == Unit::word ? utf8::words(text) : utf8::chars(text);
}

std::size_t length_in(std::string_view text, Unit unit) {
    return unit == Unit::word ? utf8::words(text).size() : utf8::count_chars(text);
}

std::vector<std::string> filter_short(const std::vector<std::string>& sentences, std::size_t min_units, Unit unit) {
    if (min_units < 1) throw ConfigError("filter_short: min_units must be >= 1");
    std::vector<std::string> out;
    for (const auto& s : sentences)
        if (length_in(s, unit) >= min_units) out.push_back(s);
    return out;
}

std::string convert_glyphs(std::string_view text, const GlyphLexicon& lexicon) {
    if (lexicon.size() == 0) return std::string(text);
    auto cps = utf8::decode(text);
    std::u32string_view view(cps);
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < cps.size()) {
        const std::string* hit = nullptr;
        std::size_t len = std::min(lexicon.longest_key_len(), cps.size() - i);
        for (; len >= 1; --len) {
            if ((hit = lexicon.lookup(view.substr(i, len)))) break;
        }
        if (hit) {
            out += *hit;
            i += len;
        } else {
            utf8::append(out, cps[i]);
            ++i;
        }
    }
    return out;
}

namespace {

struct CompiledRule {
    std::u32string pattern;  // lowercased when matching is case-insensitive
    const NormRule* rule;
};

std::string rewrite_token(const std::u32string& token, const std::vector<CompiledRule>& whole,
                          const std::vector<CompiledRule>& substr, bool case_sensitive) {
    const std::u32string key = case_sensitive ? token : utf8::to_lower(token);
    for (const auto& r : whole)
        if (r.pattern == key) return r.rule->replacement;

    std::string out;
    std::size_t i = 0;
    while (i < key.size()) {
        const CompiledRule* hit = nullptr;
        for (const auto& r : substr) {
            if (key.compare(i, r.pattern.size(), r.pattern) == 0) {
                hit = &r;
                break;
            }
        }
        if (hit) {
            out += hit->rule->replacement;
            i += hit->pattern.size();
        } else {
            utf8::append(out, token[i]);
            ++i;
        }
    }
    return out;
}

}  // namespace

std::string normalize_spelling(std::string_view text, const NormRuleSet& rules) {
    std::vector<CompiledRule> whole, substr;
    for (const auto& r : rules.rules) {
        auto pat = utf8::decode(r.pattern);
        if (pat.empty()) continue;
        if (!rules.case_sensitive) pat = utf8::to_lower(pat);
        (r.scope == RuleScope::whole_token ? whole : substr).push_back({std::move(pat), &r});
    }
    auto cps = utf8::decode(text);
    std::string out;
    out.reserve(text.size());
    std::u32string token;
    auto flush = [&] {
        if (!token.empty()) out += rewrite_token(token, whole, substr, rules.case_sensitive);
        token.clear();
    };
    for (char32_t cp : cps) {
        if (utf8::is_space(cp)) {
            flush();
            utf8::append(out, cp);
        } else {
            token.push_back(cp);
        }
    }
    flush();
    return out;
}

CorpusStats compute_stats(const DocumentSet& docs, Unit unit) {
    if (docs.empty()) throw EmptyInputError("compute_stats: empty document set");
    double story_total = 0.0, summ_total = 0.0;
    for (const auto& d : docs) {
        if (!d.summary || d.summary->empty())
            throw ValidationError("compute_stats: document '" + d.id + "' has no summary");
        story_total += static_cast<double>(length_in(d.story, unit));
        summ_total += static_cast<double>(length_in(*d.summary, unit));
    }
    CorpusStats stats;
    stats.unit = unit;
    const double n = static_cast<double>(docs.size());
    stats.mean_story_len = story_total / n;
    stats.mean_summ_len = summ_total / n;
    if (stats.mean_story_len <= 0.0) throw ValidationError("compute_stats: all stories are empty at this unit");
    stats.compression_rate = summ_total / story_total;
    return stats;
}

}  // namespace histsumm
