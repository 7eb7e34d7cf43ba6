#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace histsumm {

enum class Unit { word, character };
enum class CorpusFormat { jsonl, tsv, plain };
enum class CleanProfile { alphabetic_historical, alphabetic_modern, ideographic };
enum class SegmentMode { punctuation, pre_segmented };

Unit parse_unit(std::string_view name);
std::string_view to_string(Unit unit);
CorpusFormat parse_corpus_format(std::string_view name);
CleanProfile parse_clean_profile(std::string_view name);
SegmentMode parse_segment_mode(std::string_view name);

struct Document {
    std::string id;
    std::string story;
    std::optional<std::string> summary;
    std::optional<int> year;
    std::optional<std::string> topic;
    std::optional<std::string> source;
};

/// Ordered, id-unique collection of documents. Immutable once built.
class DocumentSet {
public:
    DocumentSet() = default;
    /// Throws ValidationError on duplicate or empty ids.
    explicit DocumentSet(std::vector<Document> docs);

    const std::vector<Document>& documents() const noexcept { return docs_; }
    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Document& operator[](std::size_t i) const { return docs_[i]; }
    const Document* find(std::string_view id) const;

    auto begin() const { return docs_.begin(); }
    auto end() const { return docs_.end(); }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct CorpusStats {
    double mean_story_len = 0.0;
    double mean_summ_len = 0.0;
    double compression_rate = 0.0;
    Unit unit = Unit::word;
};

/// Simplified -> traditional style glyph table. Greedy longest match.
class GlyphLexicon {
public:
    GlyphLexicon() = default;

    /// Adds an entry; the first entry for a key wins. Empty keys are rejected.
    void add(std::string_view source, std::string_view target);

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t longest_key_len() const noexcept { return longest_; }
    const std::string* lookup(std::u32string_view key) const;

    static GlyphLexicon load(const std::filesystem::path& path);

private:
    std::unordered_map<std::u32string, std::string> entries_;
    std::size_t longest_ = 0;
};

enum class RuleScope { whole_token, substring };

struct NormRule {
    std::string pattern;
    std::string replacement;
    RuleScope scope = RuleScope::whole_token;
};

/// Ordered rewrite table for historical spellings.
struct NormRuleSet {
    std::vector<NormRule> rules;
    bool case_sensitive = true;

    /// TSV: pattern, replacement, scope in {token, substr}. Lines starting with '#' are skipped.
    static NormRuleSet load(const std::filesystem::path& path, bool case_sensitive = true);
};

// loading --------------------------------------------------------------

DocumentSet load_documents(const std::filesystem::path& path, CorpusFormat format);
DocumentSet parse_documents(std::string_view content, CorpusFormat format);
void save_documents_jsonl(const DocumentSet& docs, const std::filesystem::path& path);

/// Plain corpus: one sentence per line, blank lines skipped.
std::vector<std::string> load_lines(const std::filesystem::path& path);
void save_lines(const std::vector<std::string>& lines, const std::filesystem::path& path);

// cleaning and enhancement ---------------------------------------------

std::string clean_text(std::string_view raw, CleanProfile profile);
std::vector<std::string> segment_sentences(std::string_view text, SegmentMode mode);
std::vector<std::string> filter_short(const std::vector<std::string>& sentences, std::size_t min_units, Unit unit);
std::string convert_glyphs(std::string_view text, const GlyphLexicon& lexicon);
std::string normalize_spelling(std::string_view text, const NormRuleSet& rules);

/// Whitespace tokens (word unit) or non-whitespace code points (character unit).
std::vector<std::string> tokenize(std::string_view text, Unit unit);
std::size_t length_in(std::string_view text, Unit unit);

CorpusStats compute_stats(const DocumentSet& docs, Unit unit);

}  // namespace histsumm
