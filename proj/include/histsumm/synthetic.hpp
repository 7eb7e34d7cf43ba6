#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "histsumm/corpus.hpp"

// A toy modern language with a "historical" twin, for end-to-end runs at
// desk scale. Content words carry fixed function-word collocations and topic
// co-occurrence, so embeddings trained on either side are close to isomorphic.
namespace histsumm::toy {

struct LanguageConfig {
    std::size_t function_words = 60;  // includes the trigger words
    std::size_t triggers = 2;
    std::size_t topics = 24;
    std::size_t words_per_topic = 10;
    double substitution_rate = 0.10;
    double spelling_shift_rate = 0.40;
    std::uint64_t seed = 7;
};

struct Language {
    std::vector<std::string> function_words;  // triggers excluded
    std::vector<std::string> triggers;
    std::vector<std::string> content_words;
    std::vector<std::size_t> topic_of;        // per content word
    std::vector<std::size_t> pre, post;       // collocating function word per content word
    std::unordered_map<std::string, std::string> historical;  // modern token -> historical form
    /// Inverse of the spelling shift (substring rules); does not undo substitutions.
    NormRuleSet spelling_rules;

    std::size_t vocabulary_size() const { return function_words.size() + triggers.size() + content_words.size(); }
    std::vector<std::string> unchanged_tokens() const;
    std::vector<std::string> to_historical(const std::vector<std::string>& modern) const;
};

Language make_language(const LanguageConfig& cfg = {});

/// One topical sentence; each chunk is "pre word post", and a chunk's pre word
/// is replaced by a trigger with probability trigger_rate.
std::vector<std::string> sentence(const Language& lang, std::mt19937_64& rng, double trigger_rate = 0.1);

struct Story {
    std::vector<std::string> story;
    std::vector<std::string> summary;  // the trigger-marked content words, in story order
};
Story story(const Language& lang, std::mt19937_64& rng, std::size_t sentences = 4, std::size_t keywords = 3);

struct CorpusSizes {
    std::size_t modern_sentences = 20'000;
    std::size_t historical_sentences = 20'000;
    std::size_t train_pairs = 2'000;
    std::size_t test_docs = 200;
};

struct CorpusFiles {
    std::filesystem::path modern_corpus, historical_corpus, train_pairs, test_historical, test_modern, spelling_rules;
};

/// Writes plain-text corpora, JSONL pair files and the spelling rule table into `dir`.
CorpusFiles write_corpus(const Language& lang, const std::filesystem::path& dir, const CorpusSizes& sizes,
                         std::uint64_t seed);

/// Run configuration for the files of write_corpus, with paths relative to the corpus directory.
nlohmann::json run_config(const CorpusFiles& files, std::uint64_t seed);

}  // namespace histsumm::toy
