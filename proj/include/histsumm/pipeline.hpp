#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "histsumm/corpus.hpp"
#include "histsumm/embeddings.hpp"
#include "histsumm/mapping.hpp"
#include "histsumm/summarizer.hpp"

namespace histsumm {

enum class LanguageProfile { alphabetic, ideographic };
enum class Enhancement { norm, conv };

LanguageProfile parse_language_profile(std::string_view name);
std::string_view to_string(LanguageProfile profile);
Enhancement parse_enhancement(std::string_view name);  // "NORM" | "CONV"
std::string_view to_string(Enhancement e);

struct PipelinePaths {
    std::filesystem::path modern_corpus;
    std::filesystem::path historical_corpus;
    std::filesystem::path train_pairs;
    std::filesystem::path test_docs;
    std::filesystem::path norm_rules;
    std::filesystem::path glyph_lexicon;
    std::filesystem::path stroke_table;
};

struct PreprocessSettings {
    CorpusFormat corpus_format = CorpusFormat::plain;
    CorpusFormat pairs_format = CorpusFormat::jsonl;
    SegmentMode segment = SegmentMode::punctuation;
    std::size_t min_sentence_units = 10;
};

struct EmbeddingSettings {
    SgnsConfig sgns;
    FeatureKind feature = FeatureKind::char_ngram;
    int n_min = 3;
    int n_max = 6;
    std::uint32_t bucket_count = 2'000'000;
    std::size_t max_vocab = kDefaultMaxVocab;
};

struct PipelineConfig {
    LanguageProfile language_profile = LanguageProfile::alphabetic;
    std::set<Enhancement> enhancement;
    MappingMode mapping_mode = MappingMode::identical_seed;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    PipelinePaths paths;
    PreprocessSettings preprocess;
    EmbeddingSettings embeddings;
    AlignConfig mapping;
    SummarizerConfig summarizer;
    std::size_t decoder_vocab_size = kDefaultMaxVocab;
    int decode_beam_size = 4;
    /// Rewrite pointer-copied tokens with paths.norm_rules after decoding.
    bool decode_copy_normalize = false;

    Unit unit() const { return language_profile == LanguageProfile::ideographic ? Unit::character : Unit::word; }
};

/// Stage seeds derived from the master seed by fixed offsets.
struct StageSeeds {
    std::uint64_t modern_embeddings, historical_embeddings, mapping, summarizer;
};
StageSeeds stage_seeds(std::uint64_t master);

/// Parses, defaults and checks a config document. Relative paths resolve
/// against `base_dir`. Unknown keys and violated invariants throw ConfigError
/// naming the field.
PipelineConfig parse_pipeline_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
/// Reads a JSON config file and applies `overrides` as a merge patch first.
PipelineConfig load_pipeline_config(const std::filesystem::path& path, const nlohmann::json& overrides = {});
/// Invariants that need the filesystem (referenced paths exist).
void check_paths(const PipelineConfig& cfg);
/// Fully defaulted effective configuration.
nlohmann::json to_json(const PipelineConfig& cfg);

enum class Stage { preprocess, train_emb, map, train_summ, swap, summarise, eval };
inline constexpr Stage kAllStages[] = {Stage::preprocess, Stage::train_emb, Stage::map, Stage::train_summ,
                                       Stage::swap, Stage::summarise, Stage::eval};
Stage parse_stage(std::string_view name);
std::string_view to_string(Stage stage);

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitStageFailure = 2;

/// Runs the requested stages in pipeline order, updating <output_dir>/manifest.json
/// after each one. Stops at the first failing stage.
int run_pipeline(const PipelineConfig& cfg, const std::set<Stage>& stages, std::ostream& log);

/// Whitespace tokens of a preprocessed line.
std::vector<std::string> split_tokens(std::string_view line);

}  // namespace histsumm
