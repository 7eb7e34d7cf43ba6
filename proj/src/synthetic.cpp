#include "histsumm/synthetic.hpp"

#include "histsumm/error.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace histsumm::toy {

namespace {

constexpr std::string_view kConsonants = "bdgklmnprst";
constexpr std::string_view kVowels = "aeiou";
// letters the modern alphabet never uses; substitutes are spelled with these
constexpr std::string_view kOldConsonants = "fhwxz";
constexpr std::string_view kOldVowels = "aeo";

const std::pair<char, char> kShift[] = {{'u', 'v'}, {'i', 'y'}, {'k', 'c'}};

std::string random_word(std::mt19937_64& rng, std::string_view cons, std::string_view vowels, int syllables) {
    std::string w;
    for (int s = 0; s < syllables; ++s) {
        w += cons[std::uniform_int_distribution<std::size_t>(0, cons.size() - 1)(rng)];
        w += vowels[std::uniform_int_distribution<std::size_t>(0, vowels.size() - 1)(rng)];
    }
    return w;
}

std::string shift_spelling(std::string w) {
    for (char& c : w)
        for (auto [from, to] : kShift)
            if (c == from) c = to;
    return w;
}

bool shiftable(const std::string& w) {
    return std::any_of(w.begin(), w.end(), [](char c) { return c == 'u' || c == 'i' || c == 'k'; });
}

}  // namespace

Language make_language(const LanguageConfig& cfg) {
    if (cfg.triggers >= cfg.function_words) throw ConfigError("toy language: need more function words than triggers");
    const std::size_t n_content = cfg.topics * cfg.words_per_topic;
    const std::size_t n_plain = cfg.function_words - cfg.triggers;
    if (n_plain * n_plain < n_content) throw ConfigError("toy language: too few function words for unique collocations");

    std::mt19937_64 rng(cfg.seed);
    std::set<std::string> used;
    auto fresh = [&](int syllables) {
        for (;;) {
            auto w = random_word(rng, kConsonants, kVowels, syllables);
            if (used.insert(w).second) return w;
        }
    };

    Language lang;
    for (std::size_t i = 0; i < n_plain; ++i) lang.function_words.push_back(fresh(2));
    for (std::size_t i = 0; i < cfg.triggers; ++i) lang.triggers.push_back(fresh(2));
    for (std::size_t i = 0; i < n_content; ++i) {
        lang.content_words.push_back(fresh(std::uniform_int_distribution<int>(2, 3)(rng) + (i % 2)));
        lang.topic_of.push_back(i / cfg.words_per_topic);
    }

    std::set<std::pair<std::size_t, std::size_t>> pairs;
    std::uniform_int_distribution<std::size_t> pick(0, n_plain - 1);
    for (std::size_t i = 0; i < n_content; ++i) {
        std::pair<std::size_t, std::size_t> p;
        do p = {pick(rng), pick(rng)};
        while (p.first == p.second || !pairs.insert(p).second);
        lang.pre.push_back(p.first);
        lang.post.push_back(p.second);
    }

    // historical forms: a fixed share substituted, a share respelled, the rest unchanged
    std::vector<std::string> all = lang.function_words;
    all.insert(all.end(), lang.triggers.begin(), lang.triggers.end());
    all.insert(all.end(), lang.content_words.begin(), lang.content_words.end());
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_sub = static_cast<std::size_t>(cfg.substitution_rate * static_cast<double>(all.size()) + 0.5);
    const auto n_shift = static_cast<std::size_t>(cfg.spelling_shift_rate * static_cast<double>(all.size()) + 0.5);
    std::set<std::string> hist_used(used);
    std::size_t shifted = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto& w = all[order[r]];
        std::string h = w;
        if (r < n_sub) {
            do h = random_word(rng, kOldConsonants, kOldVowels, 2 + static_cast<int>(w.size() > 4));
            while (!hist_used.insert(h).second);
        } else if (shifted < n_shift && shiftable(w)) {
            h = shift_spelling(w);
            ++shifted;
        }
        lang.historical.emplace(w, h);
    }
    for (auto [from, to] : kShift)
        lang.spelling_rules.rules.push_back({std::string(1, to), std::string(1, from), RuleScope::substring});
    return lang;
}

std::vector<std::string> Language::unchanged_tokens() const {
    std::vector<std::string> out;
    for (const auto& [m, h] : historical)
        if (m == h) out.push_back(m);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> Language::to_historical(const std::vector<std::string>& modern) const {
    std::vector<std::string> out;
    out.reserve(modern.size());
    for (const auto& w : modern) {
        auto it = historical.find(w);
        out.push_back(it == historical.end() ? w : it->second);
    }
    return out;
}

namespace {

std::vector<std::size_t> topic_words(const Language& lang, std::size_t topic) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < lang.content_words.size(); ++i)
        if (lang.topic_of[i] == topic) ids.push_back(i);
    return ids;
}

std::size_t topic_count(const Language& lang) { return lang.topic_of.empty() ? 0 : lang.topic_of.back() + 1; }

void append_chunk(const Language& lang, std::size_t w, const std::string* trigger, std::vector<std::string>& out) {
    out.push_back(trigger ? *trigger : lang.function_words[lang.pre[w]]);
    out.push_back(lang.content_words[w]);
    out.push_back(lang.function_words[lang.post[w]]);
}

}  // namespace

std::vector<std::string> sentence(const Language& lang, std::mt19937_64& rng, double trigger_rate) {
    const auto topic = std::uniform_int_distribution<std::size_t>(0, topic_count(lang) - 1)(rng);
    auto words = topic_words(lang, topic);
    std::shuffle(words.begin(), words.end(), rng);
    std::bernoulli_distribution trig(trigger_rate);
    std::uniform_int_distribution<std::size_t> which(0, lang.triggers.size() - 1);
    std::vector<std::string> out;
    for (std::size_t k = 0; k < 3 && k < words.size(); ++k) {
        const bool t = trig(rng);
        const std::string* tw = t ? &lang.triggers[which(rng)] : nullptr;
        append_chunk(lang, words[k], tw, out);
    }
    return out;
}

Story story(const Language& lang, std::mt19937_64& rng, std::size_t sentences, std::size_t keywords) {
    const auto topic = std::uniform_int_distribution<std::size_t>(0, topic_count(lang) - 1)(rng);
    const auto words = topic_words(lang, topic);
    std::vector<std::size_t> chunks;
    for (std::size_t s = 0; s < sentences; ++s) {
        auto w = words;
        std::shuffle(w.begin(), w.end(), rng);
        chunks.insert(chunks.end(), w.begin(), w.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(3, w.size())));
    }
    // keyword chunks: distinct words at distinct positions
    std::vector<std::size_t> positions(chunks.size());
    std::iota(positions.begin(), positions.end(), 0);
    std::shuffle(positions.begin(), positions.end(), rng);
    std::set<std::size_t> chosen, chosen_words;
    for (auto p : positions) {
        if (chosen.size() == keywords) break;
        if (chosen_words.insert(chunks[p]).second) chosen.insert(p);
    }
    std::uniform_int_distribution<std::size_t> which(0, lang.triggers.size() - 1);
    Story st;
    for (std::size_t p = 0; p < chunks.size(); ++p) {
        const bool key = chosen.count(p) > 0;
        append_chunk(lang, chunks[p], key ? &lang.triggers[which(rng)] : nullptr, st.story);
        if (key) st.summary.push_back(lang.content_words[chunks[p]]);
    }
    return st;
}

namespace {

std::string join(const std::vector<std::string>& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + t[i];
    return s;
}

}  // namespace

CorpusFiles write_corpus(const Language& lang, const std::filesystem::path& dir, const CorpusSizes& sizes,
                         std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    CorpusFiles f{dir / "modern.txt",          dir / "historical.txt",   dir / "train.jsonl",
                  dir / "test_historical.jsonl", dir / "test_modern.jsonl", dir / "spelling_rules.tsv"};
    std::mt19937_64 rng(seed);
    auto write = [](const std::filesystem::path& p) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write '" + p.string() + "'");
        return out;
    };
    {
        auto out = write(f.modern_corpus);
        for (std::size_t i = 0; i < sizes.modern_sentences; ++i) out << join(sentence(lang, rng)) << '\n';
    }
    {
        // an independent sample, so the two spaces share structure but not text
        auto out = write(f.historical_corpus);
        for (std::size_t i = 0; i < sizes.historical_sentences; ++i)
            out << join(lang.to_historical(sentence(lang, rng))) << '\n';
    }
    {
        auto out = write(f.train_pairs);
        for (std::size_t i = 0; i < sizes.train_pairs; ++i) {
            const auto s = story(lang, rng);
            out << nlohmann::json{{"id", "train-" + std::to_string(i)}, {"story", join(s.story)}, {"summary", join(s.summary)}}
                       .dump()
                << '\n';
        }
    }
    {
        auto hist = write(f.test_historical);
        auto mod = write(f.test_modern);
        for (std::size_t i = 0; i < sizes.test_docs; ++i) {
            const auto s = story(lang, rng);
            const std::string id = "test-" + std::to_string(i);
            hist << nlohmann::json{{"id", id}, {"story", join(lang.to_historical(s.story))}, {"summary", join(s.summary)}}
                        .dump()
                 << '\n';
            mod << nlohmann::json{{"id", id}, {"story", join(s.story)}, {"summary", join(s.summary)}}.dump() << '\n';
        }
    }
    {
        auto out = write(f.spelling_rules);
        out << "# historical\tmodern\tscope\n";
        for (const auto& r : lang.spelling_rules.rules) out << r.pattern << '\t' << r.replacement << "\tsubstr\n";
    }
    return f;
}

nlohmann::json run_config(const CorpusFiles& files, std::uint64_t seed) {
    return {
        {"language_profile", "alphabetic"},
        {"mapping_mode", "IdMap"},
        {"seed", seed},
        {"output_dir", "run"},
        {"paths",
         {{"modern_corpus", files.modern_corpus.filename().string()},
          {"historical_corpus", files.historical_corpus.filename().string()},
          {"train_pairs", files.train_pairs.filename().string()},
          {"test_docs", files.test_historical.filename().string()},
          {"norm_rules", files.spelling_rules.filename().string()}}},
        {"preprocess", {{"min_sentence_units", 3}}},
        {"embeddings", {{"dim", 32}, {"epochs", 5}, {"bucket_count", 20000}}},
        {"mapping", {{"max_iter", 20}}},
        {"summarizer",
         {{"hidden_dim", 64},
          {"max_story_len", 60},
          {"max_summary_len", 6},
          {"optimizer", "adagrad"},
          {"batch_size", 8},
          {"max_steps", 2000}}},
        {"decode", {{"beam_size", 4}, {"copy_normalize", true}}},
    };
}

}  // namespace histsumm::toy
