// Acceptance checks: one PASS/FAIL/SKIP line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "histsumm/corpus.hpp"
#include "histsumm/eval.hpp"
#include "histsumm/hashing.hpp"
#include "histsumm/mapping.hpp"
#include "histsumm/pipeline.hpp"
#include "histsumm/summarizer.hpp"
#include "histsumm/synthetic.hpp"
#include "test_util.hpp"

using namespace histsumm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::fail;
    std::string detail;
    std::string digest;  // artifacts fingerprint for the determinism rerun
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

template <typename T>
void hash_bytes(std::string& acc, const T* data, std::size_t n) {
    acc.append(reinterpret_cast<const char*>(data), n * sizeof(T));
}

SeedDictionary full_dictionary(Eigen::Index n) {
    SeedDictionary d;
    for (Eigen::Index i = 0; i < n; ++i) d.pairs.emplace_back(i, i);
    return d;
}

// 1 ---------------------------------------------------------------------------

Outcome procrustes_recovery() {
    std::mt19937_64 rng(1);
    double worst = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int inst = 0; inst < 20; ++inst) {
        const auto R = testutil::random_orthogonal(20, rng);
        const auto X = testutil::gaussian_matrix(200, 20, rng);
        const auto W = procrustes(X, X * R, full_dictionary(200));
        worst = std::max(worst, (W - R).norm());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-6 && secs < 5 ? Verdict::pass : Verdict::fail,
            "max ||W-R||_F = " + fmt("%.2e", worst) + " over 20 instances in " + fmt("%.3f", secs) + " s"};
}

// 2 ---------------------------------------------------------------------------

Outcome procrustes_optimality() {
    std::mt19937_64 rng(2);
    int failures = 0;
    double min_margin = 1e300;
    for (int inst = 0; inst < 50; ++inst) {
        const int d = 1 + inst % 3;
        const int pairs = 1 + (inst / 3) % 6;
        const auto X = testutil::gaussian_matrix(pairs, d, rng), Y = testutil::gaussian_matrix(pairs, d, rng);
        const auto dict = full_dictionary(pairs);
        const double best = procrustes_objective(X, Y, dict, procrustes(X, Y, dict));
        double brute = -1e300;
        for (int s = 0; s < 100'000; ++s)
            brute = std::max(brute, procrustes_objective(X, Y, dict, testutil::random_orthogonal(d, rng)));
        min_margin = std::min(min_margin, best - brute);
        failures += best < brute - 1e-12;
    }
    return {failures == 0 ? Verdict::pass : Verdict::fail,
            std::to_string(failures) + "/50 instances beaten; smallest margin " + fmt("%.3e", min_margin)};
}

// 3 ---------------------------------------------------------------------------

struct Bilingual {
    EmbeddingTable source, target;
    std::vector<std::pair<std::int64_t, std::int64_t>> held_out;  // (source row, target row) without the seed
    std::vector<std::pair<std::int64_t, std::int64_t>> all;
};

// Y = X R + noise with the target rows shuffled; the first `shared` source rows carry the
// same token string on both sides, every other token is spelled differently.
Bilingual make_bilingual(std::uint64_t seed, int V, int dim, double sigma, int shared) {
    std::mt19937_64 rng(seed);
    const auto X = testutil::gaussian_matrix(V, dim, rng);
    const auto R = testutil::random_orthogonal(dim, rng);
    Eigen::MatrixXd Y = X * R;
    if (sigma > 0) Y += testutil::gaussian_matrix(V, dim, rng, sigma);
    std::vector<int> perm(static_cast<std::size_t>(V));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd Yp(V, dim);
    std::vector<std::string> src(static_cast<std::size_t>(V)), tgt(static_cast<std::size_t>(V));
    Bilingual b;
    for (int i = 0; i < V; ++i) {
        const auto j = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
        Yp.row(static_cast<Eigen::Index>(j)) = Y.row(i);
        src[static_cast<std::size_t>(i)] = i < shared ? "w" + std::to_string(i) : "s" + std::to_string(i);
        tgt[j] = i < shared ? "w" + std::to_string(i) : "t" + std::to_string(i);
        b.all.emplace_back(i, static_cast<std::int64_t>(j));
        if (i >= shared) b.held_out.emplace_back(i, static_cast<std::int64_t>(j));
    }
    b.source = EmbeddingTable(src, X);
    b.target = EmbeddingTable(tgt, Yp);
    return b;
}

Outcome synthetic_induction() {
    std::string digest;
    std::ostringstream detail;
    bool ok = true;
    {
        const auto t0 = std::chrono::steady_clock::now();
        const auto b = make_bilingual(3, 1000, 50, 0.01, 100);
        AlignConfig cfg;
        cfg.mode = MappingMode::identical_seed;
        const auto a = align(b.source, b.target, cfg);
        const double p1 = precision_at_1(a.source.matrix, a.target.matrix, a.result.transform, b.held_out,
                                         cfg.self_learning.csls.k);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ok = ok && p1 >= 0.90 && secs < 120;
        detail << "IdMap P@1 " << fmt("%.4f", p1) << " (seed " << a.result.seed_size << ", "
               << a.result.iterations << " it, " << fmt("%.1f", secs) << " s)";
        hash_bytes(digest, a.result.transform.data(), static_cast<std::size_t>(a.result.transform.size()));
        for (auto [i, j] : a.result.final_dictionary.pairs) digest += std::to_string(i) + ":" + std::to_string(j) + ";";
    }
    {
        const auto t0 = std::chrono::steady_clock::now();
        const auto b = make_bilingual(4, 1000, 50, 0.0, 0);
        AlignConfig cfg;
        cfg.mode = MappingMode::unsupervised;
        const auto a = align(b.source, b.target, cfg);
        const double p1 = precision_at_1(a.source.matrix, a.target.matrix, a.result.transform, b.all,
                                         cfg.self_learning.csls.k);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ok = ok && p1 >= 0.95 && secs < 120;
        detail << "; UspMap P@1 " << fmt("%.4f", p1) << " (init " << a.result.seed_size << " pairs, "
               << fmt("%.1f", secs) << " s)";
        hash_bytes(digest, a.result.transform.data(), static_cast<std::size_t>(a.result.transform.size()));
        for (auto [i, j] : a.result.final_dictionary.pairs) digest += std::to_string(i) + ":" + std::to_string(j) + ";";
    }
    return {ok ? Verdict::pass : Verdict::fail, detail.str(), sha256_hex(digest)};
}

// 4 ---------------------------------------------------------------------------

Outcome gradient_suites() {
    std::string digest;
    double worst_sgns = 0, worst_summ = 0;
    int failed_sgns = 0, failed_summ = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = testutil::sgns_gradient_check(1000 + seed);
        bool bad = false;
        for (double e : g.errors) {
            worst_sgns = std::max(worst_sgns, e);
            bad = bad || !(e < 1e-4);
        }
        failed_sgns += bad;
        hash_bytes(digest, g.analytic.data(), g.analytic.size());
    }
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = testutil::summarizer_gradient_check(2000 + seed);
        bool bad = false;
        for (double e : g.errors) {
            worst_summ = std::max(worst_summ, e);
            bad = bad || !(e < 1e-3);
        }
        failed_summ += bad;
        hash_bytes(digest, g.analytic.data(), g.analytic.size());
    }
    return {failed_sgns == 0 && failed_summ == 0 ? Verdict::pass : Verdict::fail,
            "SGNS worst rel err " + fmt("%.2e", worst_sgns) + " (" + std::to_string(failed_sgns) +
                "/100 seeds failing); summariser worst " + fmt("%.2e", worst_summ) + " (" +
                std::to_string(failed_summ) + "/100 failing)",
            sha256_hex(digest)};
}

// 5 ---------------------------------------------------------------------------

std::vector<std::string> numbered(const std::string& prefix, int n) {
    std::vector<std::string> t;
    for (int i = 0; i < n; ++i) t.push_back(prefix + std::to_string(i));
    return t;
}

Outcome frozen_and_swap() {
    const auto toks = numbered("t", 40);
    SummarizerConfig cfg;
    cfg.emb_dim = 16;
    cfg.hidden_dim = 32;
    cfg.max_steps = 1000;
    cfg.batch_size = 4;
    cfg.max_summary_len = 6;
    cfg.seed = 5;
    auto m = build_model(cfg, testutil::random_table(toks, 16, 5), toks);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> pick(0, toks.size() - 1);
    std::vector<TokenPair> pairs;
    for (int i = 0; i < 100; ++i) {
        std::vector<std::string> story;
        for (int j = 0; j < 8; ++j) story.push_back(toks[pick(rng)]);
        pairs.push_back({story, {story[0], story[3]}});
    }
    const Eigen::MatrixXd before = m.params.enc_embedding;
    const auto rep = train(m, pairs);
    const bool frozen = rep.steps == 1000 && m.params.enc_embedding == before;

    auto checksums = parameter_checksums(m);
    auto swapped = m;
    swap_encoder_embeddings(swapped, testutil::random_table(numbered("h", 55), 16, 6));
    const auto after = parameter_checksums(swapped);
    int changed = 0;
    for (const auto& [name, sum] : checksums)
        if (name != "enc_embedding") changed += after.at(name) != sum;

    auto identity = m;
    swap_encoder_embeddings(identity, EmbeddingTable(m.encoder_tokens, m.params.enc_embedding));
    int differing = 0;
    for (const auto& [story, _] : pairs) {
        const auto a = greedy_decode(m, story), b = greedy_decode(identity, story);
        differing += a.tokens != b.tokens || a.score != b.score;
    }
    return {frozen && changed == 0 && differing == 0 ? Verdict::pass : Verdict::fail,
            std::string("encoder block ") + (frozen ? "bitwise unchanged" : "CHANGED") + " after " +
                std::to_string(rep.steps) + " steps; " + std::to_string(changed) +
                " non-encoder checksums changed by swap; " + std::to_string(differing) +
                "/100 identity-swap decodes differ"};
}

// 6 ---------------------------------------------------------------------------

Outcome pointer_normalisation() {
    std::mt19937_64 rng(6);
    double worst = 0;
    int copy_failures = 0, copy_trials = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::uniform_int_distribution<int> small(2, 6);
        SummarizerConfig cfg;
        cfg.emb_dim = small(rng);
        cfg.hidden_dim = small(rng);
        cfg.coverage_enabled = trial % 2 == 1;
        cfg.max_summary_len = 6;
        cfg.seed = static_cast<std::uint64_t>(trial);
        const auto enc = numbered("e", small(rng) + 2);
        const auto dec = numbered("e", small(rng));  // decoder shares a prefix of the encoder tokens
        auto m = build_model(cfg, testutil::random_table(enc, cfg.emb_dim, rng()), dec);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        auto blocks = m.params.blocks();
        for (std::size_t b = 1; b < blocks.size(); ++b)
            for (Eigen::Index i = 0; i < blocks[b].flat().size(); ++i) blocks[b].flat()[i] = uni(rng);

        std::vector<std::string> story;
        const int len = std::uniform_int_distribution<int>(1, 8)(rng);
        for (int i = 0; i < len; ++i) {
            const int r = std::uniform_int_distribution<int>(0, 11)(rng);
            story.push_back(r < 9 ? "e" + std::to_string(r) : "oov" + std::to_string(r));  // some source-only
        }
        // the greedy decode's own steps, replayed under teacher forcing, are exactly the decode-time distributions
        auto out = greedy_decode(m, story).tokens;
        if (out.empty()) out = {"e0"};
        for (const auto& d : teacher_forced_distributions(m, encode_example(m, story, out)))
            worst = std::max(worst, std::abs(d.probs.sum() - 1.0));
        const std::vector<std::string> random_summary{story[0], "e1", "zz"};
        for (const auto& d : teacher_forced_distributions(m, encode_example(m, story, random_summary)))
            worst = std::max(worst, std::abs(d.probs.sum() - 1.0));

        if (trial % 10 == 0) {
            ++copy_trials;
            m.pgen_override = 0.0;
            const std::vector<std::string> src{"sourceonly" + std::to_string(trial)};
            const auto r = greedy_decode(m, src);
            const bool ok = !r.tokens.empty() && r.tokens[0] == src[0] && !r.copied_positions.empty() &&
                            r.copied_positions[0] == std::pair<int, int>{0, 0};
            copy_failures += !ok;
        }
    }
    return {worst <= 1e-6 && copy_failures == 0 ? Verdict::pass : Verdict::fail,
            "max |sum - 1| = " + fmt("%.2e", worst) + " over 1000 models; source-only token copied in " +
                std::to_string(copy_trials - copy_failures) + "/" + std::to_string(copy_trials) + " forced-copy runs"};
}

// 7 ---------------------------------------------------------------------------

Outcome rouge_fixtures() {
    int bad = 0;
    auto expect = [&](double got, double want) { bad += std::abs(got - want) > 1e-12; };
    const auto a = rouge_n("a b", "b c", 1, Unit::word);
    expect(a.precision, 0.5), expect(a.recall, 0.5), expect(a.f1, 0.5);
    const auto c = rouge_n("甲乙", "甲丙", 1, Unit::character);
    expect(c.precision, 0.5), expect(c.recall, 0.5), expect(c.f1, 0.5);
    const auto l = rouge_l("a c b", "a b c", Unit::word);
    expect(l.precision, 2.0 / 3), expect(l.recall, 2.0 / 3), expect(l.f1, 2.0 / 3);
    expect(rouge_n("a b c", "a b c", 1, Unit::word).f1, 1.0);
    expect(rouge_l("a b", "c d", Unit::word).f1, 0.0);
    const auto rep = evaluate_set({{"d1", "the cat sat on the mat"}, {"d2", "a a a"}, {"d3", "x y"}},
                                  {{"d1", "the cat lay on the mat"}, {"d2", "a b"}, {"d3", "y x z"}}, Unit::word);
    expect(rep.mean_r1, (5.0 / 6 + 0.4 + 0.8) / 3);
    expect(rep.mean_r2, 0.2);
    expect(rep.mean_rl, (5.0 / 6 + 0.8) / 3);
    bad += format_percent(evaluate_set({{"a", "x"}, {"b", "y"}}, {{"a", "x"}, {"b", "z"}}, Unit::word).mean_r1) != "50.00";

    static const std::vector<std::string> alphabet{"a", "b", "c", "甲", "乙", "丙", "ä"};
    std::mt19937_64 rng(7);
    auto draw = [&] {
        std::string s;
        const int n = std::uniform_int_distribution<int>(0, 12)(rng);
        for (int i = 0; i < n; ++i) s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
        return s;
    };
    auto space_out = [](const std::string& s) {
        std::string out;
        for (const auto& ch : tokenize(s, Unit::character)) out += (out.empty() ? "" : " ") + ch;
        return out;
    };
    int meta_bad = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto x = draw(), y = draw();
        for (int n : {1, 2}) {
            const auto ch = rouge_n(x, y, n, Unit::character), w = rouge_n(space_out(x), space_out(y), n, Unit::word);
            meta_bad += ch.f1 != w.f1 || ch.precision != w.precision || ch.recall != w.recall;
        }
        meta_bad += rouge_l(x, y, Unit::character).f1 != rouge_l(space_out(x), space_out(y), Unit::word).f1;
    }
    return {bad == 0 && meta_bad == 0 ? Verdict::pass : Verdict::fail,
            std::to_string(bad) + " fixture mismatches; " + std::to_string(meta_bad) +
                " metamorphic violations over 1000 random string pairs"};
}

// 8 ---------------------------------------------------------------------------

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
    return out;
}

struct ScoredSet {
    std::vector<std::pair<std::string, std::vector<std::string>>> stories;  // id, tokens
    std::map<std::string, std::string> references;
};

double mean_rouge1(const SummarizerModel& model, const ScoredSet& set, const DecodeOptions& opts) {
    std::map<std::string, std::string> cand;
    for (const auto& [id, toks] : set.stories) {
        const auto r = decode(model, toks, opts);
        std::string s;
        for (const auto& t : r.tokens) s += (s.empty() ? "" : " ") + t;
        cand[id] = s;
    }
    return evaluate_set(cand, set.references, Unit::word).mean_r1;
}

ScoredSet read_set(const fs::path& jsonl, CleanProfile profile) {
    ScoredSet s;
    for (const auto& d : load_documents(jsonl, CorpusFormat::jsonl)) {
        s.stories.emplace_back(d.id, split_tokens(clean_text(d.story, profile)));
        s.references[d.id] = clean_text(d.summary.value_or(""), CleanProfile::alphabetic_modern);
    }
    return s;
}

Outcome end_to_end(const fs::path& work, const std::string& run_name) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path corpus = work / "toy";
    const auto lang = toy::make_language();
    std::ostringstream detail;
    detail << "vocabulary " << lang.vocabulary_size() << ", " << lang.unchanged_tokens().size() << " unchanged tokens; ";
    const auto files = toy::write_corpus(lang, corpus, toy::CorpusSizes{}, 8);
    json doc = toy::run_config(files, 8);
    doc["output_dir"] = run_name;
    const auto cfg = parse_pipeline_config(doc, corpus);
    check_paths(cfg);
    std::ostringstream log;
    const int code = run_pipeline(cfg, {std::begin(kAllStages), std::end(kAllStages)}, log);
    if (code != kExitOk) return {Verdict::fail, "pipeline exit " + std::to_string(code) + ": " + log.str()};

    const fs::path run = cfg.output_dir;
    DecodeOptions opts;
    opts.beam_size = cfg.decode_beam_size;
    const auto rules = NormRuleSet::load(cfg.paths.norm_rules);
    opts.copy_norm = &rules;

    const auto modern_model = load_checkpoint(run / "summarizer/model.ckpt");
    const auto swapped = load_checkpoint(run / "summarizer/swapped.ckpt");
    const double modern = mean_rouge1(modern_model, read_set(files.test_modern, CleanProfile::alphabetic_modern), opts);
    auto hist_set = read_set(run / "preprocess/test_docs.jsonl", CleanProfile::alphabetic_historical);
    hist_set.references = load_id_text(run / "preprocess/references.jsonl");
    const double historical = mean_rouge1(swapped, hist_set, opts);

    std::ifstream rf(run / "eval/report.json");
    const auto reported = json::parse(rf).at("rouge1").get<std::string>();

    // control: the swapped model with random unit vectors in place of the aligned historical table
    auto control = swapped;
    std::mt19937_64 rng(88);
    Eigen::MatrixXd random = testutil::gaussian_matrix(control.params.enc_embedding.rows(),
                                                       control.params.enc_embedding.cols(), rng);
    random.rowwise().normalize();
    swap_encoder_embeddings(control, EmbeddingTable(control.encoder_tokens, random));
    const double random_r1 = mean_rouge1(control, hist_set, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool consistent = reported == format_percent(historical);
    const bool ok = consistent && historical >= 0.8 * modern && historical >= 2.0 * random_r1 && secs < 600;
    detail << "ROUGE-1 historical " << format_percent(historical) << " (pipeline report " << reported
           << "), modern input " << format_percent(modern) << ", random-vector control " << format_percent(random_r1)
           << "; ratio to modern " << fmt("%.3f", modern > 0 ? historical / modern : 0.0) << " (>= 0.8), ratio to control "
           << fmt("%.2f", random_r1 > 0 ? historical / random_r1 : INFINITY) << " (>= 2); " << fmt("%.1f", secs) << " s";

    std::string digest;
    for (const auto& [rel, sha] : tree_hashes(run)) digest += rel + "=" + sha + "\n";
    return {ok ? Verdict::pass : Verdict::fail, detail.str(), sha256_hex(digest)};
}

// 9 ---------------------------------------------------------------------------

Outcome dataset_stats(const fs::path& de, const fs::path& zh) {
    struct Row {
        fs::path path;
        Unit unit;
        const char *story, *summ, *cr;
    };
    const Row rows[] = {{de, Unit::word, "268.1", "18.1", "6.8"}, {zh, Unit::character, "114.5", "28.2", "24.6"}};
    std::ostringstream detail;
    bool any = false, ok = true;
    for (const auto& r : rows) {
        if (r.path.empty() || !fs::is_regular_file(r.path)) {
            detail << (r.unit == Unit::word ? "German" : "Chinese") << " set absent; ";
            continue;
        }
        any = true;
        const auto s = compute_stats(load_documents(r.path, CorpusFormat::jsonl), r.unit);
        const auto got_story = fmt("%.1f", s.mean_story_len), got_summ = fmt("%.1f", s.mean_summ_len),
                   got_cr = fmt("%.1f", s.compression_rate * 100);
        ok = ok && got_story == r.story && got_summ == r.summ && got_cr == r.cr;
        detail << r.path.filename().string() << ": " << got_story << "/" << got_summ << "/" << got_cr << "% (want "
               << r.story << "/" << r.summ << "/" << r.cr << "%); ";
    }
    if (!any) return {Verdict::skip, detail.str() + "pass --dataset-de/--dataset-zh to check"};
    return {ok ? Verdict::pass : Verdict::fail, detail.str()};
}

void report(int n, const Outcome& o, double secs) {
    const char* v = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    std::cout << "criterion " << n << ": " << v << "  " << o.detail << "  [" << fmt("%.1f", secs) << " s]" << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string work = (fs::temp_directory_path() / "histsumm_acceptance").string();
    std::string de, zh;
    std::vector<int> only;
    app.add_option("--work-dir", work, "scratch directory for the end-to-end runs")->capture_default_str();
    app.add_option("--dataset-de", de, "historical German JSONL (story, summary)");
    app.add_option("--dataset-zh", zh, "historical Chinese JSONL (story, summary)");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);

    fs::remove_all(work);
    fs::create_directories(work);
    auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

    int failures = 0;
    std::map<int, std::string> digests;
    auto run = [&](int n, const std::function<Outcome()>& fn) {
        if (!wanted(n)) return;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {Verdict::fail, std::string("exception: ") + e.what()};
        }
        report(n, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        failures += o.verdict == Verdict::fail;
        digests[n] = o.digest;
    };

    run(1, procrustes_recovery);
    run(2, procrustes_optimality);
    run(3, synthetic_induction);
    run(4, gradient_suites);
    run(5, frozen_and_swap);
    run(6, pointer_normalisation);
    run(7, rouge_fixtures);
    run(8, [&] { return end_to_end(work, "run_a"); });
    run(9, [&] { return dataset_stats(de, zh); });
    run(10, [&] {
        std::ostringstream detail;
        bool ok = true;
        struct Rerun {
            int n;
            std::function<Outcome()> first, second;
        };
        const Rerun reruns[] = {{3, synthetic_induction, synthetic_induction},
                                {4, gradient_suites, gradient_suites},
                                {8, [&] { return end_to_end(work, "run_a"); }, [&] { return end_to_end(work, "run_b"); }}};
        for (const auto& r : reruns) {
            const auto first = digests.count(r.n) ? digests[r.n] : r.first().digest;
            const auto second = r.second().digest;
            const bool same = !first.empty() && first == second;
            ok = ok && same;
            detail << "criterion " << r.n << (same ? " identical" : " DIFFERS") << " (" << second.substr(0, 12) << "); ";
        }
        if (ok) {
            const auto a = work + "/toy/run_a/manifest.json", b = work + "/toy/run_b/manifest.json";
            const bool manifests = fs::exists(a) && fs::exists(b) && sha256_file(a) == sha256_file(b);
            ok = manifests;
            detail << "manifests " << (manifests ? "identical" : "DIFFER");
        }
        return Outcome{ok ? Verdict::pass : Verdict::fail, detail.str()};
    });
    return failures == 0 ? 0 : 1;
}
