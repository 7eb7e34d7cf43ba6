#include "histsumm/embeddings.hpp"

#include "histsumm/error.hpp"
#include "histsumm/hashing.hpp"
#include "histsumm/unicode.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace histsumm {

// Vocab ------------------------------------------------------------------------

Vocab::Vocab(std::vector<std::string> tokens, std::vector<std::uint64_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
    if (counts_.empty()) counts_.assign(tokens_.size(), 1);
    if (counts_.size() != tokens_.size()) throw ValidationError("vocab: token/count length mismatch");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], i).second) throw ValidationError("vocab: duplicate token '" + tokens_[i] + "'");
        total_ += counts_[i];
    }
}

std::int64_t Vocab::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

namespace {

struct Counter {
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::string> order;
    std::vector<std::uint64_t> counts;

    void add(const std::string& tok) {
        auto [it, inserted] = slot.try_emplace(tok, order.size());
        if (inserted) {
            order.push_back(tok);
            counts.push_back(0);
        }
        ++counts[it->second];
    }

    Vocab finish(std::uint64_t min_count, std::size_t max_size) const {
        if (order.empty()) throw EmptyInputError("build_vocab: empty corpus");
        std::vector<std::size_t> idx(order.size());
        std::iota(idx.begin(), idx.end(), 0);
        // stable sort keeps first-occurrence order among equal counts
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
        std::vector<std::string> tokens;
        std::vector<std::uint64_t> kept;
        for (std::size_t i : idx) {
            if (counts[i] < min_count || tokens.size() >= max_size) break;
            tokens.push_back(order[i]);
            kept.push_back(counts[i]);
        }
        return Vocab(std::move(tokens), std::move(kept));
    }
};

}  // namespace

Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::uint64_t min_count,
                  std::size_t max_size) {
    Counter c;
    for (const auto& s : sentences)
        for (const auto& t : s) c.add(t);
    return c.finish(min_count, max_size);
}

Vocab build_vocab(std::span<const std::string> tokens, std::uint64_t min_count, std::size_t max_size) {
    Counter c;
    for (const auto& t : tokens) c.add(t);
    return c.finish(min_count, max_size);
}

// features -------------------------------------------------------------------

FeatureKind parse_feature_kind(std::string_view name) {
    if (name == "char-ngram") return FeatureKind::char_ngram;
    if (name == "stroke-ngram") return FeatureKind::stroke_ngram;
    if (name == "none") return FeatureKind::none;
    throw ConfigError("unknown feature kind '" + std::string(name) + "' (expected char-ngram|stroke-ngram|none)");
}

std::string_view to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::char_ngram: return "char-ngram";
        case FeatureKind::stroke_ngram: return "stroke-ngram";
        case FeatureKind::none: return "none";
    }
    return "none";
}

StrokeTable load_stroke_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open stroke table '" + path.string() + "'");
    StrokeTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("stroke table: expected character<TAB>digits", lineno);
        auto ch = utf8::decode(line.substr(0, tab));
        std::string digits = line.substr(tab + 1);
        if (ch.size() != 1) throw ParseError("stroke table: first column must be one character", lineno);
        if (digits.empty() || digits.find_first_not_of("12345") != std::string::npos)
            throw ParseError("stroke table: stroke classes must be digits 1-5", lineno);
        table.try_emplace(ch[0], std::move(digits));
    }
    return table;
}

FeatureScheme FeatureScheme::char_ngrams(int n_min, int n_max, std::uint32_t buckets) {
    FeatureScheme s;
    s.kind = FeatureKind::char_ngram;
    s.n_min = n_min;
    s.n_max = n_max;
    s.bucket_count = buckets;
    return s;
}

FeatureScheme FeatureScheme::stroke_ngrams(StrokeTable table, int n_min, int n_max, std::uint32_t buckets) {
    FeatureScheme s;
    s.kind = FeatureKind::stroke_ngram;
    s.n_min = n_min;
    s.n_max = n_max;
    s.bucket_count = buckets;
    s.stroke_table = std::move(table);
    return s;
}

FeatureScheme FeatureScheme::none() {
    FeatureScheme s;
    s.kind = FeatureKind::none;
    s.bucket_count = 1;
    return s;
}

void FeatureScheme::validate() const {
    if (kind == FeatureKind::none) return;
    if (n_min < 1 || n_max < n_min) throw ConfigError("feature scheme: need 1 <= n_min <= n_max");
    if (bucket_count < 1) throw ConfigError("feature scheme: bucket_count must be >= 1");
    if (kind == FeatureKind::stroke_ngram && !stroke_table)
        throw ConfigError("feature scheme: stroke-ngram requires a stroke table");
    if (kind == FeatureKind::char_ngram && stroke_table)
        throw ConfigError("feature scheme: char-ngram does not take a stroke table");
}

std::vector<std::string> feature_ngrams(std::string_view token, const FeatureScheme& scheme,
                                        std::vector<std::string>* warnings) {
    std::vector<std::string> out;
    if (scheme.kind == FeatureKind::none) return out;

    std::u32string units;
    const auto cps = utf8::decode(token);
    if (scheme.kind == FeatureKind::char_ngram) {
        units.reserve(cps.size() + 2);
        units.push_back(U'<');
        units += cps;
        units.push_back(U'>');
    } else {
        const auto& table = *scheme.stroke_table;
        for (char32_t cp : cps) {
            auto it = table.find(cp);
            if (it == table.end()) {
                if (warnings) {
                    std::string ch;
                    utf8::append(ch, cp);
                    warnings->push_back("no stroke entry for '" + ch + "'");
                }
                continue;
            }
            for (char d : it->second) units.push_back(static_cast<char32_t>(d));
        }
    }

    std::u32string_view view(units);
    for (int n = scheme.n_min; n <= scheme.n_max; ++n) {
        const auto len = static_cast<std::size_t>(n);
        if (len > units.size()) break;
        for (std::size_t i = 0; i + len <= units.size(); ++i) {
            // the whole marked token is appended once below
            if (scheme.kind == FeatureKind::char_ngram && len == units.size()) continue;
            out.push_back(utf8::encode(view.substr(i, len)));
        }
    }
    if (scheme.kind == FeatureKind::char_ngram) out.push_back(utf8::encode(units));
    return out;
}

std::vector<std::uint32_t> featurize(std::string_view token, const FeatureScheme& scheme,
                                     std::vector<std::string>* warnings) {
    auto grams = feature_ngrams(token, scheme, warnings);
    std::vector<std::uint32_t> ids;
    ids.reserve(grams.size());
    for (const auto& g : grams) ids.push_back(fnv1a(g) % scheme.bucket_count);
    return ids;
}

// training -------------------------------------------------------------------

void SgnsConfig::validate() const {
    if (dim < 1) throw ConfigError("sgns: dim must be >= 1");
    if (window < 1) throw ConfigError("sgns: window must be >= 1");
    if (negatives < 1) throw ConfigError("sgns: negatives must be >= 1");
    if (epochs < 0) throw ConfigError("sgns: epochs must be >= 0");
    if (min_count < 1) throw ConfigError("sgns: min_count must be >= 1");
    if (!(initial_lr > 0)) throw ConfigError("sgns: initial_lr must be > 0");
    if (subsample_t < 0) throw ConfigError("sgns: subsample_t must be >= 0");
    if (threads < 1) throw ConfigError("sgns: threads must be >= 1");
}

NegativeSampler::NegativeSampler(std::span<const std::uint64_t> counts, double power) {
    if (counts.empty()) throw EmptyInputError("negative sampler: empty vocabulary");
    probs_.reserve(counts.size());
    double total = 0.0;
    for (auto c : counts) {
        probs_.push_back(std::pow(static_cast<double>(c), power));
        total += probs_.back();
    }
    for (auto& p : probs_) p /= total;
    dist_ = std::discrete_distribution<int>(probs_.begin(), probs_.end());
}

EmbeddingModel init_model(const Vocab& vocab, const FeatureScheme& scheme, int dim, std::uint64_t seed,
                          std::vector<std::string>* warnings) {
    scheme.validate();
    if (dim < 1) throw ConfigError("embedding dim must be >= 1");
    EmbeddingModel m;
    m.vocab = vocab;
    m.dim = dim;
    m.scheme = scheme;
    const auto V = static_cast<Eigen::Index>(vocab.size());
    const Eigen::Index buckets = scheme.kind == FeatureKind::none ? 0 : scheme.bucket_count;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(-1.0f / dim, 1.0f / dim);
    m.word_vectors.resize(V, dim);
    for (Eigen::Index i = 0; i < m.word_vectors.size(); ++i) m.word_vectors.data()[i] = uni(rng);
    m.feature_vectors.resize(buckets, dim);
    for (Eigen::Index i = 0; i < m.feature_vectors.size(); ++i) m.feature_vectors.data()[i] = uni(rng);
    m.context_vectors = MatrixF::Zero(V, dim);
    m.token_features.reserve(vocab.size());
    for (const auto& tok : vocab.tokens()) m.token_features.push_back(featurize(tok, scheme, warnings));
    return m;
}

namespace {

struct EncodedCorpus {
    std::vector<std::vector<int>> sentences;
    std::uint64_t tokens = 0;
    std::uint64_t skipped = 0;
};

EncodedCorpus encode_corpus(const std::vector<std::vector<std::string>>& corpus, const Vocab& vocab) {
    EncodedCorpus enc;
    enc.sentences.reserve(corpus.size());
    for (const auto& s : corpus) {
        std::vector<int> ids;
        ids.reserve(s.size());
        for (const auto& t : s) {
            auto id = vocab.id_of(t);
            if (id < 0) {
                ++enc.skipped;
                continue;
            }
            ids.push_back(static_cast<int>(id));
        }
        enc.tokens += ids.size();
        enc.sentences.push_back(std::move(ids));
    }
    return enc;
}

struct WorkerTotals {
    double loss = 0.0;
    std::uint64_t pairs = 0;
};

class SgnsWorker {
public:
    SgnsWorker(EmbeddingModel& model, const SgnsConfig& cfg, const NegativeSampler& sampler,
               std::vector<double> keep_prob, std::atomic<std::uint64_t>& progress, std::uint64_t total_work,
               std::uint64_t seed)
        : model_(model), cfg_(cfg), sampler_(sampler), keep_prob_(std::move(keep_prob)), progress_(progress),
          total_work_(total_work), rng_(seed), targets_(static_cast<std::size_t>(cfg.negatives) + 1) {}

    WorkerTotals run(const std::vector<std::vector<int>>& sentences, std::size_t begin, std::size_t end) {
        WorkerTotals totals;
        std::vector<int> kept;
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (std::size_t s = begin; s < end; ++s) {
            const auto& sent = sentences[s];
            kept.clear();
            for (int id : sent)
                if (keep_prob_[static_cast<std::size_t>(id)] >= 1.0 || uni(rng_) < keep_prob_[static_cast<std::size_t>(id)])
                    kept.push_back(id);
            const double done = static_cast<double>(progress_.fetch_add(sent.size(), std::memory_order_relaxed));
            const double lr = cfg_.initial_lr * std::max(1e-4, 1.0 - done / static_cast<double>(total_work_));
            train_sentence(kept, static_cast<float>(lr), totals);
        }
        return totals;
    }

private:
    void train_sentence(const std::vector<int>& ids, float lr, WorkerTotals& totals) {
        std::uniform_int_distribution<int> shrink(0, cfg_.window - 1);
        const int n = static_cast<int>(ids.size());
        for (int pos = 0; pos < n; ++pos) {
            const int w = cfg_.window - shrink(rng_);
            const int center = ids[static_cast<std::size_t>(pos)];
            const auto& feats = model_.token_features[static_cast<std::size_t>(center)];
            for (int c = std::max(0, pos - w); c <= std::min(n - 1, pos + w); ++c) {
                if (c == pos) continue;
                targets_[0] = ids[static_cast<std::size_t>(c)];
                for (int k = 1; k <= cfg_.negatives; ++k) {
                    int neg = sampler_.draw(rng_);
                    for (int retry = 0; neg == targets_[0] && retry < 8; ++retry) neg = sampler_.draw(rng_);
                    targets_[static_cast<std::size_t>(k)] = neg;
                }
                totals.loss += sgns_step<float>(model_.word_vectors, model_.feature_vectors, model_.context_vectors,
                                                center, feats, targets_, lr, grad_u_, grad_t_);
                ++totals.pairs;
            }
        }
    }

    EmbeddingModel& model_;
    const SgnsConfig& cfg_;
    const NegativeSampler& sampler_;
    std::vector<double> keep_prob_;
    std::atomic<std::uint64_t>& progress_;
    std::uint64_t total_work_;
    std::mt19937_64 rng_;
    std::vector<int> targets_;
    RowVector<float> grad_u_;
    RowMatrix<float> grad_t_;
};

}  // namespace

void train_sgns_inplace(EmbeddingModel& model, const std::vector<std::vector<std::string>>& corpus,
                        const SgnsConfig& cfg, SgnsReport* report) {
    cfg.validate();
    if (model.vocab.empty()) throw EmptyInputError("train_sgns: empty vocabulary");
    if (cfg.dim != model.dim) throw ConfigError("train_sgns: config dim does not match model dim");
    const auto enc = encode_corpus(corpus, model.vocab);
    if (report) report->skipped_tokens += enc.skipped;

    std::vector<double> keep(model.vocab.size(), 1.0);
    if (cfg.subsample_t > 0) {
        const double total = static_cast<double>(model.vocab.total_count());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            const double f = static_cast<double>(model.vocab.count(i)) / total;
            keep[i] = (std::sqrt(f / cfg.subsample_t) + 1.0) * cfg.subsample_t / f;
        }
    }
    NegativeSampler sampler(model.vocab.counts());
    std::atomic<std::uint64_t> progress{0};
    const std::uint64_t total_work = std::max<std::uint64_t>(1, enc.tokens * static_cast<std::uint64_t>(cfg.epochs));

    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads),
                                                        std::max<std::size_t>(1, enc.sentences.size()));
    std::vector<SgnsWorker> workers;
    workers.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t)
        workers.emplace_back(model, cfg, sampler, keep, progress, total_work, cfg.seed + 7919 * t);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        WorkerTotals sum;
        if (n_threads == 1) {
            sum = workers[0].run(enc.sentences, 0, enc.sentences.size());
        } else {
            std::vector<WorkerTotals> partial(n_threads);
            std::vector<std::thread> pool;
            const std::size_t chunk = (enc.sentences.size() + n_threads - 1) / n_threads;
            for (std::size_t t = 0; t < n_threads; ++t) {
                const std::size_t b = std::min(enc.sentences.size(), t * chunk);
                const std::size_t e = std::min(enc.sentences.size(), b + chunk);
                pool.emplace_back([&, t, b, e] { partial[t] = workers[t].run(enc.sentences, b, e); });
            }
            for (auto& th : pool) th.join();
            for (const auto& p : partial) {
                sum.loss += p.loss;
                sum.pairs += p.pairs;
            }
        }
        if (report) {
            report->epoch_loss.push_back(sum.pairs ? sum.loss / static_cast<double>(sum.pairs) : 0.0);
            report->trained_pairs += sum.pairs;
        }
    }
}

EmbeddingModel train_sgns(const std::vector<std::vector<std::string>>& corpus, const Vocab& vocab,
                          const FeatureScheme& scheme, const SgnsConfig& cfg, SgnsReport* report) {
    cfg.validate();
    EmbeddingModel model = init_model(vocab, scheme, cfg.dim, cfg.seed, report ? &report->warnings : nullptr);
    train_sgns_inplace(model, corpus, cfg, report);
    return model;
}

ComposedVector compose(const EmbeddingModel& model, std::string_view token) {
    ComposedVector out;
    out.values = Eigen::VectorXf::Zero(model.dim);
    const auto id = model.vocab.id_of(token);
    std::vector<std::uint32_t> feats;
    if (id >= 0) {
        feats = model.token_features[static_cast<std::size_t>(id)];
        out.values = model.word_vectors.row(id).transpose();
    } else {
        out.oov = true;
        feats = featurize(token, model.scheme);
    }
    if (!feats.empty()) {
        Eigen::VectorXf mean = Eigen::VectorXf::Zero(model.dim);
        for (auto f : feats) mean += model.feature_vectors.row(f).transpose();
        out.values += mean / static_cast<float>(feats.size());
        if (id < 0) out.oov = false;
    }
    return out;
}

// tables -----------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Eigen::MatrixXd vectors)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)) {
    if (static_cast<Eigen::Index>(tokens_.size()) != vectors_.rows())
        throw ValidationError("embedding table: token count does not match row count");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (!index_.emplace(tokens_[i], i).second)
            throw ValidationError("embedding table: duplicate token '" + tokens_[i] + "'");
}

std::int64_t EmbeddingTable::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

EmbeddingTable to_table(const EmbeddingModel& model) {
    Eigen::MatrixXd vecs(static_cast<Eigen::Index>(model.vocab.size()), model.dim);
    for (std::size_t i = 0; i < model.vocab.size(); ++i)
        vecs.row(static_cast<Eigen::Index>(i)) = compose(model, model.vocab.token(i)).values.cast<double>().transpose();
    return EmbeddingTable(model.vocab.tokens(), std::move(vecs));
}

namespace {

template <typename T>
void append_number(std::string& line, T value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    line.push_back(' ');
    line.append(buf, ptr);
}

}  // namespace

void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << model.vocab.size() << ' ' << model.dim << '\n';
    std::string line;
    for (std::size_t i = 0; i < model.vocab.size(); ++i) {
        const auto v = compose(model, model.vocab.token(i)).values;
        line = model.vocab.token(i);
        for (Eigen::Index k = 0; k < v.size(); ++k) append_number(line, v[k]);
        line.push_back('\n');
        out << line;
    }
}

void save_table(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << table.size() << ' ' << table.dim() << '\n';
    std::string line;
    for (std::size_t i = 0; i < table.size(); ++i) {
        line = table.tokens()[i];
        for (Eigen::Index k = 0; k < table.vectors().cols(); ++k)
            append_number(line, table.vectors()(static_cast<Eigen::Index>(i), k));
        line.push_back('\n');
        out << line;
    }
}

EmbeddingTable parse_embeddings(std::string_view content) {
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    auto fields = [](const std::string& l) {
        std::vector<std::string_view> out;
        std::string_view v(l);
        std::size_t i = 0;
        while (i < v.size()) {
            while (i < v.size() && (v[i] == ' ' || v[i] == '\t')) ++i;
            std::size_t j = i;
            while (j < v.size() && v[j] != ' ' && v[j] != '\t') ++j;
            if (j > i) out.push_back(v.substr(i, j - i));
            i = j;
        }
        return out;
    };
    auto to_long = [&](std::string_view s) {
        long long x = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
        if (ec != std::errc() || p != s.data() + s.size() || x < 0) throw ParseError("bad header value", lineno);
        return x;
    };

    if (!std::getline(in, line)) return {};
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = fields(line);
    if (header.size() != 2) throw ParseError("embedding header must be 'V dim'", lineno);
    const auto V = to_long(header[0]);
    const auto dim = to_long(header[1]);

    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(V));
    Eigen::MatrixXd vecs(V, dim);
    while (static_cast<long long>(tokens.size()) < V && std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto f = fields(line);
        if (static_cast<long long>(f.size()) != dim + 1)
            throw ParseError("expected token plus " + std::to_string(dim) + " values, got " +
                                 std::to_string(f.empty() ? 0 : f.size() - 1),
                             lineno);
        const auto row = static_cast<Eigen::Index>(tokens.size());
        for (long long k = 0; k < dim; ++k) {
            double x = 0;
            auto s = f[static_cast<std::size_t>(k + 1)];
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
            if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("bad number '" + std::string(s) + "'", lineno);
            vecs(row, k) = x;
        }
        tokens.emplace_back(f[0]);
    }
    if (static_cast<long long>(tokens.size()) != V)
        throw ParseError("header announces " + std::to_string(V) + " rows, file has " + std::to_string(tokens.size()));
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw ParseError("rows beyond the announced count", lineno);
    }
    return EmbeddingTable(std::move(tokens), std::move(vecs));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_embeddings(ss.str());
}

}  // namespace histsumm
