#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace histsumm {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;
using MatrixF = RowMatrix<float>;

/// Dense token index, ordered by descending corpus frequency.
class Vocab {
public:
    Vocab() = default;
    Vocab(std::vector<std::string> tokens, std::vector<std::uint64_t> counts);

    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    const std::string& token(std::size_t i) const { return tokens_[i]; }
    std::uint64_t count(std::size_t i) const { return counts_[i]; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
    std::uint64_t total_count() const noexcept { return total_; }

    /// -1 when absent.
    std::int64_t id_of(std::string_view token) const;
    bool contains(std::string_view token) const { return id_of(token) >= 0; }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t total_ = 0;
};

inline constexpr std::size_t kDefaultMaxVocab = 50'000;

/// Tokens with count >= min_count, truncated to the max_size most frequent.
/// Ties are broken by first occurrence in the stream.
Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::uint64_t min_count,
                  std::size_t max_size = kDefaultMaxVocab);
Vocab build_vocab(std::span<const std::string> tokens, std::uint64_t min_count,
                  std::size_t max_size = kDefaultMaxVocab);

// features -------------------------------------------------------------------

enum class FeatureKind { char_ngram, stroke_ngram, none };

FeatureKind parse_feature_kind(std::string_view name);
std::string_view to_string(FeatureKind kind);

/// Character -> stroke-class digit string ('1'..'5').
using StrokeTable = std::unordered_map<char32_t, std::string>;

/// TSV: character, stroke digits. Digits outside 1..5 are rejected.
StrokeTable load_stroke_table(const std::filesystem::path& path);

struct FeatureScheme {
    FeatureKind kind = FeatureKind::char_ngram;
    int n_min = 3;
    int n_max = 6;
    std::uint32_t bucket_count = 2'000'000;
    std::optional<StrokeTable> stroke_table;

    static FeatureScheme char_ngrams(int n_min = 3, int n_max = 6, std::uint32_t buckets = 2'000'000);
    static FeatureScheme stroke_ngrams(StrokeTable table, int n_min = 3, int n_max = 12,
                                       std::uint32_t buckets = 2'000'000);
    static FeatureScheme none();

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

/// The feature strings before hashing. Characters missing from the stroke table
/// contribute nothing and are reported through `warnings` when given.
std::vector<std::string> feature_ngrams(std::string_view token, const FeatureScheme& scheme,
                                        std::vector<std::string>* warnings = nullptr);

/// Hashed feature ids (FNV-1a modulo bucket_count).
std::vector<std::uint32_t> featurize(std::string_view token, const FeatureScheme& scheme,
                                     std::vector<std::string>* warnings = nullptr);

// model ---------------------------------------------------------------------

struct SgnsConfig {
    int dim = 100;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double initial_lr = 0.05;
    std::uint64_t min_count = 1;
    double subsample_t = 1e-4;
    std::uint64_t seed = 1;
    /// 1 = deterministic. More threads update shared matrices without locks.
    int threads = 1;

    void validate() const;
};

struct EmbeddingModel {
    Vocab vocab;
    int dim = 0;
    MatrixF word_vectors;     // V x dim, input side
    MatrixF context_vectors;  // V x dim, output side
    MatrixF feature_vectors;  // bucket_count x dim (0 rows for kind none)
    FeatureScheme scheme;
    std::vector<std::vector<std::uint32_t>> token_features;  // cached featurize() per vocab entry
};

struct SgnsReport {
    std::vector<double> epoch_loss;  // mean loss per (center, context) pair
    std::uint64_t skipped_tokens = 0;
    std::uint64_t trained_pairs = 0;
    std::vector<std::string> warnings;
};

/// Input-side matrices uniform in [-1/dim, 1/dim], context side zero.
EmbeddingModel init_model(const Vocab& vocab, const FeatureScheme& scheme, int dim, std::uint64_t seed,
                          std::vector<std::string>* warnings = nullptr);

EmbeddingModel train_sgns(const std::vector<std::vector<std::string>>& corpus, const Vocab& vocab,
                          const FeatureScheme& scheme, const SgnsConfig& cfg, SgnsReport* report = nullptr);

/// Continue training an existing model in place.
void train_sgns_inplace(EmbeddingModel& model, const std::vector<std::vector<std::string>>& corpus,
                        const SgnsConfig& cfg, SgnsReport* report = nullptr);

/// Draws token ids from counts^power, normalised.
class NegativeSampler {
public:
    explicit NegativeSampler(std::span<const std::uint64_t> counts, double power = 0.75);

    template <typename Rng>
    int draw(Rng& rng) const {
        return dist_(rng);
    }
    const std::vector<double>& probabilities() const noexcept { return probs_; }

private:
    std::vector<double> probs_;
    mutable std::discrete_distribution<int> dist_;
};

struct ComposedVector {
    Eigen::VectorXf values;
    bool oov = false;
};

/// word vector + mean feature vector (in vocab); feature mean alone (OOV);
/// zero vector flagged OOV when there are no features either.
ComposedVector compose(const EmbeddingModel& model, std::string_view token);

// SGNS objective ------------------------------------------------------------

inline double log_sigmoid(double x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Center representation: word row + mean of the listed feature rows.
template <typename T>
RowVector<T> compose_center(const RowMatrix<T>& word, const RowMatrix<T>& feature, std::int64_t center,
                            std::span<const std::uint32_t> feats) {
    RowVector<T> u = word.row(center);
    if (!feats.empty()) {
        RowVector<T> mean = RowVector<T>::Zero(word.cols());
        for (auto f : feats) mean += feature.row(f);
        u += mean / static_cast<T>(feats.size());
    }
    return u;
}

/// Negative-sampling loss  -log s(u.v_0) - sum_k log s(-u.v_k)  where v_j = context.row(targets[j]);
/// targets[0] is the observed context, the rest are negatives. Gradients are optional:
/// grad_u (1 x dim) and grad_targets (targets.size() x dim, one row per target slot).
template <typename T>
T sgns_loss_grad(const RowVector<T>& u, const RowMatrix<T>& context, std::span<const int> targets,
                 RowVector<T>* grad_u, RowMatrix<T>* grad_targets) {
    if (grad_u) grad_u->setZero(u.cols());
    if (grad_targets) grad_targets->setZero(static_cast<Eigen::Index>(targets.size()), u.cols());
    double loss = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const double label = j == 0 ? 1.0 : 0.0;
        const double score = static_cast<double>(u.dot(context.row(targets[j])));
        loss -= j == 0 ? log_sigmoid(score) : log_sigmoid(-score);
        const T g = static_cast<T>(sigmoid(score) - label);
        if (grad_u) *grad_u += g * context.row(targets[j]);
        if (grad_targets) grad_targets->row(static_cast<Eigen::Index>(j)) = g * u;
    }
    return static_cast<T>(loss);
}

/// One SGD step on a (center, targets) instance: updates the context rows of the
/// targets, the center's word row and its feature rows (each by grad_u / |feats|).
/// Returns the loss before the update.
template <typename T>
T sgns_step(RowMatrix<T>& word, RowMatrix<T>& feature, RowMatrix<T>& context, std::int64_t center,
            std::span<const std::uint32_t> feats, std::span<const int> targets, T lr, RowVector<T>& grad_u,
            RowMatrix<T>& grad_t) {
    const RowVector<T> u = compose_center(word, feature, center, feats);
    const T loss = sgns_loss_grad<T>(u, context, targets, &grad_u, &grad_t);
    for (std::size_t j = 0; j < targets.size(); ++j)
        context.row(targets[j]) -= lr * grad_t.row(static_cast<Eigen::Index>(j));
    word.row(center) -= lr * grad_u;
    if (!feats.empty()) {
        const T scale = lr / static_cast<T>(feats.size());
        for (auto f : feats) feature.row(f) -= scale * grad_u;
    }
    return loss;
}

// token-vector tables ---------------------------------------------------------

/// Token -> vector table as stored in the text embedding format. Row order is
/// the file order (descending frequency for tables produced here).
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::vector<std::string> tokens, Eigen::MatrixXd vectors);

    std::size_t size() const noexcept { return tokens_.size(); }
    int dim() const noexcept { return static_cast<int>(vectors_.cols()); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const Eigen::MatrixXd& vectors() const noexcept { return vectors_; }
    Eigen::MatrixXd& vectors() noexcept { return vectors_; }
    std::int64_t id_of(std::string_view token) const;

private:
    std::vector<std::string> tokens_;
    Eigen::MatrixXd vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Composed vectors for every vocabulary entry.
EmbeddingTable to_table(const EmbeddingModel& model);

/// Text format: header "V dim", then V lines "token v1 ... v_dim".
void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& path);
void save_table(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
EmbeddingTable parse_embeddings(std::string_view content);

}  // namespace histsumm
