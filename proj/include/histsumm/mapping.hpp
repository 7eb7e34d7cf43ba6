#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "histsumm/embeddings.hpp"

// Orthogonal alignment of two embedding spaces. Rows of X (source) and Y
// (target) are token vectors in descending-frequency order; a transform W maps
// source rows into the target space as X * W.
namespace histsumm {

enum class DictOrigin { identical, unsupervised_init, induced };
enum class CslsDirection { forward, symmetric };
enum class MappingMode { identical_seed, unsupervised };

MappingMode parse_mapping_mode(std::string_view name);  // "IdMap" | "UspMap"
std::string_view to_string(MappingMode mode);
CslsDirection parse_csls_direction(std::string_view name);
std::string_view to_string(DictOrigin origin);

struct SeedDictionary {
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;  // (source row, target row)
    DictOrigin origin = DictOrigin::identical;

    bool empty() const noexcept { return pairs.empty(); }
    std::size_t size() const noexcept { return pairs.size(); }
};

struct CslsConfig {
    int k = 10;
    CslsDirection direction = CslsDirection::symmetric;
};

struct SelfLearnConfig {
    CslsConfig csls;
    int max_iter = 50;
    /// Induction only considers the first top_frequent rows of each space.
    std::size_t top_frequent = 20'000;
    /// Stop once the objective (mean best-match cosine over the top_frequent
    /// source rows) improves by less than this. A decrease reverts to the previous solution.
    double tolerance = 1e-6;
};

struct MappingResult {
    Eigen::MatrixXd transform;
    SeedDictionary final_dictionary;
    std::vector<double> objective_trace;
    int iterations = 0;
    std::size_t seed_size = 0;
    std::vector<std::string> log;
};

/// One pair per token string present in both vocabularies, in source order.
SeedDictionary build_identical_seed(std::span<const std::string> source, std::span<const std::string> target);
SeedDictionary build_identical_seed(const Vocab& source, const Vocab& target);

struct NormalizedSpace {
    Eigen::MatrixXd matrix;
    std::vector<Eigen::Index> zero_rows;  // rows that ended up all-zero
};

/// Unit-normalise rows, mean-center, unit-normalise again.
NormalizedSpace normalize_spaces(const Eigen::MatrixXd& X);

/// Orthogonal W maximising sum over pairs of <x_i W, y_j>: W = U V^T with
/// X_d^T Y_d = U S V^T.
Eigen::MatrixXd procrustes(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict);

/// Sum over dictionary pairs of <x_i W, y_j>.
double procrustes_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict,
                            const Eigen::MatrixXd& W);

/// score(i,j) = 2 sim(i,j) - r_src(i) - r_tgt(j), r = mean of the k largest
/// similarities in the opposite space. k is clamped to the opposing size.
Eigen::MatrixXd csls_scores(const Eigen::MatrixXd& sim, const CslsConfig& cfg,
                            std::vector<std::string>* warnings = nullptr);

/// For each row of `queries`, the CSLS-best row of `targets` (cosine based).
std::vector<std::int64_t> csls_retrieve(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& targets, int k);

/// Dictionary induced from mapped source rows against target rows: mutual
/// CSLS-best matches (symmetric) or forward best matches.
SeedDictionary induce_dictionary(const Eigen::MatrixXd& mapped_source, const Eigen::MatrixXd& target,
                                 const CslsConfig& cfg);

/// Mean cosine of the dictionary pairs under W.
double mean_similarity(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict,
                       const Eigen::MatrixXd& W);

/// Mean over source rows of the best cosine against any target row.
double best_match_similarity(const Eigen::MatrixXd& mapped_source, const Eigen::MatrixXd& target);

/// Alternates Procrustes on the current dictionary with CSLS re-induction.
MappingResult self_learn(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& seed,
                         const SelfLearnConfig& cfg);

struct UnsupervisedInitConfig {
    /// Signatures are built over the first max_vocab rows of each space.
    std::size_t max_vocab = 4'000;
    /// Fraction of signature columns kept (1.0 = deterministic full signature).
    double column_keep = 1.0;
    std::uint64_t seed = 0;
};

/// Mutual nearest neighbours over sorted intra-space similarity signatures.
SeedDictionary unsupervised_init(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                 const UnsupervisedInitConfig& cfg = {});

struct AlignConfig {
    MappingMode mode = MappingMode::identical_seed;
    SelfLearnConfig self_learning;
    UnsupervisedInitConfig init;
    /// UspMap only: restarts > 1 re-run init on random signature subsets and keep the best objective.
    int restarts = 1;
};

/// Normalises both spaces, bootstraps the seed (identical tokens or unsupervised) and self-learns.
/// The returned transform applies to the normalised source space.
struct Alignment {
    NormalizedSpace source;
    NormalizedSpace target;
    MappingResult result;
};
Alignment align(const EmbeddingTable& source, const EmbeddingTable& target, const AlignConfig& cfg);

/// Fraction of (source, gold target) pairs whose CSLS-best target under W is the gold one.
double precision_at_1(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& W,
                      std::span<const std::pair<std::int64_t, std::int64_t>> gold, int k);

void save_dictionary(const SeedDictionary& dict, std::span<const std::string> source_tokens,
                     std::span<const std::string> target_tokens, const std::filesystem::path& path);

}  // namespace histsumm
