#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "histsumm/corpus.hpp"
#include "histsumm/embeddings.hpp"

// Attention encoder-decoder with a pointer (copy) gate. The encoder embedding
// table is a separate, frozen block so it can be replaced after training.
namespace histsumm {

enum class Optimizer { sgd, adagrad };

Optimizer parse_optimizer(std::string_view name);
std::string_view to_string(Optimizer opt);

struct SummarizerConfig {
    int emb_dim = 100;
    int hidden_dim = 128;
    int max_story_len = 400;
    int max_summary_len = 100;
    int beam_size = 4;
    bool coverage_enabled = false;
    double coverage_weight = 1.0;
    double lr = 0.15;
    int batch_size = 16;
    int max_steps = 1000;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::sgd;
    double clip_norm = 2.0;
    double adagrad_init = 0.1;

    void validate() const;
};

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kStart = "<s>";
inline constexpr std::string_view kEnd = "</s>";

/// Decoder-side vocabulary: <unk>, <s>, </s>, then the given tokens.
class SummaryVocab {
public:
    static constexpr int unk = 0;
    static constexpr int start = 1;
    static constexpr int end = 2;

    SummaryVocab();
    explicit SummaryVocab(std::span<const std::string> tokens);

    int size() const noexcept { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    /// -1 when absent.
    int id_of(std::string_view token) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct LstmParams {
    Eigen::MatrixXd W;  // 4H x input
    Eigen::MatrixXd U;  // 4H x H
    Eigen::VectorXd b;  // 4H  (gate order: input, forget, candidate, output)
};

struct ParamBlock {
    std::string_view name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;

    Eigen::Map<Eigen::VectorXd> flat() const { return {data, rows * cols}; }
};

struct SummarizerParams {
    Eigen::MatrixXd enc_embedding;  // V_enc x E
    Eigen::MatrixXd dec_embedding;  // V_dec x E
    LstmParams enc_fwd, enc_bwd, dec;
    Eigen::MatrixXd reduce_h_W, reduce_c_W;  // H x 2H
    Eigen::VectorXd reduce_h_b, reduce_c_b;
    Eigen::MatrixXd attn_Wh;  // A x 2H
    Eigen::MatrixXd attn_Ws;  // A x H
    Eigen::VectorXd attn_b, attn_v;
    Eigen::VectorXd cov_w;    // A
    Eigen::MatrixXd gen_W;    // V_dec x 3H
    Eigen::VectorXd gen_b;
    Eigen::VectorXd pgen_wc;  // 2H
    Eigen::VectorXd pgen_ws;  // H
    Eigen::VectorXd pgen_wx;  // E
    Eigen::VectorXd pgen_b;   // 1

    /// Every block, encoder embedding first.
    std::vector<ParamBlock> blocks();
    std::vector<ParamBlock> blocks() const;
    /// Same shapes, all zero.
    SummarizerParams zeros_like() const;
    void set_zero();
};

class SummarizerModel {
public:
    SummarizerConfig cfg;
    std::vector<std::string> encoder_tokens;
    SummaryVocab decoder_vocab;
    SummarizerParams params;
    bool encoder_frozen = true;
    /// Test hook: replaces the p_gen gate output (e.g. 0 = copy only).
    std::optional<double> pgen_override;

    int encoder_id(std::string_view token) const;
    void rebuild_encoder_index();

private:
    std::unordered_map<std::string, int> encoder_index_;
};

/// Encoder embeddings copied from the table and frozen; everything else uniform in [-0.1, 0.1].
SummarizerModel build_model(const SummarizerConfig& cfg, const EmbeddingTable& encoder_table,
                            std::span<const std::string> decoder_tokens);

/// Source/target ids after truncation. Extended ids >= V_dec index oov_tokens.
struct EncodedExample {
    std::vector<int> enc_ids;       // -1 = unknown to the encoder (zero vector)
    std::vector<int> src_ext;       // extended id of every source position
    std::vector<std::string> oov_tokens;
    std::vector<int> dec_inputs;    // <s>, y_1 .. y_{T-1} (decoder ids)
    std::vector<int> targets;       // y_1 .. y_T (extended ids), ends with </s> unless truncated
};

EncodedExample encode_example(const SummarizerModel& model, std::span<const std::string> story,
                              std::span<const std::string> summary);
EncodedExample encode_source(const SummarizerModel& model, std::span<const std::string> story);

/// Mean per-step NLL (+ coverage loss when enabled). With `grad`, accumulates
/// gradients into it; the encoder embedding gradient stays zero while frozen.
double loss_and_gradient(const SummarizerModel& model, const EncodedExample& example, SummarizerParams* grad);
double forward_loss(const SummarizerModel& model, std::span<const std::string> story,
                    std::span<const std::string> summary);

/// Full output distribution at every teacher-forced step (rows sum to 1).
struct StepDistribution {
    Eigen::VectorXd probs;        // over V_dec + oov count
    Eigen::VectorXd vocab_probs;  // generator softmax over V_dec
    Eigen::VectorXd attention;    // over source positions
    double pgen = 0.0;
};
std::vector<StepDistribution> teacher_forced_distributions(const SummarizerModel& model, const EncodedExample& example);

struct TrainReport {
    std::vector<double> losses;  // per step (batch mean)
    int steps = 0;
    bool diverged = false;
    std::string diagnostic;
};

using TokenPair = std::pair<std::vector<std::string>, std::vector<std::string>>;

/// SGD / Adagrad on all unfrozen blocks for cfg.max_steps batches. On a
/// non-finite loss the step is not applied and training stops.
TrainReport train(SummarizerModel& model, const std::vector<TokenPair>& pairs);

/// Replace the encoder embedding block and encoder vocabulary.
void swap_encoder_embeddings(SummarizerModel& model, const EmbeddingTable& table);

struct DecodeOptions {
    int beam_size = -1;  // -1 = cfg.beam_size
    /// Rewrites pointer-copied tokens, e.g. historical spellings to modern ones.
    const NormRuleSet* copy_norm = nullptr;
    const GlyphLexicon* copy_glyphs = nullptr;
};

struct DecodeResult {
    std::vector<std::string> tokens;
    double score = 0.0;  // total log-probability
    double normalized_score = 0.0;
    std::vector<std::pair<int, int>> copied_positions;  // (output index, source position)
    std::size_t unk_count = 0;
};

DecodeResult decode(const SummarizerModel& model, std::span<const std::string> story, const DecodeOptions& opts = {});
DecodeResult greedy_decode(const SummarizerModel& model, std::span<const std::string> story);

/// sha256 per parameter block.
std::map<std::string, std::string> parameter_checksums(const SummarizerModel& model);

void save_checkpoint(const SummarizerModel& model, const std::filesystem::path& path);
SummarizerModel load_checkpoint(const std::filesystem::path& path);

}  // namespace histsumm
