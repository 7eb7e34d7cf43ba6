#include "histsumm/summarizer.hpp"

#include "histsumm/beam.hpp"
#include "histsumm/error.hpp"
#include "histsumm/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace histsumm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Optimizer parse_optimizer(std::string_view name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adagrad") return Optimizer::adagrad;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd|adagrad)");
}

std::string_view to_string(Optimizer opt) { return opt == Optimizer::sgd ? "sgd" : "adagrad"; }

void SummarizerConfig::validate() const {
    if (emb_dim < 1 || hidden_dim < 1) throw ConfigError("summarizer: emb_dim and hidden_dim must be >= 1");
    if (max_story_len < 1 || max_summary_len < 1) throw ConfigError("summarizer: length limits must be >= 1");
    if (beam_size < 1) throw ConfigError("summarizer: beam_size must be >= 1");
    if (batch_size < 1) throw ConfigError("summarizer: batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("summarizer: max_steps must be >= 0");
    if (!(lr > 0)) throw ConfigError("summarizer: lr must be > 0");
    if (!(clip_norm > 0)) throw ConfigError("summarizer: clip_norm must be > 0");
}

// vocabularies -----------------------------------------------------------------

SummaryVocab::SummaryVocab() : SummaryVocab(std::span<const std::string>{}) {}

SummaryVocab::SummaryVocab(std::span<const std::string> tokens) {
    for (auto special : {kUnk, kStart, kEnd}) {
        index_.emplace(std::string(special), static_cast<int>(tokens_.size()));
        tokens_.emplace_back(special);
    }
    for (const auto& t : tokens)
        if (index_.emplace(t, static_cast<int>(tokens_.size())).second) tokens_.push_back(t);
}

int SummaryVocab::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
}

int SummarizerModel::encoder_id(std::string_view token) const {
    auto it = encoder_index_.find(std::string(token));
    return it == encoder_index_.end() ? -1 : it->second;
}

void SummarizerModel::rebuild_encoder_index() {
    encoder_index_.clear();
    encoder_index_.reserve(encoder_tokens.size());
    for (std::size_t i = 0; i < encoder_tokens.size(); ++i)
        encoder_index_.try_emplace(encoder_tokens[i], static_cast<int>(i));
}

// parameters ---------------------------------------------------------------------

namespace {

template <typename Self>
std::vector<ParamBlock> collect_blocks(Self& p) {
    std::vector<ParamBlock> out;
    auto add = [&](std::string_view name, auto& m) {
        out.push_back(ParamBlock{name, const_cast<double*>(m.data()), m.rows(), m.cols()});
    };
    add("enc_embedding", p.enc_embedding);
    add("dec_embedding", p.dec_embedding);
    add("enc_fwd.W", p.enc_fwd.W);
    add("enc_fwd.U", p.enc_fwd.U);
    add("enc_fwd.b", p.enc_fwd.b);
    add("enc_bwd.W", p.enc_bwd.W);
    add("enc_bwd.U", p.enc_bwd.U);
    add("enc_bwd.b", p.enc_bwd.b);
    add("reduce_h.W", p.reduce_h_W);
    add("reduce_h.b", p.reduce_h_b);
    add("reduce_c.W", p.reduce_c_W);
    add("reduce_c.b", p.reduce_c_b);
    add("dec.W", p.dec.W);
    add("dec.U", p.dec.U);
    add("dec.b", p.dec.b);
    add("attn.Wh", p.attn_Wh);
    add("attn.Ws", p.attn_Ws);
    add("attn.b", p.attn_b);
    add("attn.v", p.attn_v);
    add("coverage.w", p.cov_w);
    add("gen.W", p.gen_W);
    add("gen.b", p.gen_b);
    add("pgen.wc", p.pgen_wc);
    add("pgen.ws", p.pgen_ws);
    add("pgen.wx", p.pgen_wx);
    add("pgen.b", p.pgen_b);
    return out;
}

}  // namespace

std::vector<ParamBlock> SummarizerParams::blocks() { return collect_blocks(*this); }
std::vector<ParamBlock> SummarizerParams::blocks() const { return collect_blocks(*this); }

SummarizerParams SummarizerParams::zeros_like() const {
    SummarizerParams z = *this;
    z.set_zero();
    return z;
}

void SummarizerParams::set_zero() {
    for (auto& b : blocks()) b.flat().setZero();
}

namespace {

void shape(SummarizerParams& p, Index v_enc, Index v_dec, Index E, Index H) {
    const Index A = 2 * H;
    p.enc_embedding.setZero(v_enc, E);
    p.dec_embedding.setZero(v_dec, E);
    for (LstmParams* l : {&p.enc_fwd, &p.enc_bwd, &p.dec}) {
        l->W.setZero(4 * H, E);
        l->U.setZero(4 * H, H);
        l->b.setZero(4 * H);
    }
    p.reduce_h_W.setZero(H, 2 * H);
    p.reduce_c_W.setZero(H, 2 * H);
    p.reduce_h_b.setZero(H);
    p.reduce_c_b.setZero(H);
    p.attn_Wh.setZero(A, 2 * H);
    p.attn_Ws.setZero(A, H);
    p.attn_b.setZero(A);
    p.attn_v.setZero(A);
    p.cov_w.setZero(A);
    p.gen_W.setZero(v_dec, 3 * H);
    p.gen_b.setZero(v_dec);
    p.pgen_wc.setZero(2 * H);
    p.pgen_ws.setZero(H);
    p.pgen_wx.setZero(E);
    p.pgen_b.setZero(1);
}

}  // namespace

SummarizerModel build_model(const SummarizerConfig& cfg, const EmbeddingTable& encoder_table,
                            std::span<const std::string> decoder_tokens) {
    cfg.validate();
    if (encoder_table.dim() != cfg.emb_dim)
        throw ConfigError("build_model: encoder table dim " + std::to_string(encoder_table.dim()) +
                          " does not match emb_dim " + std::to_string(cfg.emb_dim));
    SummarizerModel m;
    m.cfg = cfg;
    m.encoder_tokens = encoder_table.tokens();
    m.rebuild_encoder_index();
    m.decoder_vocab = SummaryVocab(decoder_tokens);
    shape(m.params, static_cast<Index>(encoder_table.size()), m.decoder_vocab.size(), cfg.emb_dim, cfg.hidden_dim);
    m.params.enc_embedding = encoder_table.vectors();

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-0.1, 0.1);
    auto blocks = m.params.blocks();
    for (std::size_t b = 1; b < blocks.size(); ++b) {
        auto flat = blocks[b].flat();
        for (Index i = 0; i < flat.size(); ++i) flat[i] = uni(rng);
    }
    m.encoder_frozen = true;
    return m;
}

// examples ------------------------------------------------------------------------

EncodedExample encode_source(const SummarizerModel& model, std::span<const std::string> story) {
    if (story.empty()) throw ValidationError("empty story");
    const auto n = std::min<std::size_t>(story.size(), static_cast<std::size_t>(model.cfg.max_story_len));
    EncodedExample ex;
    std::unordered_map<std::string, int> oov;
    const int V = model.decoder_vocab.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& tok = story[i];
        ex.enc_ids.push_back(model.encoder_id(tok));
        int id = model.decoder_vocab.id_of(tok);
        if (id < 0) {
            auto [it, inserted] = oov.try_emplace(tok, V + static_cast<int>(ex.oov_tokens.size()));
            if (inserted) ex.oov_tokens.push_back(tok);
            id = it->second;
        }
        ex.src_ext.push_back(id);
    }
    return ex;
}

EncodedExample encode_example(const SummarizerModel& model, std::span<const std::string> story,
                              std::span<const std::string> summary) {
    if (summary.empty()) throw ValidationError("empty summary");
    EncodedExample ex = encode_source(model, story);
    const int V = model.decoder_vocab.size();
    const auto limit = static_cast<std::size_t>(model.cfg.max_summary_len);
    const bool truncated = summary.size() > limit;
    const auto n = std::min(summary.size(), limit);
    for (std::size_t t = 0; t < n; ++t) {
        int id = model.decoder_vocab.id_of(summary[t]);
        if (id < 0) {
            auto it = std::find(ex.oov_tokens.begin(), ex.oov_tokens.end(), summary[t]);
            id = it == ex.oov_tokens.end() ? SummaryVocab::unk : V + static_cast<int>(it - ex.oov_tokens.begin());
        }
        ex.targets.push_back(id);
    }
    if (!truncated) ex.targets.push_back(SummaryVocab::end);
    ex.dec_inputs.push_back(SummaryVocab::start);
    for (std::size_t t = 0; t + 1 < ex.targets.size(); ++t)
        ex.dec_inputs.push_back(ex.targets[t] >= V ? SummaryVocab::unk : ex.targets[t]);
    return ex;
}

// network ----------------------------------------------------------------------------

namespace {

double sigm(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

VectorXd sigm(const VectorXd& x) { return x.unaryExpr([](double v) { return sigm(v); }); }

struct LstmCache {
    VectorXd x, h_prev, c_prev, i, f, g, o, c, tc, h;
};

void lstm_forward(const LstmParams& p, const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev,
                  LstmCache& k) {
    const Index H = h_prev.size();
    VectorXd z = p.b;
    z.noalias() += p.W * x;
    z.noalias() += p.U * h_prev;
    k.x = x;
    k.h_prev = h_prev;
    k.c_prev = c_prev;
    k.i = sigm(VectorXd(z.segment(0, H)));
    k.f = sigm(VectorXd(z.segment(H, H)));
    k.g = z.segment(2 * H, H).array().tanh();
    k.o = sigm(VectorXd(z.segment(3 * H, H)));
    k.c = k.f.cwiseProduct(c_prev) + k.i.cwiseProduct(k.g);
    k.tc = k.c.array().tanh();
    k.h = k.o.cwiseProduct(k.tc);
}

/// Accumulates into grad; writes dx (if given), dh_prev, dc_prev.
void lstm_backward(const LstmParams& p, const LstmCache& k, const VectorXd& dh, const VectorXd& dc, LstmParams& grad,
                   VectorXd* dx, VectorXd& dh_prev, VectorXd& dc_prev) {
    const Index H = dh.size();
    const VectorXd d_o = dh.cwiseProduct(k.tc);
    const VectorXd dct = dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tc.array().square()).matrix());
    VectorXd dz(4 * H);
    dz.segment(0, H) = dct.cwiseProduct(k.g).cwiseProduct(k.i.cwiseProduct((1.0 - k.i.array()).matrix()));
    dz.segment(H, H) = dct.cwiseProduct(k.c_prev).cwiseProduct(k.f.cwiseProduct((1.0 - k.f.array()).matrix()));
    dz.segment(2 * H, H) = dct.cwiseProduct(k.i).cwiseProduct((1.0 - k.g.array().square()).matrix());
    dz.segment(3 * H, H) = d_o.cwiseProduct(k.o.cwiseProduct((1.0 - k.o.array()).matrix()));
    dc_prev = dct.cwiseProduct(k.f);
    grad.W.noalias() += dz * k.x.transpose();
    grad.U.noalias() += dz * k.h_prev.transpose();
    grad.b += dz;
    if (dx) dx->noalias() = p.W.transpose() * dz;
    dh_prev.noalias() = p.U.transpose() * dz;
}

struct EncoderCache {
    std::vector<LstmCache> fwd, bwd;
    MatrixXd states;  // n x 2H
    MatrixXd feats;   // n x A, states * Wh^T
    VectorXd in_h, in_c;
    VectorXd s0, c0;
};

VectorXd encoder_input(const SummarizerModel& m, int id) {
    if (id < 0) return VectorXd::Zero(m.cfg.emb_dim);
    return m.params.enc_embedding.row(id).transpose();
}

void run_encoder(const SummarizerModel& m, const std::vector<int>& enc_ids, EncoderCache& e) {
    const auto& p = m.params;
    const Index H = m.cfg.hidden_dim;
    const auto n = enc_ids.size();
    e.fwd.resize(n);
    e.bwd.resize(n);
    VectorXd h = VectorXd::Zero(H), c = VectorXd::Zero(H);
    for (std::size_t i = 0; i < n; ++i) {
        lstm_forward(p.enc_fwd, encoder_input(m, enc_ids[i]), h, c, e.fwd[i]);
        h = e.fwd[i].h;
        c = e.fwd[i].c;
    }
    h.setZero();
    c.setZero();
    for (std::size_t r = n; r-- > 0;) {
        lstm_forward(p.enc_bwd, encoder_input(m, enc_ids[r]), h, c, e.bwd[r]);
        h = e.bwd[r].h;
        c = e.bwd[r].c;
    }
    e.states.resize(static_cast<Index>(n), 2 * H);
    for (std::size_t i = 0; i < n; ++i) {
        e.states.row(static_cast<Index>(i)).head(H) = e.fwd[i].h.transpose();
        e.states.row(static_cast<Index>(i)).tail(H) = e.bwd[i].h.transpose();
    }
    e.feats.noalias() = e.states * p.attn_Wh.transpose();
    e.in_h.resize(2 * H);
    e.in_c.resize(2 * H);
    e.in_h << e.fwd[n - 1].h, e.bwd[0].h;
    e.in_c << e.fwd[n - 1].c, e.bwd[0].c;
    e.s0 = (p.reduce_h_W * e.in_h + p.reduce_h_b).array().tanh();
    e.c0 = (p.reduce_c_W * e.in_c + p.reduce_c_b).array().tanh();
}

struct StepCache {
    int input = 0;
    LstmCache lstm;
    VectorXd cov;     // coverage before this step
    MatrixXd tau;     // n x A, tanh of attention pre-activations
    VectorXd attn;
    VectorXd ctx;     // 2H
    VectorXd out;     // [s; ctx]
    VectorXd pvocab;  // V_dec
    double pgen = 0.0;
};

void decoder_step(const SummarizerModel& m, const EncoderCache& e, int input, const VectorXd& s_prev,
                  const VectorXd& c_prev, const VectorXd& cov, StepCache& k) {
    const auto& p = m.params;
    const Index H = m.cfg.hidden_dim;
    const Index n = e.states.rows();
    k.input = input;
    k.cov = cov;
    const VectorXd d = p.dec_embedding.row(input).transpose();
    lstm_forward(p.dec, d, s_prev, c_prev, k.lstm);
    const VectorXd& s = k.lstm.h;

    const Eigen::RowVectorXd base = (p.attn_Ws * s + p.attn_b).transpose();
    k.tau = e.feats.rowwise() + base;
    if (m.cfg.coverage_enabled) k.tau.noalias() += cov * p.cov_w.transpose();
    k.tau = k.tau.array().tanh();
    VectorXd scores = k.tau * p.attn_v;
    const double mx = scores.maxCoeff();
    k.attn = (scores.array() - mx).exp();
    k.attn /= k.attn.sum();
    (void)n;

    k.ctx.noalias() = e.states.transpose() * k.attn;
    k.out.resize(3 * H);
    k.out << s, k.ctx;
    VectorXd logits = p.gen_b;
    logits.noalias() += p.gen_W * k.out;
    const double lmx = logits.maxCoeff();
    k.pvocab = (logits.array() - lmx).exp();
    k.pvocab /= k.pvocab.sum();
    if (m.pgen_override) {
        k.pgen = *m.pgen_override;
    } else {
        k.pgen = sigm(p.pgen_wc.dot(k.ctx) + p.pgen_ws.dot(s) + p.pgen_wx.dot(d) + p.pgen_b[0]);
    }
}

VectorXd extended_distribution(const StepCache& k, const std::vector<int>& src_ext, Index extended_size) {
    VectorXd probs = VectorXd::Zero(extended_size);
    probs.head(k.pvocab.size()) = k.pgen * k.pvocab;
    for (std::size_t i = 0; i < src_ext.size(); ++i) probs[src_ext[i]] += (1.0 - k.pgen) * k.attn[static_cast<Index>(i)];
    return probs;
}

double target_probability(const StepCache& k, const std::vector<int>& src_ext, int y, double& gen, double& copy) {
    gen = y < k.pvocab.size() ? k.pvocab[y] : 0.0;
    copy = 0.0;
    for (std::size_t i = 0; i < src_ext.size(); ++i)
        if (src_ext[i] == y) copy += k.attn[static_cast<Index>(i)];
    return k.pgen * gen + (1.0 - k.pgen) * copy;
}

}  // namespace

double loss_and_gradient(const SummarizerModel& m, const EncodedExample& ex, SummarizerParams* grad) {
    if (ex.enc_ids.empty()) throw ValidationError("empty story");
    if (ex.targets.empty()) throw ValidationError("empty summary");
    const auto& p = m.params;
    const Index H = m.cfg.hidden_dim;
    const Index n = static_cast<Index>(ex.enc_ids.size());
    const std::size_t T = ex.targets.size();
    const double invT = 1.0 / static_cast<double>(T);
    const bool cov_on = m.cfg.coverage_enabled;
    const double lambda = m.cfg.coverage_weight;

    EncoderCache enc;
    run_encoder(m, ex.enc_ids, enc);

    std::vector<StepCache> steps(T);
    std::vector<double> probs(T);
    VectorXd s = enc.s0, c = enc.c0, cov = VectorXd::Zero(n);
    double nll = 0.0, cov_loss = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        decoder_step(m, enc, ex.dec_inputs[t], s, c, cov, steps[t]);
        double gen = 0, copy = 0;
        probs[t] = target_probability(steps[t], ex.src_ext, ex.targets[t], gen, copy);
        nll -= std::log(probs[t]);
        if (cov_on) cov_loss += steps[t].attn.cwiseMin(cov).sum();
        cov += steps[t].attn;
        s = steps[t].lstm.h;
        c = steps[t].lstm.c;
    }
    const double loss = (nll + (cov_on ? lambda * cov_loss : 0.0)) * invT;
    if (!grad) return loss;

    auto& g = *grad;
    MatrixXd d_states = MatrixXd::Zero(n, 2 * H);
    MatrixXd d_feats = MatrixXd::Zero(n, 2 * H);
    VectorXd dS_next = VectorXd::Zero(H), dC_next = VectorXd::Zero(H);
    VectorXd dcov_next = VectorXd::Zero(n);
    VectorXd dx(m.cfg.emb_dim);

    for (std::size_t t = T; t-- > 0;) {
        const auto& k = steps[t];
        const int y = ex.targets[t];
        const VectorXd& sv = k.lstm.h;
        const VectorXd& d = k.lstm.x;
        double gen = 0, copy = 0;
        const double P = target_probability(k, ex.src_ext, y, gen, copy);
        const double dP = -invT / P;

        VectorXd dctx = VectorXd::Zero(2 * H);
        VectorXd ds = VectorXd::Zero(H);
        VectorXd dd = VectorXd::Zero(m.cfg.emb_dim);

        if (!m.pgen_override) {
            const double dz = dP * (gen - copy) * k.pgen * (1.0 - k.pgen);
            g.pgen_wc += dz * k.ctx;
            g.pgen_ws += dz * sv;
            g.pgen_wx += dz * d;
            g.pgen_b[0] += dz;
            dctx += dz * p.pgen_wc;
            ds += dz * p.pgen_ws;
            dd += dz * p.pgen_wx;
        }
        if (y < k.pvocab.size()) {
            const double dpy = dP * k.pgen * k.pvocab[y];
            VectorXd dlogits = -dpy * k.pvocab;
            dlogits[y] += dpy;
            g.gen_W.noalias() += dlogits * k.out.transpose();
            g.gen_b += dlogits;
            const VectorXd dout = p.gen_W.transpose() * dlogits;
            ds += dout.head(H);
            dctx += dout.tail(2 * H);
        }

        VectorXd da = VectorXd::Zero(n);
        for (Index i = 0; i < n; ++i)
            if (ex.src_ext[static_cast<std::size_t>(i)] == y) da[i] += dP * (1.0 - k.pgen);
        VectorXd dcov = dcov_next;  // cov_{t+1} = cov_t + a_t
        da += dcov_next;
        if (cov_on) {
            const double w = lambda * invT;
            for (Index i = 0; i < n; ++i) {
                if (k.attn[i] < k.cov[i])
                    da[i] += w;
                else
                    dcov[i] += w;
            }
        }
        da.noalias() += enc.states * dctx;
        d_states.noalias() += k.attn * dctx.transpose();

        const VectorXd de = k.attn.cwiseProduct((da.array() - k.attn.dot(da)).matrix());
        // dq_i = de_i * v (.) (1 - tau_i^2)
        MatrixXd dq = (1.0 - k.tau.array().square()).matrix();
        dq.array().rowwise() *= p.attn_v.transpose().array();
        dq.array().colwise() *= de.array();
        g.attn_v.noalias() += k.tau.transpose() * de;
        d_feats += dq;
        const VectorXd sum_dq = dq.colwise().sum().transpose();
        g.attn_Ws.noalias() += sum_dq * sv.transpose();
        g.attn_b += sum_dq;
        ds.noalias() += p.attn_Ws.transpose() * sum_dq;
        if (cov_on) {
            g.cov_w.noalias() += dq.transpose() * k.cov;
            dcov.noalias() += dq * p.cov_w;
        }
        dcov_next = dcov;

        const VectorXd dh = ds + dS_next;
        lstm_backward(p.dec, k.lstm, dh, dC_next, g.dec, &dx, dS_next, dC_next);
        dd += dx;
        g.dec_embedding.row(k.input) += dd.transpose();
    }

    // reduce layer
    const VectorXd da_h = dS_next.cwiseProduct((1.0 - enc.s0.array().square()).matrix());
    const VectorXd da_c = dC_next.cwiseProduct((1.0 - enc.c0.array().square()).matrix());
    g.reduce_h_W.noalias() += da_h * enc.in_h.transpose();
    g.reduce_h_b += da_h;
    g.reduce_c_W.noalias() += da_c * enc.in_c.transpose();
    g.reduce_c_b += da_c;
    const VectorXd d_in_h = p.reduce_h_W.transpose() * da_h;
    const VectorXd d_in_c = p.reduce_c_W.transpose() * da_c;

    g.attn_Wh.noalias() += d_feats.transpose() * enc.states;
    d_states.noalias() += d_feats * p.attn_Wh;

    const bool want_dx = !m.encoder_frozen;
    auto add_enc_grad = [&](std::size_t i, const VectorXd& dxi) {
        if (want_dx && ex.enc_ids[i] >= 0) g.enc_embedding.row(ex.enc_ids[i]) += dxi.transpose();
    };

    VectorXd dh_carry = VectorXd::Zero(H), dc_carry = VectorXd::Zero(H), dh_prev(H), dc_prev(H);
    for (std::size_t i = static_cast<std::size_t>(n); i-- > 0;) {
        VectorXd dh = d_states.row(static_cast<Index>(i)).head(H).transpose() + dh_carry;
        VectorXd dc = dc_carry;
        if (i + 1 == static_cast<std::size_t>(n)) {
            dh += d_in_h.head(H);
            dc += d_in_c.head(H);
        }
        lstm_backward(p.enc_fwd, enc.fwd[i], dh, dc, g.enc_fwd, want_dx ? &dx : nullptr, dh_prev, dc_prev);
        if (want_dx) add_enc_grad(i, dx);
        dh_carry = dh_prev;
        dc_carry = dc_prev;
    }
    dh_carry.setZero();
    dc_carry.setZero();
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        VectorXd dh = d_states.row(static_cast<Index>(i)).tail(H).transpose() + dh_carry;
        VectorXd dc = dc_carry;
        if (i == 0) {
            dh += d_in_h.tail(H);
            dc += d_in_c.tail(H);
        }
        lstm_backward(p.enc_bwd, enc.bwd[i], dh, dc, g.enc_bwd, want_dx ? &dx : nullptr, dh_prev, dc_prev);
        if (want_dx) add_enc_grad(i, dx);
        dh_carry = dh_prev;
        dc_carry = dc_prev;
    }
    return loss;
}

double forward_loss(const SummarizerModel& model, std::span<const std::string> story,
                    std::span<const std::string> summary) {
    return loss_and_gradient(model, encode_example(model, story, summary), nullptr);
}

std::vector<StepDistribution> teacher_forced_distributions(const SummarizerModel& m, const EncodedExample& ex) {
    EncoderCache enc;
    run_encoder(m, ex.enc_ids, enc);
    const Index ext = m.decoder_vocab.size() + static_cast<Index>(ex.oov_tokens.size());
    std::vector<StepDistribution> out;
    VectorXd s = enc.s0, c = enc.c0, cov = VectorXd::Zero(static_cast<Index>(ex.enc_ids.size()));
    StepCache k;
    for (int input : ex.dec_inputs) {
        decoder_step(m, enc, input, s, c, cov, k);
        out.push_back({extended_distribution(k, ex.src_ext, ext), k.pvocab, k.attn, k.pgen});
        cov += k.attn;
        s = k.lstm.h;
        c = k.lstm.c;
    }
    return out;
}

// training ---------------------------------------------------------------------------

TrainReport train(SummarizerModel& model, const std::vector<TokenPair>& pairs) {
    const auto& cfg = model.cfg;
    cfg.validate();
    TrainReport report;
    if (cfg.max_steps == 0) return report;
    if (pairs.empty()) throw EmptyInputError("train: no training pairs");

    std::vector<EncodedExample> data;
    data.reserve(pairs.size());
    for (const auto& [story, summary] : pairs) data.push_back(encode_example(model, story, summary));

    std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    SummarizerParams grad = model.params.zeros_like();
    SummarizerParams accum;
    if (cfg.optimizer == Optimizer::adagrad) {
        accum = model.params.zeros_like();
        for (auto& b : accum.blocks()) b.flat().setConstant(cfg.adagrad_init);
    }

    for (int step = 0; step < cfg.max_steps; ++step) {
        grad.set_zero();
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch_loss += loss_and_gradient(model, data[order[cursor++]], &grad);
        }
        batch_loss /= cfg.batch_size;

        auto gblocks = grad.blocks();
        double norm2 = 0.0;
        for (std::size_t i = 0; i < gblocks.size(); ++i) {
            if (i == 0 && model.encoder_frozen) continue;
            norm2 += gblocks[i].flat().squaredNorm();
        }
        norm2 /= static_cast<double>(cfg.batch_size) * cfg.batch_size;
        if (!std::isfinite(batch_loss) || !std::isfinite(norm2)) {
            report.diverged = true;
            report.diagnostic = "non-finite loss/gradient at step " + std::to_string(step) +
                                "; parameters kept from step " + std::to_string(step - 1);
            break;
        }
        const double norm = std::sqrt(norm2);
        const double scale = (norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0) / cfg.batch_size;

        auto pblocks = model.params.blocks();
        auto ablocks = cfg.optimizer == Optimizer::adagrad ? accum.blocks() : std::vector<ParamBlock>{};
        for (std::size_t i = 0; i < pblocks.size(); ++i) {
            if (i == 0 && model.encoder_frozen) continue;
            auto pf = pblocks[i].flat();
            auto gf = gblocks[i].flat();
            if (cfg.optimizer == Optimizer::sgd) {
                pf -= (cfg.lr * scale) * gf;
            } else {
                auto af = ablocks[i].flat();
                for (Index j = 0; j < pf.size(); ++j) {
                    const double gj = scale * gf[j];
                    af[j] += gj * gj;
                    pf[j] -= cfg.lr * gj / std::sqrt(af[j]);
                }
            }
        }
        report.losses.push_back(batch_loss);
        report.steps = step + 1;
    }
    return report;
}

void swap_encoder_embeddings(SummarizerModel& model, const EmbeddingTable& table) {
    if (table.dim() != model.cfg.emb_dim)
        throw ConfigError("swap: table dim " + std::to_string(table.dim()) + " does not match emb_dim " +
                          std::to_string(model.cfg.emb_dim));
    model.encoder_tokens = table.tokens();
    model.rebuild_encoder_index();
    model.params.enc_embedding = table.vectors();
}

// decoding ----------------------------------------------------------------------------

namespace {

struct DecodeState {
    VectorXd s, c, cov;
};

std::string output_token(const SummarizerModel& m, const EncodedExample& ex, int id) {
    const int V = m.decoder_vocab.size();
    return id < V ? m.decoder_vocab.token(id) : ex.oov_tokens[static_cast<std::size_t>(id - V)];
}

DecodeResult finish(const SummarizerModel& m, const EncodedExample& src, const std::vector<int>& ids_with_end,
                    double log_prob, const DecodeOptions& opts) {
    std::vector<int> ids = ids_with_end;
    if (!ids.empty() && ids.back() == SummaryVocab::end) ids.pop_back();

    DecodeResult r;
    r.score = log_prob;
    r.normalized_score = ids_with_end.empty() ? log_prob : log_prob / static_cast<double>(ids_with_end.size());

    // replay the chosen sequence to attribute each token to the generator or the pointer
    EncodedExample ex = src;
    ex.targets = ids_with_end;
    ex.dec_inputs.assign(1, SummaryVocab::start);
    const int V = m.decoder_vocab.size();
    for (std::size_t t = 0; t + 1 < ids_with_end.size(); ++t)
        ex.dec_inputs.push_back(ids_with_end[t] >= V ? SummaryVocab::unk : ids_with_end[t]);
    const auto dists = ex.dec_inputs.size() && !ids.empty() ? teacher_forced_distributions(m, ex)
                                                            : std::vector<StepDistribution>{};

    for (std::size_t t = 0; t < ids.size(); ++t) {
        const int y = ids[t];
        std::string tok = output_token(m, ex, y);
        const auto& dist = dists[t];
        double copy = 0.0;
        int best_pos = -1;
        for (std::size_t i = 0; i < ex.src_ext.size(); ++i) {
            if (ex.src_ext[i] != y) continue;
            const double a = dist.attention[static_cast<Index>(i)];
            copy += a;
            if (best_pos < 0 || a > dist.attention[best_pos]) best_pos = static_cast<int>(i);
        }
        const double gen = y < V ? dist.pgen * dist.vocab_probs[y] : 0.0;
        if (best_pos >= 0 && (1.0 - dist.pgen) * copy > gen) {
            r.copied_positions.emplace_back(static_cast<int>(t), best_pos);
            if (opts.copy_norm) tok = normalize_spelling(tok, *opts.copy_norm);
            if (opts.copy_glyphs) tok = convert_glyphs(tok, *opts.copy_glyphs);
        }
        if (y == SummaryVocab::unk) ++r.unk_count;
        r.tokens.push_back(std::move(tok));
    }
    return r;
}

}  // namespace

DecodeResult decode(const SummarizerModel& m, std::span<const std::string> story, const DecodeOptions& opts) {
    const EncodedExample ex = encode_source(m, story);
    EncoderCache enc;
    run_encoder(m, ex.enc_ids, enc);
    const Index ext = m.decoder_vocab.size() + static_cast<Index>(ex.oov_tokens.size());
    const int V = m.decoder_vocab.size();

    auto step = [&](const DecodeState& st, int prev) {
        StepCache k;
        decoder_step(m, enc, prev >= V ? SummaryVocab::unk : prev, st.s, st.c, st.cov, k);
        VectorXd logp = extended_distribution(k, ex.src_ext, ext).array().log();
        return std::make_pair(std::move(logp), DecodeState{k.lstm.h, k.lstm.c, st.cov + k.attn});
    };
    const int beam = opts.beam_size > 0 ? opts.beam_size : m.cfg.beam_size;
    DecodeState init{enc.s0, enc.c0, VectorXd::Zero(static_cast<Index>(ex.enc_ids.size()))};
    auto best = beam_search(std::move(init), SummaryVocab::start, SummaryVocab::end, beam, m.cfg.max_summary_len, step);
    return finish(m, ex, best.tokens, best.log_prob, opts);
}

DecodeResult greedy_decode(const SummarizerModel& m, std::span<const std::string> story) {
    const EncodedExample ex = encode_source(m, story);
    EncoderCache enc;
    run_encoder(m, ex.enc_ids, enc);
    const Index ext = m.decoder_vocab.size() + static_cast<Index>(ex.oov_tokens.size());
    const int V = m.decoder_vocab.size();
    VectorXd s = enc.s0, c = enc.c0, cov = VectorXd::Zero(static_cast<Index>(ex.enc_ids.size()));
    std::vector<int> ids;
    double log_prob = 0.0;
    int prev = SummaryVocab::start;
    StepCache k;
    for (int t = 0; t < m.cfg.max_summary_len; ++t) {
        decoder_step(m, enc, prev >= V ? SummaryVocab::unk : prev, s, c, cov, k);
        const VectorXd probs = extended_distribution(k, ex.src_ext, ext);
        Index arg = 0;
        probs.maxCoeff(&arg);  // first maximum = lowest id
        log_prob += std::log(probs[arg]);
        ids.push_back(static_cast<int>(arg));
        if (arg == SummaryVocab::end) break;
        prev = static_cast<int>(arg);
        s = k.lstm.h;
        c = k.lstm.c;
        cov += k.attn;
    }
    return finish(m, ex, ids, log_prob, {});
}

// persistence -------------------------------------------------------------------------

std::map<std::string, std::string> parameter_checksums(const SummarizerModel& model) {
    std::map<std::string, std::string> out;
    for (const auto& b : model.params.blocks())
        out.emplace(std::string(b.name),
                    sha256_hex(std::string_view(reinterpret_cast<const char*>(b.data),
                                                static_cast<std::size_t>(b.rows * b.cols) * sizeof(double))));
    return out;
}

namespace {

constexpr char kMagic[8] = {'H', 'S', 'U', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json config_json(const SummarizerConfig& c) {
    return {{"emb_dim", c.emb_dim},
            {"hidden_dim", c.hidden_dim},
            {"max_story_len", c.max_story_len},
            {"max_summary_len", c.max_summary_len},
            {"beam_size", c.beam_size},
            {"coverage_enabled", c.coverage_enabled},
            {"coverage_weight", c.coverage_weight},
            {"lr", c.lr},
            {"batch_size", c.batch_size},
            {"max_steps", c.max_steps},
            {"seed", c.seed},
            {"optimizer", std::string(to_string(c.optimizer))},
            {"clip_norm", c.clip_norm},
            {"adagrad_init", c.adagrad_init}};
}

SummarizerConfig config_from_json(const nlohmann::json& j) {
    SummarizerConfig c;
    c.emb_dim = j.at("emb_dim");
    c.hidden_dim = j.at("hidden_dim");
    c.max_story_len = j.at("max_story_len");
    c.max_summary_len = j.at("max_summary_len");
    c.beam_size = j.at("beam_size");
    c.coverage_enabled = j.at("coverage_enabled");
    c.coverage_weight = j.at("coverage_weight");
    c.lr = j.at("lr");
    c.batch_size = j.at("batch_size");
    c.max_steps = j.at("max_steps");
    c.seed = j.at("seed");
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.clip_norm = j.at("clip_norm");
    c.adagrad_init = j.at("adagrad_init");
    return c;
}

}  // namespace

void save_checkpoint(const SummarizerModel& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = "histsumm-summarizer";
    header["config"] = config_json(model.cfg);
    header["encoder_frozen"] = model.encoder_frozen;
    header["encoder_tokens"] = model.encoder_tokens;
    std::vector<std::string> dec(model.decoder_vocab.tokens().begin() + 3, model.decoder_vocab.tokens().end());
    header["decoder_tokens"] = dec;
    auto& blocks = header["blocks"] = nlohmann::json::array();
    for (const auto& b : model.params.blocks()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : model.params.blocks())
        out.write(reinterpret_cast<const char*>(b.data), static_cast<std::streamsize>(b.rows * b.cols * sizeof(double)));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

SummarizerModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError("not a summarizer checkpoint");
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corrupt checkpoint header: ") + e.what());
    }

    SummarizerModel m;
    m.cfg = config_from_json(header.at("config"));
    m.encoder_frozen = header.at("encoder_frozen");
    m.encoder_tokens = header.at("encoder_tokens").get<std::vector<std::string>>();
    m.rebuild_encoder_index();
    const auto dec = header.at("decoder_tokens").get<std::vector<std::string>>();
    m.decoder_vocab = SummaryVocab(dec);
    shape(m.params, static_cast<Index>(m.encoder_tokens.size()), m.decoder_vocab.size(), m.cfg.emb_dim,
          m.cfg.hidden_dim);
    auto blocks = m.params.blocks();
    const auto& listed = header.at("blocks");
    if (listed.size() != blocks.size()) throw ParseError("checkpoint block count mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (listed[i].at("name").get<std::string>() != blocks[i].name ||
            listed[i].at("rows").get<Index>() != blocks[i].rows || listed[i].at("cols").get<Index>() != blocks[i].cols)
            throw ParseError("checkpoint block '" + listed[i].at("name").get<std::string>() + "' has unexpected shape");
        in.read(reinterpret_cast<char*>(blocks[i].data),
                static_cast<std::streamsize>(blocks[i].rows * blocks[i].cols * sizeof(double)));
    }
    if (!in) throw ParseError("truncated checkpoint");
    return m;
}

}  // namespace histsumm
