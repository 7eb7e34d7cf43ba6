#include "histsumm/mapping.hpp"

#include "histsumm/error.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include <Eigen/SVD>

namespace histsumm {

MappingMode parse_mapping_mode(std::string_view name) {
    if (name == "IdMap") return MappingMode::identical_seed;
    if (name == "UspMap") return MappingMode::unsupervised;
    throw ConfigError("unknown mapping mode '" + std::string(name) + "' (expected IdMap|UspMap)");
}

std::string_view to_string(MappingMode mode) { return mode == MappingMode::identical_seed ? "IdMap" : "UspMap"; }

CslsDirection parse_csls_direction(std::string_view name) {
    if (name == "forward") return CslsDirection::forward;
    if (name == "symmetric") return CslsDirection::symmetric;
    throw ConfigError("unknown CSLS direction '" + std::string(name) + "' (expected forward|symmetric)");
}

std::string_view to_string(DictOrigin origin) {
    switch (origin) {
        case DictOrigin::identical: return "identical";
        case DictOrigin::unsupervised_init: return "unsupervised-init";
        case DictOrigin::induced: return "induced";
    }
    return "induced";
}

SeedDictionary build_identical_seed(std::span<const std::string> source, std::span<const std::string> target) {
    std::unordered_map<std::string_view, std::int64_t> tgt;
    tgt.reserve(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) tgt.try_emplace(target[j], static_cast<std::int64_t>(j));
    SeedDictionary dict;
    dict.origin = DictOrigin::identical;
    for (std::size_t i = 0; i < source.size(); ++i)
        if (auto it = tgt.find(source[i]); it != tgt.end()) dict.pairs.emplace_back(static_cast<std::int64_t>(i), it->second);
    return dict;
}

SeedDictionary build_identical_seed(const Vocab& source, const Vocab& target) {
    return build_identical_seed(source.tokens(), target.tokens());
}

namespace {

void unit_rows(Eigen::MatrixXd& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        const double n = M.row(i).norm();
        if (n > 0) M.row(i) /= n;
    }
}

}  // namespace

NormalizedSpace normalize_spaces(const Eigen::MatrixXd& X) {
    if (X.rows() == 0) throw EmptyInputError("normalize_spaces: empty matrix");
    NormalizedSpace out;
    out.matrix = X;
    unit_rows(out.matrix);
    const Eigen::RowVectorXd mean = out.matrix.colwise().mean();
    out.matrix.rowwise() -= mean;
    for (Eigen::Index i = 0; i < out.matrix.rows(); ++i) {
        const double n = out.matrix.row(i).norm();
        // rounding residue of a centred duplicate counts as zero
        if (n > 1e-12) {
            out.matrix.row(i) /= n;
        } else {
            out.matrix.row(i).setZero();
            out.zero_rows.push_back(i);
        }
    }
    return out;
}

namespace {

void check_pairs(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict) {
    for (auto [i, j] : dict.pairs)
        if (i < 0 || i >= X.rows() || j < 0 || j >= Y.rows())
            throw ValidationError("dictionary pair (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
}

}  // namespace

Eigen::MatrixXd procrustes(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict) {
    if (dict.empty()) throw ValidationError("procrustes: empty dictionary");
    if (X.cols() != Y.cols()) throw ConfigError("procrustes: dimension mismatch between spaces");
    check_pairs(X, Y, dict);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(X.cols(), Y.cols());
    for (auto [i, j] : dict.pairs) M.noalias() += X.row(i).transpose() * Y.row(j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

double procrustes_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict,
                            const Eigen::MatrixXd& W) {
    double total = 0.0;
    for (auto [i, j] : dict.pairs) total += (X.row(i) * W).dot(Y.row(j));
    return total;
}

namespace {

double topk_mean(std::vector<double>& values, int k) {
    const auto kk = static_cast<std::size_t>(k);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(kk - 1), values.end(),
                     std::greater<>());
    return std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(kk), 0.0) / k;
}

int clamp_k(int k, Eigen::Index opposing, std::vector<std::string>* warnings) {
    if (k < 1) throw ConfigError("CSLS: k must be >= 1");
    if (k > opposing) {
        if (warnings)
            warnings->push_back("CSLS k=" + std::to_string(k) + " exceeds opposing size " + std::to_string(opposing) +
                                "; clamped");
        return static_cast<int>(opposing);
    }
    return k;
}

Eigen::MatrixXd unit_copy(const Eigen::MatrixXd& M) {
    Eigen::MatrixXd out = M;
    unit_rows(out);
    return out;
}

constexpr Eigen::Index kBlock = 1024;

/// Mean of the k largest cosines of each row of A against all rows of B (both unit rows).
Eigen::VectorXd neighbourhood_density(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int k) {
    Eigen::VectorXd r(A.rows());
    std::vector<double> buf(static_cast<std::size_t>(B.rows()));
    for (Eigen::Index start = 0; start < A.rows(); start += kBlock) {
        const Eigen::Index n = std::min(kBlock, A.rows() - start);
        const Eigen::MatrixXd S = A.middleRows(start, n) * B.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < S.cols(); ++j) buf[static_cast<std::size_t>(j)] = S(i, j);
            r[start + i] = topk_mean(buf, k);
        }
    }
    return r;
}

/// argmax_j 2 cos(a_i, b_j) - rB_j, lowest j on ties.
std::vector<std::int64_t> csls_argmax(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& rB) {
    std::vector<std::int64_t> best(static_cast<std::size_t>(A.rows()), -1);
    for (Eigen::Index start = 0; start < A.rows(); start += kBlock) {
        const Eigen::Index n = std::min(kBlock, A.rows() - start);
        const Eigen::MatrixXd S = A.middleRows(start, n) * B.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            double top = -std::numeric_limits<double>::infinity();
            std::int64_t arg = -1;
            for (Eigen::Index j = 0; j < S.cols(); ++j) {
                const double s = 2.0 * S(i, j) - rB[j];
                if (s > top) {
                    top = s;
                    arg = j;
                }
            }
            best[static_cast<std::size_t>(start + i)] = arg;
        }
    }
    return best;
}

}  // namespace

Eigen::MatrixXd csls_scores(const Eigen::MatrixXd& sim, const CslsConfig& cfg, std::vector<std::string>* warnings) {
    if (sim.rows() == 0 || sim.cols() == 0) return sim;
    const int k_src = clamp_k(cfg.k, sim.cols(), warnings);
    const int k_tgt = clamp_k(cfg.k, sim.rows(), warnings);
    Eigen::VectorXd r_src(sim.rows()), r_tgt(sim.cols());
    std::vector<double> buf;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        buf.resize(static_cast<std::size_t>(sim.cols()));
        for (Eigen::Index j = 0; j < sim.cols(); ++j) buf[static_cast<std::size_t>(j)] = sim(i, j);
        r_src[i] = topk_mean(buf, k_src);
    }
    for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        buf.resize(static_cast<std::size_t>(sim.rows()));
        for (Eigen::Index i = 0; i < sim.rows(); ++i) buf[static_cast<std::size_t>(i)] = sim(i, j);
        r_tgt[j] = topk_mean(buf, k_tgt);
    }
    Eigen::MatrixXd out = 2.0 * sim;
    out.colwise() -= r_src;
    out.rowwise() -= r_tgt.transpose();
    return out;
}

std::vector<std::int64_t> csls_retrieve(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& targets, int k) {
    const Eigen::MatrixXd Q = unit_copy(queries);
    const Eigen::MatrixXd T = unit_copy(targets);
    const int kt = clamp_k(k, Q.rows(), nullptr);
    const Eigen::VectorXd r_tgt = neighbourhood_density(T, Q, kt);
    return csls_argmax(Q, T, r_tgt);
}

SeedDictionary induce_dictionary(const Eigen::MatrixXd& mapped_source, const Eigen::MatrixXd& target,
                                 const CslsConfig& cfg) {
    const Eigen::MatrixXd S = unit_copy(mapped_source);
    const Eigen::MatrixXd T = unit_copy(target);
    const int k_src = clamp_k(cfg.k, T.rows(), nullptr);
    const int k_tgt = clamp_k(cfg.k, S.rows(), nullptr);
    const Eigen::VectorXd r_tgt = neighbourhood_density(T, S, k_tgt);
    const auto fwd = csls_argmax(S, T, r_tgt);

    SeedDictionary dict;
    dict.origin = DictOrigin::induced;
    if (cfg.direction == CslsDirection::forward) {
        for (std::size_t i = 0; i < fwd.size(); ++i) dict.pairs.emplace_back(static_cast<std::int64_t>(i), fwd[i]);
        return dict;
    }
    const Eigen::VectorXd r_src = neighbourhood_density(S, T, k_src);
    const auto bwd = csls_argmax(T, S, r_src);
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        const auto j = fwd[i];
        if (j >= 0 && bwd[static_cast<std::size_t>(j)] == static_cast<std::int64_t>(i))
            dict.pairs.emplace_back(static_cast<std::int64_t>(i), j);
    }
    return dict;
}

double mean_similarity(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& dict,
                       const Eigen::MatrixXd& W) {
    if (dict.empty()) return 0.0;
    double total = 0.0;
    for (auto [i, j] : dict.pairs) {
        const Eigen::RowVectorXd x = X.row(i) * W;
        const double denom = x.norm() * Y.row(j).norm();
        total += denom > 0 ? x.dot(Y.row(j)) / denom : 0.0;
    }
    return total / static_cast<double>(dict.size());
}

double best_match_similarity(const Eigen::MatrixXd& mapped_source, const Eigen::MatrixXd& target) {
    if (mapped_source.rows() == 0 || target.rows() == 0) return 0.0;
    const Eigen::MatrixXd S = unit_copy(mapped_source);
    const Eigen::MatrixXd T = unit_copy(target);
    double total = 0.0;
    constexpr Eigen::Index kBlock = 1024;
    for (Eigen::Index r0 = 0; r0 < S.rows(); r0 += kBlock) {
        const Eigen::Index rows = std::min(kBlock, S.rows() - r0);
        const Eigen::MatrixXd sim = S.middleRows(r0, rows) * T.transpose();
        total += sim.rowwise().maxCoeff().sum();
    }
    return total / static_cast<double>(S.rows());
}

MappingResult self_learn(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const SeedDictionary& seed,
                         const SelfLearnConfig& cfg) {
    if (seed.empty()) throw ValidationError("self_learn: empty seed dictionary");
    if (cfg.max_iter < 0) throw ConfigError("self_learn: max_iter must be >= 0");
    const Eigen::Index ns = std::min<Eigen::Index>(X.rows(), static_cast<Eigen::Index>(cfg.top_frequent));
    const Eigen::Index nt = std::min<Eigen::Index>(Y.rows(), static_cast<Eigen::Index>(cfg.top_frequent));
    const Eigen::MatrixXd Xf = X.topRows(ns);
    const Eigen::MatrixXd Yf = Y.topRows(nt);

    MappingResult res;
    res.seed_size = seed.size();
    res.final_dictionary = seed;
    res.transform = procrustes(X, Y, seed);
    res.objective_trace.push_back(best_match_similarity(Xf * res.transform, Yf));
    res.log.push_back("seed dictionary: " + std::to_string(seed.size()) + " pairs (" +
                      std::string(to_string(seed.origin)) + "), objective " + std::to_string(res.objective_trace[0]));

    for (int it = 1; it <= cfg.max_iter; ++it) {
        SeedDictionary induced = induce_dictionary(Xf * res.transform, Yf, cfg.csls);
        res.iterations = it;
        if (induced.empty()) throw Error("self_learn: induced dictionary is empty at iteration " + std::to_string(it));
        Eigen::MatrixXd W = procrustes(X, Y, induced);
        const double obj = best_match_similarity(Xf * W, Yf);
        const double prev = res.objective_trace.back();
        res.log.push_back("iteration " + std::to_string(it) + ": " + std::to_string(induced.size()) +
                          " pairs, objective " + std::to_string(obj));
        if (obj < prev) {
            res.log.push_back("objective decreased; keeping the previous solution");
            break;
        }
        res.objective_trace.push_back(obj);
        res.final_dictionary = std::move(induced);
        res.transform = std::move(W);
        if (obj - prev < cfg.tolerance) break;
    }
    return res;
}

SeedDictionary unsupervised_init(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const UnsupervisedInitConfig& cfg) {
    if (X.rows() < 2 || Y.rows() < 2) throw ValidationError("unsupervised_init: need at least 2 tokens per space");
    const Eigen::Index n = std::min<Eigen::Index>({X.rows(), Y.rows(), static_cast<Eigen::Index>(cfg.max_vocab)});

    std::vector<Eigen::Index> columns(static_cast<std::size_t>(n));
    std::iota(columns.begin(), columns.end(), 0);
    if (cfg.column_keep < 1.0) {
        std::mt19937_64 rng(cfg.seed);
        std::shuffle(columns.begin(), columns.end(), rng);
        columns.resize(std::max<std::size_t>(2, static_cast<std::size_t>(cfg.column_keep * static_cast<double>(n))));
        std::sort(columns.begin(), columns.end());
    }

    auto signatures = [&](const Eigen::MatrixXd& M) {
        const Eigen::MatrixXd U = unit_copy(M.topRows(n));
        const Eigen::MatrixXd sim = U * U.transpose();
        Eigen::MatrixXd sig(n, static_cast<Eigen::Index>(columns.size()));
        std::vector<double> row(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = sim(i, j);
            std::sort(row.begin(), row.end(), std::greater<>());
            for (std::size_t c = 0; c < columns.size(); ++c)
                sig(i, static_cast<Eigen::Index>(c)) = row[static_cast<std::size_t>(columns[c])];
        }
        return normalize_spaces(sig).matrix;
    };
    const Eigen::MatrixXd sx = signatures(X);
    const Eigen::MatrixXd sy = signatures(Y);
    const Eigen::MatrixXd sim = sx * sy.transpose();

    std::vector<Eigen::Index> fwd(static_cast<std::size_t>(n)), bwd(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) sim.row(i).maxCoeff(&fwd[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) sim.col(j).maxCoeff(&bwd[static_cast<std::size_t>(j)]);

    SeedDictionary dict;
    dict.origin = DictOrigin::unsupervised_init;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto j = fwd[static_cast<std::size_t>(i)];
        if (bwd[static_cast<std::size_t>(j)] == i) dict.pairs.emplace_back(i, j);
    }
    return dict;
}

Alignment align(const EmbeddingTable& source, const EmbeddingTable& target, const AlignConfig& cfg) {
    if (source.dim() != target.dim()) throw ConfigError("align: embedding dimensions differ");
    Alignment out{normalize_spaces(source.vectors()), normalize_spaces(target.vectors()), {}};
    const auto& X = out.source.matrix;
    const auto& Y = out.target.matrix;

    if (cfg.mode == MappingMode::identical_seed) {
        auto seed = build_identical_seed(source.tokens(), target.tokens());
        if (seed.empty()) throw ValidationError("IdMap: the two vocabularies share no tokens");
        out.result = self_learn(X, Y, seed, cfg.self_learning);
        return out;
    }

    const int restarts = std::max(1, cfg.restarts);
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        UnsupervisedInitConfig init = cfg.init;
        if (r > 0) {
            init.column_keep = std::min(init.column_keep, 0.5);
            init.seed = cfg.init.seed + static_cast<std::uint64_t>(r);
        }
        auto seed = unsupervised_init(X, Y, init);
        if (seed.empty()) continue;
        auto res = self_learn(X, Y, seed, cfg.self_learning);
        res.log.insert(res.log.begin(), "restart " + std::to_string(r));
        if (!have || res.objective_trace.back() > out.result.objective_trace.back()) {
            out.result = std::move(res);
            have = true;
        }
    }
    if (!have) throw Error("UspMap: unsupervised initialisation produced no dictionary");
    return out;
}

double precision_at_1(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& W,
                      std::span<const std::pair<std::int64_t, std::int64_t>> gold, int k) {
    if (gold.empty()) return 0.0;
    // densities are computed against the full source space, retrieval only for the queried rows
    const Eigen::MatrixXd mapped = unit_copy(X * W);
    const Eigen::MatrixXd T = unit_copy(Y);
    const Eigen::VectorXd r_tgt = neighbourhood_density(T, mapped, clamp_k(k, mapped.rows(), nullptr));
    Eigen::MatrixXd queries(static_cast<Eigen::Index>(gold.size()), X.cols());
    for (std::size_t q = 0; q < gold.size(); ++q) queries.row(static_cast<Eigen::Index>(q)) = mapped.row(gold[q].first);
    const auto best = csls_argmax(queries, T, r_tgt);
    std::size_t hits = 0;
    for (std::size_t q = 0; q < gold.size(); ++q) hits += best[q] == gold[q].second;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

void save_dictionary(const SeedDictionary& dict, std::span<const std::string> source_tokens,
                     std::span<const std::string> target_tokens, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    for (auto [i, j] : dict.pairs)
        out << source_tokens[static_cast<std::size_t>(i)] << '\t' << target_tokens[static_cast<std::size_t>(j)] << '\n';
}

}  // namespace histsumm
