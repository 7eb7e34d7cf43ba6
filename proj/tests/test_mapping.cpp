#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "histsumm/error.hpp"
#include "histsumm/mapping.hpp"
#include "test_util.hpp"

using namespace histsumm;
using testutil::gaussian_matrix;
using testutil::random_orthogonal;

namespace {

SeedDictionary full_dictionary(Eigen::Index n) {
    SeedDictionary d;
    for (Eigen::Index i = 0; i < n; ++i) d.pairs.emplace_back(i, i);
    return d;
}

double orthogonality_error(const Eigen::MatrixXd& W) {
    return (W.transpose() * W - Eigen::MatrixXd::Identity(W.cols(), W.cols())).norm();
}

std::vector<Eigen::Index> row_argmax(const Eigen::MatrixXd& m) {
    std::vector<Eigen::Index> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace

TEST_CASE("identical-token seed dictionary") {
    const std::vector<std::string> src{"krieg", "frieden", "x"}, tgt{"krieg", "frieden", "y"};
    auto d = build_identical_seed(src, tgt);
    CHECK(d.pairs == std::vector<std::pair<std::int64_t, std::int64_t>>{{0, 0}, {1, 1}});
    CHECK(d.origin == DictOrigin::identical);
    const std::vector<std::string> other{"p", "q"};
    CHECK(build_identical_seed(src, other).empty());
    CHECK(build_identical_seed(src, src).size() == 3);
    const std::vector<std::string> shuffled{"y", "frieden", "krieg"};
    CHECK(build_identical_seed(src, shuffled).pairs ==
          std::vector<std::pair<std::int64_t, std::int64_t>>{{0, 2}, {1, 1}});
}

TEST_CASE("normalize_spaces") {
    std::mt19937_64 rng(3);
    const auto X = gaussian_matrix(40, 7, rng, 3.0);
    const auto n = normalize_spaces(X);
    for (Eigen::Index i = 0; i < n.matrix.rows(); ++i)
        if (n.matrix.row(i).norm() > 0) CHECK(std::abs(n.matrix.row(i).norm() - 1.0) < 1e-9);
    CHECK(n.zero_rows.empty());

    const auto single = normalize_spaces(Eigen::MatrixXd::Constant(1, 3, 2.0));
    CHECK(single.zero_rows == std::vector<Eigen::Index>{0});
    CHECK(single.matrix.isZero(0));

    // a fixed point: rows +-e_i are unit length and already centered
    Eigen::MatrixXd fp(6, 3);
    fp << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
    CHECK((normalize_spaces(fp).matrix - fp).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS_AS(normalize_spaces(Eigen::MatrixXd(0, 3)), EmptyInputError);
}

TEST_CASE("procrustes examples") {
    std::mt19937_64 rng(1);
    const auto X = gaussian_matrix(50, 10, rng);
    CHECK((procrustes(X, X, full_dictionary(50)) - Eigen::MatrixXd::Identity(10, 10)).norm() < 1e-9);

    Eigen::MatrixXd one(1, 1), minus(1, 1);
    one << 1;
    minus << -1;
    CHECK(procrustes(one, minus, full_dictionary(1))(0, 0) == doctest::Approx(-1.0));

    for (int trial = 0; trial < 10; ++trial) {
        const auto R = random_orthogonal(10, rng);
        const auto Xr = gaussian_matrix(50, 10, rng);
        const auto W = procrustes(Xr, Xr * R, full_dictionary(50));
        CHECK((W - R).norm() <= 1e-6);
        CHECK(orthogonality_error(W) < 1e-6);
    }

    // rank-deficient cross covariance is still orthogonal
    Eigen::MatrixXd lowrank = Eigen::MatrixXd::Zero(4, 3);
    lowrank.col(0) << 1, 2, 3, 4;
    CHECK(orthogonality_error(procrustes(lowrank, lowrank, full_dictionary(4))) < 1e-6);

    CHECK_THROWS_AS(procrustes(X, X, SeedDictionary{}), ValidationError);
    SeedDictionary bad{{{0, 99}}, DictOrigin::identical};
    CHECK_THROWS_AS(procrustes(X, X, bad), ValidationError);
}

TEST_CASE("procrustes beats random orthogonal matrices") {
    std::mt19937_64 rng(77);
    for (int inst = 0; inst < 5; ++inst) {
        const int d = 2 + inst % 2;
        const int pairs = 3 + inst % 4;
        const auto X = gaussian_matrix(pairs, d, rng), Y = gaussian_matrix(pairs, d, rng);
        const auto dict = full_dictionary(pairs);
        const double best = procrustes_objective(X, Y, dict, procrustes(X, Y, dict));
        double brute = -1e300;
        for (int s = 0; s < 20'000; ++s)
            brute = std::max(brute, procrustes_objective(X, Y, dict, random_orthogonal(d, rng)));
        CHECK(best >= brute - 1e-12);
    }
}

TEST_CASE("CSLS hand example and symmetries") {
    Eigen::MatrixXd sim(2, 2);
    sim << 1, 0, 0, 1;
    const auto s = csls_scores(sim, {1, CslsDirection::symmetric});
    Eigen::MatrixXd expected(2, 2);
    expected << 0, -2, -2, 0;
    CHECK((s - expected).norm() < 1e-12);
    CHECK(row_argmax(s) == row_argmax(sim));

    const auto uniform = csls_scores(Eigen::MatrixXd::Constant(4, 5, 0.3), {2, CslsDirection::symmetric});
    CHECK(uniform.maxCoeff() - uniform.minCoeff() < 1e-12);

    std::vector<std::string> warnings;
    csls_scores(sim, {10, CslsDirection::symmetric}, &warnings);
    CHECK_FALSE(warnings.empty());
    CHECK_THROWS_AS(csls_scores(sim, {0, CslsDirection::symmetric}), ConfigError);

    // equal hub penalties: CSLS argmax equals cosine argmax
    Eigen::MatrixXd perm(3, 3);
    perm << 0.9, 0.1, 0.2, 0.2, 0.9, 0.1, 0.1, 0.2, 0.9;
    CHECK(row_argmax(csls_scores(perm, {1, CslsDirection::symmetric})) == row_argmax(perm));
}

TEST_CASE("CSLS retrieval is scale invariant") {
    std::mt19937_64 rng(8);
    const auto Q = gaussian_matrix(30, 5, rng), T = gaussian_matrix(40, 5, rng);
    const auto base = csls_retrieve(Q, T, 3);
    for (double c : {0.001, 2.5, 1000.0}) CHECK(csls_retrieve(Q, T * c, 3) == base);
}

TEST_CASE("mutual-best induced dictionaries are symmetric") {
    std::mt19937_64 rng(21);
    const auto S = normalize_spaces(gaussian_matrix(60, 8, rng)).matrix;
    const auto T = normalize_spaces(gaussian_matrix(70, 8, rng)).matrix;
    const CslsConfig cfg{3, CslsDirection::symmetric};
    const auto d = induce_dictionary(S, T, cfg);
    const auto fwd = csls_retrieve(S, T, 3);
    const auto bwd = csls_retrieve(T, S, 3);
    std::set<std::int64_t> seen_src, seen_tgt;
    for (auto [i, j] : d.pairs) {
        CHECK(fwd[static_cast<std::size_t>(i)] == j);
        CHECK(bwd[static_cast<std::size_t>(j)] == i);
        CHECK(seen_src.insert(i).second);
        CHECK(seen_tgt.insert(j).second);
    }
    const auto forward = induce_dictionary(S, T, {3, CslsDirection::forward});
    CHECK(forward.size() == 60);
    CHECK(d.size() <= forward.size());
}

TEST_CASE("self_learn") {
    std::mt19937_64 rng(5);
    const auto R = random_orthogonal(12, rng);
    const auto X = normalize_spaces(gaussian_matrix(200, 12, rng)).matrix;
    const Eigen::MatrixXd Y = X * R;
    SelfLearnConfig cfg;
    cfg.csls.k = 5;

    SUBCASE("full seed on a rotated copy converges immediately") {
        const auto r = self_learn(X, Y, full_dictionary(200), cfg);
        CHECK(r.iterations <= 1);
        CHECK((r.transform - R).norm() < 1e-6);
    }
    SUBCASE("max_iter 0 returns the seed solution") {
        cfg.max_iter = 0;
        SeedDictionary seed;
        for (int i = 0; i < 40; ++i) seed.pairs.emplace_back(i, i);
        const auto r = self_learn(X, Y, seed, cfg);
        CHECK(r.objective_trace.size() == 1);
        CHECK((r.transform - procrustes(X, Y, seed)).norm() == 0.0);
        CHECK(r.final_dictionary.pairs == seed.pairs);
    }
    SUBCASE("noisy rotation from a 10 percent seed") {
        const Eigen::MatrixXd Yn = X * R + gaussian_matrix(200, 12, rng, 0.01);
        SeedDictionary seed;
        for (int i = 0; i < 20; ++i) seed.pairs.emplace_back(i * 10, i * 10);
        const auto r = self_learn(X, Yn, seed, cfg);
        for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
            CHECK(r.objective_trace[t] >= r.objective_trace[t - 1] - 1e-9);
        CHECK(orthogonality_error(r.transform) < 1e-6);
        std::vector<std::pair<std::int64_t, std::int64_t>> held_out;
        for (int i = 0; i < 200; ++i)
            if (i % 10) held_out.emplace_back(i, i);
        CHECK(precision_at_1(X, Yn, r.transform, held_out, 5) >= 0.9);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(self_learn(X, Y, SeedDictionary{}, cfg), ValidationError);
        cfg.max_iter = -1;
        CHECK_THROWS_AS(self_learn(X, Y, full_dictionary(3), cfg), ConfigError);
    }
}

TEST_CASE("unsupervised_init") {
    std::mt19937_64 rng(13);
    const auto R = random_orthogonal(10, rng);
    const auto X = normalize_spaces(gaussian_matrix(120, 10, rng)).matrix;
    const Eigen::MatrixXd Y = X * R;

    SUBCASE("rotated copy: identity pairing for every token") {
        const auto d = unsupervised_init(X, Y);
        CHECK(d.origin == DictOrigin::unsupervised_init);
        CHECK(d.size() == 120);
        for (auto [i, j] : d.pairs) CHECK(i == j);
    }
    SUBCASE("duplicate rows: at most one of them enters") {
        Eigen::MatrixXd Xd = X;
        Xd.row(7) = Xd.row(3);
        Eigen::MatrixXd Yd = Xd * R;
        const auto d = unsupervised_init(Xd, Yd);
        int dup = 0;
        for (auto [i, j] : d.pairs) dup += (i == 3 || i == 7);
        CHECK(dup <= 1);
    }
    SUBCASE("unrelated spaces: no crash") {
        const auto A = normalize_spaces(gaussian_matrix(500, 10, rng)).matrix;
        const auto B = normalize_spaces(gaussian_matrix(500, 10, rng)).matrix;
        const auto seed = unsupervised_init(A, B);
        if (!seed.empty()) {
            SelfLearnConfig cfg;
            cfg.max_iter = 3;
            const auto r = self_learn(A, B, seed, cfg);
            std::vector<std::pair<std::int64_t, std::int64_t>> gold{{0, 0}, {1, 1}};
            const double p = precision_at_1(A, B, r.transform, gold, 10);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
    CHECK_THROWS_AS(unsupervised_init(X.topRows(1), Y), ValidationError);
}

TEST_CASE("align end to end on tables") {
    std::mt19937_64 rng(31);
    std::vector<std::string> toks;
    for (int i = 0; i < 150; ++i) toks.push_back("t" + std::to_string(i));
    const auto R = random_orthogonal(8, rng);
    const auto X = gaussian_matrix(150, 8, rng);
    EmbeddingTable src(toks, X), tgt(toks, X * R);
    AlignConfig cfg;
    cfg.self_learning.csls.k = 5;
    const auto a = align(src, tgt, cfg);
    CHECK(a.result.seed_size == 150);
    const Eigen::MatrixXd mapped = a.source.matrix * a.result.transform;
    CHECK((mapped - a.target.matrix).cwiseAbs().maxCoeff() < 1e-6);

    EmbeddingTable other({"zz"}, Eigen::MatrixXd::Ones(1, 8));
    CHECK_THROWS_AS(align(src, other, cfg), ValidationError);
    EmbeddingTable wrong_dim(toks, Eigen::MatrixXd::Ones(150, 3));
    CHECK_THROWS_AS(align(src, wrong_dim, cfg), ConfigError);
}
