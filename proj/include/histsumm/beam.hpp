#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace histsumm {

struct BeamResult {
    std::vector<int> tokens;  // includes the end token when the hypothesis finished
    double log_prob = 0.0;
    bool finished = false;

    double normalized() const { return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size()); }
};

namespace detail {

template <typename State>
struct Hypothesis {
    std::vector<int> tokens;
    double log_prob = 0.0;
    State state;
};

/// Higher score first; ties go to the lexicographically smaller token sequence, then the shorter one.
inline bool beam_before(double score_a, const std::vector<int>& a, double score_b, const std::vector<int>& b) {
    if (score_a != score_b) return score_a > score_b;
    if (a != b) return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    return a.size() < b.size();
}

}  // namespace detail

/// Length-normalised beam search. `step(state, previous_token)` returns the
/// log-probabilities of the next token and the successor state. Search stops
/// when `beam_size` hypotheses have emitted `end_token` or `max_len` tokens
/// were produced; unfinished hypotheses at max_len compete with finished ones.
template <typename State, typename StepFn>
BeamResult beam_search(State initial, int start_token, int end_token, int beam_size, int max_len, StepFn&& step) {
    using Hyp = detail::Hypothesis<State>;
    beam_size = std::max(1, beam_size);
    std::vector<Hyp> live;
    live.push_back(Hyp{{}, 0.0, std::move(initial)});
    std::vector<Hyp> finished;

    for (int len = 1; len <= max_len && !live.empty(); ++len) {
        std::vector<Hyp> candidates;
        for (const auto& h : live) {
            auto [logp, next] = step(h.state, h.tokens.empty() ? start_token : h.tokens.back());
            const Eigen::Index V = logp.size();
            std::vector<int> order(static_cast<std::size_t>(V));
            std::iota(order.begin(), order.end(), 0);
            const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(2 * beam_size));
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                              [&](int a, int b) { return logp[a] != logp[b] ? logp[a] > logp[b] : a < b; });
            for (std::size_t r = 0; r < keep; ++r) {
                const int tok = order[r];
                if (!std::isfinite(logp[tok])) continue;
                Hyp c{h.tokens, h.log_prob + logp[tok], next};
                c.tokens.push_back(tok);
                candidates.push_back(std::move(c));
            }
        }
        std::stable_sort(candidates.begin(), candidates.end(), [](const Hyp& a, const Hyp& b) {
            return detail::beam_before(a.log_prob, a.tokens, b.log_prob, b.tokens);
        });
        live.clear();
        for (auto& c : candidates) {
            if (c.tokens.back() == end_token)
                finished.push_back(std::move(c));
            else
                live.push_back(std::move(c));
            if (static_cast<int>(live.size()) == beam_size || static_cast<int>(finished.size()) == beam_size) break;
        }
        if (static_cast<int>(finished.size()) >= beam_size) {
            live.clear();
            break;
        }
    }
    for (auto& h : live) finished.push_back(std::move(h));

    BeamResult best;
    bool have = false;
    for (const auto& h : finished) {
        BeamResult r{h.tokens, h.log_prob, !h.tokens.empty() && h.tokens.back() == end_token};
        if (!have || detail::beam_before(r.normalized(), r.tokens, best.normalized(), best.tokens)) {
            best = std::move(r);
            have = true;
        }
    }
    return best;
}

}  // namespace histsumm
