#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>

#include "deeper/core.hpp"
#include "deeper/litclients.hpp"
#include "deeper/llm.hpp"

namespace deeper::eval {

inline constexpr int kDefaultBins = 100;
inline constexpr double kDefaultEpsilon = 1e-12;

/// Discrete probability distribution over K histogram bins, epsilon-smoothed
/// and renormalized so every bin carries positive mass.
struct HistogramDist {
    std::vector<double> edges;  // K+1, strictly increasing
    std::vector<double> probs;  // K, sums to 1
    double epsilon = kDefaultEpsilon;

    std::size_t bins() const { return probs.size(); }

    void validate() const {
        require(edges.size() == probs.size() + 1, ErrorCode::validation,
                "histogram: edges must be bins + 1");
        require(probs.size() >= 2, ErrorCode::validation, "histogram: need at least 2 bins");
        for (std::size_t i = 1; i < edges.size(); ++i) {
            require(edges[i] > edges[i - 1], ErrorCode::validation,
                    "histogram: edges not strictly increasing");
        }
        double sum = 0.0;
        for (double p : probs) {
            require(p >= 0.0, ErrorCode::validation, "histogram: negative probability");
            sum += p;
        }
        require(std::abs(sum - 1.0) <= 1e-9, ErrorCode::validation,
                "histogram: probabilities sum to " + std::to_string(sum));
    }

    json to_json() const {
        return json{{"edges", edges}, {"probs", probs}, {"epsilon", epsilon}};
    }

    static HistogramDist from_json(const json& j) {
        HistogramDist d;
        d.edges = j.at("edges").get<std::vector<double>>();
        d.probs = j.at("probs").get<std::vector<double>>();
        d.epsilon = j.value("epsilon", kDefaultEpsilon);
        d.validate();
        return d;
    }
};

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::string inputs_digest;
    json parameters = json::object();

    json to_json() const {
        return json{{"metric", metric},
                    {"value", value},
                    {"inputs_digest", inputs_digest},
                    {"parameters", parameters}};
    }
};

/// Exact quotient; (396, 500) prints as 0.792.
inline double accuracy(std::size_t correct, std::size_t total) {
    require(total > 0, ErrorCode::precondition, "accuracy: total must be > 0");
    require(correct <= total, ErrorCode::precondition, "accuracy: correct exceeds total");
    return static_cast<double>(correct) / static_cast<double>(total);
}

enum class BinRange { pooled, fixed };

/// Pool every scalar component of every input vector into one K-bin
/// histogram, normalize counts to probabilities, add epsilon to each bin and
/// renormalize. Values outside a fixed range clamp to the boundary bins.
inline HistogramDist component_histogram(const std::vector<std::vector<double>>& vectors,
                                         int bins = kDefaultBins,
                                         BinRange range = BinRange::pooled,
                                         double lo = 0.0, double hi = 0.0,
                                         double epsilon = kDefaultEpsilon,
                                         bool* degenerate = nullptr) {
    require(bins >= 2, ErrorCode::precondition, "component_histogram: K must be >= 2");
    require(!vectors.empty(), ErrorCode::precondition, "component_histogram: no vectors");
    std::size_t dim = vectors.front().size();
    require(dim > 0, ErrorCode::precondition, "component_histogram: empty vector");
    std::size_t n = 0;
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& v : vectors) {
        require(v.size() == dim, ErrorCode::precondition,
                "component_histogram: mixed vector dimensions");
        for (double x : v) {
            require(std::isfinite(x), ErrorCode::precondition,
                    "component_histogram: non-finite component");
            mn = std::min(mn, x);
            mx = std::max(mx, x);
            ++n;
        }
    }
    if (range == BinRange::fixed) {
        require(hi > lo, ErrorCode::precondition, "component_histogram: fixed range needs hi > lo");
        mn = lo;
        mx = hi;
    }
    bool degen = !(mx > mn);
    if (degenerate) *degenerate = degen;
    if (degen) {
        // all components equal: widen an artificial unit range around the value
        mn -= 0.5;
        mx += 0.5;
    }

    HistogramDist d;
    d.epsilon = epsilon;
    d.edges.resize(static_cast<std::size_t>(bins) + 1);
    double width = (mx - mn) / bins;
    for (int k = 0; k <= bins; ++k) d.edges[static_cast<std::size_t>(k)] = mn + width * k;
    d.edges.back() = mx;  // guard against rounding

    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (const auto& v : vectors) {
        for (double x : v) {
            double t = (x - mn) / (mx - mn);
            auto k = static_cast<long>(t * bins);
            k = std::clamp(k, 0L, static_cast<long>(bins) - 1);
            counts[static_cast<std::size_t>(k)] += 1.0;
        }
    }
    d.probs.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        d.probs[k] = counts[k] / static_cast<double>(n);
    }
    // epsilon smoothing, then renormalize
    double sum = 0.0;
    for (double& p : d.probs) {
        p += epsilon;
        sum += p;
    }
    for (double& p : d.probs) p /= sum;
    return d;
}

/// Base-2 Shannon entropy in bits; bounded by log2(K).
inline double shannon_entropy(const HistogramDist& dist) {
    dist.validate();
    double h = 0.0;
    for (double p : dist.probs) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    return h;
}

/// Jensen-Shannon distance with base-2 logs: sqrt of the mean KL divergence
/// of P and Q against their midpoint. Bounded in [0, 1]; requires shared
/// edges.
inline double jensen_shannon_distance(const HistogramDist& p, const HistogramDist& q) {
    p.validate();
    q.validate();
    require(p.bins() == q.bins(), ErrorCode::precondition, "jsd: bin counts differ");
    for (std::size_t i = 0; i < p.edges.size(); ++i) {
        require(std::abs(p.edges[i] - q.edges[i]) <= 1e-12, ErrorCode::precondition,
                "jsd: bin edges differ");
    }
    double kl_pm = 0.0;
    double kl_qm = 0.0;
    for (std::size_t k = 0; k < p.bins(); ++k) {
        double m = 0.5 * (p.probs[k] + q.probs[k]);
        if (p.probs[k] > 0.0 && m > 0.0) kl_pm += p.probs[k] * std::log2(p.probs[k] / m);
        if (q.probs[k] > 0.0 && m > 0.0) kl_qm += q.probs[k] * std::log2(q.probs[k] / m);
    }
    double jsd2 = 0.5 * kl_pm + 0.5 * kl_qm;
    if (jsd2 < 0.0) jsd2 = 0.0;  // numeric noise near identity
    return std::sqrt(jsd2);
}

/// Shared-edge histograms for two vector sets: bin range is the pooled
/// min/max over the union of both inputs.
inline std::pair<HistogramDist, HistogramDist> paired_histograms(
    const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
    int bins = kDefaultBins, double epsilon = kDefaultEpsilon) {
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto* set : {&a, &b}) {
        for (const auto& v : *set) {
            for (double x : v) {
                mn = std::min(mn, x);
                mx = std::max(mx, x);
            }
        }
    }
    if (!(mx > mn)) {
        mn -= 0.5;
        mx += 0.5;
    }
    auto p = component_histogram(a, bins, BinRange::fixed, mn, mx, epsilon);
    auto q = component_histogram(b, bins, BinRange::fixed, mn, mx, epsilon);
    return {p, q};
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size() && !a.empty(), ErrorCode::precondition,
            "cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorCode::precondition, "cosine: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline std::vector<double> mean_pool(const std::vector<std::vector<double>>& vs) {
    require(!vs.empty(), ErrorCode::precondition, "mean_pool: empty set");
    std::vector<double> m(vs.front().size(), 0.0);
    for (const auto& v : vs) {
        require(v.size() == m.size(), ErrorCode::precondition, "mean_pool: dimension mismatch");
        for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i];
    }
    for (double& x : m) x /= static_cast<double>(vs.size());
    return m;
}

inline std::string title_and_abstract(const lit::EvidenceItem& item) {
    std::string text = item.title;
    if (!item.body.empty()) {
        if (!text.empty()) text += ". ";
        text += item.body;
    }
    return text;
}

/// Cosine similarity between the mean-pooled title+abstract embeddings of
/// the two sets.
inline double set_similarity(const std::vector<lit::EvidenceItem>& retrieved,
                             const std::vector<lit::EvidenceItem>& reference,
                             llm::EmbeddingProvider& embedder) {
    require(!retrieved.empty() && !reference.empty(), ErrorCode::precondition,
            "set_similarity: empty evidence set");
    auto embed_all = [&](const std::vector<lit::EvidenceItem>& items) {
        std::vector<std::vector<double>> vs;
        vs.reserve(items.size());
        for (const auto& it : items) vs.push_back(embedder.embed(title_and_abstract(it)));
        return vs;
    };
    return cosine(mean_pool(embed_all(retrieved)), mean_pool(embed_all(reference)));
}

/// |cited ∩ ground_truth| / |ground_truth|.
inline double source_coverage(const std::set<std::string>& cited,
                              const std::set<std::string>& ground_truth) {
    require(!ground_truth.empty(), ErrorCode::precondition, "source_coverage: empty ground truth");
    std::size_t hit = 0;
    for (const auto& id : ground_truth) hit += cited.count(id);
    return static_cast<double>(hit) / static_cast<double>(ground_truth.size());
}

struct NuggetResult {
    std::size_t matched = 0;
    std::size_t total = 0;
    std::vector<std::string> undecided;  // nuggets the judge failed to decide
    std::vector<bool> verdicts;          // per nugget, false when unmatched/undecided
};

/// Ask the judge, per nugget, whether the answer text contains that
/// knowledge element. Judge failures after one retry leave the nugget
/// undecided (counted in total, never in matched).
inline NuggetResult nugget_coverage(const std::string& answer,
                                    const std::vector<std::string>& nuggets,
                                    llm::ChatProvider& judge) {
    require(!nuggets.empty(), ErrorCode::precondition, "nugget_coverage: no nuggets");
    NuggetResult res;
    res.total = nuggets.size();
    for (const auto& nugget : nuggets) {
        llm::GenerationRequest req;
        req.purpose = llm::Purpose::judge;
        req.sampling = llm::Sampling::deterministic;
        req.messages = {
            {"system",
             "You check whether an answer contains a specific knowledge element. "
             "Reply with exactly one word: MATCHED or UNMATCHED."},
            {"user", "Knowledge element: " + nugget + "\n\nAnswer:\n" + answer},
        };
        bool decided = false;
        bool matched = false;
        for (int attempt = 0; attempt < 2 && !decided; ++attempt) {
            try {
                auto verdict = normalize_text(judge.chat_complete(req));
                if (verdict.find("unmatched") != std::string::npos) {
                    decided = true;
                    matched = false;
                } else if (verdict.find("matched") != std::string::npos) {
                    decided = true;
                    matched = true;
                }
            } catch (const Error&) {
                // retry once, then leave undecided
            }
        }
        if (!decided) {
            res.undecided.push_back(nugget);
            res.verdicts.push_back(false);
        } else {
            res.verdicts.push_back(matched);
            if (matched) ++res.matched;
        }
    }
    return res;
}

enum class JudgeVerdict { consistent, inconsistent };

/// Binary consistency verdict between a prediction and a reference answer;
/// aggregates to accuracy over a dataset.
inline JudgeVerdict judge_open_ended(const std::string& prediction, const std::string& reference,
                                     llm::ChatProvider& judge) {
    require(!prediction.empty() && !reference.empty(), ErrorCode::precondition,
            "judge_open_ended: empty text");
    llm::GenerationRequest req;
    req.purpose = llm::Purpose::judge;
    req.sampling = llm::Sampling::deterministic;
    req.messages = {
        {"system",
         "You compare a predicted answer with a reference answer and decide whether they "
         "agree on the substantive conclusion. Reply with exactly one word: CONSISTENT or "
         "INCONSISTENT."},
        {"user", "Reference answer:\n" + reference + "\n\nPredicted answer:\n" + prediction},
    };
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto verdict = normalize_text(judge.chat_complete(req));
        if (verdict.find("inconsistent") != std::string::npos) return JudgeVerdict::inconsistent;
        if (verdict.find("consistent") != std::string::npos) return JudgeVerdict::consistent;
    }
    fail(ErrorCode::protocol, "judge_open_ended: unparseable verdict after reprompt");
}

struct YearDistribution {
    std::map<int, std::size_t> counts;     // known years only
    std::size_t unknown = 0;
    std::optional<double> recent_share;    // unset when no year is known

    json to_json() const {
        json years = json::object();
        for (const auto& [y, c] : counts) years[std::to_string(y)] = c;
        json j{{"years", years}, {"unknown", unknown}};
        if (recent_share) j["recent_share"] = *recent_share;
        return j;
    }
};

/// Count references per publication year; recent share is the fraction of
/// known-year items published in the last five calendar years (current year
/// minus four, inclusive).
inline YearDistribution year_distribution(const std::vector<lit::EvidenceItem>& references,
                                          int current_year) {
    YearDistribution d;
    std::size_t known = 0;
    std::size_t recent = 0;
    for (const auto& item : references) {
        if (item.year) {
            d.counts[*item.year] += 1;
            ++known;
            if (*item.year >= current_year - 4) ++recent;
        } else {
            ++d.unknown;
        }
    }
    if (known > 0) {
        d.recent_share = static_cast<double>(recent) / static_cast<double>(known);
    }
    return d;
}

inline MetricReport make_report(const std::string& metric, double value,
                                const std::string& inputs, json parameters) {
    return MetricReport{metric, value, hex_digest(inputs), std::move(parameters)};
}

}  // namespace deeper::eval
