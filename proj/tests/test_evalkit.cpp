#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "deeper/evalkit.hpp"

using namespace deeper;
using Catch::Approx;

namespace {

eval::HistogramDist dist_from_probs(std::vector<double> probs) {
    eval::HistogramDist d;
    d.probs = std::move(probs);
    d.edges.resize(d.probs.size() + 1);
    for (std::size_t i = 0; i < d.edges.size(); ++i) d.edges[i] = static_cast<double>(i);
    return d;
}

eval::HistogramDist random_dist(std::mt19937& rng, std::size_t bins) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(bins);
    double sum = 0.0;
    for (auto& x : p) {
        x = u(rng) + 1e-12;
        sum += x;
    }
    for (auto& x : p) x /= sum;
    return dist_from_probs(std::move(p));
}

// independent hand computation of JSD(P=(0.5,0.5), Q=(1,0)) with base-2 logs:
// M = (0.75, 0.25)
// KL(P||M) = 0.5*log2(0.5/0.75) + 0.5*log2(0.5/0.25)
// KL(Q||M) = 1.0*log2(1/0.75)
// JSD = sqrt((KL(P||M) + KL(Q||M)) / 2)
double hand_jsd_half_half_vs_point() {
    double kl_pm = 0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25);
    double kl_qm = 1.0 * std::log2(1.0 / 0.75);
    return std::sqrt(0.5 * kl_pm + 0.5 * kl_qm);
}

lit::EvidenceItem item(const std::string& pmid, const std::string& title,
                       std::optional<int> year = std::nullopt) {
    lit::EvidenceItem it;
    it.kind = lit::EvidenceKind::pubmed_abstract;
    it.source_id = pmid;
    it.title = title;
    it.body = "abstract of " + title;
    it.year = year;
    return it;
}

class VectorMockEmbedder final : public llm::EmbeddingProvider {
public:
    explicit VectorMockEmbedder(std::size_t dim) : dim_(dim) {}

    void set(const std::string& text, std::vector<double> v) { map_[text] = std::move(v); }

    std::vector<double> embed(const std::string& text) override {
        auto it = map_.find(text);
        require(it != map_.end(), ErrorCode::not_found, "no vector for: " + text);
        return check(it->second);
    }

    std::size_t dimension() const override { return dim_; }
    std::string name() const override { return "vector-mock"; }

private:
    std::size_t dim_;
    std::map<std::string, std::vector<double>> map_;
};

class ScriptedJudge final : public llm::ChatProvider {
public:
    explicit ScriptedJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {}

    std::string chat_complete(const llm::GenerationRequest&) override {
        if (fail_always) fail(ErrorCode::unavailable, "judge down");
        require(next_ < replies_.size(), ErrorCode::unavailable, "script exhausted");
        return replies_[next_++];
    }

    std::string name() const override { return "scripted-judge"; }

    bool fail_always = false;

private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

}  // namespace

TEST_CASE("accuracy is the exact quotient", "[evalkit]") {
    CHECK(eval::accuracy(396, 500) == 0.792);
    CHECK(eval::accuracy(5, 5) == 1.0);
    CHECK(eval::accuracy(0, 10) == 0.0);
    CHECK_THROWS_AS(eval::accuracy(1, 0), Error);
    CHECK_THROWS_AS(eval::accuracy(6, 5), Error);
}

TEST_CASE("component_histogram pools and smooths", "[evalkit]") {
    SECTION("degenerate all-equal vector occupies one bin") {
        std::vector<std::vector<double>> vectors{std::vector<double>(768, 0.5)};
        bool degenerate = false;
        auto d = eval::component_histogram(vectors, 100, eval::BinRange::pooled, 0, 0,
                                           eval::kDefaultEpsilon, &degenerate);
        CHECK(degenerate);
        d.validate();
        CHECK(eval::shannon_entropy(d) < 1e-6);
    }
    SECTION("uniform synthetic counts give uniform probabilities") {
        // one component per bin center over [0, 100)
        std::vector<double> v;
        for (int k = 0; k < 100; ++k) v.push_back(k + 0.5);
        auto d = eval::component_histogram({v}, 100, eval::BinRange::fixed, 0.0, 100.0);
        d.validate();
        for (double p : d.probs) CHECK(p == Approx(0.01).epsilon(1e-9));
    }
    SECTION("permutation invariance") {
        std::mt19937 rng(7);
        std::vector<double> v(64);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& x : v) x = u(rng);
        auto shuffled = v;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto a = eval::component_histogram({v}, 50);
        auto b = eval::component_histogram({shuffled}, 50);
        CHECK(a.probs == b.probs);
        // vector order within a set is immaterial too
        auto c = eval::component_histogram({v, shuffled}, 50);
        auto d = eval::component_histogram({shuffled, v}, 50);
        CHECK(c.probs == d.probs);
    }
}

TEST_CASE("shannon entropy analytic anchors", "[evalkit]") {
    SECTION("uniform over 100 bins is log2(100)") {
        auto d = dist_from_probs(std::vector<double>(100, 0.01));
        CHECK(eval::shannon_entropy(d) == Approx(std::log2(100.0)).margin(1e-9));
        CHECK(eval::shannon_entropy(d) == Approx(6.643856189774724).margin(1e-9));
    }
    SECTION("two equal bins give exactly one bit") {
        auto d = dist_from_probs({0.5, 0.5});
        CHECK(eval::shannon_entropy(d) == Approx(1.0).margin(1e-12));
    }
    SECTION("single-bin mass via the histogram path is ~0") {
        std::vector<std::vector<double>> vectors{std::vector<double>(768, 0.25)};
        auto d = eval::component_histogram(vectors, 100);
        CHECK(eval::shannon_entropy(d) < 1e-6);
    }
    SECTION("bounds hold over random distributions") {
        std::mt19937 rng(99);
        for (int i = 0; i < 200; ++i) {
            auto d = random_dist(rng, 100);
            double h = eval::shannon_entropy(d);
            CHECK(h >= 0.0);
            CHECK(h <= std::log2(100.0) + 1e-9);
        }
    }
}

TEST_CASE("jensen-shannon distance anchors", "[evalkit]") {
    SECTION("identity") {
        auto p = dist_from_probs({0.3, 0.7});
        CHECK(eval::jensen_shannon_distance(p, p) < 1e-9);
    }
    SECTION("disjoint supports reach 1 with base-2 logs") {
        auto p = dist_from_probs({1.0, 0.0});
        auto q = dist_from_probs({0.0, 1.0});
        CHECK(eval::jensen_shannon_distance(p, q) == Approx(1.0).margin(1e-6));
    }
    SECTION("hand-derived (0.5,0.5) vs (1,0) case") {
        auto p = dist_from_probs({0.5, 0.5});
        auto q = dist_from_probs({1.0, 0.0});
        double expected = hand_jsd_half_half_vs_point();
        CHECK(expected == Approx(0.5579230452841438).margin(1e-9));  // frozen from the oracle
        CHECK(eval::jensen_shannon_distance(p, q) == Approx(expected).margin(1e-6));
    }
    SECTION("symmetry and range over random pairs") {
        std::mt19937 rng(123);
        for (int i = 0; i < 200; ++i) {
            auto p = random_dist(rng, 60);
            auto q = random_dist(rng, 60);
            double pq = eval::jensen_shannon_distance(p, q);
            double qp = eval::jensen_shannon_distance(q, p);
            CHECK(std::abs(pq - qp) < 1e-12);
            CHECK(pq >= 0.0);
            CHECK(pq <= 1.0 + 1e-12);
        }
    }
    SECTION("mismatched edges are rejected") {
        auto p = dist_from_probs({0.5, 0.5});
        auto q = dist_from_probs({0.5, 0.5});
        q.edges[1] += 0.5;
        CHECK_THROWS_AS(eval::jensen_shannon_distance(p, q), Error);
    }
}

TEST_CASE("paired histograms share pooled edges", "[evalkit]") {
    std::vector<std::vector<double>> a{{0.0, 1.0, 2.0}};
    std::vector<std::vector<double>> b{{5.0, 9.0}};
    auto [p, q] = eval::paired_histograms(a, b, 10);
    CHECK(p.edges == q.edges);
    CHECK(p.edges.front() == 0.0);
    CHECK(p.edges.back() == 9.0);
    CHECK(eval::jensen_shannon_distance(p, q) > 0.0);
}

TEST_CASE("set similarity via mock embedder", "[evalkit]") {
    VectorMockEmbedder embedder(4);
    auto a1 = item("11111111", "alpha");
    auto b1 = item("22222222", "beta");
    embedder.set(eval::title_and_abstract(a1), {1.0, 0.0, 0.0, 0.0});
    embedder.set(eval::title_and_abstract(b1), {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0.0, 0.0});

    SECTION("identical sets give 1") {
        CHECK(eval::set_similarity({a1}, {a1}, embedder) == Approx(1.0).margin(1e-9));
    }
    SECTION("hand cosine: (1,0,..) vs (1,1,..)/sqrt(2) is sqrt(2)/2") {
        double value = eval::set_similarity({a1}, {b1}, embedder);
        CHECK(value == Approx(std::sqrt(2.0) / 2.0).margin(1e-9));
        CHECK(value == Approx(0.7071067811865476).margin(1e-9));
    }
    SECTION("orthogonal mean vectors give 0") {
        auto c1 = item("33333333", "gamma");
        embedder.set(eval::title_and_abstract(c1), {0.0, 0.0, 1.0, 0.0});
        CHECK(eval::set_similarity({a1}, {c1}, embedder) == Approx(0.0).margin(1e-12));
    }
    SECTION("empty sets are rejected") {
        CHECK_THROWS_AS(eval::set_similarity({}, {a1}, embedder), Error);
    }
}

TEST_CASE("source coverage", "[evalkit]") {
    CHECK(eval::source_coverage({"A", "B", "C", "D"}, {"A", "B", "C"}) == 1.0);
    CHECK(eval::source_coverage({"A"}, {"A", "B"}) == 0.5);
    CHECK(eval::source_coverage({}, {"A"}) == 0.0);
    CHECK_THROWS_AS(eval::source_coverage({"A"}, {}), Error);

    SECTION("monotone non-decreasing in cited") {
        std::set<std::string> truth{"A", "B", "C", "D"};
        std::set<std::string> cited;
        double prev = 0.0;
        for (const auto& id : {"X", "A", "Y", "B", "C", "D"}) {
            cited.insert(id);
            double cov = eval::source_coverage(cited, truth);
            CHECK(cov >= prev);
            prev = cov;
        }
        CHECK(prev == 1.0);
    }
}

TEST_CASE("nugget coverage counts judge verdicts", "[evalkit]") {
    SECTION("3 of 5 matched") {
        ScriptedJudge judge({"MATCHED", "UNMATCHED", "MATCHED", "MATCHED", "UNMATCHED"});
        auto res = eval::nugget_coverage("some answer text",
                                         {"n1", "n2", "n3", "n4", "n5"}, judge);
        CHECK(res.matched == 3);
        CHECK(res.total == 5);
        CHECK(res.undecided.empty());
    }
    SECTION("judge down leaves nuggets undecided") {
        ScriptedJudge judge({});
        judge.fail_always = true;
        auto res = eval::nugget_coverage("answer", {"n1", "n2"}, judge);
        CHECK(res.matched == 0);
        CHECK(res.total == 2);
        CHECK(res.undecided.size() == 2);
    }
    SECTION("empty nugget list is a precondition error") {
        ScriptedJudge judge({});
        CHECK_THROWS_AS(eval::nugget_coverage("answer", {}, judge), Error);
    }
}

TEST_CASE("open-ended judge verdicts", "[evalkit]") {
    SECTION("consistent") {
        ScriptedJudge judge({"CONSISTENT"});
        CHECK(eval::judge_open_ended("pred", "ref", judge) == eval::JudgeVerdict::consistent);
    }
    SECTION("inconsistent") {
        ScriptedJudge judge({"The verdict is: INCONSISTENT"});
        CHECK(eval::judge_open_ended("pred", "ref", judge) == eval::JudgeVerdict::inconsistent);
    }
    SECTION("garbage twice errors") {
        ScriptedJudge judge({"hmm", "no idea"});
        CHECK_THROWS_AS(eval::judge_open_ended("pred", "ref", judge), Error);
    }
}

TEST_CASE("year distribution and recent share", "[evalkit]") {
    SECTION("hand-counted recent share") {
        std::vector<lit::EvidenceItem> refs = {
            item("1", "a", 2010), item("2", "b", 2022), item("3", "c", 2024),
            item("4", "d", 2024)};
        auto d = eval::year_distribution(refs, 2025);
        REQUIRE(d.recent_share.has_value());
        CHECK(*d.recent_share == Approx(0.75));
        CHECK(d.counts.at(2024) == 2);
        CHECK(d.unknown == 0);
    }
    SECTION("all unknown years") {
        std::vector<lit::EvidenceItem> refs = {item("1", "a"), item("2", "b")};
        auto d = eval::year_distribution(refs, 2025);
        CHECK(!d.recent_share.has_value());
        CHECK(d.counts.empty());
        CHECK(d.unknown == 2);
    }
    SECTION("single current-year item") {
        std::vector<lit::EvidenceItem> refs = {item("1", "a", 2025)};
        auto d = eval::year_distribution(refs, 2025);
        REQUIRE(d.recent_share.has_value());
        CHECK(*d.recent_share == 1.0);
    }
}
