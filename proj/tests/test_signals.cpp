#include "mad/signals.hpp"

#include "mad/errors.hpp"
#include "mad/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace mad;
using namespace mad::signals;

TEST_CASE("min_log_likelihood") {
    std::vector<double> a{-0.2, -3.1, -0.7};
    CHECK(min_log_likelihood(a) == doctest::Approx(-3.1));
    std::vector<double> b{-0.5};
    CHECK(min_log_likelihood(b) == doctest::Approx(-0.5));
    std::vector<double> c{0.0, 0.0};
    CHECK(min_log_likelihood(c) == doctest::Approx(0.0));
    CHECK_THROWS_AS(min_log_likelihood(std::vector<double>{}), SignalUnavailable);
}

TEST_CASE("perplexity") {
    std::vector<double> zeros{0.0, 0.0, 0.0};
    CHECK(perplexity(zeros) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> one{-1.0};
    CHECK(perplexity(one) == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
    std::vector<double> mean_one{-0.5, -1.5};
    CHECK(perplexity(mean_one) == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
    CHECK_THROWS_AS(perplexity(std::vector<double>{}), SignalUnavailable);
}

TEST_CASE("perplexity is permutation invariant") {
    rng::Rand rnd(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> xs;
        int n = rnd.uniform_int(1, 12);
        for (int i = 0; i < n; ++i) xs.push_back(-3.0 * rnd.uniform());
        auto shuffled = xs;
        for (int i = n - 1; i > 0; --i) {
            std::swap(shuffled[i], shuffled[rnd.uniform_int(0, i)]);
        }
        CHECK(perplexity(xs) == doctest::Approx(perplexity(shuffled)).epsilon(1e-12));
    }
}

TEST_CASE("extract_self_confidence") {
    CHECK(*extract_self_confidence("...Confidence: 0.8") == doctest::Approx(0.8));
    CHECK(*extract_self_confidence("...confidence: 85%") == doctest::Approx(0.85));
    CHECK_FALSE(extract_self_confidence("no statement").has_value());
    // last occurrence wins, values clamp to [0,1]
    CHECK(*extract_self_confidence("Confidence: 0.2 ... Confidence: 0.9") ==
          doctest::Approx(0.9));
    CHECK(*extract_self_confidence("Confidence: 3.5") == doctest::Approx(1.0));
}

TEST_CASE("normalize_priors") {
    auto norm = [](PriorSignalKind kind, std::vector<double> vals) {
        std::vector<SignalValue> raw;
        for (double v : vals) raw.push_back({kind, v});
        return normalize_priors(raw);
    };
    auto a = norm(PriorSignalKind::MinLL, {-3, -1, -2});
    CHECK(a[0] == doctest::Approx(0.0));
    CHECK(a[1] == doctest::Approx(1.0));
    CHECK(a[2] == doctest::Approx(0.5));

    auto b = norm(PriorSignalKind::PPL, {2.0, 2.0});
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(b[1] == doctest::Approx(0.5));

    auto c = norm(PriorSignalKind::Conf, {0.1, 0.9});
    CHECK(c[0] == doctest::Approx(0.0));
    CHECK(c[1] == doctest::Approx(1.0));

    // PPL is lower-is-better: the smallest PPL normalizes to 1
    auto d = norm(PriorSignalKind::PPL, {1.5, 4.0, 2.0});
    CHECK(d[0] == doctest::Approx(1.0));
    CHECK(d[1] == doctest::Approx(0.0));
}

TEST_CASE("normalize_priors preserves the argmax") {
    rng::Rand rnd(99);
    for (int trial = 0; trial < 300; ++trial) {
        PriorSignalKind kind = static_cast<PriorSignalKind>(rnd.uniform_int(0, 2));
        int n = rnd.uniform_int(2, 8);
        std::vector<SignalValue> raw;
        for (int i = 0; i < n; ++i) raw.push_back({kind, rnd.normal(0.0, 2.0)});
        auto normed = normalize_priors(raw);

        auto oriented = [&](std::size_t i) {
            return orientation(kind) == Orientation::LowerIsBetter ? -raw[i].value
                                                                   : raw[i].value;
        };
        std::size_t best_raw = 0, best_norm = 0;
        for (std::size_t i = 1; i < raw.size(); ++i) {
            if (oriented(i) > oriented(best_raw)) best_raw = i;
            if (normed[i] > normed[best_norm]) best_norm = i;
        }
        CHECK(best_raw == best_norm);
    }
}

TEST_CASE("svr") {
    CHECK(svr(4, 3, 1) == doctest::Approx(0.5));
    CHECK(svr(3, 3, 0) == doctest::Approx(1.0));
    CHECK(svr(2, 0, 2) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(svr(0, 0, 0), SvrUndefined);
    CHECK_THROWS_AS(svr(3, 1, 1), InvalidCounters);
    for (int d = 1; d <= 20; ++d) {
        CHECK(svr(d, d, 0) == doctest::Approx(1.0));
        CHECK(svr(d, 0, d) == doctest::Approx(-1.0));
    }
}

TEST_CASE("correctness_score posterior-dominant rule") {
    CorrectnessState s;
    s.prior = 0.7;
    CHECK(correctness_score(s) == doctest::Approx(0.7));
    s.debates = 2;
    s.retentions = 2;
    CHECK(correctness_score(s) == doctest::Approx(1.0));
    s.debates = 4;
    s.retentions = 3;
    s.changes = 1;
    CHECK(correctness_score(s) == doctest::Approx(0.75));
}

TEST_CASE("correctness_score is monotone in retentions at fixed D") {
    for (int d = 1; d <= 10; ++d) {
        double prev = -1.0;
        for (int r = 0; r <= d; ++r) {
            CorrectnessState s;
            s.debates = d;
            s.retentions = r;
            s.changes = d - r;
            double score = correctness_score(s);
            CHECK(score > prev);
            prev = score;
        }
    }
}

namespace {

DebateEvent event_with_post(std::vector<double> logliks, double conf) {
    DebateEvent ev;
    ev.receiver_post.token_logliks = std::move(logliks);
    ev.receiver_post.self_confidence = conf;
    return ev;
}

}  // namespace

TEST_CASE("mean_posterior_signal") {
    std::vector<DebateEvent> events{event_with_post({-1.0}, 0.8),
                                    event_with_post({-3.0}, 0.6)};
    CHECK(mean_posterior_signal(events, PriorSignalKind::MinLL) == doctest::Approx(-2.0));

    std::vector<DebateEvent> single{event_with_post({-0.5}, 0.8)};
    CHECK(mean_posterior_signal(single, PriorSignalKind::Conf) == doctest::Approx(0.8));

    std::vector<DebateEvent> ppl_events{event_with_post({-1.0}, 0.1),
                                        event_with_post({-1.0}, 0.1)};
    CHECK(mean_posterior_signal(ppl_events, PriorSignalKind::PPL) ==
          doctest::Approx(std::exp(1.0)).epsilon(1e-9));

    CHECK_THROWS_AS(mean_posterior_signal({}, PriorSignalKind::MinLL),
                    SignalUnavailable);
}
