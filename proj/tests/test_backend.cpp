#include "mad/backend.hpp"

#include "mad/errors.hpp"
#include "mad/trace_io.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <filesystem>
#include <thread>

using namespace mad;
using nlohmann::json;

namespace {

Question make_question(const std::string& id = "q1") {
    Question q;
    q.id = id;
    q.text = "What is 2 + 2?";
    q.gold_answer = canonicalize("4");
    return q;
}

SimParams sure_retainer() {
    SimParams p;
    p.p_correct = 0.5;
    p.p_retain_correct_vs_correct = 1.0;
    p.p_retain_correct_vs_wrong = 1.0;
    p.p_retain_wrong_vs_correct = 1.0;
    p.p_retain_wrong_vs_wrong = 1.0;
    return p;
}

}  // namespace

TEST_CASE("simulated initial answers follow degenerate p_correct") {
    Question q = make_question();
    SimParams p;
    p.p_correct = 1.0;
    SimulatedBackend always(p, 42);
    for (int i = 0; i < 6; ++i) {
        CHECK(answers_equal(always.generate_initial(q, i).answer, *q.gold_answer));
    }
    p.p_correct = 0.0;
    SimulatedBackend never(p, 42);
    for (int i = 0; i < 6; ++i) {
        CHECK_FALSE(answers_equal(never.generate_initial(q, i).answer, *q.gold_answer));
    }
}

TEST_CASE("simulated backend is deterministic per (seed, question, index)") {
    Question q = make_question();
    SimParams p;
    SimulatedBackend a(p, 7);
    SimulatedBackend b(p, 7);
    for (int i = 0; i < 6; ++i) {
        auto ra = a.generate_initial(q, i);
        auto rb = b.generate_initial(q, i);
        CHECK(to_json(ra) == to_json(rb));
    }
    SimulatedBackend c(p, 8);
    bool any_diff = false;
    for (int i = 0; i < 6; ++i) {
        if (to_json(a.generate_initial(q, i)) != to_json(c.generate_initial(q, i))) {
            any_diff = true;
        }
    }
    CHECK(any_diff);
}

TEST_CASE("simulated debate: full retention keeps the answer") {
    Question q = make_question();
    SimulatedBackend backend(sure_retainer(), 3);
    auto receiver = backend.generate_initial(q, 0);
    auto sender = backend.generate_initial(q, 1);
    DebateContext ctx;
    ctx.receiver_history = {receiver};
    ctx.sender_outputs = {sender};
    ctx.event_index = 0;
    auto post = backend.debate(q, ctx);
    CHECK(answers_equal(post.answer, receiver.answer));
    CHECK(post.turn == 1);
}

TEST_CASE("simulated debate: forced adoption takes the sender's answer") {
    Question q = make_question();
    SimParams p;
    p.p_correct = 0.0;  // receiver wrong
    p.p_retain_wrong_vs_correct = 0.0;
    p.adopt_prob = 1.0;
    SimulatedBackend backend(p, 5);
    auto receiver = backend.generate_initial(q, 0);

    AgentResponse sender;  // correct challenger
    sender.agent_id = 1;
    sender.answer = *q.gold_answer;
    sender.reasoning = "Answer: 4";
    sender.token_logliks = {-0.5};

    DebateContext ctx;
    ctx.receiver_history = {receiver};
    ctx.sender_outputs = {sender};
    ctx.event_index = 0;
    auto post = backend.debate(q, ctx);
    CHECK(answers_equal(post.answer, *q.gold_answer));
}

TEST_CASE("simulated logliks are informative under prior separation") {
    Question q = make_question();
    SimParams p;
    p.p_correct = 1.0;
    p.prior_separation = 1.5;
    SimulatedBackend correct(p, 9);
    p.p_correct = 0.0;
    SimulatedBackend wrong(p, 9);

    double correct_mean = 0.0, wrong_mean = 0.0;
    int n = 50;
    for (int i = 0; i < n; ++i) {
        auto rc = correct.generate_initial(make_question("q" + std::to_string(i)), 0);
        auto rw = wrong.generate_initial(make_question("q" + std::to_string(i)), 0);
        for (double v : rc.token_logliks) correct_mean += v;
        for (double v : rw.token_logliks) wrong_mean += v;
    }
    CHECK(correct_mean > wrong_mean);
}

TEST_CASE("debate prompt contains peers in ascending agent id") {
    Question q = make_question();
    AgentResponse receiver;
    receiver.agent_id = 0;
    receiver.reasoning = "my own reasoning";

    AgentResponse peer3;
    peer3.agent_id = 3;
    peer3.reasoning = "PEER_THREE_TEXT";
    AgentResponse peer1;
    peer1.agent_id = 1;
    peer1.reasoning = "PEER_ONE_TEXT";

    std::string prompt = format_debate_prompt(q, {receiver}, {peer3, peer1});
    auto pos1 = prompt.find("PEER_ONE_TEXT");
    auto pos3 = prompt.find("PEER_THREE_TEXT");
    REQUIRE(pos1 != std::string::npos);
    REQUIRE(pos3 != std::string::npos);
    CHECK(pos1 < pos3);
    CHECK(prompt.find("my own reasoning") != std::string::npos);

    // single peer appears exactly once
    std::string single = format_debate_prompt(q, {receiver}, {peer1});
    auto first = single.find("PEER_ONE_TEXT");
    CHECK(first != std::string::npos);
    CHECK(single.find("PEER_ONE_TEXT", first + 1) == std::string::npos);

    CHECK_THROWS(format_debate_prompt(q, {receiver}, {}));
}

TEST_CASE("replay backend returns stored responses byte-identically") {
    Question q = make_question();
    SimulatedBackend sim(sure_retainer(), 21);

    DebateTrace trace;
    trace.question_id = q.id;
    trace.method = "svr_mad";
    for (int i = 0; i < 4; ++i) {
        trace.initial_responses.push_back(sim.generate_initial(q, i));
    }
    DebateContext ctx;
    ctx.receiver_history = {trace.initial_responses[0]};
    ctx.sender_outputs = {trace.initial_responses[1]};
    ctx.event_index = 0;
    DebateEvent ev;
    ev.sender_id = 1;
    ev.receiver_id = 0;
    ev.receiver_pre = trace.initial_responses[0];
    ev.receiver_post = sim.debate(q, ctx);
    ev.retained = answers_equal(ev.receiver_pre.answer, ev.receiver_post.answer);
    ev.sequence_index = 0;
    trace.events.push_back(ev);
    trace.final_answer = ev.receiver_post.answer;
    trace.termination_reason = TerminationReason::BudgetExhausted;

    auto dir = std::filesystem::temp_directory_path() / "mad_replay_test";
    std::filesystem::create_directories(dir);
    persist_trace(trace, dir / "q1.jsonl");

    ReplayBackend replay((dir / "").string());
    for (int i = 0; i < 4; ++i) {
        CHECK(to_json(replay.generate_initial(q, i)) ==
              to_json(trace.initial_responses[i]));
    }
    CHECK(to_json(replay.debate(q, ctx)) == to_json(ev.receiver_post));

    CHECK_THROWS_AS(replay.generate_initial(make_question("missing"), 0),
                    TraceIncomplete);
    DebateContext bad = ctx;
    bad.event_index = 99;
    CHECK_THROWS_AS(replay.debate(q, bad), TraceIncomplete);
    std::filesystem::remove_all(dir);
}

TEST_CASE("http backend speaks the chat-completions wire format") {
    httplib::Server server;
    std::string seen_body;
    std::string seen_auth;
    int failures_left = 0;

    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    if (failures_left > 0) {
                        --failures_left;
                        res.status = 500;
                        return;
                    }
                    seen_body = req.body;
                    if (req.has_header("Authorization")) {
                        seen_auth = req.get_header_value("Authorization");
                    }
                    json reply{
                        {"choices",
                         json::array(
                             {json{{"message",
                                    json{{"role", "assistant"},
                                         {"content",
                                          "Reasoning...\nAnswer: 4\nConfidence: 0.9"}}},
                                   {"logprobs",
                                    json{{"content",
                                          json::array({json{{"logprob", -0.1}},
                                                       json{{"logprob", -1.2}}})}}}}})},
                        {"usage", json{{"prompt_tokens", 120}, {"completion_tokens", 30}}}};
                    res.set_content(reply.dump(), "application/json");
                });

    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("MAD_API_KEY", "test-key", 1);
    HttpBackend backend("http://127.0.0.1:" + std::to_string(port), "test-model",
                        SamplingParams{}, /*elicit_confidence=*/true,
                        /*max_attempts=*/3, /*backoff_initial_ms=*/5);

    Question q = make_question();
    auto resp = backend.generate_initial(q, 2);
    CHECK(resp.agent_id == 2);
    CHECK(resp.answer.canonical == "4");
    CHECK(resp.token_logliks == std::vector<double>{-0.1, -1.2});
    CHECK(resp.input_tokens == 120);
    CHECK(resp.output_tokens == 30);
    CHECK(*resp.self_confidence == doctest::Approx(0.9));
    CHECK(seen_auth == "Bearer test-key");

    json body = json::parse(seen_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("logprobs") == true);
    CHECK(body.at("temperature") == doctest::Approx(1.0));
    CHECK(body.at("top_p") == doctest::Approx(0.95));
    CHECK(body.at("max_tokens") == 16384);

    // transient failures are retried
    failures_left = 2;
    auto retried = backend.generate_initial(q, 0);
    CHECK(retried.answer.canonical == "4");

    // exhaustion raises BackendError with attempt metadata
    failures_left = 100;
    try {
        backend.generate_initial(q, 0);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.attempts == 3);
        CHECK(e.retryable);
    }
    failures_left = 0;

    server.stop();
    server_thread.join();
}
