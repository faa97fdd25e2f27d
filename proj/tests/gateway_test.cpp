#include "confilter/gateway.hpp"

#include <cstdlib>

#include <gtest/gtest.h>

#include "support/stub_server.hpp"

namespace confilter {
namespace {

GatewayConfig stub_config(const testing::StubServer& server) {
    GatewayConfig cfg;
    cfg.base_url = server.base_url();
    cfg.embed_model = "stub-embed";
    cfg.chat_model = "stub-chat";
    cfg.max_retries = 0;
    cfg.backoff = std::chrono::milliseconds(1);
    return cfg;
}

testing::StubServer::Handler fixed_dim_embeddings(std::size_t dim) {
    return [dim](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json data = nlohmann::json::array();
        int index = 0;
        for (const auto& text : body.at("input")) {
            std::vector<double> vec(dim, 0.0);
            vec[0] = 1.0 + static_cast<double>(text.get<std::string>().size());
            data.push_back({{"index", index++}, {"embedding", vec}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    };
}

TEST(GatewayEmbed, ShapeContract) {
    testing::StubServer server;
    server.on_embeddings(fixed_dim_embeddings(4));
    Gateway gateway(stub_config(server));
    const auto vectors = gateway.embed({"one", "two", "three"});
    ASSERT_EQ(vectors.size(), 3u);
    for (const auto& v : vectors) EXPECT_EQ(v.dim(), 4u);
}

TEST(GatewayEmbed, BatchingArithmetic) {
    // 250 texts with max_batch 100 -> ceil(250/100) = 3 requests.
    testing::StubServer server;
    server.on_embeddings(fixed_dim_embeddings(2));
    GatewayConfig cfg = stub_config(server);
    cfg.max_batch = 100;
    Gateway gateway(cfg);
    std::vector<std::string> texts;
    for (int i = 0; i < 250; ++i) texts.push_back("text " + std::to_string(i));
    const auto vectors = gateway.embed(texts);
    EXPECT_EQ(vectors.size(), 250u);
    EXPECT_EQ(server.embeddings_requests(), 3);
}

TEST(GatewayEmbed, RetriesThenSucceeds) {
    // Fails twice then succeeds with max_retries = 3: exactly 3 attempts.
    testing::StubServer server;
    server.fail_first(2, fixed_dim_embeddings(2));
    GatewayConfig cfg = stub_config(server);
    cfg.max_retries = 3;
    Gateway gateway(cfg);
    const auto vectors = gateway.embed({"hello"});
    EXPECT_EQ(vectors.size(), 1u);
    EXPECT_EQ(server.embeddings_requests(), 3);
    EXPECT_EQ(gateway.requests_sent(), 3u);
}

TEST(GatewayEmbed, RetryBudgetExhausted) {
    // Always failing with max_retries = 2: error after exactly 3 attempts.
    testing::StubServer server;
    server.on_embeddings([](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
    });
    GatewayConfig cfg = stub_config(server);
    cfg.max_retries = 2;
    Gateway gateway(cfg);
    try {
        gateway.embed({"hello"});
        FAIL() << "expected GatewayError";
    } catch (const GatewayError& e) {
        EXPECT_NE(std::string(e.what()).find("503"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
    }
    EXPECT_EQ(server.embeddings_requests(), 3);
}

TEST(GatewayEmbed, OrderRestoredFromResponseIndices) {
    // The stub returns the data array reversed; the client must place vectors
    // by their index field.
    testing::StubServer server;
    server.on_embeddings([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const auto& input = body.at("input");
        nlohmann::json data = nlohmann::json::array();
        for (int i = static_cast<int>(input.size()) - 1; i >= 0; --i) {
            data.push_back({{"index", i},
                            {"embedding", {static_cast<double>(i + 1), 0.0}}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    Gateway gateway(stub_config(server));
    const auto vectors = gateway.embed({"a", "b", "c"});
    EXPECT_DOUBLE_EQ(vectors[0].values[0], 1.0);
    EXPECT_DOUBLE_EQ(vectors[1].values[0], 2.0);
    EXPECT_DOUBLE_EQ(vectors[2].values[0], 3.0);
}

TEST(GatewayEmbed, DimensionMismatchIsProtocolError) {
    testing::StubServer server;
    server.on_embeddings([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json data = nlohmann::json::array();
        int index = 0;
        for ([[maybe_unused]] const auto& text : body.at("input")) {
            std::vector<double> vec(index == 0 ? 2 : 3, 1.0);
            data.push_back({{"index", index++}, {"embedding", vec}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    Gateway gateway(stub_config(server));
    EXPECT_THROW(gateway.embed({"a", "b"}), GatewayError);
}

TEST(GatewayEmbed, EmptyInputsRejectedWithoutRequests) {
    testing::StubServer server;
    Gateway gateway(stub_config(server));
    EXPECT_THROW(gateway.embed({}), DomainError);
    EXPECT_THROW(gateway.embed({"ok", ""}), DomainError);
    EXPECT_EQ(server.embeddings_requests(), 0);
}

TEST(GatewayComplete, EchoPassThrough) {
    testing::StubServer server;
    server.serve_chat_script({"0.8"});
    Gateway gateway(stub_config(server));
    EXPECT_EQ(gateway.complete("rate this"), "0.8");
}

TEST(GatewayComplete, RequestsAreDeterministic) {
    // temperature is pinned to 0 and the prompt arrives as a single user turn.
    testing::StubServer server;
    server.on_chat([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        EXPECT_EQ(body.at("temperature").get<double>(), 0.0);
        EXPECT_EQ(body.at("messages").size(), 1u);
        EXPECT_EQ(body.at("messages")[0].at("role"), "user");
        const nlohmann::json reply = {
            {"choices", nlohmann::json::array({{{"message", {{"content", "ok"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    Gateway gateway(stub_config(server));
    EXPECT_EQ(gateway.complete("prompt"), "ok");
}

TEST(GatewayComplete, EmptyPromptGuardSendsNothing) {
    testing::StubServer server;
    server.serve_chat_script({"never seen"});
    Gateway gateway(stub_config(server));
    EXPECT_THROW(gateway.complete(""), DomainError);
    EXPECT_EQ(server.chat_requests(), 0);
}

TEST(GatewayComplete, TimeoutBudgetIsCapped) {
    // A server that never answers within the timeout: max_retries = 2 means
    // exactly 3 attempts, then an error.
    testing::StubServer server;
    server.on_chat([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(300));
        res.set_content("{}", "application/json");
    });
    GatewayConfig cfg = stub_config(server);
    cfg.timeout = std::chrono::milliseconds(50);
    cfg.max_retries = 2;
    Gateway gateway(cfg);
    EXPECT_THROW(gateway.complete("slow"), GatewayError);
    EXPECT_EQ(gateway.requests_sent(), 3u);
}

TEST(GatewayAuth, BearerHeaderFromEnvironment) {
    ::setenv("CONFILTER_TEST_API_KEY", "sk-stub-123", 1);
    testing::StubServer server;
    server.on_chat([](const httplib::Request& req, httplib::Response& res) {
        EXPECT_EQ(req.get_header_value("Authorization"), "Bearer sk-stub-123");
        const nlohmann::json reply = {
            {"choices", nlohmann::json::array({{{"message", {{"content", "ok"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    GatewayConfig cfg = stub_config(server);
    cfg.api_key_env = "CONFILTER_TEST_API_KEY";
    Gateway gateway(cfg);
    EXPECT_EQ(gateway.complete("hi"), "ok");
    ::unsetenv("CONFILTER_TEST_API_KEY");
}

TEST(ParseDecision, Grammar) {
    EXPECT_EQ(parse_decision("Yes, the snippet supports the query."), true);
    EXPECT_EQ(parse_decision("No."), false);
    EXPECT_EQ(parse_decision("  **Relevant** because it names the event"), true);
    EXPECT_EQ(parse_decision("irrelevant!"), false);
    EXPECT_EQ(parse_decision("YES"), true);
    EXPECT_FALSE(parse_decision("maybe").has_value());
    EXPECT_FALSE(parse_decision("the answer is yes").has_value());
    EXPECT_FALSE(parse_decision("").has_value());
}

TEST(JudgeRelevance, DecisionGrammarFixtures) {
    testing::StubServer server;
    Gateway gateway(stub_config(server));
    const PromptTemplate rubric{"judge_v1", "Q: {query}\nS: {snippet}\nyes or no?"};
    const Query query{"q1", "who won"};
    const Snippet snippet{"s1", "d1", "q1", "the winner was announced", 0, 24};

    server.serve_chat_script({"Yes, the snippet supports the query."});
    auto verdict = gateway.judge_relevance(query, snippet, rubric);
    EXPECT_TRUE(verdict.relevant);
    EXPECT_EQ(verdict.raw_response, "Yes, the snippet supports the query.");
    EXPECT_EQ(verdict.query_id, "q1");
    EXPECT_EQ(verdict.snippet_id, "s1");

    server.serve_chat_script({"No."});
    verdict = gateway.judge_relevance(query, snippet, rubric);
    EXPECT_FALSE(verdict.relevant);
}

TEST(JudgeRelevance, ReAskOnceThenFail) {
    testing::StubServer server;
    Gateway gateway(stub_config(server));
    const PromptTemplate rubric{"judge_v1", "{query} {snippet}"};
    const Query query{"q1", "who won"};
    const Snippet snippet{"s1", "d1", "q1", "text", 0, 4};

    // Undecided then decided: the re-ask resolves it with 2 requests.
    server.serve_chat_script({"maybe", "no"});
    const auto verdict = gateway.judge_relevance(query, snippet, rubric);
    EXPECT_FALSE(verdict.relevant);
    EXPECT_EQ(server.chat_requests(), 2);

    // Undecided twice: labeling error carrying the raw response.
    server.serve_chat_script({"maybe"});
    try {
        gateway.judge_relevance(query, snippet, rubric);
        FAIL() << "expected LabelingError";
    } catch (const LabelingError& e) {
        EXPECT_NE(std::string(e.what()).find("maybe"), std::string::npos) << e.what();
    }
}

TEST(JudgeRelevance, RubricMustHavePlaceholders) {
    testing::StubServer server;
    Gateway gateway(stub_config(server));
    const PromptTemplate bad{"judge_v1", "no slots"};
    EXPECT_THROW(
        gateway.judge_relevance(Query{"q1", "x"}, Snippet{"s1", "d1", "q1", "y", 0, 1}, bad),
        ConfigError);
}

TEST(GatewayConfigValidation, Invariants) {
    GatewayConfig cfg;
    cfg.base_url = "http://localhost:1/v1";
    EXPECT_NO_THROW(validate(cfg));
    cfg.max_batch = 0;
    EXPECT_THROW(validate(cfg), ConfigError);
    cfg.max_batch = 1;
    cfg.timeout = std::chrono::milliseconds(0);
    EXPECT_THROW(validate(cfg), ConfigError);
    GatewayConfig no_url;
    EXPECT_THROW(validate(no_url), ConfigError);
    GatewayConfig bad_scheme;
    bad_scheme.base_url = "localhost:8080";
    EXPECT_THROW(Gateway{bad_scheme}, ConfigError);
}

}  // namespace
}  // namespace confilter
