#include <doctest.h>

#include <atomic>
#include <set>
#include <thread>

#include <httplib.h>

#include "sgr/adapter.hpp"
#include "sgr/remote_adapter.hpp"
#include "support.hpp"

using namespace sgr;

TEST_CASE("request ids are unique and monotone") {
  std::set<std::uint64_t> ids;
  std::uint64_t prev = 0;
  for (int i = 0; i < 100; ++i) {
    AdapterRequest r = make_request(RequestKind::Step, "q", {});
    CHECK(r.request_id > prev);
    prev = r.request_id;
    CHECK(ids.insert(r.request_id).second);
  }
}

TEST_CASE("request kind names round-trip") {
  for (RequestKind k : {RequestKind::SchemaExtraction, RequestKind::Step,
                        RequestKind::Hypothesis, RequestKind::AnswerRank})
    CHECK(request_kind_from_string(to_string(k)) == k);
  CHECK_FALSE(request_kind_from_string("Nonsense").has_value());
}

TEST_CASE("mock: first matching rule wins") {
  MockAdapter mock;
  mock.add_rule({RequestKind::Step, std::nullopt, std::nullopt, std::nullopt,
                 {{"text", "first"}, {"confidence", 0.1}}});
  mock.add_rule({RequestKind::Step, std::nullopt, std::nullopt, std::nullopt,
                 {{"text", "second"}, {"confidence", 0.2}}});
  auto r = mock.complete(make_request(RequestKind::Step, "q", {}));
  CHECK(r.body["text"] == "first");
}

TEST_CASE("mock: question fingerprint matching is normalized") {
  MockAdapter mock;
  MockAdapter::Rule rule;
  rule.kind = RequestKind::Step;
  rule.question = normalize_text("  What is the CAPITAL of France?? ");
  rule.body = {{"text", "matched"}, {"confidence", 1.0}};
  mock.add_rule(rule);
  auto hit = mock.complete(
      make_request(RequestKind::Step, "what is the capital of france", {}));
  CHECK(hit.body["text"] == "matched");
  auto miss = mock.complete(make_request(RequestKind::Step, "other", {}));
  CHECK(miss.body["text"] == "default step");
}

TEST_CASE("mock: occurrence counters are per fingerprint and kind") {
  MockAdapter mock;
  MockAdapter::Rule rule;
  rule.kind = RequestKind::Step;
  rule.occurrence = 1;
  rule.body = {{"text", "second call"}, {"confidence", 1.0}};
  mock.add_rule(rule);

  CHECK(mock.complete(make_request(RequestKind::Step, "a", {})).body["text"] ==
        "default step");
  CHECK(mock.complete(make_request(RequestKind::Step, "a", {})).body["text"] ==
        "second call");
  // a different question has its own counter
  CHECK(mock.complete(make_request(RequestKind::Step, "b", {})).body["text"] ==
        "default step");
  // so does a different kind
  CHECK(mock.complete(make_request(RequestKind::Hypothesis, "a", {}))
            .body["confidence"] == 0.0);
}

TEST_CASE("mock: per-kind defaults") {
  MockAdapter mock;
  auto schema =
      mock.complete(make_request(RequestKind::SchemaExtraction, "q", {}));
  CHECK(schema.body["triples"].empty());
  auto step = mock.complete(make_request(RequestKind::Step, "q", {}));
  CHECK(step.body["confidence"] == 0.5);
  auto rank = mock.complete(make_request(
      RequestKind::AnswerRank, "q", {{"candidates", {"a", "b", "c", "d"}}}));
  REQUIRE(rank.body["scores"].size() == 4);
  CHECK(rank.body["scores"][0] == 0.25);
}

TEST_CASE("mock: strict mode throws on unmatched requests") {
  MockAdapter mock;
  mock.set_strict(true);
  CHECK_THROWS_AS(mock.complete(make_request(RequestKind::Step, "q", {})),
                  AdapterError);
}

TEST_CASE("mock: confidences and scores are clamped with a log") {
  MockAdapter mock;
  mock.add_rule({RequestKind::Step, std::nullopt, std::nullopt, std::nullopt,
                 {{"text", "s"}, {"confidence", -0.5}}});
  mock.add_rule({RequestKind::AnswerRank, std::nullopt, std::nullopt,
                 std::nullopt, {{"scores", {1.5, 0.5, -1.0}}}});
  auto step = mock.complete(make_request(RequestKind::Step, "q", {}));
  CHECK(step.body["confidence"] == 0.0);
  auto rank = mock.complete(make_request(RequestKind::AnswerRank, "q", {}));
  CHECK(rank.body["scores"] == nlohmann::json({1.0, 0.5, 0.0}));
  CHECK(mock.clamp_log().size() == 3);
}

TEST_CASE("mock: script parsing from json") {
  nlohmann::json doc = {
      {"strict", false},
      {"defaults",
       {{"Step", {{"text", "scripted default"}, {"confidence", 0.4}}}}},
      {"rules",
       {{{"kind", "Hypothesis"},
         {"question", "Who leads France?"},
         {"occurrence", 0},
         {"payload_contains", "evidence"},
         {"body", {{"text", "h"}, {"confidence", 0.6}}}}}}};
  MockAdapter mock = MockAdapter::from_json(doc);
  auto step = mock.complete(make_request(RequestKind::Step, "q", {}));
  CHECK(step.body["text"] == "scripted default");
  auto hyp = mock.complete(make_request(RequestKind::Hypothesis,
                                        "who leads france",
                                        {{"prior_evidence", {}}}));
  CHECK(hyp.body["confidence"] == 0.6);

  nlohmann::json bad = {{"rules", {{{"kind", "Bogus"}, {"body", {}}}}}};
  CHECK_THROWS_AS(MockAdapter::from_json(bad), AdapterError);
}

TEST_CASE("recording adapter captures the full exchange") {
  MockAdapter mock;
  RecordingAdapter rec(mock);
  rec.complete(make_request(RequestKind::Step, "q1", {{"k", "v"}}));
  rec.complete(make_request(RequestKind::Hypothesis, "q2", {}));
  nlohmann::json log = rec.take_log();
  REQUIRE(log.size() == 2);
  CHECK(log[0]["kind"] == "Step");
  CHECK(log[0]["question"] == "q1");
  CHECK(log[0]["payload"]["k"] == "v");
  CHECK(log[0]["body"]["text"] == "default step");
  CHECK(log[0]["template_version"] == std::string(kPromptTemplateVersion));
  CHECK(log[0]["request_index"] == 0);
  CHECK(log[1]["request_index"] == 1);
  CHECK(rec.take_log().empty());  // take drains
}

TEST_CASE("mock: safe under concurrent use") {
  MockAdapter mock;
  std::atomic<int> failures{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        auto r = mock.complete(make_request(RequestKind::Step, "same", {}));
        if (r.body["confidence"] != 0.5) failures.fetch_add(1);
      }
    });
  for (auto& th : threads) th.join();
  CHECK(failures.load() == 0);
}

namespace {

// Minimal in-process server speaking the adapter wire format.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/complete", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/complete";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("remote: echo server round-trip with auth header") {
  std::atomic<bool> saw_token{false};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Authorization") == "Bearer sekrit")
      saw_token = true;
    nlohmann::json wire = nlohmann::json::parse(req.body);
    nlohmann::json reply = {
        {"request_id", wire["request_id"]},
        {"body", {{"text", wire["kind"]}, {"confidence", 2.5}}}};
    res.set_content(reply.dump(), "application/json");
  });

  RemoteAdapter::Options opts;
  opts.endpoint = server.endpoint();
  opts.token = "sekrit";
  RemoteAdapter remote(opts);
  auto r = remote.complete(make_request(RequestKind::Step, "q", {}));
  CHECK(r.body["text"] == "Step");
  CHECK(r.body["confidence"] == 1.0);  // clamped at the boundary
  CHECK(saw_token.load());
}

TEST_CASE("remote: malformed reply surfaces the raw body") {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content("this is not json {", "text/plain");
  });
  RemoteAdapter::Options opts;
  opts.endpoint = server.endpoint();
  RemoteAdapter remote(opts);
  try {
    remote.complete(make_request(RequestKind::Step, "q", {}));
    FAIL("expected AdapterError");
  } catch (const AdapterError& e) {
    CHECK(e.raw_body == "this is not json {");
  }
}

TEST_CASE("remote: retries after transient failures") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (calls.fetch_add(1) == 0) {
      res.status = 503;
      return;
    }
    nlohmann::json wire = nlohmann::json::parse(req.body);
    nlohmann::json reply = {{"request_id", wire["request_id"]},
                            {"body", {{"text", "ok"}}}};
    res.set_content(reply.dump(), "application/json");
  });
  RemoteAdapter::Options opts;
  opts.endpoint = server.endpoint();
  opts.retries = 2;
  opts.initial_backoff = std::chrono::milliseconds(10);
  RemoteAdapter remote(opts);
  auto r = remote.complete(make_request(RequestKind::Step, "q", {}));
  CHECK(r.body["text"] == "ok");
  CHECK(calls.load() == 2);
}

TEST_CASE("remote: exhausted retries throw") {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  RemoteAdapter::Options opts;
  opts.endpoint = server.endpoint();
  opts.retries = 1;
  opts.initial_backoff = std::chrono::milliseconds(5);
  RemoteAdapter remote(opts);
  CHECK_THROWS_AS(remote.complete(make_request(RequestKind::Step, "q", {})),
                  AdapterError);
}

TEST_CASE("remote: missing endpoint configuration") {
  // neither explicit nor from environment
  CHECK(std::getenv("SGR_LLM_ENDPOINT") == nullptr);
  CHECK_THROWS_AS(RemoteAdapter(RemoteAdapter::Options{}), AdapterError);
}

TEST_CASE("remote: wrong request_id in reply is rejected") {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    nlohmann::json reply = {{"request_id", 0}, {"body", {{"text", "x"}}}};
    res.set_content(reply.dump(), "application/json");
  });
  RemoteAdapter::Options opts;
  opts.endpoint = server.endpoint();
  RemoteAdapter remote(opts);
  CHECK_THROWS_AS(remote.complete(make_request(RequestKind::Step, "q", {})),
                  AdapterError);
}
