#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sgr/text.hpp"

namespace sgr {

enum class RequestKind { SchemaExtraction, Step, Hypothesis, AnswerRank };

inline std::string to_string(RequestKind k) {
  switch (k) {
    case RequestKind::SchemaExtraction: return "SchemaExtraction";
    case RequestKind::Step: return "Step";
    case RequestKind::Hypothesis: return "Hypothesis";
    case RequestKind::AnswerRank: return "AnswerRank";
  }
  return "?";
}

inline std::optional<RequestKind> request_kind_from_string(std::string_view s) {
  if (s == "SchemaExtraction") return RequestKind::SchemaExtraction;
  if (s == "Step") return RequestKind::Step;
  if (s == "Hypothesis") return RequestKind::Hypothesis;
  if (s == "AnswerRank") return RequestKind::AnswerRank;
  return std::nullopt;
}

struct AdapterRequest {
  RequestKind kind = RequestKind::SchemaExtraction;
  std::string question;
  nlohmann::json payload;
  std::uint64_t request_id = 0;
};

struct AdapterResponse {
  std::uint64_t request_id = 0;
  nlohmann::json body;
};

class AdapterError : public std::runtime_error {
 public:
  explicit AdapterError(const std::string& msg, std::string raw = {})
      : std::runtime_error(msg), raw_body(std::move(raw)) {}
  std::string raw_body;
};

// Versioned prompt templates, recorded in traces so runs are auditable.
inline constexpr std::string_view kPromptTemplateVersion = "sgr-prompts-1";

inline std::string_view prompt_template(RequestKind kind) {
  switch (kind) {
    case RequestKind::SchemaExtraction:
      return "You are a knowledge graph expert. You are given a question and "
             "several example triples from the graph. Extract the core "
             "entities and relations and organize them into a query schema: "
             "one `node|relation|node` triple per line inside a fenced block, "
             "variables spelled ?name, followed by a line `ANSWER: ?var` "
             "naming the answer variable.";
    case RequestKind::Step:
      return "You are reasoning step by step over knowledge graph triples. "
             "Given the question, your previous reasoning states, and the "
             "current triple, produce the next reasoning state and a "
             "confidence in [0,1].";
    case RequestKind::Hypothesis:
      return "You are a knowledge graph expert answering a question by "
             "iterating with a graph. Given the question, your earlier "
             "hypotheses, and the evidence triples retrieved so far, state "
             "your next hypothesis; if you can answer, give the answer and a "
             "confidence in [0,1].";
    case RequestKind::AnswerRank:
      return "You are given a question, its query schema, and candidate "
             "answers retrieved from a knowledge graph. Score each candidate "
             "in [0,1] by how well it answers the question.";
  }
  return "";
}

inline std::uint64_t next_request_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1) + 1;
}

inline AdapterRequest make_request(RequestKind kind, std::string question,
                                   nlohmann::json payload) {
  return AdapterRequest{kind, std::move(question), std::move(payload),
                        next_request_id()};
}

class Adapter {
 public:
  virtual ~Adapter() = default;
  virtual AdapterResponse complete(const AdapterRequest& request) = 0;
};

namespace detail {

inline double clamp_unit(double x) {
  if (!(x >= 0.0)) return 0.0;  // NaN clamps to 0
  if (x > 1.0) return 1.0;
  return x;
}

// Confidences and scores are forced into [0,1]; misbehaving sources are
// tolerated, not fatal.
inline void clamp_body(RequestKind kind, nlohmann::json& body,
                       std::vector<std::string>* log = nullptr) {
  auto clamp_field = [&](nlohmann::json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) return;
    double raw = obj[key].is_number() ? obj[key].get<double>() : 0.0;
    double clamped = clamp_unit(raw);
    if (log && (!obj[key].is_number() || clamped != raw))
      log->push_back("clamped " + std::string(key) + " in " + to_string(kind));
    obj[key] = clamped;
  };
  clamp_field(body, "confidence");
  if (kind == RequestKind::AnswerRank && body.is_object() &&
      body.contains("scores")) {
    nlohmann::json& scores = body["scores"];
    auto clamp_one = [&](nlohmann::json& v) {
      double raw = v.is_number() ? v.get<double>() : 0.0;
      double clamped = clamp_unit(raw);
      if (log && (!v.is_number() || clamped != raw))
        log->push_back("clamped AnswerRank score");
      v = clamped;
    };
    if (scores.is_array())
      for (auto& v : scores) clamp_one(v);
    else if (scores.is_object())
      for (auto& [_, v] : scores.items()) clamp_one(v);
  }
}

}  // namespace detail

// Deterministic scripted adapter. A script is an ordered rule list; a rule
// matches on kind, optionally on the question fingerprint, the occurrence
// index (how many requests with the same fingerprint+kind came before), and
// a substring of the serialized payload. First match wins; unmatched
// requests fall back to per-kind defaults unless strict mode is on.
class MockAdapter : public Adapter {
 public:
  struct Rule {
    RequestKind kind = RequestKind::SchemaExtraction;
    std::optional<std::string> question;  // fingerprint (normalized text)
    std::optional<int> occurrence;
    std::optional<std::string> payload_contains;
    nlohmann::json body;
  };

  MockAdapter() = default;

  static MockAdapter from_json(const nlohmann::json& doc) {
    MockAdapter mock;
    if (doc.contains("strict")) mock.strict_ = doc["strict"].get<bool>();
    if (doc.contains("defaults"))
      for (auto& [k, v] : doc["defaults"].items())
        if (auto kind = request_kind_from_string(k))
          mock.defaults_[*kind] = v;
    for (const auto& r : doc.value("rules", nlohmann::json::array())) {
      Rule rule;
      auto kind = request_kind_from_string(r.at("kind").get<std::string>());
      if (!kind) throw AdapterError("unknown request kind in mock script");
      rule.kind = *kind;
      if (r.contains("question"))
        rule.question = normalize_text(r["question"].get<std::string>());
      if (r.contains("occurrence")) rule.occurrence = r["occurrence"].get<int>();
      if (r.contains("payload_contains"))
        rule.payload_contains = r["payload_contains"].get<std::string>();
      rule.body = r.at("body");
      mock.rules_.push_back(std::move(rule));
    }
    return mock;
  }

  static MockAdapter from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AdapterError("cannot open mock script: " + path);
    nlohmann::json doc;
    in >> doc;
    return from_json(doc);
  }

  void set_strict(bool strict) { strict_ = strict; }
  void add_rule(Rule rule) { rules_.push_back(std::move(rule)); }
  const std::vector<std::string>& clamp_log() const { return clamp_log_; }

  AdapterResponse complete(const AdapterRequest& request) override {
    std::lock_guard lock(*mutex_);
    std::string fingerprint = normalize_text(request.question);
    int occurrence = occurrence_[{fingerprint, request.kind}]++;
    std::string payload_text = request.payload.dump();

    for (const Rule& rule : rules_) {
      if (rule.kind != request.kind) continue;
      if (rule.question && *rule.question != fingerprint) continue;
      if (rule.occurrence && *rule.occurrence != occurrence) continue;
      if (rule.payload_contains &&
          payload_text.find(*rule.payload_contains) == std::string::npos)
        continue;
      nlohmann::json body = rule.body;
      detail::clamp_body(request.kind, body, &clamp_log_);
      return AdapterResponse{request.request_id, std::move(body)};
    }
    if (strict_)
      throw AdapterError("mock script exhausted for " + to_string(request.kind) +
                         " (question: " + fingerprint +
                         ", occurrence: " + std::to_string(occurrence) + ")");
    nlohmann::json body = default_body(request);
    detail::clamp_body(request.kind, body, &clamp_log_);
    return AdapterResponse{request.request_id, std::move(body)};
  }

 private:
  nlohmann::json default_body(const AdapterRequest& request) const {
    auto it = defaults_.find(request.kind);
    if (it != defaults_.end()) return it->second;
    switch (request.kind) {
      case RequestKind::SchemaExtraction:
        return {{"triples", nlohmann::json::array()}, {"answer_variable", ""}};
      case RequestKind::Step:
        return {{"text", "default step"}, {"confidence", 0.5}};
      case RequestKind::Hypothesis:
        return {{"text", ""}, {"confidence", 0.0}};
      case RequestKind::AnswerRank: {
        std::size_t n = 0;
        if (request.payload.contains("candidates"))
          n = request.payload["candidates"].size();
        nlohmann::json scores = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i)
          scores.push_back(n ? 1.0 / static_cast<double>(n) : 0.0);
        return {{"scores", scores}};
      }
    }
    return nlohmann::json::object();
  }

  bool strict_ = false;
  std::vector<Rule> rules_;
  std::map<RequestKind, nlohmann::json> defaults_;
  std::map<std::pair<std::string, RequestKind>, int> occurrence_;
  std::vector<std::string> clamp_log_;
  // behind a pointer so the adapter stays movable out of the factories
  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
};

// Decorator that records every request/response pair, for traces.
class RecordingAdapter : public Adapter {
 public:
  explicit RecordingAdapter(Adapter& inner) : inner_(inner) {}

  AdapterResponse complete(const AdapterRequest& request) override {
    AdapterResponse response = inner_.complete(request);
    std::lock_guard lock(mutex_);
    // a per-recorder index, not the process-global request id, so recorded
    // traces do not depend on scheduling elsewhere in the process
    log_.push_back({{"request_index", log_.size()},
                    {"kind", to_string(request.kind)},
                    {"question", request.question},
                    {"payload", request.payload},
                    {"template_version", std::string(kPromptTemplateVersion)},
                    {"body", response.body}});
    return response;
  }

  nlohmann::json take_log() {
    std::lock_guard lock(mutex_);
    nlohmann::json out = nlohmann::json::array();
    out.swap(log_);
    return out;
  }

 private:
  Adapter& inner_;
  nlohmann::json log_ = nlohmann::json::array();
  std::mutex mutex_;
};

}  // namespace sgr
