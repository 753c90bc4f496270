#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sgr/adapter.hpp"
#include "sgr/collab.hpp"
#include "sgr/direct.hpp"
#include "sgr/gql.hpp"
#include "sgr/kg.hpp"
#include "sgr/reasoner.hpp"
#include "sgr/relevance.hpp"
#include "sgr/schema.hpp"

namespace sgr {

struct DatasetExample {
  std::string id;
  std::string question;
  std::set<std::string> gold_answers;  // normalized, non-empty
};

inline std::vector<DatasetExample> load_dataset(std::istream& in) {
  std::vector<DatasetExample> examples;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded())
      throw std::runtime_error("bad dataset json at line " +
                               std::to_string(line_no));
    DatasetExample ex;
    ex.id = doc.at("id").get<std::string>();
    ex.question = doc.at("question").get<std::string>();
    for (const auto& a : doc.at("answers"))
      ex.gold_answers.insert(normalize_text(a.get<std::string>()));
    if (ex.gold_answers.empty())
      throw std::runtime_error("example '" + ex.id + "' has no answers");
    if (!seen_ids.insert(ex.id).second)
      throw std::runtime_error("duplicate example id '" + ex.id + "'");
    examples.push_back(std::move(ex));
  }
  return examples;
}

struct RunConfig {
  double lambda = 0.5;
  double tau = 0.3;
  int k = 32;
  int hops = 2;
  int t_max = 5;
  int m = 3;
  SelectionPolicy::Mode policy = SelectionPolicy::Mode::topk;
  double early_stop_conf = 0.7;
  bool disable_schema = false;
  bool disable_graph_retrieval = false;
  int workers = 4;
  bool strict = false;

  SelectionPolicy selection_policy() const {
    SelectionPolicy p;
    p.mode = policy;
    p.tau = tau;
    p.k = static_cast<std::size_t>(k);
    return p;
  }

  static RunConfig from_json(const nlohmann::json& doc) {
    RunConfig c;
    c.lambda = doc.value("lambda", c.lambda);
    c.tau = doc.value("tau", c.tau);
    c.k = doc.value("k", c.k);
    c.hops = doc.value("hops", c.hops);
    c.t_max = doc.value("T_max", c.t_max);
    c.m = doc.value("M", c.m);
    if (doc.contains("policy"))
      c.policy = doc["policy"] == "threshold" ? SelectionPolicy::Mode::threshold
                                              : SelectionPolicy::Mode::topk;
    c.early_stop_conf = doc.value("early_stop_conf", c.early_stop_conf);
    c.disable_schema = doc.value("disable_schema", c.disable_schema);
    c.disable_graph_retrieval =
        doc.value("disable_graph_retrieval", c.disable_graph_retrieval);
    c.workers = doc.value("workers", c.workers);
    c.strict = doc.value("strict", c.strict);
    if (c.lambda < 0 || c.lambda > 1 || c.k < 1 || c.hops < 1 || c.t_max < 1 ||
        c.m < 1 || c.workers < 1)
      throw std::runtime_error("config value out of range");
    return c;
  }

  nlohmann::json to_json() const {
    return {{"lambda", lambda},
            {"tau", tau},
            {"k", k},
            {"hops", hops},
            {"T_max", t_max},
            {"M", m},
            {"policy",
             policy == SelectionPolicy::Mode::threshold ? "threshold" : "topk"},
            {"early_stop_conf", early_stop_conf},
            {"disable_schema", disable_schema},
            {"disable_graph_retrieval", disable_graph_retrieval},
            {"workers", workers},
            {"strict", strict}};
  }
};

struct Prediction {
  std::string id;
  std::vector<std::string> answers;  // top-first; empty = abstention
};

struct ExampleResult {
  Prediction prediction;
  nlohmann::json trace;
  bool errored = false;
};

namespace detail {

inline nlohmann::json schema_to_json(const QuestionSchema& schema) {
  nlohmann::json triples = nlohmann::json::array();
  for (const SchemaTriple& st : schema.triples)
    triples.push_back({st.head.text, st.relation, st.tail.text});
  nlohmann::json constraints = nlohmann::json::array();
  for (const Constraint& c : schema.constraints)
    constraints.push_back(
        {{"kind", c.kind == Constraint::Kind::equality ? "equality"
                                                       : "type-hint"},
         {"subject", c.subject},
         {"value", c.value}});
  return {{"entities", schema.entities},
          {"relations", schema.relations},
          {"constraints", constraints},
          {"triples", triples},
          {"answer_variable", schema.answer_variable}};
}

inline CandidateAnswer best_unvalidated(
    const std::vector<CandidateAnswer>& candidates) {
  const CandidateAnswer* best = &candidates.front();
  for (const CandidateAnswer& c : candidates)
    if (c.model_prob > best->model_prob ||
        (c.model_prob == best->model_prob && c.value < best->value))
      best = &c;
  return *best;
}

}  // namespace detail

// Full per-question pipeline: schema extraction, subgraph selection, direct
// stage, then collaborative + stepwise integration on refinement.
inline ExampleResult run_example(const DatasetExample& example,
                                 const KnowledgeGraph& graph, Adapter& adapter,
                                 const RunConfig& config) {
  ExampleResult result;
  result.prediction.id = example.id;
  RecordingAdapter recorder(adapter);
  nlohmann::json& trace = result.trace;
  trace["id"] = example.id;
  trace["question"] = example.question;
  trace["config"] = config.to_json();

  try {
    // schema
    QuestionSchema schema;
    bool schema_failed = false;
    if (config.disable_schema) {
      for (EntityId e : link_entities(example.question, graph))
        schema.entities.insert(graph.entity_name(e));
      trace["schema_stage"] = "disabled";
    } else {
      try {
        schema = extract_schema(example.question, recorder, graph);
        trace["schema_stage"] = "extracted";
      } catch (const SchemaExtractionError& err) {
        schema_failed = true;
        for (EntityId e : link_entities(example.question, graph))
          schema.entities.insert(graph.entity_name(e));
        trace["schema_stage"] = std::string("failed: ") + err.what();
      }
    }
    trace["schema"] = detail::schema_to_json(schema);

    // subgraph
    Subgraph subgraph;
    if (!config.disable_graph_retrieval)
      subgraph = select_subgraph(graph, schema, example.question,
                                 config.selection_policy(), config.hops);
    nlohmann::json sg_triples = nlohmann::json::array();
    for (const Triple& t : subgraph.triples)
      sg_triples.push_back(graph.verbalize(t));
    trace["subgraph"] = {{"count", subgraph.triples.size()},
                         {"triples", sg_triples}};

    // direct stage
    std::optional<direct::DirectOutcome> direct_outcome;
    bool direct_enabled = schema.usable() && !schema_failed &&
                          !config.disable_graph_retrieval &&
                          !config.disable_schema;
    if (direct_enabled) {
      direct_outcome =
          direct::direct_stage(example.question, schema, graph, recorder);
      nlohmann::json rows = nlohmann::json::array();
      for (const CandidateAnswer& c : direct_outcome->candidates)
        rows.push_back({{"value", c.value}, {"model_prob", c.model_prob}});
      nlohmann::json verdicts = nlohmann::json::array();
      for (const CandidateAnswer& c : direct_outcome->candidates)
        verdicts.push_back({{"value", c.value},
                            {"valid", direct::validate(c, schema, graph)}});
      trace["direct"] = {{"compiled_query", direct_outcome->compiled_query},
                         {"candidates", rows},
                         {"validation", verdicts},
                         {"warnings", direct_outcome->warnings},
                         {"needs_refinement",
                          direct_outcome->needs_refinement}};
    } else {
      trace["direct"] = {{"skipped", true},
                         {"needs_refinement", true}};
    }

    if (direct_outcome && !direct_outcome->needs_refinement) {
      result.prediction.answers = {direct_outcome->answer->value};
      trace["final"] = {{"answer", direct_outcome->answer->value},
                        {"stage", "direct"}};
      trace["adapter_log"] = recorder.take_log();
      return result;
    }

    // collaborative + stepwise integration
    collab::IterateConfig iter_config;
    iter_config.t_max = config.t_max;
    iter_config.m = config.m;
    iter_config.early_stop_conf = config.early_stop_conf;
    iter_config.retrieval_enabled = !config.disable_graph_retrieval;
    std::vector<collab::CollabPath> collab_paths =
        collab::iterate(example.question, graph, recorder, iter_config);

    std::vector<std::pair<CandidateAnswer, double>> scored;
    nlohmann::json paths_json = nlohmann::json::array();
    for (collab::CollabPath& path : collab_paths) {
      double score = 0.0;
      if (!path.failed && !path.evidence.empty()) {
        score = collab::path_score(path, graph, config.lambda);
        path.score_beta = score;
        if (path.answer) scored.emplace_back(*path.answer, score);
      }
      nlohmann::json hyps = nlohmann::json::array();
      for (const collab::Hypothesis& h : path.hypotheses)
        hyps.push_back({{"iteration", h.iteration},
                        {"text", h.text},
                        {"confidence", h.confidence},
                        {"proposed_answer",
                         h.proposed_answer ? nlohmann::json(*h.proposed_answer)
                                           : nlohmann::json()}});
      paths_json.push_back(
          {{"kind", "collaborative"},
           {"instance", path.instance},
           {"failed", path.failed},
           {"hypotheses", hyps},
           {"answer", path.answer ? nlohmann::json(path.answer->value)
                                  : nlohmann::json()},
           {"score", score}});
    }

    if (schema.usable() && !subgraph.empty()) {
      auto stepwise = enumerate_stepwise_paths(example.question, schema,
                                               subgraph, graph, recorder);
      for (const auto& [answer, path] : stepwise) {
        double score = collab::blend_score(
            answer.model_prob, path_consistency(path, subgraph),
            config.lambda);
        scored.emplace_back(answer, score);
        paths_json.push_back({{"kind", "stepwise"},
                              {"steps", path.steps.size()},
                              {"trajectory_prob", path.trajectory_prob},
                              {"answer", answer.value},
                              {"score", score}});
      }
    }
    trace["paths"] = paths_json;

    std::optional<CandidateAnswer> winner = collab::aggregate(scored);
    if (winner) {
      result.prediction.answers = {winner->value};
      trace["final"] = {{"answer", winner->value},
                        {"stage", "collaborative"},
                        {"mass", winner->model_prob}};
    } else if (direct_outcome && !direct_outcome->candidates.empty()) {
      CandidateAnswer fallback =
          detail::best_unvalidated(direct_outcome->candidates);
      result.prediction.answers = {fallback.value};
      trace["final"] = {{"answer", fallback.value},
                        {"stage", "direct-unvalidated-fallback"}};
    } else {
      trace["final"] = {{"answer", nullptr}, {"stage", "abstention"}};
    }
    trace["adapter_log"] = recorder.take_log();
    return result;
  } catch (const AdapterError& err) {
    result.errored = true;
    result.prediction.answers.clear();
    trace["error"] = err.what();
    trace["final"] = {{"answer", nullptr}, {"stage", "errored"}};
    trace["adapter_log"] = recorder.take_log();
    return result;
  }
}

struct MetricsReport {
  double hits_at_1 = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  nlohmann::json per_example = nlohmann::json::array();

  nlohmann::json to_json() const {
    return {{"f1_variant", "set"},
            {"hits_at_1", hits_at_1},
            {"accuracy", accuracy},
            {"f1", f1},
            {"per_example", per_example}};
  }
};

// hits@1: top prediction in the gold set; accuracy: exact set match;
// f1: mean per-example set F1 (abstention scores 0 on all three).
inline MetricsReport evaluate(const std::vector<Prediction>& predictions,
                              const std::vector<DatasetExample>& golds) {
  std::map<std::string, const DatasetExample*> by_id;
  for (const DatasetExample& g : golds) by_id[g.id] = &g;
  if (predictions.size() != golds.size())
    throw std::runtime_error("prediction/gold count mismatch");

  MetricsReport report;
  double hits = 0, exact = 0, f1_sum = 0;
  for (const Prediction& pred : predictions) {
    auto it = by_id.find(pred.id);
    if (it == by_id.end())
      throw std::runtime_error("prediction for unknown id '" + pred.id + "'");
    const std::set<std::string>& gold = it->second->gold_answers;
    std::set<std::string> predicted;
    for (const std::string& a : pred.answers)
      predicted.insert(normalize_text(a));

    bool hit = !pred.answers.empty() &&
               gold.count(normalize_text(pred.answers.front())) > 0;
    bool is_exact = !predicted.empty() && predicted == gold;
    double f1 = 0.0;
    if (!predicted.empty()) {
      std::size_t overlap = 0;
      for (const std::string& a : predicted)
        if (gold.count(a)) ++overlap;
      double precision =
          static_cast<double>(overlap) / static_cast<double>(predicted.size());
      double recall =
          static_cast<double>(overlap) / static_cast<double>(gold.size());
      if (precision + recall > 0.0)
        f1 = 2.0 * precision * recall / (precision + recall);
    }
    hits += hit ? 1 : 0;
    exact += is_exact ? 1 : 0;
    f1_sum += f1;
    report.per_example.push_back({{"id", pred.id},
                                  {"hit", hit},
                                  {"exact", is_exact},
                                  {"f1", f1}});
  }
  double n = static_cast<double>(predictions.size());
  if (n > 0) {
    report.hits_at_1 = hits / n;
    report.accuracy = exact / n;
    report.f1 = f1_sum / n;
  }
  return report;
}

struct RunOutput {
  std::vector<ExampleResult> results;
  MetricsReport metrics;
  bool any_errored = false;
};

// Evaluates examples with a bounded worker pool; per-example results are
// buffered then emitted in dataset order, so output is schedule-independent.
inline RunOutput run_dataset(const std::vector<DatasetExample>& dataset,
                             const KnowledgeGraph& graph, Adapter& adapter,
                             const RunConfig& config) {
  RunOutput out;
  out.results.resize(dataset.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= dataset.size()) break;
      out.results[i] = run_example(dataset[i], graph, adapter, config);
    }
  };
  std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(config.workers),
                            std::max<std::size_t>(dataset.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  std::vector<Prediction> predictions;
  for (const ExampleResult& r : out.results) {
    predictions.push_back(r.prediction);
    if (r.errored) out.any_errored = true;
  }
  out.metrics = evaluate(predictions, dataset);
  return out;
}

inline void write_run_output(const RunOutput& out,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream traces(dir / "traces.jsonl");
  for (const ExampleResult& r : out.results) traces << r.trace.dump() << '\n';
  std::ofstream metrics(dir / "metrics.json");
  metrics << out.metrics.to_json().dump(2) << '\n';
}

}  // namespace sgr
