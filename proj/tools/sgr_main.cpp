// sgr: run the reasoning pipeline, execute graph queries, evaluate
// predictions, and compare ablation configurations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgr/adapter.hpp"
#include "sgr/gql.hpp"
#include "sgr/harness.hpp"
#include "sgr/kg.hpp"
#include "sgr/remote_adapter.hpp"

namespace {

sgr::KnowledgeGraph load_graph(const std::string& graph_path,
                               const std::string& alias_path) {
  std::ifstream in(graph_path);
  if (!in) throw std::runtime_error("cannot open graph file: " + graph_path);
  sgr::KnowledgeGraph graph = sgr::load_triples(in);
  if (!alias_path.empty()) {
    std::ifstream aliases(alias_path);
    if (!aliases)
      throw std::runtime_error("cannot open alias file: " + alias_path);
    sgr::load_aliases(graph, aliases);
  }
  return graph;
}

std::vector<sgr::DatasetExample> load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  return sgr::load_dataset(in);
}

sgr::RunConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return sgr::RunConfig{};
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open config: " + config_path);
  nlohmann::json doc;
  in >> doc;
  return sgr::RunConfig::from_json(doc);
}

void print_metrics(const std::string& label, const sgr::MetricsReport& m) {
  std::printf("%-28s hits@1 %.4f  acc %.4f  f1 %.4f\n", label.c_str(),
              m.hits_at_1, m.accuracy, m.f1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGR: schema-guided stepwise reasoning over knowledge graphs"};
  app.require_subcommand(1);

  std::string graph_path, alias_path, dataset_path, mock_path, config_path;
  std::string out_dir, query_text, pred_path, gold_path;
  bool use_remote = false;

  auto add_graph_opts = [&](CLI::App* cmd) {
    cmd->add_option("--graph", graph_path, "triple file (TSV)")->required();
    cmd->add_option("--aliases", alias_path, "alias file (TSV)");
  };
  auto add_run_opts = [&](CLI::App* cmd) {
    add_graph_opts(cmd);
    cmd->add_option("--dataset", dataset_path, "dataset (JSONL)")->required();
    cmd->add_option("--mock", mock_path, "mock adapter script (JSON)");
    cmd->add_flag("--remote", use_remote,
                  "use the remote adapter (SGR_LLM_ENDPOINT)");
    cmd->add_option("--config", config_path, "run config (JSON)");
    cmd->add_option("--out", out_dir, "output directory")->required();
  };

  auto* run_cmd = app.add_subcommand("run", "run the pipeline on a dataset");
  add_run_opts(run_cmd);
  bool flag_disable_schema = false, flag_disable_retrieval = false,
       flag_strict = false;
  run_cmd->add_flag("--disable-schema", flag_disable_schema,
                    "ablation: bypass schema extraction");
  run_cmd->add_flag("--disable-graph-retrieval", flag_disable_retrieval,
                    "ablation: bypass subgraph retrieval");
  run_cmd->add_flag("--strict", flag_strict,
                    "nonzero exit on any errored example");

  auto* query_cmd = app.add_subcommand("query", "execute one graph query");
  add_graph_opts(query_cmd);
  query_cmd->add_option("query", query_text, "query text")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against gold");
  eval_cmd->add_option("--pred", pred_path, "predictions (JSONL)")->required();
  eval_cmd->add_option("--gold", gold_path, "gold dataset (JSONL)")->required();

  auto* ablate_cmd = app.add_subcommand(
      "ablate", "run full, no-schema, and no-retrieval configurations");
  add_run_opts(ablate_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*query_cmd) {
      sgr::KnowledgeGraph graph = load_graph(graph_path, alias_path);
      sgr::gql::QueryAst ast = sgr::gql::parse_query(query_text);
      sgr::gql::ExecResult result = sgr::gql::execute(ast, graph);
      for (const std::string& w : result.warnings)
        std::cerr << "warning: " << w << "\n";
      for (const sgr::gql::BindingRow& row : result.rows)
        std::cout << graph.entity_name(row.at(ast.returns.front())) << "\n";
      return 0;
    }

    if (*eval_cmd) {
      std::ifstream pred_in(pred_path);
      if (!pred_in)
        throw std::runtime_error("cannot open predictions: " + pred_path);
      std::vector<sgr::Prediction> predictions;
      std::string line;
      while (std::getline(pred_in, line)) {
        if (line.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(line);
        sgr::Prediction p;
        p.id = doc.at("id").get<std::string>();
        for (const auto& a : doc.value("answers", nlohmann::json::array()))
          p.answers.push_back(a.get<std::string>());
        predictions.push_back(std::move(p));
      }
      auto golds = load_dataset_file(gold_path);
      sgr::MetricsReport report = sgr::evaluate(predictions, golds);
      print_metrics("eval", report);
      std::cout << report.to_json().dump(2) << "\n";
      return 0;
    }

    // run / ablate share setup
    sgr::KnowledgeGraph graph = load_graph(graph_path, alias_path);
    auto dataset = load_dataset_file(dataset_path);
    sgr::RunConfig config = load_config(config_path);

    auto make_adapter = [&]() -> std::unique_ptr<sgr::Adapter> {
      if (use_remote)
        return std::make_unique<sgr::RemoteAdapter>(sgr::RemoteAdapter::Options{});
      if (mock_path.empty())
        throw std::runtime_error("either --mock or --remote is required");
      return std::make_unique<sgr::MockAdapter>(
          sgr::MockAdapter::from_file(mock_path));
    };

    if (*run_cmd) {
      if (flag_disable_schema) config.disable_schema = true;
      if (flag_disable_retrieval) config.disable_graph_retrieval = true;
      if (flag_strict) config.strict = true;
      auto adapter = make_adapter();
      sgr::RunOutput out = sgr::run_dataset(dataset, graph, *adapter, config);
      sgr::write_run_output(out, out_dir);
      print_metrics("run", out.metrics);
      if (config.strict && out.any_errored) return 2;
      return 0;
    }

    if (*ablate_cmd) {
      struct Variant {
        const char* name;
        bool disable_schema;
        bool disable_retrieval;
      };
      const Variant variants[] = {{"full", false, false},
                                  {"disable_schema", true, false},
                                  {"disable_graph_retrieval", false, true}};
      for (const Variant& v : variants) {
        sgr::RunConfig variant_config = config;
        variant_config.disable_schema = v.disable_schema;
        variant_config.disable_graph_retrieval = v.disable_retrieval;
        auto adapter = make_adapter();  // fresh script state per variant
        sgr::RunOutput out =
            sgr::run_dataset(dataset, graph, *adapter, variant_config);
        sgr::write_run_output(out,
                              std::filesystem::path(out_dir) / v.name);
        print_metrics(v.name, out.metrics);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
