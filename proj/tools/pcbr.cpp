// Command-line driver: build, eval, stream and inspect-clusters.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcbr/config.hpp"
#include "pcbr/evaluation.hpp"
#include "pcbr/snapshot.hpp"
#include "pcbr/stream.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pcbr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitEvalFailure = 1;
constexpr int kExitInput = 2;

/// Errors in user input: bad flags, configs, datasets or snapshots.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::optional<std::string> data;
  std::optional<std::size_t> k;
  std::optional<std::size_t> n;
  std::optional<std::size_t> max_len;
  std::optional<double> tau;
  std::optional<std::size_t> path_budget;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> seed_fraction;
  std::optional<double> popular_fraction;
  std::optional<std::size_t> num_batches;
  std::optional<std::string> split;
  std::optional<std::string> directions;
  std::optional<std::string> mode;
  std::optional<std::string> snapshot;
  std::optional<std::string> out;
  std::optional<std::string> dump_ranks;
  std::optional<std::string> plan;
  std::optional<std::string> log;
  bool plan_only = false;
  std::size_t limit = 20;
};

template <class T>
void add(CLI::App* cmd, const std::string& name, std::optional<T>& target, const std::string& env,
         const std::string& help) {
  cmd->add_option(name, target, help)->envname("PCBR_" + env);
}

void add_data(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags and PCBR_* variables override its values")
      ->envname("PCBR_CONFIG");
  add(cmd, "--data", f.data, "DATA", "Dataset directory with train.txt, valid.txt (or dev.txt) and test.txt");
  add(cmd, "--threads", f.threads, "THREADS", "Worker threads (0 = all cores)");
}

void add_model(CLI::App* cmd, Flags& f) {
  add(cmd, "--K", f.k, "K", "Contextual entities per query");
  add(cmd, "--N", f.n, "N", "Path types gathered from each contextual entity");
  add(cmd, "--max-len", f.max_len, "MAX_LEN", "Maximum path length");
  add(cmd, "--tau", f.tau, "TAU", "Linkage threshold for flat clusters, in [0, 1]");
  add(cmd, "--path-budget", f.path_budget, "PATH_BUDGET", "Edge expansions per entity before path enumeration stops");
}

void add_eval(CLI::App* cmd, Flags& f) {
  add(cmd, "--split", f.split, "SPLIT", "Evaluation split: train, dev or test");
  add(cmd, "--directions", f.directions, "DIRECTIONS", "Query directions: tail, head or both");
  add(cmd, "--out", f.out, "OUT", "Write the JSON report here instead of stdout");
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = load_run_config(f.config, c);
  auto set = [](auto& field, const auto& opt) {
    if (opt) field = *opt;
  };
  set(c.data, f.data);
  set(c.model.k, f.k);
  set(c.model.paths_per_case, f.n);
  set(c.model.max_length, f.max_len);
  set(c.model.tau, f.tau);
  set(c.model.path_budget, f.path_budget);
  set(c.model.threads, f.threads);
  set(c.stream.rng_seed, f.seed);
  set(c.stream.seed_fraction, f.seed_fraction);
  set(c.stream.popular_fraction, f.popular_fraction);
  set(c.stream.num_batches, f.num_batches);
  set(c.split, f.split);
  set(c.directions, f.directions);
  set(c.mode, f.mode);
  set(c.snapshot, f.snapshot);
  set(c.out, f.out);
  set(c.dump_ranks, f.dump_ranks);
  set(c.plan, f.plan);
  set(c.log, f.log);
  if (f.plan_only) c.plan_only = true;
  c.validate();
  return c;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json hyperparameters(const ModelConfig& m) {
  return {{"K", m.k}, {"N", m.paths_per_case}, {"max_len", m.max_length}, {"tau", m.tau}, {"path_budget", m.path_budget}};
}

KnowledgeGraph load_data(const RunConfig& c) {
  if (c.data.empty()) throw InputError("no dataset given (use --data or PCBR_DATA)");
  const auto start = std::chrono::steady_clock::now();
  KnowledgeGraph kg = load_dataset(c.data);
  std::cerr << "loaded " << c.data << ": " << kg.num_entities() << " entities, " << kg.num_base_relations()
            << " relations, " << kg.train().size() << "/" << kg.dev().size() << "/" << kg.test().size()
            << " train/dev/test triples in " << seconds_since(start) << " s\n";
  if (!kg.unseen().dev.empty() || !kg.unseen().test.empty()) {
    std::cerr << "unseen entities: " << kg.unseen().dev.size() << " dev and " << kg.unseen().test.size()
              << " test triples\n";
  }
  return kg;
}

void emit(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path);
  os << j.dump(2) << '\n';
}

CbrModel build_logged(const KnowledgeGraph& kg, const ModelConfig& m, json* summary = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  CbrModel model = build_model(kg, m);
  const double elapsed = seconds_since(start);
  std::cerr << "built model: " << model.clusters.size() << " clusters in " << elapsed << " s\n";
  if (!model.truncated.empty()) {
    std::cerr << "warning: path enumeration hit the budget for " << model.truncated.size()
              << " entities; their statistics are truncated (raise --path-budget)\n";
  }
  if (summary) {
    *summary = model_summary(model);
    (*summary)["wall_seconds"] = elapsed;
  }
  return model;
}

int cmd_build(const RunConfig& c) {
  if (c.snapshot.empty()) throw InputError("build needs --snapshot DIR to write the model to");
  const KnowledgeGraph kg = load_data(c);
  json summary;
  const CbrModel model = build_logged(kg, c.model, &summary);
  save_snapshot(c.snapshot, kg, model, {{"dataset", c.data}});
  emit({{"dataset", c.data}, {"snapshot", c.snapshot}, {"hyperparameters", hyperparameters(c.model)}, {"summary", summary}},
       c.out);
  return kExitOk;
}

/// Config keys set explicitly by the config file, PCBR_* variables or flags.
std::set<std::string> explicit_keys(const Flags& f) {
  std::set<std::string> keys;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    const json file = json::parse(in);
    for (const auto& [key, value] : file.items()) keys.insert(key);
  }
  if (f.k) keys.insert("K");
  if (f.n) keys.insert("N");
  if (f.max_len) keys.insert("max_len");
  if (f.tau) keys.insert("tau");
  if (f.path_budget) keys.insert("path_budget");
  return keys;
}

/// Snapshot hyperparameters fixed at build time must agree with any explicitly
/// requested value; K only affects querying and may be changed.
void check_snapshot_config(const std::set<std::string>& keys, const RunConfig& c, const CbrModel& model) {
  auto clash = [&](const char* key, bool differs) {
    if (keys.count(key) && differs) {
      throw SnapshotError(std::string("requested ") + key + " differs from the snapshot's; rebuild the snapshot");
    }
  };
  clash("N", c.model.paths_per_case != model.config.paths_per_case);
  clash("max_len", c.model.max_length != model.config.max_length);
  clash("tau", c.model.tau != model.config.tau);
  clash("path_budget", c.model.path_budget != model.config.path_budget);
}

int cmd_eval(const Flags& f, const RunConfig& c) {
  const KnowledgeGraph kg = load_data(c);
  CbrModel model;
  if (!c.snapshot.empty()) {
    model = load_snapshot(c.snapshot, kg);
    const auto keys = explicit_keys(f);
    check_snapshot_config(keys, c, model);
    if (keys.count("K")) model.config.k = c.model.k;
  } else {
    model = build_logged(kg, c.model);
  }
  model.config.threads = c.model.threads;

  const auto& split = c.split == "train" ? kg.train() : c.split == "dev" ? kg.dev() : kg.test();
  const auto directions = parse_directions(c.directions);
  const KnownAnswers known(kg);

  const auto start = std::chrono::steady_clock::now();
  Evaluation result;
  try {
    result = evaluate(kg, model, known, split, directions, c.model.threads);
  } catch (const std::exception& e) {
    std::cerr << "evaluation failed: " << e.what() << '\n';
    return kExitEvalFailure;
  }
  const double elapsed = seconds_since(start);
  std::cerr << "evaluated " << result.report.overall.query_count << " queries in " << elapsed << " s\n";

  json report = to_json(result.report);
  report["dataset"] = c.data;
  report["split"] = c.split;
  report["hyperparameters"] = hyperparameters(model.config);
  report["timestamp"] = timestamp();
  report["eval_seconds"] = elapsed;
  emit(report, c.out);

  if (!c.dump_ranks.empty()) {
    std::ofstream os(c.dump_ranks);
    if (!os) throw InputError("cannot write " + c.dump_ranks);
    write_rank_dump(os, kg, result.records);
  }
  return kExitOk;
}

int cmd_stream(const RunConfig& c) {
  const KnowledgeGraph kg = load_data(c);
  StreamPlan plan;
  if (!c.plan.empty() && !c.plan_only && fs::exists(c.plan)) {
    std::ifstream in(c.plan);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw InputError("plan file " + c.plan + " is not valid JSON: " + e.what());
    }
    if (j.value("vocabulary_fingerprint", std::uint64_t{0}) != kg.vocabulary_fingerprint()) {
      throw InputError("plan " + c.plan + " was made for a different dataset");
    }
    plan = plan_from_json(kg, j);
    std::cerr << "loaded plan " << c.plan << '\n';
  } else {
    plan = make_stream_plan(kg, c.stream);
    if (!c.plan.empty()) {
      std::ofstream(c.plan) << plan_to_json(kg, plan).dump(1) << '\n';
      std::cerr << "wrote plan " << c.plan << '\n';
    }
  }
  if (c.plan_only) {
    if (c.plan.empty()) std::cout << plan_to_json(kg, plan).dump(1) << '\n';
    return kExitOk;
  }

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!c.log.empty()) {
    log_file.open(c.log);
    if (!log_file) throw InputError("cannot write " + c.log);
    log = &log_file;
  }
  const StreamMode mode = parse_stream_mode(c.mode);
  const auto directions = parse_directions(c.directions);
  try {
    run_stream(kg, plan, c.model, mode, c.split == "dev" ? "dev" : "test", directions, [&](const StreamRecord& r) {
      json line = to_json(r, mode);
      line["dataset"] = c.data;
      line["hyperparameters"] = hyperparameters(c.model);
      *log << line.dump() << '\n';
      log->flush();
      std::cerr << "stage " << r.stage << " " << r.eval_set << ": mrr "
                << (r.report.overall.query_count ? std::to_string(r.report.overall.mrr) : "n/a") << '\n';
    });
  } catch (const PreconditionError&) {
    throw;
  } catch (const std::exception& e) {
    std::cerr << "stream failed: " << e.what() << '\n';
    return kExitEvalFailure;
  }
  return kExitOk;
}

int cmd_inspect(const Flags& f, const RunConfig& c) {
  const KnowledgeGraph kg = load_data(c);
  CbrModel model;
  if (!c.snapshot.empty()) {
    model = load_snapshot(c.snapshot, kg);
  } else {
    model = build_logged(kg, c.model);
  }
  std::vector<std::pair<std::size_t, ClusterId>> by_size;
  std::size_t singletons = 0;
  for (const auto& [id, members] : model.clusters.clusters()) {
    by_size.emplace_back(members.size(), id);
    if (members.size() == 1) ++singletons;
  }
  std::stable_sort(by_size.begin(), by_size.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  json out;
  out["hyperparameters"] = hyperparameters(model.config);
  out["summary"] = model_summary(model);
  out["singletons"] = singletons;
  auto& list = out["largest"] = json::array();
  for (std::size_t i = 0; i < by_size.size() && i < f.limit; ++i) {
    const ClusterId id = by_size[i].second;
    json entry;
    entry["id"] = kg.label(EntityId{id.value});
    entry["size"] = by_size[i].first;
    auto& sample = entry["members"] = json::array();
    const auto& members = model.clusters.members(id);
    for (std::size_t m = 0; m < members.size() && m < 10; ++m) sample.push_back(kg.label(members[m]));
    auto& rels = entry["relations"] = json::object();
    if (auto it = model.stats.find(id); it != model.stats.end()) {
      for (const auto& [rq, rs] : it->second) rels[kg.label(rq)] = rs.paths.size();
    }
    list.push_back(std::move(entry));
  }
  emit(out, c.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Case-based reasoning over knowledge graphs: build, evaluate and stream"};
  app.require_subcommand(1);
  Flags f;

  auto* build = app.add_subcommand("build", "Build a model and write a snapshot directory");
  add_data(build, f);
  add_model(build, f);
  add(build, "--snapshot", f.snapshot, "SNAPSHOT", "Snapshot directory to write");
  add(build, "--out", f.out, "OUT", "Write the build summary here instead of stdout");

  auto* eval = app.add_subcommand("eval", "Evaluate filtered Hits@N and MRR on a split");
  add_data(eval, f);
  add_model(eval, f);
  add_eval(eval, f);
  add(eval, "--snapshot", f.snapshot, "SNAPSHOT", "Snapshot to evaluate; without it the model is built in memory");
  add(eval, "--dump-ranks", f.dump_ranks, "DUMP_RANKS", "Write per-query ranks as TSV");

  auto* stream = app.add_subcommand("stream", "Replay the dataset as an open-world stream of batches");
  add_data(stream, f);
  add_model(stream, f);
  add_eval(stream, f);
  stream->remove_option(stream->get_option("--out"));
  add(stream, "--mode", f.mode, "MODE", "online (incremental updates) or oracle (rebuild every batch)");
  add(stream, "--plan", f.plan, "PLAN", "Plan JSON: loaded if it exists, otherwise written");
  stream->add_flag("--plan-only", f.plan_only, "Only produce the plan, without running the stream");
  add(stream, "--log", f.log, "LOG", "JSON-lines batch log (default stdout)");
  add(stream, "--seed", f.seed, "SEED", "Seed for the batch shuffle");
  add(stream, "--seed-fraction", f.seed_fraction, "SEED_FRACTION", "Fraction of entities in the seed KB");
  add(stream, "--popular-fraction", f.popular_fraction, "POPULAR_FRACTION",
      "Fraction of entities seeded by popularity");
  add(stream, "--num-batches", f.num_batches, "NUM_BATCHES", "Number of batches after the seed");

  auto* inspect = app.add_subcommand("inspect-clusters", "Summarize the flat clustering of a snapshot");
  add_data(inspect, f);
  add_model(inspect, f);
  add(inspect, "--snapshot", f.snapshot, "SNAPSHOT", "Snapshot to inspect; without it the model is built in memory");
  add(inspect, "--out", f.out, "OUT", "Write the JSON here instead of stdout");
  inspect->add_option("--limit", f.limit, "Number of largest clusters to list")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const RunConfig c = resolve(f);
    if (build->parsed()) return cmd_build(c);
    if (eval->parsed()) return cmd_eval(f, c);
    if (stream->parsed()) return cmd_stream(c);
    return cmd_inspect(f, c);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const SnapshotError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const LookupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::runtime_error& e) {
    // Missing dataset files and unreadable inputs surface here.
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEvalFailure;
  }
}
