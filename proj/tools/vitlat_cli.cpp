// Pipeline driver: sample architectures, lower them, featurize, simulate
// measurements, train per-op predictors, and evaluate end-to-end latency.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vitlat/evaluation.hpp"
#include "vitlat/simdevice.hpp"

namespace fs = std::filesystem;
using namespace vitlat;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitCoverage = 4;
constexpr const char* kVersion = "1.0.0";

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// write-then-rename so partially written artifacts never appear
void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("VITLAT_OUT_ROOT");
  return fs::path(root ? root : "vitlat_out") / command;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const nlohmann::json& flags) {
  nlohmann::json m{{"command", command}, {"flags", flags}, {"version", kVersion}};
  atomic_write(out_dir / "manifest.json", m.dump(2) + "\n");
}

std::map<std::string, OpGraph> load_graphs(const fs::path& dir) {
  std::map<std::string, OpGraph> graphs;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    OpGraph g = graph_from_jsonl(read_file(f));
    graphs[g.arch_id] = std::move(g);
  }
  if (graphs.empty()) throw IoError("no *.jsonl graphs under " + dir.string());
  return graphs;
}

std::string sanitize_key(std::string key) {
  for (char& c : key)
    if (c == ':' || c == '/') c = '_';
  return key;
}

int run(int argc, char** argv) {
  CLI::App app{"synthetic ViT latency prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global flags (--seed, --jobs) after subcommands

  uint64_t seed = 0;
  int jobs = 0;
  app.add_option("--seed", seed, "root seed; all stage randomness derives from it")
      ->capture_default_str();
  app.add_option("--jobs", jobs, "worker threads (0 = hardware)");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "sample architecture configs");
  int count = 10;
  std::string space_file, out_dir_s;
  sample_cmd->add_option("--count", count, "number of configs")->capture_default_str();
  sample_cmd->add_option("--space", space_file, "search space override JSON");
  sample_cmd->add_option("--out", out_dir_s, "output directory");

  // lower
  auto* lower_cmd = app.add_subcommand("lower", "lower configs to op graphs");
  std::string arch_dir, precision_s = "fp32";
  lower_cmd->add_option("--arch-dir", arch_dir, "directory of arch JSON files")
      ->required();
  lower_cmd->add_option("--precision", precision_s, "fp32|int8")->capture_default_str();
  lower_cmd->add_option("--out", out_dir_s, "output directory");

  // featurize
  auto* feat_cmd = app.add_subcommand("featurize", "export per-kind feature CSVs");
  std::string graph_dir;
  feat_cmd->add_option("--graph-dir", graph_dir, "directory of graph JSONL files")
      ->required();
  feat_cmd->add_option("--out", out_dir_s, "output directory");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "generate oracle measurements");
  std::string device_file, format = "csv";
  sim_cmd->add_option("--graph-dir", graph_dir, "directory of graph JSONL files")
      ->required();
  sim_cmd->add_option("--device-model", device_file, "device model JSON");
  sim_cmd->add_option("--format", format, "csv|jsonl")->capture_default_str();
  sim_cmd->add_option("--out", out_dir_s, "output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "fit per-op predictors");
  std::string measurements_file, method_s = "gbdt", bundle_file;
  size_t train_size = 0;
  bool no_conv_split = false;
  train_cmd->add_option("--graph-dir", graph_dir)->required();
  train_cmd->add_option("--measurements", measurements_file)->required();
  train_cmd->add_option("--format", format, "csv|jsonl")->capture_default_str();
  train_cmd->add_option("--method", method_s, "lasso|rf|gbdt")->capture_default_str();
  train_cmd->add_option("--train-size", train_size,
                        "models used for training (0 = all but one)");
  train_cmd->add_flag("--no-conv-format-split", no_conv_split,
                      "train one shared conv predictor across memory formats");
  train_cmd->add_option("--out", out_dir_s, "output directory");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "predict per-model latency");
  predict_cmd->add_option("--graph-dir", graph_dir)->required();
  predict_cmd->add_option("--bundle", bundle_file)->required();
  predict_cmd->add_option("--out", out_dir_s, "output directory");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "MAPE against measurements");
  std::string split_file;
  bool force_context = false;
  eval_cmd->add_option("--graph-dir", graph_dir)->required();
  eval_cmd->add_option("--bundle", bundle_file)->required();
  eval_cmd->add_option("--measurements", measurements_file)->required();
  eval_cmd->add_option("--format", format, "csv|jsonl")->capture_default_str();
  eval_cmd->add_option("--split", split_file, "split JSON; evaluates its test_ids");
  eval_cmd->add_flag("--force-context", force_context,
                     "evaluate across mismatched contexts");
  eval_cmd->add_option("--out", out_dir_s, "output directory");

  // importance
  auto* imp_cmd = app.add_subcommand("importance", "MDI feature importance");
  imp_cmd->add_option("--bundle", bundle_file)->required();
  imp_cmd->add_option("--out", out_dir_s, "output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "training-size sweep");
  std::vector<size_t> sizes{30, 100, 900};
  int runs = 5;
  size_t test_size = 100;
  std::string methods_s = "lasso,rf,gbdt";
  sweep_cmd->add_option("--graph-dir", graph_dir)->required();
  sweep_cmd->add_option("--measurements", measurements_file)->required();
  sweep_cmd->add_option("--format", format, "csv|jsonl")->capture_default_str();
  sweep_cmd->add_option("--sizes", sizes, "training sizes")->capture_default_str();
  sweep_cmd->add_option("--runs", runs, "seeded repetitions")->capture_default_str();
  sweep_cmd->add_option("--test-size", test_size)->capture_default_str();
  sweep_cmd->add_option("--methods", methods_s)->capture_default_str();
  sweep_cmd->add_option("--out", out_dir_s, "output directory");

  CLI11_PARSE(app, argc, argv);

  auto out_dir = [&](const std::string& cmd) {
    return out_dir_s.empty() ? default_out(cmd) : fs::path(out_dir_s);
  };

  if (*sample_cmd) {
    fs::path out = out_dir("sample");
    SearchSpaceSpec space = space_file.empty() ? SearchSpaceSpec::defaults()
                                               : SearchSpaceSpec::from_json_file(space_file);
    for (int i = 0; i < count; ++i) {
      ArchConfig cfg = sample_arch(seed + (uint64_t)i, space);
      atomic_write(out / ("arch_" + cfg.arch_id() + ".json"),
                   arch_to_canonical_json(cfg));
    }
    write_manifest(out, "sample",
                   {{"count", count}, {"seed", seed}, {"space", space_file}});
    std::cout << "wrote " << count << " configs to " << out << "\n";
    return 0;
  }

  if (*lower_cmd) {
    fs::path out = out_dir("lower");
    Precision prec = precision_s == "int8" ? Precision::int8 : Precision::fp32;
    if (precision_s != "fp32" && precision_s != "int8")
      throw ConfigError("unknown precision: " + precision_s);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(arch_dir))
      if (e.path().extension() == ".json" &&
          e.path().filename().string().rfind("arch_", 0) == 0)
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no arch_*.json under " + arch_dir);
    for (const auto& f : files) {
      ArchConfig cfg = arch_from_json(nlohmann::json::parse(read_file(f)));
      OpGraph g = lower(cfg, prec);
      atomic_write(out / (g.arch_id + ".graph.jsonl"), graph_to_jsonl(g));
    }
    write_manifest(out, "lower",
                   {{"arch_dir", arch_dir}, {"precision", precision_s}, {"seed", seed}});
    std::cout << "lowered " << files.size() << " configs to " << out << "\n";
    return 0;
  }

  if (*feat_cmd) {
    fs::path out = out_dir("featurize");
    auto graphs = load_graphs(graph_dir);
    std::map<std::string, std::ostringstream> csvs;
    for (const auto& [id, g] : graphs) {
      for (const OpNode& n : g.nodes) {
        FeatureVector fv = featurize(n);
        std::string key = kind_key(n);
        auto& os = csvs[key];
        if (os.tellp() == 0) {
          os << "model_id,node_id";
          for (const auto& name : fv.names) os << ',' << name;
          os << "\n";
        }
        os << id << ',' << n.id;
        char buf[64];
        for (double v : fv.values) {
          std::snprintf(buf, sizeof(buf), "%.17g", v);
          os << ',' << buf;
        }
        os << "\n";
      }
    }
    for (const auto& [key, os] : csvs)
      atomic_write(out / ("features_" + sanitize_key(key) + ".csv"), os.str());
    write_manifest(out, "featurize", {{"graph_dir", graph_dir}, {"seed", seed}});
    std::cout << "wrote " << csvs.size() << " feature tables to " << out << "\n";
    return 0;
  }

  if (*sim_cmd) {
    fs::path out = out_dir("simulate");
    DeviceModel dev = device_file.empty() ? DeviceModel{}
                                          : DeviceModel::from_json_file(device_file);
    auto graphs = load_graphs(graph_dir);
    std::vector<OpGraph> list;
    for (const auto& [id, g] : graphs) list.push_back(g);
    uint64_t stage_seed = derive_seed(seed, hash_str("simulate"));
    MeasurementSet set = generate_measurement_set(list, dev, stage_seed);
    if (format == "csv")
      atomic_write(out / "measurements.csv", set.to_csv());
    else if (format == "jsonl")
      atomic_write(out / "measurements.jsonl", set.to_jsonl());
    else
      throw ConfigError("unknown format: " + format);
    atomic_write(out / "device_model.json", dev.to_json().dump(2) + "\n");
    write_manifest(out, "simulate",
                   {{"graph_dir", graph_dir}, {"device_model", device_file},
                    {"format", format}, {"seed", seed}});
    std::cout << "wrote " << set.size() << " measurements to " << out << "\n";
    return 0;
  }

  if (*train_cmd) {
    fs::path out = out_dir("train");
    auto graphs = load_graphs(graph_dir);
    MeasurementSet set = MeasurementSet::ingest_file(measurements_file, format);
    auto join_problems = check_join(set, graphs);
    if (!join_problems.empty())
      throw DataError("measurement/graph join failed: " + join_problems.front());
    std::vector<std::string> ids = set.model_ids();
    uint64_t stage_seed = derive_seed(seed, hash_str("train"));
    SplitSpec sp = split(ids, train_size == 0 ? ids.size() - 1 : train_size, stage_seed);
    TrainOptions opt;
    opt.split_conv_by_format = !no_conv_split;
    Method method = method_from_string(method_s);
    PredictorBundle bundle =
        train_bundle(graphs, set, sp.train_ids, method, opt, stage_seed, jobs);
    atomic_write(out / "bundle.json", bundle.to_json().dump() + "\n");
    atomic_write(out / "split.json",
                 nlohmann::json{{"seed", sp.seed}, {"train_ids", sp.train_ids},
                                {"test_ids", sp.test_ids}}.dump(2) + "\n");
    write_manifest(out, "train",
                   {{"graph_dir", graph_dir}, {"measurements", measurements_file},
                    {"format", format}, {"method", method_s},
                    {"train_size", train_size}, {"conv_format_split", !no_conv_split},
                    {"seed", seed}});
    std::cout << "trained " << bundle.by_kind.size() << " predictors ("
              << to_string(method) << ") to " << out << "\n";
    return 0;
  }

  if (*predict_cmd) {
    fs::path out = out_dir("predict");
    auto graphs = load_graphs(graph_dir);
    PredictorBundle bundle = PredictorBundle::from_json_file(bundle_file);
    std::ostringstream flat;
    flat << "model_id,end_to_end_predicted_us\n";
    for (const auto& [id, g] : graphs) {
      PredictionReport rep = predict_model(g, bundle);
      atomic_write(out / ("report_" + id + ".json"), rep.to_json().dump(2) + "\n");
      flat << id << ',' << format_latency(rep.end_to_end_predicted_us) << "\n";
    }
    atomic_write(out / "predictions.csv", flat.str());
    write_manifest(out, "predict",
                   {{"graph_dir", graph_dir}, {"bundle", bundle_file}, {"seed", seed}});
    std::cout << "predicted " << graphs.size() << " models to " << out << "\n";
    return 0;
  }

  if (*eval_cmd) {
    fs::path out = out_dir("evaluate");
    auto graphs = load_graphs(graph_dir);
    PredictorBundle bundle = PredictorBundle::from_json_file(bundle_file);
    MeasurementSet set = MeasurementSet::ingest_file(measurements_file, format);
    std::vector<std::string> ids;
    if (!split_file.empty()) {
      nlohmann::json j = nlohmann::json::parse(read_file(split_file));
      ids = j.at("test_ids").get<std::vector<std::string>>();
    } else {
      ids = set.model_ids();
    }
    EvalSummary ev = evaluate_bundle(graphs, set, ids, bundle, force_context);
    nlohmann::json rep{{"end_to_end_mape", ev.end_to_end_mape},
                       {"per_category_mape", ev.per_category_mape},
                       {"per_kind_mape", ev.per_kind_mape},
                       {"n_models", ev.n_models}};
    atomic_write(out / "report.json", rep.dump(2) + "\n");
    write_manifest(out, "evaluate",
                   {{"graph_dir", graph_dir}, {"bundle", bundle_file},
                    {"measurements", measurements_file}, {"split", split_file},
                    {"seed", seed}});
    std::cout << "end_to_end_mape " << ev.end_to_end_mape << "% over " << ev.n_models
              << " models\n";
    return 0;
  }

  if (*imp_cmd) {
    fs::path out = out_dir("importance");
    PredictorBundle bundle = PredictorBundle::from_json_file(bundle_file);
    if (bundle.method == Method::Lasso)
      throw ConfigError("MDI importance is undefined for Lasso bundles");
    std::ostringstream csv;
    csv << "kind_key,feature,weight\n";
    for (const auto& [key, p] : bundle.by_kind)
      for (const auto& [feat, w] : p.mdi_importance())
        csv << key << ',' << feat << ',' << w << "\n";
    atomic_write(out / "importance.csv", csv.str());
    write_manifest(out, "importance", {{"bundle", bundle_file}, {"seed", seed}});
    std::cout << "wrote importance table to " << out << "\n";
    return 0;
  }

  if (*sweep_cmd) {
    fs::path out = out_dir("sweep");
    auto graphs = load_graphs(graph_dir);
    MeasurementSet set = MeasurementSet::ingest_file(measurements_file, format);
    std::vector<Method> methods;
    std::stringstream ms(methods_s);
    std::string tok;
    while (std::getline(ms, tok, ',')) methods.push_back(method_from_string(tok));
    TrainOptions opt;
    uint64_t stage_seed = derive_seed(seed, hash_str("sweep"));
    SweepTable table = training_size_sweep(graphs, set, sizes, runs, methods, opt,
                                           test_size, stage_seed, jobs);
    atomic_write(out / "sweep.csv", sweep_to_csv(table));
    write_manifest(out, "sweep",
                   {{"graph_dir", graph_dir}, {"measurements", measurements_file},
                    {"sizes", sizes}, {"runs", runs}, {"test_size", test_size},
                    {"methods", methods_s}, {"seed", seed}});
    std::cout << "wrote sweep table to " << out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CoverageError& e) {
    std::cerr << "coverage error: " << e.what() << "\n";
    return kExitCoverage;
  } catch (const ContextError& e) {
    std::cerr << "context error: " << e.what() << "\n";
    return kExitCoverage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitCoverage;
  } catch (const ConfigError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
