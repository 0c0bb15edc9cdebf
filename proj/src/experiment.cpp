#include "srlfi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "srlfi/errors.hpp"

namespace srlfi {

namespace fs = std::filesystem;
using Sections = std::map<std::string, std::map<std::string, std::string>>;

std::string to_string(Method m) {
  switch (m) {
    case Method::energy: return "energy";
    case Method::kernel: return "kernel";
    case Method::patched_energy: return "patched-energy";
    case Method::patched_kernel: return "patched-kernel";
    case Method::gan: return "gan";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::energy, Method::kernel, Method::patched_energy, Method::patched_kernel, Method::gan})
    if (to_string(m) == name) return m;
  throw ConfigError("experiment.method",
                    "unknown method '" + name + "' (energy, kernel, patched-energy, patched-kernel, gan)");
}

bool is_kernel_method(Method m) { return m == Method::kernel || m == Method::patched_kernel; }
bool is_patched_method(Method m) { return m == Method::patched_energy || m == Method::patched_kernel; }

// --- configuration ----------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_integer(const std::string& field, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(field, "expected a non-negative integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& field, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
    throw ConfigError(field, "expected a finite number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(field, "expected true or false, got '" + text + "'");
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

ExperimentConfig config_from_sections(const Sections& sections) {
  ExperimentConfig c;
  std::set<std::string> seen;
  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    seen.insert(section + "." + key);
    const auto s = sections.find(section);
    if (s == sections.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return trim(k->second);
  };
  auto size_field = [&](const std::string& section, const std::string& key, std::size_t& target) {
    if (auto v = get(section, key)) target = parse_integer<std::size_t>(section + "." + key, *v);
  };
  auto real_field = [&](const std::string& section, const std::string& key, double& target) {
    if (auto v = get(section, key)) target = parse_real(section + "." + key, *v);
  };

  if (auto v = get("experiment", "model")) c.model = *v;
  if (auto v = get("experiment", "method")) c.method = parse_method(*v);
  size_field("experiment", "n_train", c.n_train);
  size_field("experiment", "n_test", c.n_test);
  size_field("experiment", "n_post", c.n_post);
  if (auto v = get("experiment", "seeds")) {
    c.seeds.clear();
    for (const auto& s : split_list(*v)) c.seeds.push_back(parse_integer<std::uint64_t>("experiment.seeds", s));
  }
  if (auto v = get("experiment", "output")) c.output = *v;

  size_field("scoring", "m", c.m);
  real_field("scoring", "beta", c.beta);
  if (auto v = get("scoring", "gamma"); v && *v != "auto") c.gamma = parse_real("scoring.gamma", *v);
  if (auto v = get("scoring", "patch_size")) c.patch_size = parse_integer<std::size_t>("scoring.patch_size", *v);
  if (auto v = get("scoring", "patch_step")) c.patch_step = parse_integer<std::size_t>("scoring.patch_step", *v);
  real_field("scoring", "w1", c.w1);
  real_field("scoring", "w2", c.w2);

  size_field("training", "batch_size", c.batch_size);
  real_field("training", "learning_rate", c.learning_rate);
  real_field("training", "critic_learning_rate", c.critic_learning_rate);
  size_field("training", "critic_steps", c.critic_steps);
  size_field("training", "max_epochs", c.max_epochs);
  if (auto v = get("training", "early_stopping")) c.early_stopping = parse_bool("training.early_stopping", *v);
  size_field("training", "patience", c.patience);
  real_field("training", "validation_fraction", c.validation_fraction);

  if (auto v = get("network", "hidden")) {
    c.hidden.clear();
    for (const auto& s : split_list(*v)) c.hidden.push_back(parse_integer<std::size_t>("network.hidden", s));
  }
  if (auto v = get("network", "activation")) {
    try {
      c.activation = parse_activation(*v);
    } catch (const std::exception& e) {
      throw ConfigError("network.activation", e.what());
    }
  }
  size_field("network", "latent_dim", c.latent_dim);
  if (auto v = get("network", "latent_family")) {
    try {
      c.latent_family = parse_latent_family(*v);
    } catch (const std::exception& e) {
      throw ConfigError("network.latent_family", e.what());
    }
  }

  size_field("sbc", "priors", c.sbc_priors);
  size_field("sbc", "draws", c.sbc_draws);
  size_field("c2st", "observations", c.c2st_observations);
  size_field("c2st", "samples", c.c2st_samples);

  for (const auto& [section, keys] : sections)
    for (const auto& [key, value] : keys)
      if (!seen.count(section + "." + key)) throw ConfigError(section + "." + key, "unknown key");
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  std::unique_ptr<SimulatorModel> sim;
  try {
    sim = make_model(model);
  } catch (const std::exception& e) {
    throw ConfigError("experiment.model", e.what());
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds", "at least one seed is required");
  if (n_test < 2) throw ConfigError("experiment.n_test", "need at least two test pairs");
  if (n_post < 2) throw ConfigError("experiment.n_post", "need at least two posterior draws per pair");
  if (m < 2) throw ConfigError("scoring.m", "m must be >= 2");
  if (!(beta > 0.0 && beta < 2.0)) throw ConfigError("scoring.beta", "beta must lie in (0, 2)");

  if (is_kernel_method(method)) {
    if (gamma && !(*gamma > 0.0)) throw ConfigError("scoring.gamma", "bandwidth must be positive");
    if (!gamma && n_train < 2)
      throw ConfigError("scoring.gamma", "no bandwidth given and too few training pairs for the median heuristic");
  } else if (gamma) {
    throw ConfigError("scoring.gamma", "only kernel methods take a bandwidth");
  }
  if (is_patched_method(method)) {
    if (!patch_size) throw ConfigError("scoring.patch_size", "required for patched methods");
    if (!patch_step) throw ConfigError("scoring.patch_step", "required for patched methods");
    const auto grid = sim->parameter_grid();
    if (!grid) throw ConfigError("experiment.model", "model '" + model + "' has no parameter grid for patching");
    PatchLayout layout{*grid, *patch_size, *patch_step, w1, w2};
    try {
      layout.validate();
    } catch (const std::exception& e) {
      throw ConfigError("scoring.patch_size", e.what());
    }
  } else if (patch_size || patch_step) {
    throw ConfigError(patch_size ? "scoring.patch_size" : "scoring.patch_step", "only patched methods take a layout");
  }

  if (n_train < 2) throw ConfigError("experiment.n_train", "need at least two training pairs");
  if (batch_size == 0) throw ConfigError("training.batch_size", "must be >= 1");
  if (n_train < batch_size) throw ConfigError("experiment.n_train", "smaller than training.batch_size");
  if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate", "must be positive");
  if (!(critic_learning_rate > 0.0)) throw ConfigError("training.critic_learning_rate", "must be positive");
  if (critic_steps == 0) throw ConfigError("training.critic_steps", "must be >= 1");
  if (max_epochs == 0) throw ConfigError("training.max_epochs", "must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("training.validation_fraction", "must lie in [0, 1)");
  if (early_stopping && validation_fraction == 0.0)
    throw ConfigError("training.early_stopping", "needs training.validation_fraction > 0");
  if (early_stopping && patience == 0) throw ConfigError("training.patience", "must be >= 1");
  if (hidden.empty() || std::find(hidden.begin(), hidden.end(), std::size_t{0}) != hidden.end())
    throw ConfigError("network.hidden", "need at least one hidden layer, all widths positive");
  if (sbc_draws < 10) throw ConfigError("sbc.draws", "N must be >= 10");
  if (sbc_priors == 0) throw ConfigError("sbc.priors", "must be >= 1");
  if (c2st_samples < 10) throw ConfigError("c2st.samples", "must be >= 10");
}

Sections config_sections(const ExperimentConfig& c) {
  Sections s;
  auto& e = s["experiment"];
  e["model"] = c.model;
  e["method"] = to_string(c.method);
  e["n_train"] = std::to_string(c.n_train);
  e["n_test"] = std::to_string(c.n_test);
  e["n_post"] = std::to_string(c.n_post);
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  e["seeds"] = seeds;
  e["output"] = c.output;

  auto& sc = s["scoring"];
  sc["m"] = std::to_string(c.m);
  sc["beta"] = format_double(c.beta);
  if (is_kernel_method(c.method)) sc["gamma"] = c.gamma ? format_double(*c.gamma) : "auto";
  if (c.patch_size) sc["patch_size"] = std::to_string(*c.patch_size);
  if (c.patch_step) sc["patch_step"] = std::to_string(*c.patch_step);
  sc["w1"] = format_double(c.w1);
  sc["w2"] = format_double(c.w2);

  auto& t = s["training"];
  t["batch_size"] = std::to_string(c.batch_size);
  t["learning_rate"] = format_double(c.learning_rate);
  t["critic_learning_rate"] = format_double(c.critic_learning_rate);
  t["critic_steps"] = std::to_string(c.critic_steps);
  t["max_epochs"] = std::to_string(c.max_epochs);
  t["early_stopping"] = c.early_stopping ? "true" : "false";
  t["patience"] = std::to_string(c.patience);
  t["validation_fraction"] = format_double(c.validation_fraction);

  auto& n = s["network"];
  n["hidden"] = join_sizes(c.hidden);
  n["activation"] = to_string(c.activation);
  n["latent_dim"] = std::to_string(c.latent_dim);
  n["latent_family"] = to_string(c.latent_family);

  s["sbc"]["priors"] = std::to_string(c.sbc_priors);
  s["sbc"]["draws"] = std::to_string(c.sbc_draws);
  s["c2st"]["observations"] = std::to_string(c.c2st_observations);
  s["c2st"]["samples"] = std::to_string(c.c2st_samples);
  return s;
}

std::string config_to_ini(const ExperimentConfig& config) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, keys] : config_sections(config)) {
    out << (first ? "" : "\n") << '[' << section << "]\n";
    first = false;
    for (const auto& [key, value] : keys) out << key << " = " << value << '\n';
  }
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output.clear();
  return hash_label(config_to_ini(c));
}

ExperimentConfig parse_config_ini(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", std::string("malformed file: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  Sections sections;
  for (const auto& [section, node] : tree) {
    if (node.empty()) throw ConfigError(section, "key outside of any [section]");
    for (const auto& [key, value] : node) sections[section][key] = value.data();
  }
  return config_from_sections(sections);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() != ".json") return parse_config_ini(buf.str());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("malformed manifest: ") + e.what());
  }
  if (!manifest.contains("config") || !manifest["config"].is_object())
    throw ConfigError("config", "manifest has no \"config\" object");
  Sections sections;
  for (const auto& [section, keys] : manifest["config"].items()) {
    if (!keys.is_object()) throw ConfigError(section, "expected an object of keys");
    for (const auto& [key, value] : keys.items()) {
      if (!value.is_string()) throw ConfigError(section + "." + key, "manifest values must be strings");
      sections[section][key] = value.get<std::string>();
    }
  }
  return config_from_sections(sections);
}

// --- pipeline stages --------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

ScoringRule make_rule(const ExperimentConfig& c, const SimulatorModel& model) {
  const BaseScore base = is_kernel_method(c.method) ? BaseScore{KernelScoreParams{c.gamma.value_or(0.0)}}
                                                    : BaseScore{EnergyScoreParams{c.beta}};
  if (is_patched_method(c.method)) {
    PatchLayout layout{*model.parameter_grid(), *c.patch_size, *c.patch_step, c.w1, c.w2};
    return PatchedScoreParams{base, layout};
  }
  return std::visit([](auto b) -> ScoringRule { return b; }, base);
}

GeneratorOptions generator_options(const ExperimentConfig& c, const SimulatorModel& model) {
  GeneratorOptions opts;
  if (const auto box = model.prior_box()) opts.output = OutputTransform::sigmoid_box(box->low, box->high);
  opts.network.hidden = c.hidden;
  opts.network.activation = c.activation;
  opts.latent_dim = c.latent_dim;
  opts.latent_family = c.latent_family;
  return opts;
}

EarlyStopping early_stopping(const ExperimentConfig& c) { return {c.early_stopping, c.patience}; }

Dataset load_or_make(const fs::path& path, const std::function<Dataset()>& make) {
  if (fs::exists(path)) return load_dataset(path);
  return make();
}

}  // namespace

Datasets make_datasets(const ExperimentConfig& config, std::uint64_t seed) {
  const auto model = make_model(config.model);
  return {generate_dataset(*model, config.n_train, derive_seed(seed, "train-data")),
          generate_dataset(*model, config.n_test, derive_seed(seed, "test-data"))};
}

void run_simulate(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths) {
  const auto data = make_datasets(config, seed);
  save_dataset(data.train, paths.train_data());
  save_dataset(data.test, paths.test_data());
  std::ofstream csv(paths.dir / "train.csv");
  write_dataset_csv(csv, data.train);
}

TrainOutcome train_method(const ExperimentConfig& config, const Dataset& train, std::uint64_t seed) {
  const auto model = make_model(config.model);
  if (train.model != config.model || train.parameter_dim() != model->parameter_dim() ||
      train.data_dim() != model->data_dim())
    throw ConfigError("experiment.model", "training data was simulated from '" + train.model + "'");
  const GeneratorNet g = make_generator(model->parameter_dim(), model->data_dim(), generator_options(config, *model),
                                        derive_seed(seed, "generator"));
  TrainOutcome out;
  Checkpoint& ck = out.checkpoint;
  ck.config_hash = config_hash(config);
  ck.summary.method = to_string(config.method);

  if (config.method == Method::gan) {
    NetworkOptions critic_net{config.hidden, config.activation};
    const CriticNet c =
        make_critic(model->parameter_dim(), model->data_dim(), critic_net, derive_seed(seed, "critic"));
    GANTrainConfig cfg;
    cfg.generator_learning_rate = config.learning_rate;
    cfg.critic_learning_rate = config.critic_learning_rate;
    cfg.critic_steps = config.critic_steps;
    cfg.batch_size = config.batch_size;
    cfg.max_epochs = config.max_epochs;
    cfg.early_stopping = early_stopping(config);
    cfg.validation_fraction = config.validation_fraction;
    cfg.seed = derive_seed(seed, "training");
    cfg.probe_m = config.m;
    auto result = train_gan(g, c, train, cfg);
    ck.generator = std::move(result.generator);
    ck.summary.rule = "gan";
    ck.summary.best_epoch = result.best_epoch;
    ck.summary.stopped_early = result.stopped_early;
    out.history = std::move(result.history);
    out.wall_time_sec = result.wall_time_sec;
  } else {
    SRTrainConfig cfg;
    cfg.m = config.m;
    cfg.batch_size = config.batch_size;
    cfg.learning_rate = config.learning_rate;
    cfg.max_epochs = config.max_epochs;
    cfg.early_stopping = early_stopping(config);
    cfg.validation_fraction = config.validation_fraction;
    cfg.seed = derive_seed(seed, "training");
    cfg.rule = make_rule(config, *model);
    auto result = train_sr(g, train, cfg);
    ck.generator = std::move(result.generator);
    ck.summary.rule = describe(result.rule);
    ck.summary.best_epoch = result.best_epoch;
    ck.summary.stopped_early = result.stopped_early;
    out.history = std::move(result.history);
    out.wall_time_sec = result.wall_time_sec;
  }
  ck.summary.epochs_run = out.history.size();
  if (!out.history.empty()) {
    ck.summary.final_train_loss = out.history.back().train_loss;
    ck.summary.final_val_loss = out.history.back().val_loss;
  }
  return out;
}

TrainOutcome run_train(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths) {
  const Dataset train =
      load_or_make(paths.train_data(), [&] { return make_datasets(config, seed).train; });
  TrainOutcome out = train_method(config, train, seed);
  save_checkpoint(out.checkpoint, paths.checkpoint());
  std::ofstream history(paths.loss_history());
  write_loss_history(history, out.history);
  return out;
}

MetricsReport evaluate_checkpoint(const ExperimentConfig& config, const Checkpoint& checkpoint, const Dataset& test,
                                  std::uint64_t seed) {
  const auto eval =
      make_evaluation_set(test, generator_sampler(checkpoint.generator), config.n_post, derive_seed(seed, "evaluation"));
  MetricsReport report = evaluate_metrics(eval);
  report.method = to_string(config.method);
  report.model = config.model;
  report.n_train = config.n_train;
  report.m = config.m;
  report.seed = seed;
  report.early_stop_epoch = checkpoint.summary.best_epoch;
  return report;
}

namespace {

Checkpoint load_matching_checkpoint(const ExperimentConfig& config, const SeedPaths& paths) {
  Checkpoint ck = load_checkpoint(paths.checkpoint());
  if (ck.config_hash != config_hash(config))
    throw ConfigError("config", paths.checkpoint().string() + " was trained with a different configuration");
  return ck;
}

}  // namespace

MetricsReport run_evaluate(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths) {
  const Checkpoint ck = load_matching_checkpoint(config, paths);
  const Dataset test = load_or_make(paths.test_data(), [&] { return make_datasets(config, seed).test; });
  MetricsReport report = evaluate_checkpoint(config, ck, test, seed);
  const auto rows = report_rows(report);
  std::ofstream out(paths.metrics());
  write_metrics_csv(out, rows);
  return report;
}

SbcOutcome run_sbc(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths) {
  const Checkpoint ck = load_matching_checkpoint(config, paths);
  const auto model = make_model(config.model);
  SbcOutcome out;
  out.result = sbc_ranks(*model, generator_sampler(ck.generator), config.sbc_priors, config.sbc_draws,
                         derive_seed(seed, "sbc"));
  std::ofstream csv(paths.sbc());
  csv << "component,prior_draw,rank\n";
  for (std::size_t c = 0; c < out.result.ranks.size(); ++c) {
    out.ks.push_back(ks_uniform_ranks(out.result.ranks[c], out.result.N));
    for (std::size_t k = 0; k < out.result.ranks[c].size(); ++k)
      csv << c << ',' << k << ',' << out.result.ranks[c][k] << '\n';
  }
  return out;
}

std::vector<double> run_c2st(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths) {
  const Checkpoint ck = load_matching_checkpoint(config, paths);
  const auto model = make_model(config.model);
  const Dataset test = load_or_make(paths.test_data(), [&] { return make_datasets(config, seed).test; });
  const std::size_t count = std::min(config.c2st_observations, test.size());
  std::vector<double> acc;
  std::ofstream csv(paths.c2st());
  csv << "observation,accuracy\n";
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(derive_seed(seed, "c2st"), i);
    const Tensor reference = reference_posterior(*model, test.y.row(i), config.c2st_samples, derive_seed(s, "reference"));
    const Tensor approx = sample_posterior(ck.generator, test.y.row(i), config.c2st_samples, derive_seed(s, "generator"));
    acc.push_back(c2st_accuracy(reference, approx, derive_seed(s, "classifier")));
    csv << i << ',' << format_double(acc.back()) << '\n';
  }
  return acc;
}

RunSummary run_experiment(const ExperimentConfig& config, const fs::path& out, std::size_t threads) {
  config.validate();
  const auto start = Clock::now();
  const std::size_t n = config.seeds.size();
  std::vector<MetricsReport> reports(n);
  std::vector<TrainOutcome> outcomes(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        const std::uint64_t seed = config.seeds[i];
        const SeedPaths paths{out / ("seed-" + std::to_string(seed))};
        fs::create_directories(paths.dir);
        run_simulate(config, seed, paths);
        outcomes[i] = run_train(config, seed, paths);
        reports[i] = run_evaluate(config, seed, paths);
        reports[i].wall_time_sec = outcomes[i].wall_time_sec;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  RunSummary summary;
  summary.reports = reports;
  std::vector<std::vector<MetricRow>> runs;
  for (const auto& r : reports) runs.push_back(report_rows(r));
  summary.summary = emit_report(runs, out);
  summary.wall_time_sec = std::chrono::duration<double>(Clock::now() - start).count();

  nlohmann::json manifest;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [section, keys] : config_sections(config))
    for (const auto& [key, value] : keys) cfg[section][key] = value;
  manifest["config"] = cfg;
  manifest["config_hash"] = config_hash(config);
  manifest["versions"] = {{"srlfi", "1.0.0"},
                          {"dataset_format", kDatasetVersion},
                          {"checkpoint_format", kCheckpointVersion},
                          {"compiler", __VERSION__},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["runs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = outcomes[i].checkpoint.summary;
    manifest["runs"].push_back({{"seed", config.seeds[i]},
                                {"directory", "seed-" + std::to_string(config.seeds[i])},
                                {"epochs_run", s.epochs_run},
                                {"best_epoch", s.best_epoch},
                                {"stopped_early", s.stopped_early},
                                {"train_wall_time_sec", outcomes[i].wall_time_sec}});
  }
  manifest["wall_time_sec"] = summary.wall_time_sec;
  manifest["artifacts"] = {"report.csv", "summary.csv", "summary.txt"};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
  return summary;
}

}  // namespace srlfi
