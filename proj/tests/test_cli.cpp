#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "srlfi/errors.hpp"
#include "srlfi/experiment.hpp"
#include "srlfi/io.hpp"

using namespace srlfi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("srlfi_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_config(Method method = Method::energy) {
  ExperimentConfig c;
  c.model = "conjugate_gaussian";
  c.method = method;
  c.n_train = 300;
  c.n_test = 20;
  c.n_post = 200;
  c.m = 5;
  c.batch_size = 64;
  c.max_epochs = 3;
  c.hidden = {16};
  c.seeds = {1};
  return c;
}

Checkpoint trained_checkpoint() {
  const auto config = tiny_config();
  const auto data = make_datasets(config, 1);
  return train_method(config, data.train, 1).checkpoint;
}

MetricRow row(const std::string& method, const std::string& metric, double value) {
  return {method, "conjugate_gaussian", 100, 10, metric, "mean", value};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing") {
  const auto c = parse_config_ini(R"([experiment]
model = two_moons
method = kernel
n_train = 500
seeds = 1, 2, 3

[scoring]
m = 20
gamma = 0.5

[network]
hidden = 32, 32
)");
  CHECK(c.model == "two_moons");
  CHECK(c.method == Method::kernel);
  CHECK(c.n_train == 500);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.m == 20);
  CHECK(c.gamma == 0.5);
  CHECK(c.hidden == std::vector<std::size_t>{32, 32});
  CHECK(c.learning_rate == 1e-3);  // default

  const auto again = parse_config_ini(config_to_ini(c));
  CHECK(config_to_ini(again) == config_to_ini(c));
  CHECK(config_hash(again) == config_hash(c));
  auto other = c;
  other.output = "elsewhere";
  CHECK(config_hash(other) == config_hash(c));
  other.m = 3;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("config errors name the field") {
  auto field_of = [](const std::string& text) {
    try {
      parse_config_ini(text);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  CHECK(field_of("[experiment]\nmethod = adversarial\n") == "experiment.method");
  CHECK(field_of("[training]\nlearning_rate = -1\n") == "training.learning_rate");
  CHECK(field_of("[scoring]\nm = 1\n") == "scoring.m");
  CHECK(field_of("[experiment]\nmodel = nope\n") == "experiment.model");
  CHECK(field_of("[experiment]\ncolour = blue\n") == "experiment.colour");
  CHECK(field_of("[experiment]\nmethod = energy\n[scoring]\ngamma = 1\n") == "scoring.gamma");
  CHECK(field_of("[experiment]\nmethod = energy\n[scoring]\npatch_size = 10\n") == "scoring.patch_size");
  CHECK(field_of("[experiment]\nmodel = grid_toy\nmethod = patched-energy\n[scoring]\npatch_size = 50\npatch_step = 5\n") ==
        "scoring.patch_size");
  CHECK(field_of("[experiment]\nmodel = grid_toy\nmethod = patched-energy\n[scoring]\npatch_size = 10\n") ==
        "scoring.patch_step");
  // No gamma and no data for the median heuristic.
  CHECK(field_of("[experiment]\nmethod = kernel\nn_train = 1\n") == "scoring.gamma");
  CHECK(field_of("[experiment]\nmethod = kernel\nn_train = 1\n[scoring]\ngamma = 0.3\n") != "scoring.gamma");
  CHECK(field_of("[experiment]\nmethod = kernel\n") == "none");
}

TEST_CASE("checkpoint round trip is bitwise") {
  TempDir dir("ck");
  const auto ck = trained_checkpoint();
  save_checkpoint(ck, dir.path / "g.ck");
  const auto back = load_checkpoint(dir.path / "g.ck");
  CHECK(back.generator.weights == ck.generator.weights);
  CHECK(back.config_hash == ck.config_hash);
  CHECK(back.summary.method == ck.summary.method);
  CHECK(back.summary.epochs_run == ck.summary.epochs_run);
  for (std::uint64_t seed : {0, 1, 99})
    for (double y : {-1.0, 0.3, 4.0})
      CHECK(sample_posterior(back.generator, std::vector<double>{y}, 50, seed) ==
            sample_posterior(ck.generator, std::vector<double>{y}, 50, seed));
  CHECK(encode_checkpoint(back) == encode_checkpoint(ck));
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto bytes = encode_checkpoint(trained_checkpoint());
  SUBCASE("truncated") {
    for (std::size_t keep : {std::size_t{0}, std::size_t{7}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
      CHECK_THROWS_AS(decode_checkpoint(std::span(bytes.data(), keep)), FormatError);
  }
  SUBCASE("flipped payload byte") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
  SUBCASE("old version") {
    auto old = bytes;
    old[8] = 0;  // u32 version follows the 8-byte magic
    try {
      decode_checkpoint(old);
      FAIL("expected a version error");
    } catch (const VersionError&) {
    }
  }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
  SUBCASE("dataset version") {
    TempDir dir("dsv");
    save_dataset(generate_dataset(ConjugateGaussianModel(), 5, 1), dir.path / "d.ds");
    std::string raw = slurp(dir.path / "d.ds");
    raw[8] = 7;
    std::ofstream(dir.path / "d.ds", std::ios::binary) << raw;
    CHECK_THROWS_AS(load_dataset(dir.path / "d.ds"), VersionError);
  }
}

TEST_CASE("checkpoints from another config are refused") {
  TempDir dir("mismatch");
  const auto config = tiny_config();
  const SeedPaths paths{dir.path};
  run_train(config, 1, paths);
  auto other = config;
  other.m = 7;
  CHECK_THROWS_AS(run_evaluate(other, 1, paths), ConfigError);
  CHECK_NOTHROW(run_evaluate(config, 1, paths));
}

TEST_CASE("metric csv round trip") {
  const std::vector<MetricRow> rows{row("energy", "nrmse", 0.1), row("energy", "r2", -3.25)};
  std::ostringstream out;
  write_metrics_csv(out, rows);
  CHECK(out.str().rfind("method,model,n_train,m,metric,component,value\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_metrics_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].value == -3.25);
  CHECK(back[0].metric == "nrmse");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("report summaries") {
  SUBCASE("a single run has sd 0") {
    const std::vector<std::vector<MetricRow>> runs{{row("energy", "nrmse", 0.25)}};
    const auto s = summarize(runs);
    REQUIRE(s.size() == 1);
    CHECK(s[0].mean == 0.25);
    CHECK(s[0].sd == 0.0);
    CHECK(s[0].runs == 1);
  }
  SUBCASE("three seeds") {
    const std::vector<std::vector<MetricRow>> runs{
        {row("energy", "nrmse", 1.0)}, {row("energy", "nrmse", 2.0)}, {row("energy", "nrmse", 6.0)}};
    const auto s = summarize(runs);
    REQUIRE(s.size() == 1);
    CHECK(s[0].mean == doctest::Approx(3.0));
    CHECK(s[0].sd == doctest::Approx(std::sqrt(7.0)));
    CHECK(s[0].runs == 3);
  }
  SUBCASE("sorted output") {
    const std::vector<std::vector<MetricRow>> a{{row("kernel", "r2", 1), row("energy", "r2", 1), row("gan", "nrmse", 1)}};
    const std::vector<std::vector<MetricRow>> b{{row("gan", "nrmse", 1), row("kernel", "r2", 1), row("energy", "r2", 1)}};
    const auto sa = summarize(a), sb = summarize(b);
    REQUIRE(sa.size() == 3);
    CHECK(sa[0].method == "energy");
    CHECK(sa[1].method == "gan");
    CHECK(sa[2].method == "kernel");
    std::ostringstream x, y;
    write_summary_csv(x, sa);
    write_summary_csv(y, sb);
    CHECK(x.str() == y.str());
  }
  SUBCASE("files") {
    TempDir dir("report");
    const std::vector<std::vector<MetricRow>> runs{{row("energy", "nrmse", 1.0)}, {row("energy", "nrmse", 3.0)}};
    emit_report(runs, dir.path);
    CHECK(fs::exists(dir.path / "report.csv"));
    CHECK(fs::exists(dir.path / "summary.csv"));
    const std::string table = slurp(dir.path / "summary.txt");
    CHECK(table.find("energy") != std::string::npos);
    CHECK(table.find("2.0000 +- 1.4142 (2)") != std::string::npos);
  }
}

TEST_CASE("identical configs give identical artifacts") {
  TempDir a("run_a"), b("run_b");
  auto config = tiny_config();
  config.seeds = {1, 2};
  run_experiment(config, a.path, 2);
  run_experiment(config, b.path, 1);
  for (const char* seed : {"seed-1", "seed-2"})
    for (const char* file : {"metrics.csv", "generator.ck", "train.ds", "test.ds", "train.csv"}) {
      CAPTURE(file);
      CHECK(slurp(a.path / seed / file) == slurp(b.path / seed / file));
    }
  CHECK(slurp(a.path / "report.csv") == slurp(b.path / "report.csv"));
  CHECK(slurp(a.path / "summary.csv") == slurp(b.path / "summary.csv"));
}

TEST_CASE("gan and energy reports share their layout") {
  TempDir a("energy"), b("gan");
  run_experiment(tiny_config(Method::energy), a.path);
  run_experiment(tiny_config(Method::gan), b.path);
  CHECK(slurp(a.path / "seed-1" / "train.ds") == slurp(b.path / "seed-1" / "train.ds"));
  std::ifstream ia(a.path / "seed-1" / "metrics.csv"), ib(b.path / "seed-1" / "metrics.csv");
  const auto ra = read_metrics_csv(ia), rb = read_metrics_csv(ib);
  REQUIRE(ra.size() == rb.size());
  bool values_differ = false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].method == "energy");
    CHECK(rb[i].method == "gan");
    CHECK(ra[i].model == rb[i].model);
    CHECK(ra[i].n_train == rb[i].n_train);
    CHECK(ra[i].m == rb[i].m);
    CHECK(ra[i].metric == rb[i].metric);
    CHECK(ra[i].component == rb[i].component);
    values_differ = values_differ || ra[i].value != rb[i].value;
  }
  CHECK(values_differ);
}

TEST_CASE("the manifest reproduces the run") {
  TempDir a("manifest"), b("rerun");
  auto config = tiny_config(Method::kernel);
  run_experiment(config, a.path);
  const auto manifest = nlohmann::json::parse(slurp(a.path / "manifest.json"));
  CHECK(manifest.contains("versions"));
  CHECK(manifest.contains("wall_time_sec"));
  CHECK(manifest["config_hash"].get<std::uint64_t>() == config_hash(config));
  const auto reloaded = load_config(a.path / "manifest.json");
  CHECK(config_hash(reloaded) == config_hash(config));
  run_experiment(reloaded, b.path);
  CHECK(slurp(a.path / "seed-1" / "metrics.csv") == slurp(b.path / "seed-1" / "metrics.csv"));
}

TEST_CASE("sbc and c2st stages") {
  TempDir dir("stages");
  auto config = tiny_config();
  config.sbc_priors = 20;
  config.sbc_draws = 10;
  config.c2st_observations = 1;
  config.c2st_samples = 100;
  const SeedPaths paths{dir.path};
  run_train(config, 1, paths);
  const auto sbc = run_sbc(config, 1, paths);
  CHECK(sbc.result.ranks.size() == 1);
  CHECK(sbc.ks.size() == 1);
  CHECK(fs::exists(paths.sbc()));
  const auto acc = run_c2st(config, 1, paths);
  REQUIRE(acc.size() == 1);
  CHECK(acc[0] >= 0.0);
  CHECK(acc[0] <= 1.0);
  CHECK(fs::exists(paths.c2st()));
}

TEST_CASE("divergent training raises a numeric error") {
  auto config = tiny_config();
  config.learning_rate = 1e300;
  const auto data = make_datasets(config, 1);
  CHECK_THROWS_AS(train_method(config, data.train, 1), NumericError);
}

}  // TEST_SUITE
