#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "abcfit/abcfit.hpp"
#include "catch_amalgamated.hpp"

using namespace abcfit;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

MobilityCurve parse(const std::string& text) {
  std::istringstream in(text);
  return parse_curve_csv(in);
}

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("abcfit_cli_io_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Run cli(const std::string& args) {
  const auto err = scratch("stderr") / "err.txt";
  const std::string cmd = std::string("\"") + ABCFIT_CLI_PATH + "\" " + args + " 2>\"" + err.string() + "\"";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

fs::path small_config(const fs::path& dir, const std::string& extra = "") {
  const auto path = dir / "run.json";
  std::ofstream(path) << R"({"seed": 7, "abc": {"n_prelim": 40, "n_refined": 30}, "gb": {"n_rounds": 20})" << extra
                      << "}";
  return path;
}

}  // namespace

TEST_CASE("minimal curve file") {
  const auto c = parse("vg,mobility\n1,0.5\n2,0.8");
  REQUIRE(c.size() == 2);
  CHECK(c.grid[0] == 1.0);
  CHECK(c.grid[1] == 2.0);
  CHECK(c.values == std::vector<double>{0.5, 0.8});
}

TEST_CASE("rows are sorted by gate voltage") {
  const auto sorted = parse("vg,mobility\n1,0.5\n2,0.8\n3,1.1\n");
  const auto shuffled = parse("vg,mobility\n3,1.1\n1,0.5\n2,0.8\n");
  CHECK(sorted.grid == shuffled.grid);
  CHECK(sorted.values == shuffled.values);
}

TEST_CASE("header columns may be reordered, padded or carry a BOM") {
  const auto c = parse("\xEF\xBB\xBFmobility , vg,extra\r\n0.5,1,x\r\n0.8,2,y\r\n\n");
  CHECK(c.values == std::vector<double>{0.5, 0.8});
  CHECK(c.grid[1] == 2.0);
}

TEST_CASE("malformed curve files name the offending line") {
  auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const FormatError& e) {
      return e.line();
    }
    return std::size_t{999};
  };
  CHECK(line_of("vg,mobility\n1,0.5\n2,0.8\n1,0.9\n") == 4);
  CHECK(line_of("vg,mobility\n1,0.5\n2,abc\n") == 3);
  CHECK(line_of("vg,mobility\n1,0.5\n2\n") == 3);
  CHECK(line_of("vg,mobility\n1,-0.5\n2,1\n") == 2);
  CHECK(line_of("vg,mu\n1,0.5\n2,1\n") == 1);
  CHECK_THROWS_AS(parse("vg,mobility\n1,0.5\n"), FormatError);
  CHECK_THROWS_AS(parse(""), FormatError);
  CHECK_THROWS_AS(load_curve_csv("/nonexistent/curve.csv"), FormatError);
}

TEST_CASE("CSV round trip keeps 12 significant digits") {
  const auto grid = VoltageGrid::default_grid();
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto c = simulate_reference(sample_uniform(default_space(), rng), grid);
    std::stringstream s;
    write_curve_csv(s, c);
    const auto back = parse_curve_csv(s);
    REQUIRE(back.size() == c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
      CHECK(std::abs(back.values[k] - c.values[k]) <= 1e-9 * std::max(1.0, std::abs(c.values[k])));
      CHECK(back.grid[k] == grid[k]);
    }
  }
}

TEST_CASE("observed data is resampled only when grids differ") {
  const auto grid = VoltageGrid::default_grid();
  const auto c = simulate_reference(ParamVector{10, 300, 1e12, 1e10, -10}, grid);
  CHECK(prepare_observed(c, grid).values == c.values);
  const auto coarse = simulate_reference(ParamVector{10, 300, 1e12, 1e10, -10}, VoltageGrid::uniform(0, 31, 32));
  CHECK(prepare_observed(coarse, grid).grid == grid);
}

TEST_CASE("config parsing") {
  const auto c = run_config_from_json(Json::parse(
      R"({"seed": 5, "abc": {"n_prelim": 10, "sampler": "uniform"}, "gb": {"training_set": "refined"},
          "curve_output": "sidecar", "mlp": {"deep": {"dense_layers": 4}}})"));
  CHECK(c.seed == 5);
  CHECK(c.abc.n_prelim == 10);
  CHECK(c.abc.n_refined == 1000);
  CHECK(c.abc.sampler == SamplerKind::kUniform);
  CHECK(c.gb_training == GbTrainingSet::kRefined);
  CHECK(c.curve_output == CurveOutput::kSidecar);
  CHECK(c.mlp.deep.dense_layers == 4);
  CHECK(c.mlp.deep.hidden_width == 64);

  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"sed": 5})")), InvalidInput);
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"abc": {"epsilon": 1}})")), InvalidInput);
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"abc": {"epsilon0": -1}})")), InvalidInput);
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"seed": "x"})")), InvalidInput);
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"model": {"kind": "external"}})")), InvalidInput);
}

TEST_CASE("config echo reproduces the effective configuration") {
  RunConfig c;
  c.seed = 99;
  c.abc.epsilon0 = 0.25;
  c.space[0] = Interval{2, 40};
  c.model = ModelSpec::parse("external:./model.sh");
  const auto echo = run_config_json(c);
  const auto back = run_config_from_json(echo);
  CHECK(run_config_json(back) == echo);
  CHECK(back.model.command == "./model.sh");
  CHECK(echo["abc"]["n_refined"] == 1000);
  CHECK(echo["tpe"]["gamma"] == 0.25);
  CHECK(echo.contains("gb"));
  CHECK(run_config_json(RunConfig{}) == run_config_json(run_config_from_json(Json::object())));
}

TEST_CASE("posterior bins sum to the accepted count") {
  RunConfig c;
  c.abc.n_prelim = 60;
  c.abc.n_refined = 40;
  c.abc.epsilon0 = 5.0;
  const auto observed = simulate_reference(ParamVector{12, 300, 2e13, 3e11, -5}, c.grid.grid());
  const auto r = fit_curve(observed, c);
  std::size_t accepted = 0;
  for (const auto& t : r.store.trials()) accepted += t.accepted;
  REQUIRE(accepted > 0);
  const auto h = posterior_histogram(r.store.trials(), r.stage1_space);
  for (const auto& counts : h.counts) CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == accepted);
  const auto csv = posterior_csv(h);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 50);
}

TEST_CASE("simulate writes the reference curve") {
  const auto dir = scratch("simulate");
  const auto out = dir / "c.csv";
  const auto r = cli("simulate --params 10,300,1e12,1e10,-10 --grid 1,30,30 --out \"" + out.string() + "\"");
  REQUIRE(r.status == 0);
  const auto c = load_curve_csv(out.string());
  REQUIRE(c.size() == 30);
  CHECK(c.grid[29] == 30.0);
  CHECK_THAT(c.values[29], WithinAbs(8.5714, 1e-4));
  const auto s = cli("simulate --params 10,300,1e12,1e10,-10 --out -");
  CHECK(s.status == 0);
  CHECK(s.out == slurp(out));
}

TEST_CASE("fit is byte-reproducible and writes its run directory") {
  const auto dir = scratch("fit");
  const auto data = dir / "obs.csv";
  save_curve_csv(data.string(), simulate_reference(ParamVector{12, 300, 2e13, 3e11, -5}, VoltageGrid::default_grid()));
  const auto cfg = small_config(dir);
  const auto a = cli("fit --data \"" + data.string() + "\" --config \"" + cfg.string() + "\" --out \"" +
                     (dir / "a").string() + "\"");
  const auto b = cli("fit --data \"" + data.string() + "\" --config \"" + cfg.string() + "\" --out \"" +
                     (dir / "b").string() + "\"");
  REQUIRE(a.status == 0);
  REQUIRE(b.status == 0);
  CHECK_THAT(a.out, ContainsSubstring("gb_estimate"));
  CHECK(slurp(dir / "a" / "trials.jsonl") == slurp(dir / "b" / "trials.jsonl"));
  for (const auto* f : {"config-echo.json", "trials.jsonl", "posterior.csv", "summary.json", "predicted_curve.csv"})
    CHECK(fs::exists(dir / "a" / f));
  const auto summary = Json::parse(slurp(dir / "a" / "summary.json"));
  for (const auto* k : {"stage1", "stage2", "gb_estimate", "metrics", "seeds"}) CHECK(summary.contains(k));
  const auto echo = Json::parse(slurp(dir / "a" / "config-echo.json"));
  CHECK(echo["seed"] == 7);
  CHECK(echo["abc"]["n_prelim"] == 40);
  CHECK(echo["tpe"]["n_candidates"] == 24);

  const auto seeded = cli("fit --data \"" + data.string() + "\" --config \"" + cfg.string() + "\" --seed 8 --out \"" +
                          (dir / "c").string() + "\"");
  REQUIRE(seeded.status == 0);
  CHECK(slurp(dir / "a" / "trials.jsonl") != slurp(dir / "c" / "trials.jsonl"));
}

TEST_CASE("baseline trains from stored trials") {
  const auto dir = scratch("baseline");
  const auto data = dir / "obs.csv";
  save_curve_csv(data.string(), simulate_reference(ParamVector{12, 300, 2e13, 3e11, -5}, VoltageGrid::default_grid()));
  const auto cfg = small_config(dir, R"(, "curve_output": "sidecar", "mlp": {"shallow": {"epochs": 3}})");
  REQUIRE(cli("fit --data \"" + data.string() + "\" --config \"" + cfg.string() + "\" --out \"" + (dir / "run").string() +
              "\"")
              .status == 0);
  CHECK(fs::exists(dir / "run" / "curves" / "trial_000000.csv"));
  const auto r = cli("baseline --arch shallow --data \"" + (dir / "run" / "trials.jsonl").string() + "\" --out \"" +
                     (dir / "net.json").string() + "\"");
  REQUIRE(r.status == 0);
  const auto net = mlp_from_json(Json::parse(slurp(dir / "net.json")));
  CHECK(net.layers.size() == 3);
  CHECK(net.input_width() == 30);
}

TEST_CASE("evaluate reports zero for identical parameters") {
  const auto r = cli("evaluate --true 10,300,1e12,1e10,-10 --pred 10,300,1e12,1e10,-10");
  REQUIRE(r.status == 0);
  CHECK(r.out == "metric,value\nchi2,0\nchi2_abs,0\nmse,0\n");
  const auto d = cli("evaluate --true 1,300,1e12,1e10,-3 --pred 2,300,1e12,1e10,-3");
  CHECK_THAT(d.out, ContainsSubstring("chi2,1\n"));
}

TEST_CASE("exit codes and one-line diagnostics") {
  const auto dir = scratch("errors");
  auto check = [](const Run& r, int code) {
    CHECK(r.status == code);
    CHECK(!r.err.empty());
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') <= 1);
  };
  check(cli("bogus"), 1);
  check(cli("simulate --params 1,2,3 --out -"), 1);
  check(cli("simulate --params 10,300,1e12,1e10,-10 --unknown-flag --out -"), 1);
  check(cli("fit --data /nonexistent.csv --out \"" + (dir / "x").string() + "\""), 2);

  const auto bad_csv = dir / "bad.csv";
  std::ofstream(bad_csv) << "vg,mobility\n1,0.5\n2,oops\n";
  const auto r = cli("fit --data \"" + bad_csv.string() + "\" --out \"" + (dir / "y").string() + "\"");
  check(r, 2);
  CHECK_THAT(r.err, ContainsSubstring("line 3"));

  const auto bad_cfg = dir / "bad.json";
  std::ofstream(bad_cfg) << R"({"abc": {"n_prelim": 10, "typo": 1}})";
  check(cli("fit --data \"" + bad_csv.string() + "\" --config \"" + bad_cfg.string() + "\" --out \"" +
            (dir / "z").string() + "\""),
        1);
  std::ofstream(dir / "broken.json") << "{not json";
  check(cli("fit --data x.csv --config \"" + (dir / "broken.json").string() + "\" --out \"" + (dir / "w").string() +
            "\""),
        2);
  check(cli("simulate --params 10,300,1e12,1e10,-10 --model \"external:exit 4\" --out -"), 3);
}
