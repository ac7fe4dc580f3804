#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bifscope/cli.hpp"

using namespace bifscope;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    files[entry.path().filename().string()] = io::read_file(entry.path().string());
  return files;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(io::read_file(p.string())); }

const std::string kLattesFile = std::string(BIFSCOPE_SOURCE_DIR) + "/demo/families/lattes.json";

// Runs the command into a fresh relative directory and compares every file
// with tests/golden/<name>/. BIFSCOPE_UPDATE_GOLDEN=1 rewrites the goldens.
void check_golden(const std::string& name, std::vector<std::string> args) {
  const fs::path out = fs::path("cli_golden") / name;
  fs::remove_all(out);
  args.insert(args.end(), {"--threads", "1", "--out", out.generic_string()});
  const Outcome r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path golden = fs::path(BIFSCOPE_SOURCE_DIR) / "tests" / "golden" / name;
  const auto got = snapshot(out);
  if (std::getenv("BIFSCOPE_UPDATE_GOLDEN")) {
    fs::remove_all(golden);
    fs::create_directories(golden);
    for (const auto& [f, bytes] : got) io::write_file((golden / f).string(), bytes);
    return;
  }
  ASSERT_TRUE(fs::exists(golden)) << golden;
  const auto want = snapshot(golden);
  ASSERT_EQ(got.size(), want.size()) << name;
  for (const auto& [f, bytes] : want) {
    ASSERT_TRUE(got.count(f)) << name << "/" << f;
    EXPECT_TRUE(got.at(f) == bytes) << name << "/" << f << " differs from golden";
  }
}

}  // namespace

TEST(Cli, MissingMarkedIsConfigErrorWithUsage) {
  const Outcome r = run({"bifmeasure", "--map", "z^2+c", "--res", "16", "--out", "cli_out/none"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--marked"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_FALSE(fs::exists("cli_out/none"));
}

TEST(Cli, ConfigErrors) {
  const std::vector<std::vector<std::string>> cases = {
      {},
      {"nosuchcommand"},
      {"bifmeasure", "--map", "z^2+", "--marked", "c"},
      {"bifmeasure", "--map", "z^2.5+c", "--marked", "c"},
      {"bifmeasure", "--map", "z^2+q", "--marked", "c"},
      {"bifmeasure", "--map", "z+c", "--marked", "c"},
      {"bifmeasure", "--map", "z^2+c", "--marked", "z"},
      {"bifmeasure", "--map", "z^2+c", "--marked", "c", "--window", "1,0,0,1"},
      {"bifmeasure", "--map", "z^2+c", "--marked", "c", "--window", "0,1,0"},
      {"bifmeasure", "--map", "z^2+c", "--marked", "c", "--res", "2"},
      {"bifmeasure", "--map", "z^2+c", "--marked", "c", "--tol", "0"},
      {"lyapunov", "--map", "z^2+c", "--marked", "c"},
      {"lyapunov", "--map", "z^2+c", "--marked", "c", "--lambda", "1"},
      {"julia", "--map", "z^2+c", "--marked", "c", "--lambda", "0,0", "--samples", "0"},
      {"classify", "--family-file", "does/not/exist.json"},
      {"classify", "--family-file", kLattesFile, "--map", "z^2+c"},
  };
  for (const auto& args : cases) {
    std::vector<std::string> a = args;
    a.insert(a.end(), {"--out", "cli_out/config_error"});
    if (args.empty()) a.clear();
    EXPECT_EQ(run(a).code, 2) << (args.empty() ? "<no args>" : args[0] + " " + (args.size() > 2 ? args[2] : ""));
  }
}

TEST(Cli, NumericFailureExitsThree) {
  // Degenerate fiber of the Lattes family at lambda = 0.
  EXPECT_EQ(run({"lyapunov", "--family-file", kLattesFile, "--lambda", "0,0", "--out", "cli_out/num"}).code, 3);
  // Newton from a seed with no nearby solution at this (n, p).
  EXPECT_EQ(run({"similarity", "--map", "z^2+c", "--marked", "c", "--lambda", "-0.1,0", "--n", "1", "--p", "1",
                 "--res", "8", "--out", "cli_out/num"})
                .code,
            3);
}

TEST(Cli, HelpListsExamples) {
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"--help"}, std::vector<std::string>{"bifmeasure", "--help"}}) {
    const Outcome r = run(args);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("Examples:"), std::string::npos);
    EXPECT_NE(r.out.find("bifscope bifmeasure --map"), std::string::npos);
  }
  const Outcome top = run({"--help"});
  for (const char* cmd : {"bifmeasure", "julia", "lyapunov", "misiurewicz", "similarity", "jstability", "classify"})
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
}

TEST(Cli, NegativeWindowValues) {
  const Outcome r = run({"bifmeasure", "--map", "z^2+c", "--marked", "c", "--window", "-2.5,1.5,-2,2", "--res", "8",
                         "--out", "cli_out/negwin"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json("cli_out/negwin/stats.json");
  EXPECT_EQ(j["config"]["window"]["re_min"].get<double>(), -2.5);
  EXPECT_EQ(j["config"]["window"]["im_min"].get<double>(), -2.0);
}

TEST(Cli, BifmeasureQuadraticNormalization) {
  const Outcome r = run({"bifmeasure", "--map", "z^2+c", "--marked", "c", "--window", "-2.5,1.5,-2,2", "--res", "512",
                         "--out", "cli_out/quad512"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json("cli_out/quad512/stats.json");
  EXPECT_NEAR(j["total_mass"].get<double>(), 1.0, 0.05);
  EXPECT_NEAR(j["total_mass"].get<double>(), j["flux_mass"].get<double>(), 0.02);
  const Grid<double> m = io::decode_grid(io::read_file("cli_out/quad512/measure.bifm"), "BIFM");
  EXPECT_EQ(m.nx(), 512);
}

TEST(Cli, BifmeasureStableWindow) {
  const Outcome r = run({"bifmeasure", "--map", "z^2+c", "--marked", "c", "--window", "-0.3,0.1,-0.2,0.2", "--res",
                         "64", "--out", "cli_out/stable"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(read_json("cli_out/stable/stats.json")["total_mass"].get<double>(), 1e-6);
  const auto meta = read_json("cli_out/stable/measure.pgm.json");
  EXPECT_LT(meta["meta"]["value_max"].get<double>(), 1e-6);
}

TEST(Cli, EveryOutputCarriesTheConfig) {
  const std::string out = "cli_out/sidecars";
  fs::remove_all(out);
  ASSERT_EQ(run({"bifmeasure", "--map", "z^2+c", "--marked", "c", "--res", "16", "--seed", "7", "--out", out}).code, 0);
  int checked = 0;
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".json") {
      ASSERT_TRUE(fs::exists(entry.path().string() + ".json")) << name;
      continue;
    }
    const auto j = read_json(entry.path());
    ASSERT_TRUE(j.contains("config")) << name;
    const auto& c = j["config"];
    EXPECT_EQ(c["command"], "bifmeasure");
    EXPECT_EQ(c["family"]["map"], "z^2+c");
    EXPECT_EQ(c["family"]["marked"], "c");
    EXPECT_EQ(c["res"], 16);
    EXPECT_EQ(c["seed"], 7);
    EXPECT_EQ(c["out"], out);
    for (const char* key : {"window", "tol", "samples", "threads", "bifscope_version"}) EXPECT_TRUE(c.contains(key)) << key;
    ++checked;
  }
  EXPECT_EQ(checked, 4);
}

TEST(Cli, FamilyFileSuppliesDomain) {
  ASSERT_EQ(run({"jstability", "--family-file", kLattesFile, "--res", "3", "--samples", "200", "--out", "cli_out/ff"}).code, 0);
  const auto c = read_json("cli_out/ff/jstability.json")["config"];
  EXPECT_EQ(c["window"]["re_min"].get<double>(), 0.05);
  EXPECT_EQ(c["family"]["label"], "flexible Lattes family of degree 4");
  // An explicit window wins over the file's domain.
  ASSERT_EQ(run({"jstability", "--family-file", kLattesFile, "--window", "0.2,0.4,0.1,0.3", "--res", "3", "--samples",
                 "200", "--out", "cli_out/ff2"})
                .code,
            0);
  EXPECT_EQ(read_json("cli_out/ff2/jstability.json")["config"]["window"]["re_min"].get<double>(), 0.2);
}

TEST(Cli, MisiurewiczQuadraticScanHasTheTip) {
  ASSERT_EQ(run({"misiurewicz", "--map", "z^2+c", "--marked", "c", "--window", "-2.2,0.6,-1.4,1.4", "--grid", "20",
                 "--n-max", "4", "--p-max", "3", "--out", "cli_out/mis"})
                .code,
            0);
  const auto j = read_json("cli_out/mis/misiurewicz.json");
  EXPECT_GE(j["count"].get<int>(), 10);
  bool tip = false;
  for (const auto& p : j["params"]) {
    if (std::abs(p["lambda0_re"].get<double>() + 2.0) < 1e-9 && std::abs(p["lambda0_im"].get<double>()) < 1e-9) {
      tip = true;
      EXPECT_NEAR(p["transversality"][0].get<double>(), -8.0 / 3.0, 1e-6);
      EXPECT_NEAR(p["transversality"][1].get<double>(), 0.0, 1e-6);
    }
    EXPECT_LT(p["residual"].get<double>(), 1e-10);
  }
  EXPECT_TRUE(tip);
}

TEST(Cli, MisiurewiczStableWindowIsEmpty) {
  const Outcome r = run({"misiurewicz", "--map", "z^2+c", "--marked", "c", "--window", "-0.3,0.1,-0.2,0.2", "--grid",
                         "5", "--out", "cli_out/mis_stable"});
  ASSERT_EQ(r.code, 0);
  const auto j = read_json("cli_out/mis_stable/misiurewicz.json");
  EXPECT_EQ(j["count"], 0);
  EXPECT_TRUE(j["params"].empty());
}

TEST(Cli, MisiurewiczLattesDenseInEveryCell) {
  const auto pr = build_family("(z^2-c)^2/(4*z*(z-1)*(z-c))", "2");
  int empty = 0, cells = 0;
  for (const Window& cell : box_tiling(Window{0.05, 0.95, -0.45, 0.45}, 9, 9)) {
    ++cells;
    if (misiurewicz_scan(pr.family, pr.marked, cell, 5, 3, 6).params.empty()) {
      ++empty;
      ADD_FAILURE() << "no certified parameter in [" << cell.re_min << "," << cell.re_max << "]x[" << cell.im_min << ","
                    << cell.im_max << "]";
    }
  }
  EXPECT_EQ(cells, 81);
  EXPECT_EQ(empty, 0);
  ASSERT_EQ(run({"misiurewicz", "--family-file", kLattesFile, "--window", "0.3,0.4,0.1,0.2", "--grid", "6", "--n-max",
                 "5", "--p-max", "3", "--out", "cli_out/mis_lattes"})
                .code,
            0);
  EXPECT_GE(read_json("cli_out/mis_lattes/misiurewicz.json")["count"].get<int>(), 1);
}

TEST(Cli, ClassifyVerdict) {
  ASSERT_EQ(run({"classify", "--map", "z^2-2", "--marked", "c", "--window", "-2.5,2.5,-2.5,2.5", "--res", "128",
                 "--samples", "20000", "--jstab-samples", "2000", "--out", "cli_out/classify"})
                .code,
            0);
  const auto j = read_json("cli_out/classify/classify.json");
  EXPECT_EQ(j["verdict"], "ISOTRIVIAL_SUSPECT");
  EXPECT_EQ(j["budget"]["resolution"], 128);
}

TEST(Determinism, IdenticalConfigIdenticalBytes) {
  const std::vector<std::vector<std::string>> commands = {
      {"bifmeasure", "--map", "z^2+c", "--marked", "c", "--res", "32"},
      {"julia", "--family-file", kLattesFile, "--lambda", "0.3,0.1", "--samples", "3000", "--res", "32"},
      {"lyapunov", "--map", "z^3+c*z", "--marked", "c", "--lambda", "0.2,0.3", "--samples", "3000"},
      {"misiurewicz", "--map", "z^2+c", "--marked", "c", "--grid", "4", "--n-max", "2", "--p-max", "2"},
      {"similarity", "--map", "z^2+c", "--marked", "c", "--lambda", "-1.8,0", "--depth", "2", "--res", "12",
       "--samples", "2000"},
      {"jstability", "--map", "z^2+c", "--marked", "c", "--res", "4", "--samples", "300"},
      {"classify", "--map", "z^2+c", "--marked", "c", "--res", "32", "--samples", "1000", "--jstab-res", "3",
       "--jstab-samples", "200", "--lattes-lambdas", "2"},
  };
  for (auto args : commands) {
    const std::string dir = "cli_out/det_" + args[0];
    args.insert(args.end(), {"--threads", "2", "--seed", "11", "--out", dir});
    fs::remove_all(dir);
    ASSERT_EQ(run(args).code, 0) << args[0];
    const auto first = snapshot(dir);
    fs::remove_all(dir);
    ASSERT_EQ(run(args).code, 0) << args[0];
    const auto second = snapshot(dir);
    ASSERT_FALSE(first.empty());
    EXPECT_TRUE(first == second) << args[0];
  }
}

TEST(Determinism, DataFilesIndependentOfThreads) {
  auto data = [](const std::string& threads) {
    const std::string dir = "cli_out/threads_" + threads;
    EXPECT_EQ(run({"bifmeasure", "--map", "z^2+c", "--marked", "c", "--res", "48", "--threads", threads, "--out", dir}).code, 0);
    EXPECT_EQ(run({"julia", "--map", "z^2-2", "--marked", "c", "--lambda", "0,0", "--samples", "2000", "--res", "16",
                   "--threads", threads, "--out", dir})
                  .code,
              0);
    auto s = snapshot(dir);
    std::erase_if(s, [](const auto& kv) { return kv.first.ends_with(".json"); });
    return s;
  };
  const auto a = data("1"), b = data("3");
  EXPECT_EQ(a.size(), 5u);
  EXPECT_TRUE(a == b);
}

TEST(Golden, BifmeasureFormats) {
  check_golden("bifmeasure", {"bifmeasure", "--map", "z^2+c", "--marked", "c", "--window", "-2.5,1.5,-2,2", "--res", "16"});
}

TEST(Golden, JuliaFormats) {
  check_golden("julia", {"julia", "--map", "z^2-2", "--marked", "c", "--lambda", "0,0", "--samples", "256", "--res", "16"});
}

TEST(Golden, LyapunovJson) {
  check_golden("lyapunov", {"lyapunov", "--map", "z^2", "--marked", "c", "--lambda", "0,0", "--samples", "2000"});
}

TEST(Golden, MisiurewiczJson) {
  check_golden("misiurewicz", {"misiurewicz", "--map", "z^2+c", "--marked", "c", "--window", "-2.2,0.6,-1.4,1.4",
                               "--grid", "3", "--n-max", "2", "--p-max", "2"});
}

TEST(Golden, PgmLayout) {
  Grid<double> g(Window{0, 1, 0, 1}, 3, 2);
  g(0, 0) = 0.0;
  g(2, 1) = 2.0;
  g(1, 1) = 1.0;
  const io::PgmImage img = io::encode_pgm(g);
  // Top row is the largest Im: values 0, 1, 2 -> 0, 32768, 65535 (big-endian).
  const std::string want = std::string("P5\n3 2\n65535\n") + std::string("\x00\x00\x80\x00\xff\xff", 6) +
                           std::string(6, '\0');
  EXPECT_TRUE(img.bytes == want);
  EXPECT_EQ(img.mapping["mapping"], "affine");
  EXPECT_EQ(img.mapping["value_max"], 2.0);
}
