#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gcalc/cli.hpp"
#include "gcalc/config.hpp"

namespace fs = std::filesystem;
using gcalc::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "gcalc");
  std::ostringstream out, err;
  const int code = gcalc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& name) { return std::string(GCALC_FIXTURE_DIR) + "/" + name; }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gcalc_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("stable linear certificate") {
  const auto r = run({"linstab", "--config", fixture("ex_ri.json")});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("certificate").at("kind") == "ms_stable");
  CHECK(std::abs(j.at("certificate").at("margin").get<double>() - 5.5) <= 1e-9);
  CHECK(j.at("meta").at("subcommand") == "linstab");
  CHECK(j.at("meta").at("seed") == 0);
  CHECK(j.at("meta").at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("unstable linear certificate") {
  const auto r = run({"linstab", "--config", fixture("ex_unstable.json")});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out).at("certificate").at("kind") == "q_unstable");
}

TEST_CASE("G-heat of the square payoff") {
  const auto r = run({"gheat", "--config", fixture("square.json")});
  REQUIRE(r.code == 0);
  const auto pos = r.out.find("# u(0,0): ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 10)) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(r.out.find("\nx,u\n") != std::string::npos);
}

TEST_CASE("Lyapunov check with a constant below the threshold fails with exit 2") {
  const auto fail = run({"lyapunov", "--config", fixture("duffing.json")});
  CHECK(fail.code == 2);
  const json j = json::parse(fail.out).at("report");
  CHECK(j.at("verdict") == "fail");
  CHECK(std::abs(j.at("argmax").at("x")[1].get<double>()) < 1e-12);
  CHECK(run({"lyapunov", "--config", fixture("duffing_pass.json")}).code == 0);
}

TEST_CASE("experiments") {
  const auto decay = run({"experiment", "--config", fixture("decay.json"), "--seed", "1"});
  CHECK(decay.code == 0);
  CHECK(decay.out.rfind("# gcalc moment decay\n", 0) == 0);
  CHECK(decay.out.find("# seed: 1\n") != std::string::npos);
  CHECK(run({"experiment", "--config", fixture("bt.json")}).code == 0);
}

TEST_CASE("simulate and upper") {
  const auto sim = run({"simulate", "--config", fixture("simulate.json")});
  REQUIRE(sim.code == 0);
  CHECK(sim.out.find("t,b_1,qvar_11,policy_choice\n") != std::string::npos);
  const auto up = run({"upper", "--config", fixture("upper_square.json"), "--format", "json"});
  REQUIRE(up.code == 0);
  CHECK(json::parse(up.out).at("report").at("value").get<double>() == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("usage errors exit 1") {
  CHECK(run({"linstab", "--config", fixture("ex_ri.json"), "--bogus"}).code == 1);
  CHECK(run({"nosuch"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"linstab"}).code == 1);
  CHECK(run({"linstab", "--config", "/nonexistent.json"}).code == 1);
  CHECK(run({"linstab", "--config", fixture("ex_ri.json"), "--format", "xml"}).code == 1);
  CHECK(run({"--version"}).code == 0);
}

TEST_CASE("schema errors name the offending key") {
  TempDir dir;
  const auto cfg = dir.write("bad.json", R"({"mode": "stable", "n": 1, "F": [1], "band": [2, 1]})");
  const auto r = run({"linstab", "--config", cfg});
  CHECK(r.code == 1);
  CHECK(r.err.find("/band") != std::string::npos);
  const auto broken = dir.write("broken.json", "{ not json");
  CHECK(run({"linstab", "--config", broken}).code == 1);
  const auto heat = dir.write("heat.json", R"({"band": [1, 2], "payoff": "x^2 +", "T": 1})");
  const auto h = run({"gheat", "--config", heat});
  CHECK(h.code == 1);
  CHECK(h.err.find("/payoff") != std::string::npos);
}

TEST_CASE("outputs are not overwritten without --force") {
  TempDir dir;
  const auto out = dir.file("cert.json");
  CHECK(run({"linstab", "--config", fixture("ex_ri.json"), "--out", out}).code == 0);
  const std::string first = slurp(out);
  CHECK_FALSE(first.empty());
  const auto again = run({"linstab", "--config", fixture("ex_ri.json"), "--out", out});
  CHECK(again.code == 1);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(run({"linstab", "--config", fixture("ex_ri.json"), "--out", out, "--force"}).code == 0);
  CHECK(slurp(out) == first);
}

TEST_CASE("reruns are byte-identical and independent of the thread count") {
  const auto a = run({"upper", "--config", fixture("upper_square.json"), "--seed", "5", "--threads", "1"});
  const auto b = run({"upper", "--config", fixture("upper_square.json"), "--seed", "5", "--threads", "4"});
  const auto c = run({"upper", "--config", fixture("upper_square.json"), "--seed", "5"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
  const auto d = run({"upper", "--config", fixture("upper_square.json"), "--seed", "6"});
  CHECK(d.out != a.out);
}

TEST_CASE("plot data") {
  TempDir dir;
  const auto plot = dir.file("plot.csv");
  CHECK(run({"gheat", "--config", fixture("square.json"), "--emit-plot-data", plot}).code == 0);
  const std::string text = slurp(plot);
  CHECK(text.find("series,x,y\n") != std::string::npos);
  CHECK(text.rfind("# gcalc gheat plot data\n", 0) == 0);
}
