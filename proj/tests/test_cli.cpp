#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int status = lumamba::cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lumamba_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Line of the help text that documents `flag`.
std::string help_line(const std::string& help, const std::string& flag) {
  std::istringstream in(help);
  std::string line, next;
  while (std::getline(in, line)) {
    if (line.find(flag + " ") == std::string::npos) continue;
    if (std::getline(in, next)) line += next;
    return line;
  }
  return {};
}

}  // namespace

TEST(Cli, HelpListsFlagsWithDefaults) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"synth", {"--montage", "--classes", "--subjects", "--seconds", "--fs", "--seed"}},
      {"preprocess", {"--seed"}},
      {"pretrain", {"--montage", "--seconds", "--regime", "--epochs", "--batch-size", "--learning-rate",
                    "--weight-decay", "--lambda", "--slices", "--mask-ratio", "--max-steps", "--clip-norm",
                    "--warmup-fraction", "--patch", "--embed", "--state", "--blocks", "--seed"}},
      {"finetune", {"--montage", "--epochs", "--learning-rate", "--epoch-cap", "--test-fraction", "--seed"}},
      {"eval", {"--montage", "--epochs", "--test-fraction", "--seeds"}},
      {"flops", {"--sweep", "--channels", "--budget-gib", "--classes", "--seed"}},
  };
  for (const auto& [verb, names] : flags) {
    const CliRun r = cli({verb, "--help"});
    EXPECT_EQ(r.status, 0) << verb;
    EXPECT_NE(r.out.find("--out"), std::string::npos) << verb;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << verb;
    for (const std::string& f : names) {
      const std::string line = help_line(r.out, f);
      ASSERT_FALSE(line.empty()) << verb << " " << f;
      EXPECT_NE(line.find('['), std::string::npos) << verb << ": " << line;
    }
  }
}

TEST(Cli, UsageErrors) {
  CliRun r = cli({"flops"});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("--out is required"), std::string::npos);
  EXPECT_NE(r.err.find("Usage:"), std::string::npos);

  r = cli({"flops", "--out", "x.csv", "--frobnicate"});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("--frobnicate"), std::string::npos);

  EXPECT_EQ(cli({}).status, 1);
  EXPECT_EQ(cli({"train"}).status, 1);
  EXPECT_EQ(cli({"flops", "--sweep", "100", "--out", "x.csv"}).status, 1);
  EXPECT_EQ(cli({"synth", "--classes", "two", "--out", "d"}).status, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  const fs::path dir = scratch("runtime");
  const CliRun r = cli({"finetune", "--init", (dir / "missing.ckpt").string(), "--data", dir.string(), "--out",
                       (dir / "o.ckpt").string()});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("missing.ckpt"), std::string::npos);
}

TEST(Cli, ConfigFileUnderFlags) {
  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "run.cfg");
    f << "# sweep settings\nchannels = 16\nbudget_gib = 8\nsweep = 64:256\n";
  }
  const std::string csv = (dir / "c.csv").string();
  const CliRun r = cli({"flops", "--config", (dir / "run.cfg").string(), "--channels", "26", "--out", csv});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("channels=26"), std::string::npos);
  EXPECT_NE(r.out.find("budget-gib=8"), std::string::npos);
  EXPECT_NE(r.out.find("seed=0"), std::string::npos);
  EXPECT_NE(r.out.find("rows=9"), std::string::npos);

  {
    std::ofstream f(dir / "bad.cfg");
    f << "chanels = 16\n";
  }
  const CliRun bad = cli({"flops", "--config", (dir / "bad.cfg").string(), "--out", csv});
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.err.find("chanels"), std::string::npos);
}

TEST(Cli, FlopsWritesCurvesAndCounts) {
  const fs::path dir = scratch("flops");
  const CliRun r = cli({"flops", "--sweep", "64:65536", "--out", (dir / "curves.csv").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("parameters.total="), std::string::npos);
  EXPECT_NE(r.out.find("parameters.head="), std::string::npos);
  const std::string csv = slurp(dir / "curves.csv");
  EXPECT_EQ(csv.rfind("spec,family,S,flops_total", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 11);
}

TEST(Cli, SynthIsDeterministic) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  for (const fs::path& d : {a, b}) {
    const CliRun r = cli({"synth", "--montage", "16", "--classes", "2", "--subjects", "2", "--seconds", "6", "--seed",
                         "7", "--out", d.string()});
    ASSERT_EQ(r.status, 0) << r.err;
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 4u);
}
