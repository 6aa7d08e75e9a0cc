#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "cli.hpp"

using namespace micromotion;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "micromotion");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const auto dir = fs::path(::testing::TempDir()) / ("micromotion_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::map<std::string, std::string> snapshot(const std::string& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[e.path().string()] = detail::read_file(e.path().string());
  return files;
}

/// Every subcommand once, on a small recording.
void pipeline(const std::string& w) {
  const std::vector<std::vector<std::string>> steps = {
      {"synth", "--out", w + "/d", "--frames", "1200", "--height", "16", "--width", "16", "--seed", "5", "--region",
       "strong:2,2,6,6:0.5", "--region", "silent:9,9,6,6:0"},
      {"filter", w + "/d/transmission.mmv", w + "/f.mmv"},
      {"template", "--video", w + "/f.mmv", "--fluorescence", w + "/d/fluorescence.csv", "--spikes",
       w + "/d/spikes.csv", "--out", w + "/t.mmv"},
      {"match", "--video", w + "/f.mmv", "--template", w + "/t.mmv", "--out", w + "/m.mmv"},
      {"train1d", "--video", w + "/f.mmv", "--fluorescence", w + "/d/fluorescence.csv", "--epochs", "1", "--batch",
       "32", "--out", w + "/n1.mmn"},
      {"predict1d", "--model", w + "/n1.mmn", "--video", w + "/f.mmv", "--out", w + "/p1.mmv"},
      {"train3d", "--model", w + "/n1.mmn", "--video", w + "/f.mmv", "--fluorescence", w + "/d/fluorescence.csv",
       "--roi", "2,2,6,6", "--epochs", "1", "--out", w + "/n3.mmn"},
      {"predict3d", "--model", w + "/n3.mmn", "--video", w + "/f.mmv", "--roi", "2,2,6,6", "--out", w + "/p3.csv"},
      {"densemap", "--model", w + "/n3.mmn", "--inside", "1,1,3,3", "--out", w + "/dm"},
      {"score", "--pred", w + "/d/fluorescence.csv", "--target", w + "/d/fluorescence.csv", "--out", w + "/s.txt"},
      {"map", "--pred", w + "/m.mmv", "--target", w + "/d/fluorescence.csv", "--margin", "46", "--out", w + "/map"},
      {"report", "--video", w + "/f.mmv", "--fluorescence", w + "/d/fluorescence.csv", "--regions",
       w + "/d/regions.csv", "--template", w + "/t.mmv", "--model1d", w + "/n1.mmn", "--model3d",
       "strong=" + w + "/n3.mmn", "--model3d", "silent=" + w + "/n3.mmn", "--null-trials", "5", "--out",
       w + "/rep"},
  };
  for (auto s : steps) {
    s.push_back("--threads");
    s.push_back("1");
    const auto r = invoke(s);
    ASSERT_EQ(r.status, 0) << s[0] << ": " << r.err;
  }
}

}  // namespace

TEST(Hash, KnownFnv1aVectors) {
  EXPECT_EQ(cli::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(cli::fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(cli::fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Range, OneBasedInclusive) {
  const auto r = cli::detail::parse_range("1:3072", 5000);
  EXPECT_EQ(r.begin, 0u);
  EXPECT_EQ(r.end, 3072u);
  EXPECT_EQ(cli::detail::parse_range("3073:5000", 5000).size(), 1928u);
  EXPECT_THROW(cli::detail::parse_range("0:10", 100), InvalidArgument);
  EXPECT_THROW(cli::detail::parse_range("9:3", 100), InvalidArgument);
  EXPECT_THROW(cli::detail::parse_range("1:101", 100), InvalidArgument);
  EXPECT_THROW(cli::detail::parse_range("12", 100), InvalidArgument);
}

TEST(Roi, ParsesAndRejects) {
  const auto r = cli::detail::parse_roi("3,4,5,6");
  EXPECT_EQ(r.x0, 3u);
  EXPECT_EQ(r.y0, 4u);
  EXPECT_EQ(r.w, 5u);
  EXPECT_EQ(r.h, 6u);
  EXPECT_THROW(cli::detail::parse_roi("1,2,3"), InvalidArgument);
  EXPECT_THROW(cli::detail::parse_roi("1,2,0,4"), InvalidArgument);
}

TEST(Cli, EverySubcommandIsByteDeterministic) {
  const auto w = scratch("determinism");
  pipeline(w);
  const auto first = snapshot(w);
  pipeline(w);
  const auto second = snapshot(w);
  ASSERT_EQ(first.size(), second.size());
  for (const auto& [path, bytes] : first) EXPECT_TRUE(second.at(path) == bytes) << path;
  EXPECT_GE(first.size(), 30u);
}

TEST(Cli, ManifestRecordsConfigAndInputHashes) {
  const auto w = scratch("manifest");
  ASSERT_EQ(invoke({"synth", "--out", w + "/d", "--frames", "300", "--height", "8", "--width", "8"}).status, 0);
  ASSERT_EQ(invoke({"filter", w + "/d/transmission.mmv", w + "/f.mmv", "--order", "2"}).status, 0);
  const auto m = detail::read_file(w + "/f.mmv.manifest.txt");
  EXPECT_NE(m.find("command=filter\n"), std::string::npos);
  EXPECT_NE(m.find("config.order=2\n"), std::string::npos);
  EXPECT_NE(m.find("config.flo=2\n"), std::string::npos);
  EXPECT_NE(m.find("version=" + std::string(cli::kToolVersion)), std::string::npos);
  const auto hash = cli::fnv1a_hex(detail::read_file(w + "/d/transmission.mmv"));
  EXPECT_NE(m.find("input.video.fnv1a64=" + hash + "\n"), std::string::npos);
  const auto synth = detail::read_file(w + "/d/manifest.txt");
  EXPECT_NE(synth.find("config.frames=300\n"), std::string::npos);
  EXPECT_NE(synth.find("output=" + w + "/d/transmission.mmv\n"), std::string::npos);
}

TEST(Cli, ConfigFileYieldsToExplicitFlags) {
  const auto w = scratch("config");
  detail::write_file(w + "/c.txt", "# synthetic run\nframes = 200\nheight=6\nwidth=7\nseed=9\n");
  ASSERT_EQ(invoke({"synth", "--config", w + "/c.txt", "--seed", "4", "--out", w + "/d"}).status, 0);
  const auto v = read_video(w + "/d/transmission.mmv");
  EXPECT_EQ(v.frames(), 200u);
  EXPECT_EQ(v.height(), 6u);
  EXPECT_EQ(v.width(), 7u);
  const auto m = detail::read_file(w + "/d/manifest.txt");
  EXPECT_NE(m.find("config.seed=4\n"), std::string::npos);

  detail::write_file(w + "/bad.txt", "frames\n");
  const auto bad = invoke({"synth", "--config", w + "/bad.txt", "--out", w + "/e"});
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.err.find("key=value"), std::string::npos);
}

TEST(Cli, SubcommandDefaultsApplyPerCommand) {
  const auto w = scratch("defaults");
  ASSERT_EQ(invoke({"synth", "--out", w + "/d", "--frames", "700", "--height", "4", "--width", "4"}).status, 0);
  ASSERT_EQ(invoke({"train1d", "--video", w + "/d/transmission.mmv", "--fluorescence", w + "/d/fluorescence.csv",
                 "--epochs", "1", "--out", w + "/n1.mmn"})
                .status,
            0);
  EXPECT_NE(detail::read_file(w + "/n1.mmn.manifest.txt").find("config.lr=0.001\n"), std::string::npos);
  ASSERT_EQ(invoke({"train3d", "--model", w + "/n1.mmn", "--video", w + "/d/transmission.mmv", "--fluorescence",
                 w + "/d/fluorescence.csv", "--roi", "0,0,2,2", "--epochs", "1", "--out", w + "/n3.mmn"})
                .status,
            0);
  EXPECT_NE(detail::read_file(w + "/n3.mmn.manifest.txt").find("config.lr=8e-07\n"), std::string::npos);
}

TEST(Cli, ErrorsExitNonzeroWithAMessage) {
  const auto w = scratch("errors");
  auto r = invoke({"bogus"});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);

  r = invoke({"filter", w + "/missing.mmv", w + "/out.mmv"});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("missing.mmv"), std::string::npos);

  r = invoke({"filter", w + "/only_input.mmv"});
  EXPECT_EQ(r.status, 2);

  r = invoke({"synth", "--out", w + "/d", "--frames", "-3"});
  EXPECT_EQ(r.status, 2);

  ASSERT_EQ(invoke({"synth", "--out", w + "/d", "--frames", "100", "--height", "4", "--width", "4"}).status, 0);
  r = invoke({"template", "--video", w + "/d/transmission.mmv", "--fluorescence", w + "/d/fluorescence.csv",
           "--range", "50:500", "--out", w + "/t.mmv"});
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("exceeds"), std::string::npos);

  r = invoke({"predict3d", "--model", w + "/none.mmn", "--video", w + "/d/transmission.mmv", "--roi", "0,0,9,9",
           "--out", w + "/p.csv"});
  EXPECT_NE(r.status, 0);

  detail::write_file(w + "/junk.mmv", "not a video at all");
  r = invoke({"filter", w + "/junk.mmv", w + "/out.mmv"});
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(fs::exists(w + "/out.mmv"));
}

TEST(Cli, HelpAndVersionSucceed) {
  auto r = invoke({"--help"});
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("report"), std::string::npos);
  r = invoke({"train3d", "--help"});
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("--roi"), std::string::npos);
  r = invoke({"--version"});
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find(cli::kToolVersion), std::string::npos);
}

TEST(Cli, SelftestPasses) {
  const auto r = invoke({"selftest"});
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
