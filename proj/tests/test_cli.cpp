#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(VOXGEN_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string cli_stdout(const std::string& args) {
  const std::string out = fs::temp_directory_path() / "voxgen_cli_out.txt";
  const std::string cmd =
      std::string(VOXGEN_BIN) + " " + args + " > " + out + " 2>/dev/null";
  EXPECT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  std::ifstream is(out);
  std::string line, all;
  while (std::getline(is, line)) all += line + "\n";
  return all;
}

std::string fresh_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("voxgen_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string write_config(const std::string& tag, const std::string& body) {
  auto path = fs::temp_directory_path() / ("voxgen_cfg_" + tag + ".json");
  std::ofstream os(path);
  os << body;
  return path.string();
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool dirs_byte_equal(const std::string& a, const std::string& b) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  for (const auto& n : names) {
    if (!fs::exists(fs::path(b) / n)) return false;
    if (slurp(fs::path(a) / n) != slurp(fs::path(b) / n)) return false;
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::directory_iterator(b))
    if (e.is_regular_file()) ++count_b;
  return count_b == names.size();
}

const char* kTinyModel =
    "\"model\":{\"hidden\":16,\"z_dim\":2,\"steps\":2,\"read_dim\":8}";

TEST(CliExitCodes, ConfigErrorsReturnTwo) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("definitely-not-a-command"), 2);
  EXPECT_EQ(run_cli("train"), 2);  // missing --out
  const std::string bad_key = write_config("badkey", "{\"bogus\":1}");
  EXPECT_EQ(run_cli("train --config " + bad_key + " --out " +
                    fresh_dir("bk")),
            2);
  const std::string bad_json = write_config("badjson", "{not json");
  EXPECT_EQ(run_cli("train --config " + bad_json + " --out " +
                    fresh_dir("bj")),
            2);
  const std::string bad_profile = write_config("ok", "{}");
  EXPECT_EQ(run_cli("gen-data --config " + bad_profile +
                    " --profile huge --out " + fresh_dir("bp")),
            2);
  const std::string bad_value = write_config(
      "badval", std::string("{") + kTinyModel +
                    ",\"train\":{\"budget\":0}}");
  EXPECT_EQ(run_cli("train --config " + bad_value + " --out " +
                    fresh_dir("bv")),
            2);
}

TEST(CliExitCodes, DataErrorsReturnThree) {
  const std::string cfg = write_config(
      "mckpt", std::string("{") + kTinyModel +
                   ",\"checkpoint\":\"/tmp/voxgen_absent_ckpt\"}");
  EXPECT_EQ(run_cli("eval --config " + cfg), 3);
  const std::string cfg2 = write_config(
      "minput", std::string("{") + kTinyModel +
                    ",\"input\":\"/tmp/voxgen_absent.vox1\"}");
  EXPECT_EQ(run_cli("complete --config " + cfg2 + " --out " +
                    fresh_dir("mi")),
            3);
}

TEST(CliDeterminism, GenDataIsByteStablePerSeed) {
  const std::string a = fresh_dir("gda"), b = fresh_dir("gdb"),
                    c = fresh_dir("gdc");
  const std::string cfg = write_config("gd", "{\"count\":4}");
  ASSERT_EQ(run_cli("gen-data --config " + cfg + " --seed 7 --out " + a), 0);
  ASSERT_EQ(run_cli("gen-data --config " + cfg + " --seed 7 --out " + b), 0);
  ASSERT_EQ(run_cli("gen-data --config " + cfg + " --seed 8 --out " + c), 0);
  EXPECT_TRUE(dirs_byte_equal(a, b));
  EXPECT_FALSE(dirs_byte_equal(a, c));
}

TEST(CliDeterminism, TrainResumeMatchesUninterruptedRun) {
  const std::string train_tail =
      ",\"train\":{\"batch\":2,\"train_count\":8,\"eval_count\":4,"
      "\"eval_importance\":3,\"budget\":";
  const std::string full_cfg = write_config(
      "full", std::string("{") + kTinyModel + train_tail + "6}}");
  const std::string half_cfg = write_config(
      "half", std::string("{") + kTinyModel + train_tail + "3}}");

  const std::string full = fresh_dir("full"), split = fresh_dir("split");
  ASSERT_EQ(run_cli("train --config " + full_cfg + " --seed 5 --out " + full),
            0);
  ASSERT_EQ(run_cli("train --config " + half_cfg + " --seed 5 --out " + split),
            0);
  ASSERT_EQ(run_cli("train --config " + full_cfg + " --seed 5 --out " + split),
            0);
  EXPECT_TRUE(
      dirs_byte_equal(full + "/checkpoint", split + "/checkpoint"));
}

TEST(CliDeterminism, SampleAndRenderAreByteStable) {
  const std::string a = fresh_dir("sma"), b = fresh_dir("smb");
  const std::string cfg =
      write_config("sm", std::string("{") + kTinyModel + ",\"count\":2}");
  ASSERT_EQ(run_cli("sample --config " + cfg + " --seed 11 --out " + a), 0);
  ASSERT_EQ(run_cli("sample --config " + cfg + " --seed 11 --out " + b), 0);
  EXPECT_TRUE(dirs_byte_equal(a, b));

  const std::string ra = fresh_dir("rma"), rb = fresh_dir("rmb");
  const std::string rcfg = write_config(
      "rm", "{\"image\":{\"width\":24,\"height\":24}}");
  ASSERT_EQ(
      run_cli("render-mesh --config " + rcfg + " --seed 3 --out " + ra), 0);
  ASSERT_EQ(
      run_cli("render-mesh --config " + rcfg + " --seed 3 --out " + rb), 0);
  EXPECT_TRUE(dirs_byte_equal(ra, rb));
}

TEST(CliSample, ClassConditionalMakesPerClassDirectories) {
  const std::string out = fresh_dir("cls");
  const std::string cfg = write_config(
      "cls",
      "{\"model\":{\"hidden\":16,\"z_dim\":2,\"steps\":2,\"read_dim\":8,"
      "\"context\":\"class_label\",\"n_classes\":6},"
      "\"count\":2,\"classes\":[1,4]}");
  ASSERT_EQ(run_cli("sample --config " + cfg + " --seed 2 --out " + out), 0);
  EXPECT_TRUE(fs::exists(out + "/class_1/sample_0001.vox1"));
  EXPECT_TRUE(fs::exists(out + "/class_4/sample_0000.png"));
  EXPECT_FALSE(fs::exists(out + "/class_0"));

  const std::string zero = fresh_dir("zero");
  const std::string zcfg = write_config(
      "zero", std::string("{") + kTinyModel + ",\"count\":0}");
  ASSERT_EQ(run_cli("sample --config " + zcfg + " --seed 2 --out " + zero), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(zero))
    if (e.is_regular_file()) ++files;
  EXPECT_EQ(files, 0u);
}

TEST(CliEval, ReportsSameNatsAsTrainingRun) {
  const std::string out = fresh_dir("evtr");
  const std::string cfg = write_config(
      "evtr", std::string("{") + kTinyModel +
                  ",\"train\":{\"batch\":2,\"train_count\":8,\"eval_count\":4,"
                  "\"eval_importance\":3,\"budget\":3}}");
  const std::string report =
      cli_stdout("train --config " + cfg + " --seed 6 --out " + out);
  const std::string ecfg = write_config(
      "evev", std::string("{") + kTinyModel +
                  ",\"train\":{\"batch\":2,\"train_count\":8,\"eval_count\":4,"
                  "\"eval_importance\":3,\"budget\":3},\"checkpoint\":\"" +
                  out + "/checkpoint\"}");
  const std::string again = cli_stdout("eval --config " + ecfg + " --seed 6");
  EXPECT_EQ(report, again);
}

}  // namespace
