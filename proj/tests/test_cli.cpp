#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "resemg/binary_io.hpp"
#include "resemg/cli.hpp"
#include "resemg/errors.hpp"
#include "resemg/model.hpp"
#include "resemg/synthetic.hpp"
#include "test_util.hpp"

using namespace resemg;
using resemg::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Scaled-down corpus: 4000-sample windows resampled to 200 keep the CLI tests fast.
const std::vector<std::string> kSmall = {"--set", "window_length=4000", "--set", "input_length=200"};

std::filesystem::path small_corpus(const TempDir& dir, std::size_t subjects, std::size_t windows) {
  SyntheticSpec spec;
  spec.subjects = subjects;
  spec.windows_per_subject = windows;
  spec.window_length = 4000;
  spec.sample_rate_hz = 4000;
  spec.noise = 0.1;
  spec.seed = 12;
  return write_synthetic_corpus(spec, dir / "raw");
}

std::vector<std::string> with(std::vector<std::string> args, const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST(CliSettings, ConfigFileAndOverrides) {
  TempDir dir("cli");
  std::ofstream(dir / "c.cfg") << "# comment\nlearning_rate = 0.01\nepochs=5\nzscore = true\nseed = 4\n\n";
  cli::Settings s;
  cli::load_config_file(s, dir / "c.cfg");
  EXPECT_EQ(s.train.learning_rate, 0.01);
  EXPECT_EQ(s.train.epochs, 5u);
  EXPECT_TRUE(s.prep.zscore);
  EXPECT_EQ(s.split.rng_seed, 4u);
  EXPECT_EQ(s.model.rng_seed, 4u);
  for (const auto& key : cli::Settings::keys()) {
    cli::Settings fresh;
    EXPECT_NO_THROW(fresh.set(key, key == "zscore" ? "false" : key == "num_classes" ? "2" : "1")) << key;
  }
}

TEST(CliSettings, UnknownOrMalformedIsRejected) {
  TempDir dir("cli");
  cli::Settings s;
  EXPECT_THROW(s.set("learning_rat", "0.1"), UsageError);
  EXPECT_THROW(s.set("epochs", "ten"), UsageError);
  EXPECT_THROW(s.set("epochs", "10x"), UsageError);
  EXPECT_THROW(s.set("num_classes", "4"), UsageError);
  std::ofstream(dir / "bad.cfg") << "epochs = 3\nbatchsize = 4\n";
  try {
    cli::load_config_file(s, dir / "bad.cfg");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  const auto r = run_cli({"--config", (dir / "bad.cfg").string(), "params"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("batchsize"), std::string::npos);
}

TEST(CliSettings, FlagsOverrideConfigFile) {
  TempDir dir("cli");
  std::ofstream(dir / "c.cfg") << "num_classes = 3\n";
  const auto r = run_cli({"--config", (dir / "c.cfg").string(), "--classes", "2", "params"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("59218"), std::string::npos) << r.out;
}

TEST(CliParams, DefaultCount) {
  const auto r = run_cli({"params"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("total"), std::string::npos);
  EXPECT_NE(r.out.find("59235"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("49664"), std::string::npos);
}

TEST(CliUsage, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--classes", "5", "params"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  const auto r = run_cli({"train", "--train", "/nope/a.emgw", "--val", "/nope/b.emgw", "--out", "/tmp/x.emgc"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nope/a.emgw"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(CliPrep, WritesSubjectDisjointSplits) {
  TempDir dir("cli");
  const auto manifest = small_corpus(dir, 3, 3);
  const auto r = run_cli(with({"prep", "--manifest", manifest.string(), "--out", (dir / "ds").string()}, kSmall));
  ASSERT_EQ(r.code, 0) << r.err;
  std::set<std::string> seen;
  for (const char* name : {"train", "val", "test"}) {
    const auto records = unpack_dataset(dir / "ds" / (std::string(name) + ".emgw"));
    EXPECT_FALSE(records.empty());
    std::set<std::string> subjects;
    for (const auto& rec : records) {
      subjects.insert(rec.subject_id);
      EXPECT_EQ(rec.samples.dim(0), 200u);
    }
    for (const auto& s : subjects) EXPECT_TRUE(seen.insert(s).second) << s << " appears twice";
  }
  const auto report = nlohmann::json::parse(slurp(dir / "ds" / "split_report.json"));
  EXPECT_EQ(report.at("windows"), 9);
  EXPECT_EQ(report.at("train").at("subjects").size() + report.at("val").at("subjects").size() +
                report.at("test").at("subjects").size(),
            3u);
}

TEST(CliPrep, BadLabelNamesTheRow) {
  TempDir dir("cli");
  std::ofstream(dir / "m.csv") << "path,label,subject_id,sample_rate\na.emgs,als,p1,4000\nb.emgs,gout,p2,4000\n";
  const auto r = run_cli({"prep", "--manifest", (dir / "m.csv").string(), "--out", (dir / "ds").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(CliPrep, ShortRecordingNamesTheFile) {
  TempDir dir("cli");
  save_signal_file(dir / "tiny.emgs", std::vector<float>(100, 0.5f));
  std::ofstream(dir / "m.csv") << "path,label,subject_id,sample_rate\ntiny.emgs,als,p1,4000\n";
  const auto r = run_cli({"prep", "--manifest", (dir / "m.csv").string(), "--out", (dir / "ds").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("tiny.emgs"), std::string::npos) << r.err;
}

TEST(CliTrain, DeterministicLogsAndCheckpoints) {
  TempDir dir("cli");
  const auto manifest = small_corpus(dir, 3, 6);
  const auto ds = dir / "ds";
  ASSERT_EQ(run_cli(with({"prep", "--manifest", manifest.string(), "--out", ds.string()}, kSmall)).code, 0);
  for (const char* tag : {"a", "b"}) {
    const auto r = run_cli({"train", "--train", (ds / "train.emgw").string(), "--val", (ds / "val.emgw").string(),
                            "--out", (dir / (std::string(tag) + ".emgc")).string(), "--seed", "5", "--set",
                            "epochs=3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(dir / "a.emgc"), slurp(dir / "b.emgc"));
  EXPECT_EQ(slurp(dir / "a.emgc.log.jsonl"), slurp(dir / "b.emgc.log.jsonl"));
  const auto log = TrainLog::from_ndjson(slurp(dir / "a.emgc.log.jsonl"));
  EXPECT_EQ(log.epochs.size(), 3u);
}

TEST(CliEval, OverfitSingleExampleAndReport) {
  TempDir dir("cli");
  SyntheticSpec spec;
  spec.subjects = 1;
  spec.windows_per_subject = 1;
  spec.window_length = 4000;
  spec.seed = 3;
  PrepOptions prep;
  prep.window_length = 4000;
  prep.input_length = 200;
  const auto one = make_synthetic_windows(spec, prep);
  ASSERT_EQ(one.size(), 1u);
  pack_dataset(one, dir / "one.emgw");
  const auto data = (dir / "one.emgw").string();
  auto r = run_cli({"train", "--train", data, "--val", data, "--out", (dir / "m.emgc").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"eval", "--checkpoint", (dir / "m.emgc").string(), "--data", data, "--report",
               (dir / "r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("confusion"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j.at("accuracy"), 1.0);
  EXPECT_EQ(j.at("per_class").size(), 3u);
  EXPECT_EQ(j.at("confusion_matrix").size(), 3u);
}

TEST(CliEval, ClassCountMismatch) {
  TempDir dir("cli");
  ModelConfig two;
  two.num_classes = 2;
  save_checkpoint(init_params(two), dir / "two.emgc");
  const std::vector<WindowRecord> data{{Tensor({8, 1}, std::vector<float>(8, 0.1f)), 2, "p"},
                                       {Tensor({8, 1}, std::vector<float>(8, 0.2f)), 0, "p"}};
  pack_dataset(data, dir / "three.emgw");
  auto r = run_cli({"eval", "--checkpoint", (dir / "two.emgc").string(), "--data", (dir / "three.emgw").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("class-count mismatch"), std::string::npos) << r.err;
  r = run_cli({"--classes", "3", "eval", "--checkpoint", (dir / "two.emgc").string(), "--data",
               (dir / "three.emgw").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("class-count mismatch"), std::string::npos) << r.err;
}

TEST(CliPredict, OneLinePerWindow) {
  TempDir dir("cli");
  save_checkpoint(init_params(ModelConfig{}), dir / "m.emgc");
  std::vector<float> v(262124);
  Rng rng(1);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  save_signal_file(dir / "rec.emgs", v);
  const std::vector<std::string> args{"predict", "--checkpoint", (dir / "m.emgc").string(), "--signal",
                                      (dir / "rec.emgs").string()};
  const auto a = run_cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto lines = lines_of(a.out);
  ASSERT_EQ(lines.size(), 11u);
  for (std::size_t w = 0; w < lines.size(); ++w) {
    std::istringstream in(lines[w]);
    std::size_t index;
    std::string name;
    in >> index >> name;
    EXPECT_EQ(index, w);
    EXPECT_TRUE(name == "myopathy" || name == "normal" || name == "als") << name;
    double sum = 0, p;
    int count = 0;
    while (in >> p) {
      sum += p;
      ++count;
    }
    EXPECT_EQ(count, 3);
    EXPECT_NEAR(sum, 1.0, 2e-4);
  }
  EXPECT_EQ(run_cli(args).out, a.out);
}

TEST(CliPredict, MalformedSignalIsIngestionFailure) {
  TempDir dir("cli");
  save_checkpoint(init_params(ModelConfig{}), dir / "m.emgc");
  std::ofstream(dir / "junk.emgs") << "not a signal";
  const auto r = run_cli({"predict", "--checkpoint", (dir / "m.emgc").string(), "--signal",
                          (dir / "junk.emgs").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("junk.emgs"), std::string::npos) << r.err;
}

TEST(CliExportPlot, OneWindowPerClassAndExactAmplitudes) {
  TempDir dir("cli");
  SyntheticSpec spec;
  spec.subjects = 1;
  spec.windows_per_subject = 6;
  spec.seed = 8;
  const auto records = make_synthetic_windows(spec);
  pack_dataset(records, dir / "d.emgw");
  const auto r = run_cli({"export-plot", "--data", (dir / "d.emgw").string(), "--n", "3", "--out",
                          (dir / "p.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(slurp(dir / "p.csv"));
  ASSERT_EQ(lines.size(), 3u * 2000u + 1u);
  EXPECT_EQ(lines[0], "window,time_index,amplitude,label");
  std::set<std::size_t> labels;
  std::map<std::size_t, std::size_t> window_label;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::size_t w, t, label;
    float amp;
    ASSERT_EQ(std::sscanf(lines[i].c_str(), "%zu,%zu,%f,%zu", &w, &t, &amp, &label), 4) << lines[i];
    labels.insert(label);
    window_label[w] = label;
    // windows of each label appear in dataset order, so window w is the first record of its label
    std::size_t idx = 0;
    while (records[idx].label != label) ++idx;
    EXPECT_EQ(amp, records[idx].samples[t]) << lines[i];
  }
  EXPECT_EQ(labels.size(), 3u);
}

TEST(CliExportPlot, ClampsWithWarning) {
  TempDir dir("cli");
  const std::vector<WindowRecord> data{{Tensor({4, 1}, {1, 2, 3, 4}), 0, "p"}};
  pack_dataset(data, dir / "d.emgw");
  const auto r = run_cli({"export-plot", "--data", (dir / "d.emgw").string(), "--n", "10"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(lines_of(r.out).size(), 5u);
}

TEST(CliGradcheck, PassesAndWritesJson) {
  TempDir dir("cli");
  const auto r = run_cli({"gradcheck", "--seeds", "1", "--json", (dir / "g.json").string()});
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("all gradient checks passed"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "g.json"));
  EXPECT_GE(j.size(), 11u);
}
