// Copyright 2026 The wlt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = WLT_TEST_TMP;

struct CliRun {
  int status;
  std::string err;
};

CliRun run(const std::string& args) {
  fs::create_directories(kTmp);
  const fs::path err = kTmp / "stderr.txt";
  const std::string cmd = std::string("\"") + WLT_CLI_PATH + "\" " + args + " >/dev/null 2>\"" +
                          err.string() + "\"";
  const int rc = std::system(cmd.c_str());
  std::ifstream is(err);
  std::stringstream ss;
  ss << is.rdbuf();
  return {rc, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

const std::string kQuick = " --reestimations 4 --tie-after 1 --align-after 2 --mixtures 2";

void synth(const fs::path& out, int seed) {
  fs::remove_all(out);
  ASSERT_EQ(run("synth --phonemes 6 --visemes 3 --utts 24 --dim 4 --vocab 10 --seed " +
                std::to_string(seed) + " --out \"" + out.string() + "\"")
                .status,
            0);
}

}  // namespace

TEST(Cli, SynthWritesCorpusAndIsReproducible) {
  const fs::path a = kTmp / "synth_a", b = kTmp / "synth_b";
  synth(a, 3);
  synth(b, 3);
  std::size_t features = 0;
  for (const auto& e : fs::directory_iterator(a / "features")) {
    ++features;
    EXPECT_EQ(slurp(e.path()), slurp(b / "features" / e.path().filename()));
  }
  EXPECT_EQ(features, 24u);
  for (const char* f : {"words.mlf", "phones.mlf", "lexicon.txt", "true_map.txt", "truth.hmm",
                        "manifest.txt"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(lines(slurp(a / "true_map.txt")).empty(), false);
}

TEST(Cli, ImpossibleVisemeCountIsAOneLineError) {
  const CliRun r = run("synth --phonemes 12 --visemes 13 --seed 1 --out \"" +
                    (kTmp / "bad").string() + "\"");
  EXPECT_NE(r.status, 0);
  const auto l = lines(r.err);
  ASSERT_EQ(l.size(), 1u) << r.err;
  EXPECT_EQ(l[0].rfind("wlt: error: ", 0), 0u);
  EXPECT_NE(l[0].find("13"), std::string::npos);
}

TEST(Cli, MissingRequiredOptionFails) {
  EXPECT_NE(run("synth --out x").status, 0);
  EXPECT_NE(run("").status, 0);
  EXPECT_NE(run("score --corpus nowhere --hyp nothing.mlf").status, 0);
}

TEST(Cli, TrainDecodeScore) {
  const fs::path c = kTmp / "corpus";
  synth(c, 8);
  const std::string corpus = " --corpus \"" + c.string() + "\"";
  const std::string map = " --map \"" + (c / "true_map.txt").string() + "\"";
  const fs::path m = kTmp / "models";
  ASSERT_EQ(run("train" + corpus + map + " --tier phoneme --method wlt --seed 1 --out \"" +
                m.string() + "\"" + kQuick)
                .status,
            0);
  for (const char* f : {"models.hmm", "train.log", "visemes.hmm", "visemes.log"})
    EXPECT_TRUE(fs::exists(m / f)) << f;
  EXPECT_EQ(lines(slurp(m / "train.log")).size(), 4u);

  const fs::path hyp = kTmp / "hyp.mlf";
  ASSERT_EQ(run("decode" + corpus + map + " --models \"" + (m / "models.hmm").string() +
                "\" --classifier-tier phoneme --network-tier phoneme --out \"" + hyp.string() +
                "\"")
                .status,
            0);
  EXPECT_EQ(slurp(hyp).rfind("#!MLF!#\n", 0), 0u);

  const fs::path rep = kTmp / "score.txt";
  ASSERT_EQ(run("score" + corpus + map + " --tier phoneme --hyp \"" + hyp.string() + "\" --out \"" +
                rep.string() + "\"")
                .status,
            0);
  const auto l = lines(slurp(rep));
  ASSERT_GE(l.size(), 3u);
  EXPECT_EQ(l.front(), "id N H S D I C A");
  EXPECT_EQ(l.back().rfind("TOTAL ", 0), 0u);
}

TEST(Cli, MatrixHasSixRows) {
  const fs::path c = kTmp / "corpus_m";
  synth(c, 9);
  const fs::path out = kTmp / "matrix.csv";
  ASSERT_EQ(run("matrix --corpus \"" + c.string() + "\" --map \"" +
                (c / "true_map.txt").string() + "\" --seed 2 --folds 2 --out \"" + out.string() +
                "\"" + kQuick)
                .status,
            0);
  const auto l = lines(slurp(out));
  ASSERT_EQ(l.size(), 7u);
  EXPECT_EQ(l[0], "classifier,network,folds,mean_C,std_error");
  EXPECT_EQ(l[1].rfind("viseme,viseme,2,", 0), 0u);
  EXPECT_EQ(l[6].rfind("word,word,2,", 0), 0u);
}
