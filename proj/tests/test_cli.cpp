#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "slab/graph.hpp"
#include "slab/io.hpp"
#include "slab/loss_table.hpp"
#include "slab/surface.hpp"
#include "slab/transition.hpp"
#include "slab/walks.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace slab {
namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("slab_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path sub(const std::string& name) {
    const auto p = dir_ / name;
    fs::create_directories(p);
    return p;
  }

  // Exit status of the CLI; stderr lands in last_err_.
  int run(const std::string& args) {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(SLAB_CLI_PATH) + " " + args + " >/dev/null 2>" + err.string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    last_err_ = ss.str();
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Synthetic table on the fitted Chinchilla law, 8 model sizes x 10 token counts.
  fs::path write_table(double noise = 0.0) {
    ChinchillaFit law;
    law.E = 1.8172;
    law.A = 477.82;
    law.B = 2143.62;
    law.alpha = 0.3473;
    law.beta = 0.3672;
    Rng rng(5);
    LossTable t;
    int id = 0;
    for (const auto& p : chinchilla_grid(law, 6e7, 1.6e10, 8, 3e9, 5e11, 10)) {
      LossRow r;
      r.run_id = "r" + std::to_string(id++);
      r.n_params_total = r.n_params_nonembed = p.n;
      r.tokens = p.d;
      r.loss = p.loss * std::exp(noise * rng.normal());
      t.rows.push_back(r);
    }
    const auto path = dir_ / "table.csv";
    write_loss_table(path.string(), t);
    return path;
  }

  fs::path dir_;
  std::string last_err_;
};

TEST_F(CliTest, GenGraphSmoke) {
  const auto out = sub("g");
  ASSERT_EQ(run("gen-graph --nodes 1000 --edges 5000 --seq-len 50 --n-seqs 100 --seed 1 --out " + out.string()), 0)
      << last_err_;
  auto is = io::open_in((out / "walks.slwk").string(), true);
  const auto ds = read_walks(is);
  EXPECT_EQ(ds.vocab_size, 1000U);
  EXPECT_EQ(ds.seq_len, 50U);
  EXPECT_EQ(ds.n_seqs, 100U);
  const auto m = read_json(out / "gen-graph.manifest.json");
  EXPECT_EQ(m["graph"]["n_edges"], 5000);
  for (const char* f : {"graph.edges", "model.sltm", "walks.slwk"}) {
    ASSERT_TRUE(m["outputs"].contains(f)) << f;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::hash_file((out / f).string())));
    EXPECT_EQ(m["outputs"][f], buf);
  }
}

TEST_F(CliTest, GeneratedModelRoundTrips) {
  const auto out = sub("g");
  ASSERT_EQ(run("gen-graph --nodes 300 --edges 900 --seed 4 --out " + out.string()), 0) << last_err_;
  auto is = io::open_in((out / "model.sltm").string(), true);
  const auto loaded = read_transition_model(is);
  const auto expected = build_unbiased_model(gen_erdos_renyi(300, 900, derive_seed(4, 0)));
  EXPECT_EQ(loaded.row_offsets, expected.row_offsets);
  EXPECT_EQ(loaded.columns, expected.columns);
  EXPECT_EQ(loaded.probs, expected.probs);
  EXPECT_EQ(loaded.initial, expected.initial);
}

TEST_F(CliTest, ManifestRecordsWeighting) {
  const auto out = sub("g");
  ASSERT_EQ(run("gen-graph --nodes 8192 --edges 53292 --weighting power --kappa 1 --k-min 1 --k-max 1000 --seed 2 --out " +
                out.string()),
            0)
      << last_err_;
  const auto m = read_json(out / "gen-graph.manifest.json");
  EXPECT_EQ(m["graph"]["kappa"], 1.0);
  EXPECT_EQ(m["graph"]["k_min"], 1);
  EXPECT_EQ(m["graph"]["k_max"], 1000);
  EXPECT_EQ(m["graph"]["n_edges"], 53292);
}

TEST_F(CliTest, MissingOutputDirectoryIsNamed) {
  const auto missing = dir_ / "not_there";
  EXPECT_EQ(run("gen-graph --nodes 100 --edges 300 --seed 1 --out " + missing.string()), 3);
  EXPECT_NE(last_err_.find(missing.string()), std::string::npos) << last_err_;
}

TEST_F(CliTest, BadArgumentsExitThree) {
  EXPECT_EQ(run("gen-graph --nodes 100 --edges 300 --out " + dir_.string()), 3);  // no seed
  EXPECT_EQ(run("gen-graph --family grid --seed 1 --out " + dir_.string()), 3);
  EXPECT_EQ(run("gen-graph --nodes 10 --edges 1000 --seed 1 --out " + dir_.string()), 3);
  EXPECT_EQ(run("nonsense"), 3);
}

TEST_F(CliTest, DiagnosticsAndWalks) {
  const auto g = sub("g");
  const auto d = sub("d");
  ASSERT_EQ(run("gen-graph --nodes 500 --edges 2500 --seq-len 50 --n-seqs 400 --seed 3 --out " + g.string()), 0);
  ASSERT_EQ(run("diagnostics --model " + (g / "model.sltm").string() + " --walks " + (g / "walks.slwk").string() +
                " --out " + d.string()),
            0)
      << last_err_;
  const auto j = read_json(d / "diagnostics.json");
  EXPECT_GT(j["spectral_gap"].get<double>(), 0.0);
  EXPECT_LE(j["entropy_rate"].get<double>(), j["stationary_entropy"].get<double>());
  EXPECT_EQ(j["walks"]["illegal_transitions"], 0);
  EXPECT_LT(j["walks"]["unigram_tv"].get<double>(), 0.1);
  std::ifstream ranked(d / "ranked.csv");
  std::string header;
  std::getline(ranked, header);
  EXPECT_EQ(header, "rank,probability,kind");
}

TEST_F(CliTest, BaselineCsv) {
  const auto out = sub("b");
  ASSERT_EQ(run("baseline --source uniform --vocab 4 --d 100,1000 --trials 500 --seed 1 --out " + out.string()), 0)
      << last_err_;
  std::ifstream in(out / "baseline.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "D,analytic,mc_mean,mc_stderr");
  std::getline(in, line);
  const auto f = io::split_csv(line);
  ASSERT_EQ(f.size(), 4U);
  EXPECT_EQ(f[0], "100");
  const double analytic = std::stod(f[1]);
  EXPECT_NEAR(analytic, std::log(4.0) + 3.0 / 200.0, 1e-12);
  EXPECT_NEAR(std::stod(f[2]), analytic, 4.0 * std::stod(f[3]) + 1e-4);

  const auto only = sub("b0");
  ASSERT_EQ(run("baseline --source uniform --vocab 4 --d 50 --trials 0 --seed 1 --out " + only.string()), 0);
  std::ifstream in0(only / "baseline.csv");
  std::getline(in0, line);
  std::getline(in0, line);
  EXPECT_EQ(line.substr(line.size() - 2), ",,");
}

TEST_F(CliTest, IngestRules) {
  const auto empty = dir_ / "empty.csv";
  std::ofstream(empty).close();
  EXPECT_EQ(run("ingest --input " + empty.string() + " --out " + dir_.string()), 3);

  const auto raw = dir_ / "raw.csv";
  {
    std::ofstream os(raw);
    os << "Model Size,Training Tokens,loss\n";
    for (int i = 1; i <= 6; ++i) os << 1e8 * i << ',' << 1e10 << ',' << 3.0 - 0.1 * i << '\n';
    os << 1e8 << ',' << 1e10 << ',' << 2.9 << '\n';  // duplicate of the first row
    os << 5e8 << ',' << 2e10 << ",8.5\n";           // outlier
  }
  const auto out = sub("i");
  ASSERT_EQ(run("ingest --input " + raw.string() + " --schema chinchilla --drop-largest 1 --out " + out.string()), 0)
      << last_err_;
  const auto j = read_json(out / "ingest.json");
  EXPECT_EQ(j["rows_read"], 8);
  EXPECT_EQ(j["rows_written"], 6);
  bool dedup_warned = false;
  for (const auto& w : j["warnings"]) dedup_warned |= w.get<std::string>().find("duplicate") != std::string::npos;
  EXPECT_TRUE(dedup_warned);
  EXPECT_NE(last_err_.find("duplicate"), std::string::npos);
  const auto t = read_loss_table((out / "loss_table.csv").string());
  EXPECT_EQ(t.rows.size(), 6U);

  const auto bad = dir_ / "bad.csv";
  {
    std::ofstream os(bad);
    os << "Model Size,Training Tokens,loss\n1e8,1e10,3\n1e8,abc,3\n2e8,1e10\n";
  }
  EXPECT_EQ(run("ingest --input " + bad.string() + " --schema chinchilla --out " + out.string()), 3);
  EXPECT_NE(last_err_.find("line 3"), std::string::npos) << last_err_;
  EXPECT_NE(last_err_.find("line 4"), std::string::npos) << last_err_;
}

TEST_F(CliTest, Fit1dReport) {
  const auto table = write_table(0.005);
  const auto out = sub("f");
  ASSERT_EQ(run("fit-1d --table " + table.string() + " --n-boot 200 --seed 1 --out " + out.string()), 0) << last_err_;
  const auto j = read_json(out / "fit_1d.json");
  ASSERT_EQ(j["fits"].size(), 8U);
  const auto& r = j["fits"][0];
  for (const char* k : {"params", "ci", "mse", "exp_baseline_mse", "mse_ratio", "n_boot", "settings"})
    EXPECT_TRUE(r.contains(k)) << k;
  EXPECT_EQ(r["n_boot"], 200);
  EXPECT_LE(r["ci"]["beta"]["lo"].get<double>(), r["params"]["beta"].get<double>());
  EXPECT_GE(r["ci"]["beta"]["hi"].get<double>(), r["params"]["beta"].get<double>());
  EXPECT_TRUE(j.contains("summary"));

  const auto bare = sub("f0");
  ASSERT_EQ(run("fit-1d --table " + table.string() + " --n-boot 0 --seed 1 --out " + bare.string()), 0);
  const auto j0 = read_json(bare / "fit_1d.json");
  EXPECT_FALSE(j0["fits"][0].contains("ci"));
  EXPECT_TRUE(j0["fits"][0].contains("params"));
}

TEST_F(CliTest, Fit2dRecoversLaw) {
  const auto table = write_table();
  const auto out = sub("f");
  ASSERT_EQ(run("fit-2d --table " + table.string() + " --seed 1 --out " + out.string()), 0) << last_err_;
  const auto j = read_json(out / "fit_2d.json");
  EXPECT_NEAR(j["params"]["alpha"].get<double>(), 0.3473, 1e-4);
  EXPECT_NEAR(j["params"]["beta"].get<double>(), 0.3672, 1e-4);
  EXPECT_NEAR(j["frontier_closed_form"]["gamma"].get<double>(), 0.1785, 1e-3);
}

TEST_F(CliTest, FitFailureExitsTwo) {
  const auto path = dir_ / "one_n.csv";
  {
    LossTable t;
    for (int i = 0; i < 12; ++i) {
      LossRow r;
      r.run_id = std::to_string(i);
      r.n_params_total = r.n_params_nonembed = 1e9;
      r.tokens = 1e9 * (i + 1);
      r.loss = 2.0 + 1.0 / (i + 1);
      t.rows.push_back(r);
    }
    write_loss_table(path.string(), t);
  }
  EXPECT_EQ(run("fit-2d --form kaplan --table " + path.string() + " --seed 1 --out " + dir_.string()), 2);
}

TEST_F(CliTest, FrontierAndCompare) {
  const auto table = write_table(0.005);
  const auto fr = sub("fr");
  ASSERT_EQ(run("frontier --form chinchilla --table " + table.string() + " --frontier-boot 0 --seed 1 --out " +
                fr.string()),
            0)
      << last_err_;
  const auto j = read_json(fr / "frontier.json");
  EXPECT_NEAR(j["frontier"]["a_plus_b"].get<double>(), 1.0, 0.05);
  std::ifstream csv(fr / "frontier.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "C,L_opt,N_opt,D_opt,flagged");

  const auto cmp = sub("c");
  ASSERT_EQ(run("compare-fits --table " + table.string() + " --methods chinchilla_2d,kernel,1d --splits 3 --seed 2 --out " +
                cmp.string()),
            0)
      << last_err_;
  const auto c = read_json(cmp / "compare.json");
  for (const char* m : {"chinchilla_2d", "kernel", "1d"}) {
    ASSERT_TRUE(c["methods"].contains(m)) << m;
    for (const char* k : {"train_mse_mean", "val_mse_mean", "n_failures"}) EXPECT_TRUE(c["methods"][m].contains(k));
    EXPECT_EQ(c["methods"][m]["n_failures"], 0);
  }
}

TEST_F(CliTest, ReportsAreReproducible) {
  const auto table = write_table(0.005);
  const auto a = sub("a");
  const auto b = sub("b");
  const std::string args = "report --table " + table.string() + " --width 16 --epochs 200 --n-boot 100 --seed 3 --out ";
  ASSERT_EQ(run(args + a.string()), 0) << last_err_;
  ASSERT_EQ(run(args + b.string()), 0) << last_err_;
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
    ++compared;
  }
  EXPECT_GE(compared, 6U);
  const auto j = read_json(a / "report.json");
  for (const char* part : {"fit_2d", "loss_vs_d", "loss_vs_n", "frontier"}) EXPECT_EQ(j[part]["status"], "ok") << part;
}

TEST_F(CliTest, ConfigFile) {
  const auto table = write_table();
  const auto out = sub("f");
  const auto cfg = dir_ / "run.toml";
  {
    std::ofstream os(cfg);
    os << "# 1d fits along N\n[fit-1d]\ntable = \"" << table.string() << "\"\nvary = \"n\"\nn-boot = 0\nseed = 9\nout = \""
       << out.string() << "\"\n";
  }
  ASSERT_EQ(run("--config " + cfg.string() + " fit-1d"), 0) << last_err_;
  const auto j = read_json(out / "fit_1d.json");
  EXPECT_EQ(j["settings"]["vary"], "n");
  EXPECT_EQ(j["settings"]["seed"], 9);
  EXPECT_EQ(j["fits"].size(), 10U);
}

}  // namespace
}  // namespace slab
