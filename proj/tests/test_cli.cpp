#include "copulaflow/data.hpp"
#include "copulaflow/model_io.hpp"
#include "copulaflow/random.hpp"
#include "copulaflow/stats.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace copulaflow;
namespace fs = std::filesystem;

namespace {

const fs::path&
work()
{
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / "copulaflow_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    std::ofstream(p / "quick.ini") << "[marginal]\nbins = 16\nepochs = 5\nlearning_rate = 1e-2\n"
                                      "[copula]\nbins = 8\nlayers = 2\nhidden = 8\nepochs = 2\n";
    return p;
  }();
  return dir;
}

std::string
path(const std::string& name)
{
  return (work() / name).string();
}

struct Run
{
  int code;
  std::string out;
};

Run
cli(const std::string& args)
{
  const auto log = path("stdout.txt");
  const int status = std::system((std::string(COPULAFLOW_CLI) + " " + args + " > " + log + " 2>&1").c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return { WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str() };
}

std::string
slurp(const std::string& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

//! Mixed-vine benchmark and a quick model fitted to it, built once.
const std::string&
mixed_model()
{
  static const std::string model = [] {
    EXPECT_EQ(cli("bench --name mixed-vine --n 1500 --seed 1 --out-dir " + path("mv")).code, 0);
    const auto m = path("mv.cfm");
    EXPECT_EQ(cli("fit --data " + path("mv/data.csv") + " --schema " + path("mv/schema.txt") + " --config " +
                  path("quick.ini") + " --out " + m + " --seed 3")
                .code,
              0);
    return m;
  }();
  return model;
}

} // namespace

TEST(Cli, UsageErrorsExitWithOne)
{
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("sample --model x --n 3 --out y --colour red").code, 1);
  EXPECT_EQ(cli("bench --name three-rings --n 10 --out-dir " + path("b")).code, 1);
  EXPECT_EQ(cli("bench --name copula:clayton:-3 --n 10 --out-dir " + path("b")).code, 1);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, MissingSchemaExitsWithOne)
{
  ASSERT_EQ(cli("bench --name two-rings --n 300 --seed 1 --out-dir " + path("tr")).code, 0);
  const auto r = cli("fit --data " + path("tr/data.csv") + " --schema " + path("nope.txt") + " --out " +
                     path("x.cfm"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("nope.txt"), std::string::npos) << r.out;
}

TEST(Cli, FitIsDeterministic)
{
  ASSERT_EQ(cli("bench --name two-rings --n 2000 --seed 2 --out-dir " + path("tr2")).code, 0);
  const std::string common = "fit --data " + path("tr2/data.csv") + " --schema " + path("tr2/schema.txt") +
                             " --config " + path("quick.ini") + " --seed 5 --out ";
  const auto a = cli(common + path("a.cfm"));
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("stage 1"), std::string::npos);
  EXPECT_LT(a.out.find("stage 1"), a.out.find("stage 2"));
  ASSERT_EQ(cli(common + path("b.cfm")).code, 0);
  EXPECT_EQ(slurp(path("a.cfm")), slurp(path("b.cfm")));
  EXPECT_EQ(slurp(path("a.cfm.trace.csv")).rfind("stage,epoch,train_nll,val_nll\n", 0), 0u);
}

TEST(Cli, SampleWritesSchemaConformingRows)
{
  const auto& m = mixed_model();
  ASSERT_EQ(cli("sample --model " + m + " --n 0 --out " + path("empty.csv")).code, 0);
  EXPECT_EQ(slurp(path("empty.csv")), "x1,x2,x3\n");

  ASSERT_EQ(cli("sample --model " + m + " --n 200 --seed 4 --out " + path("s1.csv")).code, 0);
  ASSERT_EQ(cli("sample --model " + m + " --n 200 --seed 4 --out " + path("s2.csv")).code, 0);
  EXPECT_EQ(slurp(path("s1.csv")), slurp(path("s2.csv")));

  const auto model = load_model(m);
  const auto codecs = model.codecs();
  const auto back = load_csv(path("s1.csv"), model.schema, &codecs);
  EXPECT_EQ(back.rows(), 200);
}

TEST(Cli, ModelFileErrorsExitWithTwo)
{
  EXPECT_EQ(cli("sample --model " + path("missing.cfm") + " --n 3 --out " + path("o.csv")).code, 2);
  auto bytes = slurp(mixed_model());
  bytes[bytes.size() / 2] ^= 0x20;
  std::ofstream(path("bad.cfm"), std::ios::binary) << bytes;
  EXPECT_EQ(cli("sample --model " + path("bad.cfm") + " --n 3 --out " + path("o.csv")).code, 2);
}

TEST(Cli, EvalPrintsAdditiveDecomposition)
{
  const auto r = cli("eval --model " + mixed_model() + " --data " + path("mv/data.csv") + " --target x3");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream in(r.out);
  std::string line;
  double total = 0.0, parts = 0.0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "total")
      ls >> total;
    else if (word == "copula")
      parts += std::stod(line.substr(6));
    else if (word == "marginal") {
      std::string name;
      double v = 0.0;
      ls >> name >> v;
      parts += v;
    }
  }
  EXPECT_TRUE(std::isfinite(total));
  EXPECT_NE(total, 0.0);
  EXPECT_NEAR(total, parts, 1e-9);
  EXPECT_NE(r.out.find("column KS"), std::string::npos);
  EXPECT_NE(r.out.find("efficacy"), std::string::npos);
}

TEST(Cli, ConstantTargetExitsWithTwo)
{
  {
    std::ofstream out(path("const.csv"));
    out << "x1,x2,x3\n";
    for (int i = 0; i < 40; ++i)
      out << 0.05 * i << ',' << 2 + i % 4 << ",1.5\n";
  }
  const auto r = cli("eval --model " + mixed_model() + " --data " + path("const.csv") + " --target x3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("constant"), std::string::npos) << r.out;
}

TEST(Cli, TransformOfIdentityModelIsTheInput)
{
  FittedModel model;
  std::istringstream s("a,continuous,0,1\nb,continuous,0,1\n");
  model.schema = parse_schema(s);
  model.marginals = { MarginalFlowModel::affine(8, 0.0, 1.0, "a"), MarginalFlowModel::affine(8, 0.0, 1.0, "b") };
  model.copula = build_copula_flow(2, { 8 }, 8, 2, 0);
  save_model(model, path("identity.cfm"));

  Rng rng(3);
  const auto data = dataset_from_matrix(model.schema, rng.uniform_matrix(500, 2));
  save_csv(data, path("u.csv"));
  ASSERT_EQ(cli("transform --model " + path("identity.cfm") + " --data " + path("u.csv") + " --out " +
                path("t.csv"))
              .code,
            0);
  const auto t = load_csv(path("t.csv"), model.schema);
  ASSERT_EQ(t.rows(), 500);
  EXPECT_LT((t.values - data.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cli, TransformOutputIsInTheUnitInterval)
{
  ASSERT_EQ(cli("transform --model " + mixed_model() + " --data " + path("mv/data.csv") + " --out " +
                path("mv_u.csv") + " --seed 2")
              .code,
            0);
  std::istringstream s("x1,continuous\nx2,continuous\nx3,continuous\n");
  const auto u = load_csv(path("mv_u.csv"), parse_schema(s));
  EXPECT_EQ(u.rows(), 1500);
  EXPECT_GE(u.values.minCoeff(), 0.0);
  EXPECT_LE(u.values.maxCoeff(), 1.0);
}

TEST(Cli, BenchFixtures)
{
  ASSERT_EQ(cli("bench --name mixed-vine --n 10 --seed 1 --out-dir " + path("mv10")).code, 0);
  EXPECT_EQ(load_schema(path("mv10/schema.txt")).columns[1].kind, ColumnKind::ordinal);

  ASSERT_EQ(cli("bench --name two-rings --n 50 --seed 1 --out-dir " + path("tr50")).code, 0);
  const auto tr = load_csv(path("tr50/data.csv"), load_schema(path("tr50/schema.txt")));
  EXPECT_EQ(tr.rows(), 50);
  EXPECT_EQ(tr.cols(), 2);

  const auto r = cli("bench --name copula:clayton:2.0 --n 10000 --seed 3 --out-dir " + path("cl"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("clayton"), std::string::npos) << r.out;
  const auto c = load_csv(path("cl/data.csv"), load_schema(path("cl/schema.txt")));
  Rng rng(8);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const Eigen::VectorXd ref = rng.uniform_matrix(10000, 1);
    EXPECT_GT(ks_two_sample(c.values.col(j), ref).p_value, 0.01);
  }
}

TEST(Cli, PlotFiles)
{
  const auto r = cli("plot --model " + mixed_model() + " --data " + path("mv/data.csv") + " --out " + path("plots"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t pairs = 0, marginals = 0;
  for (const auto& e : fs::directory_iterator(path("plots"))) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".svg") {
      (name.rfind("pair_", 0) == 0 ? pairs : marginals) += 1;
      const auto svg = slurp(e.path().string());
      EXPECT_EQ(svg.rfind("<svg ", 0), 0u);
      EXPECT_NE(svg.find("</svg>"), std::string::npos);
    }
  }
  EXPECT_EQ(pairs, 3u);
  EXPECT_EQ(marginals, 3u);

  std::ofstream(path("header_only.csv")) << "x1,x2,x3\n";
  EXPECT_EQ(cli("plot --model " + mixed_model() + " --data " + path("header_only.csv") + " --out " +
                path("plots_empty"))
              .code,
            2);
}
