#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fairpen/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace fairpen;
namespace fs = std::filesystem;

namespace {

const fs::path root = fs::path(FAIRPEN_TEST_TMP) / "cli";

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "fairpen");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text)
{
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

// Synthetic CSV, schema and config written once per process.
const fs::path& workspace()
{
    static const fs::path dir = [] {
        fs::remove_all(root);
        const auto d = synth_bias({400, 2.0, 1.0, 3, false});
        std::ostringstream csv;
        csv << "x1,x2,x3,sex,label\n";
        for (Eigen::Index i = 0; i < d.x().rows(); ++i) {
            csv << format_number(d.x()(i, 0)) << ',' << format_number(d.x()(i, 1)) << ',' << format_number(d.x()(i, 2)) << ','
                << (d.a()(i, 0) == 1.0 ? "F" : "M") << ',' << format_number(d.y()[i]) << '\n';
        }
        spit(root / "data.csv", csv.str());
        spit(root / "schema.json", R"({"columns": [
  {"name": "x1", "role": "feature", "kind": "continuous"},
  {"name": "x2", "role": "feature", "kind": "continuous"},
  {"name": "x3", "role": "feature", "kind": "continuous"},
  {"name": "sex", "role": "sensitive", "kind": "categorical", "categories": ["M", "F"]},
  {"name": "label", "role": "outcome", "kind": "binary"}
]})");
        spit(root / "run.ini", "[data]\npath = data.csv\nschema = schema.json\n\n[model]\nwidth = 8\n\n"
                               "[train]\niterations = 30 ; T\neval_interval = 10 # snapshots\nbatch_size = 32\nratio_iterations = 20\nseed = 4\n\n"
                               "[output]\ndir = runs\n");
        return root;
    }();
    return dir;
}

std::string config()
{
    return (workspace() / "run.ini").string();
}

} // namespace

TEST_CASE("train writes one directory per lambda")
{
    const Outcome r = cli({"train", "--config", config(), "--run-id", "grid", "--lambda", "0.1", "--lambda", "0.5", "--lambda", "0.9"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    for (const char* name : {"lambda=0.1", "lambda=0.5", "lambda=0.9"}) {
        const fs::path dir = workspace() / "runs" / "grid" / name;
        CHECK(fs::exists(dir / "snapshots.csv"));
        CHECK(fs::exists(dir / "h.ckpt"));
        CHECK(fs::exists(dir / "d.ckpt"));
        CHECK(fs::exists(dir / "settings.ini"));
        CHECK(r.out.find(dir.string()) != std::string::npos);
    }
    const auto rows = read_csv_rows(workspace() / "runs" / "grid" / "lambda=0.5" / "snapshots.csv");
    REQUIRE(rows.size() == 7);
    CHECK(rows[0].front() == "iteration");
    CHECK(rows[0][1] == "split");
    CHECK(rows[0].back() == "checkpoint_id");
    CHECK(rows.back()[0] == "30");
    CHECK(rows.back()[1] == "validation");

    const Outcome again = cli({"train", "--config", config(), "--run-id", "grid", "--lambda", "0.5"});
    CHECK(again.code != 0);
    CHECK(again.err.find("exists") != std::string::npos);
}

TEST_CASE("rerun with the same seed is byte-identical")
{
    const std::string before = slurp(workspace() / "runs" / "grid" / "lambda=0.5" / "snapshots.csv");
    REQUIRE_FALSE(before.empty());
    const Outcome r = cli({"train", "--config", config(), "--run-id", "grid", "--lambda", "0.5", "--force"});
    REQUIRE(r.code == 0);
    CHECK(slurp(workspace() / "runs" / "grid" / "lambda=0.5" / "snapshots.csv") == before);
    const Outcome other = cli({"train", "--config", config(), "--run-id", "other-seed", "--lambda", "0.5", "--seed", "99"});
    REQUIRE(other.code == 0);
    CHECK(slurp(workspace() / "runs" / "other-seed" / "lambda=0.5" / "snapshots.csv") != before);
}

TEST_CASE("geo criterion writes the ratio table")
{
    const Outcome r = cli({"train", "--config", config(), "--run-id", "geo", "--criterion", "geo", "--lambda", "0.5"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const fs::path dir = workspace() / "runs" / "geo" / "lambda=0.5";
    CHECK(fs::exists(dir / "beta.ckpt"));
    const auto rows = read_csv_rows(dir / "beta_table.csv");
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == std::vector<std::string> {"sex", "label", "ratio"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(std::stod(rows[i][2]) > 0.0);
    }
}

TEST_CASE("evaluate reproduces the final validation snapshot")
{
    const Outcome t = cli({"train", "--config", config(), "--run-id", "erm", "--lambda", "0"});
    REQUIRE(t.code == 0);
    const fs::path dir = workspace() / "runs" / "erm" / "lambda=0";
    const auto snapshots = read_csv_rows(dir / "snapshots.csv");
    const Outcome e = cli({"evaluate", "--config", config(), "--checkpoint", (dir / "h.ckpt").string(), "--out", (dir / "eval.csv").string()});
    INFO(e.err);
    REQUIRE(e.code == 0);
    const auto report = read_csv_rows(dir / "eval.csv");
    REQUIRE(report.size() == 2);
    auto last = snapshots.back();
    // Drop iteration and checkpoint_id; split stays in front.
    std::vector<std::string> expected(last.begin() + 1, last.end() - 1);
    CHECK(report[1] == expected);
    CHECK(report[0][0] == "split");

    spit(dir / "broken.ckpt", "NOPE this is not a checkpoint");
    const Outcome bad = cli({"evaluate", "--config", config(), "--checkpoint", (dir / "broken.ckpt").string()});
    CHECK(bad.code != 0);
    CHECK(bad.err.find("broken.ckpt") != std::string::npos);
}

TEST_CASE("evaluate rejects a checkpoint of the wrong width")
{
    const fs::path other = workspace() / "narrow";
    spit(other / "data.csv", "x1,sex,label\n0.1,M,0\n0.5,F,1\n0.3,M,1\n0.9,F,0\n0.2,M,0\n");
    spit(other / "schema.json", R"({"columns": [
  {"name": "x1", "role": "feature", "kind": "continuous"},
  {"name": "sex", "role": "sensitive", "kind": "categorical", "categories": ["M", "F"]},
  {"name": "label", "role": "outcome", "kind": "binary"}
]})");
    const fs::path ckpt = workspace() / "runs" / "grid" / "lambda=0.1" / "h.ckpt";
    const Outcome r = cli({"evaluate", "--data", (other / "data.csv").string(), "--schema", (other / "schema.json").string(), "--checkpoint", ckpt.string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("expects 3 input features") != std::string::npos);
    CHECK(r.err.find("encodes to 1") != std::string::npos);
}

TEST_CASE("pareto over snapshot files")
{
    const std::string header = "iteration,split,utility_name,utility_value,sex_sp,sex_ks_gsp,sex_eo,sex_ks_geo,sex_gsp_groups,sex_geo_groups,threshold,checkpoint_id\n";
    const fs::path single = workspace() / "pareto" / "one" / "lambda=0.5" / "snapshots.csv";
    spit(single, header + "10,validation,auc,0.7,0.1,0.2,0.1,0.2,2,4,0.5,iter-10\n10,train,auc,0.9,0.1,0.0,0.1,0.2,2,4,0.5,iter-10\n");
    Outcome r = cli({"pareto", single.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out == "run_id,iteration,utility,fairness_metric_name,fairness_value,on_frontier\none/lambda=0.5,10,0.7,sex_ks_gsp,0.2,1\n");

    const fs::path three = workspace() / "pareto" / "three" / "lambda=0.1" / "snapshots.csv";
    spit(three, header + "1,validation,auc,0.5,0,0.5,0,0,2,4,0.5,iter-1\n2,validation,auc,0.4,0,0.4,0,0,2,4,0.5,iter-2\n"
                         "3,validation,auc,0.6,0,0.4,0,0,2,4,0.5,iter-3\n");
    const fs::path out = workspace() / "pareto" / "frontier.csv";
    const fs::path summary = workspace() / "pareto" / "summary.csv";
    r = cli({"pareto", three.string(), "--out", out.string(), "--threshold", "0.45", "--summary", summary.string()});
    REQUIRE(r.code == 0);
    const auto rows = read_csv_rows(out);
    REQUIRE(rows.size() == 4);
    CHECK(rows[1].back() == "0");
    CHECK(rows[2].back() == "0");
    CHECK(rows[3].back() == "1");
    CHECK(slurp(summary) == "k,count,mean,stddev\n5,1,0.4,0\n");

    const fs::path mismatched = workspace() / "pareto" / "bad" / "lambda=0.5" / "snapshots.csv";
    spit(mismatched, "iteration,split,utility_name,utility_value,race_sp,threshold,checkpoint_id\n1,validation,auc,0.5,0.1,0.5,iter-1\n");
    r = cli({"pareto", single.string(), mismatched.string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("race_sp") != std::string::npos);
    CHECK(r.err.find("sex_ks_gsp") != std::string::npos);
}

TEST_CASE("ratio toy on a tiny sample")
{
    const Outcome r = cli({"ratio-toy", "--n", "10", "-L", "50", "--batch", "4"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "cell,true_ratio,estimated_ratio,abs_error");
    CHECK(cli({"ratio-toy", "--n", "10", "-L", "50", "--batch", "4"}).out == r.out);
}

TEST_CASE("bad input exits nonzero")
{
    spit(workspace() / "bad.ini", "[train]\nlearning_rat = 0.1\n");
    Outcome r = cli({"train", "--config", (workspace() / "bad.ini").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("learning_rat") != std::string::npos);

    spit(workspace() / "bad_lambda.ini", "[data]\npath = data.csv\nschema = schema.json\n[train]\nlambda = 0.2, 1.7\n");
    r = cli({"train", "--config", (workspace() / "bad_lambda.ini").string()});
    CHECK(r.code != 0);

    r = cli({"train", "--config", (workspace() / "missing.ini").string()});
    CHECK(r.code != 0);
    r = cli({"frobnicate"});
    CHECK(r.code != 0);
    r = cli({"evaluate"});
    CHECK(r.code != 0);
}
