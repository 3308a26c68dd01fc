#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

const std::string kCli = RERAND_CLI_PATH;

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + kCli + "\" " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out << content;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json manifest_for(const std::string& out_path) {
    return nlohmann::json::parse(slurp(out_path + ".manifest.json"));
}

int count_treated(const std::string& assignment_csv) {
    std::istringstream in(assignment_csv);
    std::string line;
    std::getline(in, line);  // header
    int treated = 0;
    while (std::getline(in, line)) {
        if (line.size() >= 2 && line.substr(line.size() - 2) == ",1") ++treated;
    }
    return treated;
}

const std::string kToyCsv =
    "x1,x2\n"
    "0.5,1.2\n"
    "-0.3,0.7\n"
    "1.1,-0.4\n"
    "-0.8,0.1\n"
    "0.2,-1.5\n"
    "0.9,0.3\n"
    "-1.2,0.8\n"
    "0.4,-0.6\n";

}  // namespace

TEST_CASE("sample draws a balanced assignment and writes a manifest", "[cli]") {
    write_file("cli_toy.csv", kToyCsv);
    const int rc = run_cli(
        "sample --covariates cli_toy.csv --n1 4 --method lgr "
        "--p-accept 0.5 --seed 11 --out cli_a1.csv");
    REQUIRE(rc == 0);

    const std::string csv = slurp("cli_a1.csv");
    CHECK(csv.rfind("unit_index,assignment\n", 0) == 0);
    CHECK(count_treated(csv) == 4);

    const nlohmann::json m = manifest_for("cli_a1.csv");
    CHECK(m["command"] == "sample");
    CHECK(m["master_seed"].get<std::uint64_t>() == 11);
    CHECK(m["config"]["method"] == "lgr");
    CHECK(m["config"]["header"] == "auto");
    CHECK(m["config"]["n1"] == 4);
    CHECK(m["extra"]["n"] == 8);
    CHECK(m["extra"]["d"] == 2);
    CHECK(m["extra"]["m_value"].get<double>() <=
          m["extra"]["threshold_a"].get<double>());
    CHECK(m["outputs"] == nlohmann::json::array({"cli_a1.csv"}));
    CHECK_FALSE(m["version"].get<std::string>().empty());

    // Same seed, same assignment, byte for byte.
    REQUIRE(run_cli("sample --covariates cli_toy.csv --n1 4 --method lgr "
                    "--p-accept 0.5 --seed 11 --out cli_a2.csv") == 0);
    CHECK(slurp("cli_a2.csv") == csv);

    // A different seed changes the draw (for this configuration).
    REQUIRE(run_cli("sample --covariates cli_toy.csv --n1 4 --method lgr "
                    "--p-accept 0.5 --seed 12 --out cli_a3.csv") == 0);
    CHECK(slurp("cli_a3.csv") != csv);
}

TEST_CASE("an omitted seed is drawn, recorded and replayable", "[cli]") {
    write_file("cli_toy.csv", kToyCsv);
    REQUIRE(run_cli("sample --covariates cli_toy.csv --n1 4 --method arr "
                    "--p-accept 0.5 --out cli_b1.csv") == 0);
    const nlohmann::json m = manifest_for("cli_b1.csv");
    const std::uint64_t seed = m["master_seed"].get<std::uint64_t>();

    REQUIRE(run_cli("sample --covariates cli_toy.csv --n1 4 --method arr "
                    "--p-accept 0.5 --seed " +
                    std::to_string(seed) + " --out cli_b2.csv") == 0);
    CHECK(slurp("cli_b2.csv") == slurp("cli_b1.csv"));
}

TEST_CASE("complete randomization accepts the first draw", "[cli]") {
    write_file("cli_toy.csv", kToyCsv);
    REQUIRE(run_cli("sample --covariates cli_toy.csv --n1 4 --method cr "
                    "--seed 3 --out cli_cr.csv") == 0);
    const nlohmann::json m = manifest_for("cli_cr.csv");
    CHECK(m["extra"]["iterations"] == 0);
}

TEST_CASE("header modes are honored end to end", "[cli]") {
    write_file("cli_headed.csv", "9,9\n1,2\n3,4\n5,6\n7,8\n2,1\n");
    REQUIRE(run_cli("sample --covariates cli_headed.csv --header skip --n1 2 "
                    "--method cr --seed 1 --out cli_h1.csv") == 0);
    CHECK(manifest_for("cli_h1.csv")["extra"]["n"] == 5);

    REQUIRE(run_cli("sample --covariates cli_headed.csv --header data --n1 3 "
                    "--method cr --seed 1 --out cli_h2.csv") == 0);
    CHECK(manifest_for("cli_h2.csv")["extra"]["n"] == 6);

    write_file("cli_alpha.csv", "a,b\n1,2\n3,4\n5,6\n7,8\n");
    CHECK(run_cli("sample --covariates cli_alpha.csv --header data --n1 2 "
                  "--method cr --seed 1 --out cli_h3.csv") == 2);
}

TEST_CASE("degenerate covariates exit with the numerical code", "[cli]") {
    write_file("cli_dup.csv", "1,1\n2,2\n3,3\n4,4\n5,5\n6,6\n");
    CHECK(run_cli("sample --covariates cli_dup.csv --n1 3 --seed 1 "
                  "--out cli_dup_out.csv") == 3);
}

TEST_CASE("usage problems exit with the input code", "[cli]") {
    write_file("cli_toy.csv", kToyCsv);
    CHECK(run_cli("") == 2);  // a subcommand is required
    CHECK(run_cli("sample --covariates cli_toy.csv") == 2);  // --n1 missing
    CHECK(run_cli("sample --covariates cli_toy.csv --n1 4 --frobnicate") == 2);
    CHECK(run_cli("sample --covariates cli_toy.csv --n1 4 --method brain "
                  "--seed 1") == 2);
    CHECK(run_cli("sample --covariates cli_missing.csv --n1 4 --seed 1") == 2);
    CHECK(run_cli("sample --covariates cli_toy.csv --n1 4 --header maybe "
                  "--seed 1") == 2);
    CHECK(run_cli("--version") == 0);
}

TEST_CASE("an exhausted sampler budget exits with the budget code", "[cli]") {
    write_file("cli_pow2.csv", "1\n2\n4\n8\n16\n32\n");
    CHECK(run_cli("sample --covariates cli_pow2.csv --n1 3 --method psrr "
                  "--p-accept 1e-9 --psrr-max-sweeps 1 --seed 5 "
                  "--out cli_pow2_out.csv") == 4);
}

TEST_CASE("config files apply only their own section", "[cli]") {
    write_file("cli_toy.csv", kToyCsv);
    write_file("cli_cfg.ini",
               "[sample]\n"
               "p-accept=0.25\n"
               "method=arr\n"
               "\n"
               "[infer]\n"
               "reps=7\n");
    REQUIRE(run_cli("sample --covariates cli_toy.csv --n1 4 --seed 9 "
                    "--config cli_cfg.ini --out cli_cfg_out.csv") == 0);
    const nlohmann::json m = manifest_for("cli_cfg_out.csv");
    CHECK(m["config"]["p_accept"] == 0.25);
    CHECK(m["config"]["method"] == "arr");

    // Unknown keys inside the applying section are rejected.
    write_file("cli_bad.ini", "[sample]\nfrobnicate=1\n");
    CHECK(run_cli("sample --covariates cli_toy.csv --n1 4 --seed 9 "
                  "--config cli_bad.ini --out cli_bad_out.csv") == 2);
}

TEST_CASE("study CSVs rerun byte-identically from the manifest seed", "[cli]") {
    const std::string base =
        "estimate --n 40 --dims 2,4 --methods cr,lgr --reps 20 "
        "--p-accept 0.2 --seed 77 ";
    REQUIRE(run_cli(base + "--workers 1 --out cli_est1.csv") == 0);
    REQUIRE(run_cli(base + "--workers 3 --out cli_est2.csv") == 0);
    CHECK(slurp("cli_est1.csv") == slurp("cli_est2.csv"));

    const nlohmann::json m = manifest_for("cli_est1.csv");
    CHECK(m["command"] == "estimate");
    CHECK(m["master_seed"] == 77);
    CHECK(m["config"]["n"] == 40);
    CHECK(m["config"]["dims"] == nlohmann::json::array({2, 4}));

    const std::string csv = slurp("cli_est1.csv");
    CHECK(csv.rfind("method,d,", 0) == 0);
    // Two methods, two dimensions: header plus four rows.
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("benchmark, infer and sensitivity produce their tables", "[cli]") {
    REQUIRE(run_cli("benchmark --n 16 --dims 2 --methods cr,arr --reps 5 "
                    "--p-accept 0.5 --seed 4 --out cli_bench.csv") == 0);
    const std::string bench = slurp("cli_bench.csv");
    CHECK(bench.rfind("method,d,mean_time_s,", 0) == 0);
    CHECK(bench.find("\ncr,2,") != std::string::npos);
    CHECK(bench.find("\narr,2,") != std::string::npos);
    CHECK(manifest_for("cli_bench.csv")["command"] == "benchmark");

    REQUIRE(run_cli("infer --n 16 --dims 2 --methods cr --reps 3 "
                    "--frt-reps 19 --p-accept 0.5 --seed 4 "
                    "--out cli_inf.csv") == 0);
    const std::string inf = slurp("cli_inf.csv");
    CHECK(inf.find("\ncr,2,") != std::string::npos);
    CHECK(std::count(inf.begin(), inf.end(), '\n') == 2);

    REQUIRE(run_cli("sensitivity --n 16 --dims 2 --reps 5 --p-accept 0.5 "
                    "--deltas 0.5,0.1 --etas 1 --seed 4 "
                    "--out cli_sens.csv") == 0);
    const std::string sens = slurp("cli_sens.csv");
    CHECK(sens.rfind("method,d,delta,eta,", 0) == 0);
    CHECK(std::count(sens.begin(), sens.end(), '\n') == 3);
    const nlohmann::json m = manifest_for("cli_sens.csv");
    CHECK(m["config"]["deltas"] == nlohmann::json::array({0.5, 0.1}));
    CHECK(m["config"]["master_seed"] == 4);
}
