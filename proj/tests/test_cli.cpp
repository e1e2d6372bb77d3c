#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return HEADPOSE_CLI_PATH; }

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& out_dir) {
    const fs::path log = out_dir / "cli_log.txt";
    const std::string cmd = std::string(cli_path()) + " --out-dir " + out_dir.string() + " " +
                            args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream buf;
    buf << in.rdbuf();
    int code = -1;
    if (WIFEXITED(status)) code = WEXITSTATUS(status);
    return {code, buf.str()};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kGenArgs =
    "gen-data --seed 9 --count 30 --templates 4 --focal 240 --keep-face-in-frame "
    "--sigma-min 1.0 --sigma-max 1.0";

}  // namespace

TEST_CASE("gen-data writes a loadable dataset and reports its hash") {
    const fs::path dir = fresh_dir("headpose_cli_gen");
    const RunResult res = run_cli(kGenArgs + " --out train.jsonl", dir);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("wrote 30 records") != std::string::npos);
    CHECK(res.output.find("dataset hash:") != std::string::npos);
    CHECK(fs::exists(dir / "train.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("gen-data is byte-deterministic for a fixed seed") {
    const fs::path dir = fresh_dir("headpose_cli_det");
    run_cli(kGenArgs + " --out a.jsonl", dir);
    run_cli(kGenArgs + " --out b.jsonl", dir);
    CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
    const RunResult other = run_cli(
        "gen-data --seed 10 --count 30 --templates 4 --focal 240 --keep-face-in-frame --out c.jsonl",
        dir);
    CHECK(other.exit_code == 0);
    CHECK(read_file(dir / "a.jsonl") != read_file(dir / "c.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("train then eval produce reports with embedded hash and version") {
    const fs::path dir = fresh_dir("headpose_cli_train");
    run_cli(kGenArgs + " --out train.jsonl", dir);
    const RunResult tr = run_cli(
        "train --data " + (dir / "train.jsonl").string() +
            " --model-out model.json --seed 3 --iterations 1 --epochs 1 --batch 8 --hidden 8",
        dir);
    CHECK(tr.exit_code == 0);
    CHECK(fs::exists(dir / "model.json"));

    const RunResult ev = run_cli("eval --data " + (dir / "train.jsonl").string() + " --model " +
                                     (dir / "model.json").string() +
                                     " --iterations 1 --report eval1 --threads 1",
                                 dir);
    CHECK(ev.exit_code == 0);
    CHECK(fs::exists(dir / "eval1.csv"));
    CHECK(fs::exists(dir / "eval1.json"));
    const auto report = nlohmann::json::parse(read_file(dir / "eval1.json"));
    CHECK(report.at("code_version").is_string());
    CHECK(report.at("dataset_hashes").size() == 1);
    fs::remove_all(dir);
}

TEST_CASE("eval reports are byte-identical across runs modulo timing") {
    const fs::path dir = fresh_dir("headpose_cli_repro");
    run_cli(kGenArgs + " --out d.jsonl", dir);
    const std::string eval_args = "eval --data " + (dir / "d.jsonl").string() +
                                  " --oracle-alpha 0.5 --iterations 3 --threads 2 --report ";
    run_cli(eval_args + "r1", dir);
    run_cli(eval_args + "r2", dir);
    CHECK(read_file(dir / "r1.csv") == read_file(dir / "r2.csv"));
    auto a = nlohmann::json::parse(read_file(dir / "r1.json"));
    auto b = nlohmann::json::parse(read_file(dir / "r2.json"));
    a.erase("timing");
    b.erase("timing");
    CHECK(a.dump() == b.dump());
    fs::remove_all(dir);
}

TEST_CASE("eval with the oracle exports traces on request") {
    const fs::path dir = fresh_dir("headpose_cli_trace");
    run_cli(kGenArgs + " --out t.jsonl", dir);
    const RunResult ev = run_cli("eval --data " + (dir / "t.jsonl").string() +
                                     " --oracle-alpha 1.0 --trace-samples 2 --report tr",
                                 dir);
    CHECK(ev.exit_code == 0);
    const std::string traces = read_file(dir / "tr_traces.jsonl");
    CHECK(std::count(traces.begin(), traces.end(), '\n') == 6);  // 2 samples x 3 iterations
    fs::remove_all(dir);
}

TEST_CASE("distribution-report emits the overlap summary") {
    const fs::path dir = fresh_dir("headpose_cli_dist");
    const RunResult res = run_cli("distribution-report --seed 5 --count 80 --report dist", dir);
    CHECK(res.exit_code == 0);
    const auto j = nlohmann::json::parse(read_file(dir / "dist.json"));
    CHECK(j.at("overlap").at("tz").get<double>() == 0.0);
    CHECK(j.at("overlap").at("s").get<double>() >= 0.95);
    fs::remove_all(dir);
}

TEST_CASE("config file values are overridden by flags") {
    const fs::path dir = fresh_dir("headpose_cli_cfg");
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "[gen-data]\nseed=9\ncount=30\ntemplates=4\nfocal=240\nkeep-face-in-frame=true\n"
               "out=from_config.jsonl\n";
    }
    const RunResult a = run_cli("--config " + (dir / "run.cfg").string() + " gen-data", dir);
    CHECK(a.exit_code == 0);
    CHECK(fs::exists(dir / "from_config.jsonl"));
    const RunResult b = run_cli(
        "--config " + (dir / "run.cfg").string() + " gen-data --out flag_wins.jsonl", dir);
    CHECK(b.exit_code == 0);
    CHECK(fs::exists(dir / "flag_wins.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("exit codes distinguish config and i/o failures") {
    const fs::path dir = fresh_dir("headpose_cli_codes");
    CHECK(run_cli("gen-data --count 5", dir).exit_code == 2);  // missing required seed
    CHECK(run_cli("no-such-command", dir).exit_code == 2);
    CHECK(run_cli("eval --data /nonexistent.jsonl --oracle-alpha 1.0", dir).exit_code == 3);
    CHECK(run_cli("gen-data --seed 1 --count 5 --scenario bogus", dir).exit_code == 2);
    fs::remove_all(dir);
}
