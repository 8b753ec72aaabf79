// End-to-end tests driving the installed binary through std::system.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iterseg/nrrd.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "iterseg_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run_cli(const std::string& args) {
    const fs::path log = work_dir() / "last_run.log";
    const std::string cmd =
        std::string(ITERSEG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    REQUIRE(out.good());
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Phantom + oracle segmentation shared by several cases.
struct OracleRun {
    fs::path image, ref_mask, auto_mask, report;
};

const OracleRun& oracle_run() {
    static const OracleRun r = [] {
        const fs::path d = work_dir();
        OracleRun run{d / "o.image.nrrd", d / "o.mask.nrrd", d / "o.auto.nrrd", d / "o.eval.json"};
        write_file(d / "o.phantom.cfg",
                   "phantom.dims = 40 40 56\n"
                   "phantom.n_instances = 4\n"
                   "phantom.label_start = 3\n"
                   "phantom.seed = 11\n");
        write_file(d / "o.seg.cfg", "traversal.v_min = 50\n");
        auto p = run_cli("phantom " + (d / "o.phantom.cfg").string() + " " + run.image.string() +
                         " " + run.ref_mask.string());
        REQUIRE(p.exit_code == 0);
        auto s = run_cli("segment " + run.image.string() + " " + run.auto_mask.string() +
                         " --oracle --reference " + run.ref_mask.string() +
                         " --direction up --config " + (d / "o.seg.cfg").string() + " --trace " +
                         (d / "o.trace.jsonl").string());
        REQUIRE(s.exit_code == 0);
        auto e = run_cli("evaluate " + run.ref_mask.string() + " " + run.auto_mask.string() + " " +
                         run.report.string());
        REQUIRE(e.exit_code == 0);
        return run;
    }();
    return r;
}

}  // namespace

TEST_CASE("cli: no subcommand or bad flags exit with code 2", "[cli]") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("segment only_one_positional").exit_code == 2);
    const auto help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("segment") != std::string::npos);
}

TEST_CASE("cli: phantom writes a readable image/mask pair", "[cli]") {
    const auto& run = oracle_run();
    const auto image = iterseg::read_nrrd_image(run.image.string());
    const auto mask = iterseg::read_nrrd_mask(run.ref_mask.string());
    CHECK(image.dims == iterseg::Vec3i{40, 40, 56});
    CHECK(mask.records.size() == 4);
    CHECK(mask.records.count(1) == 1);
    CHECK(mask.records.at(1).anatomical_label == 3);
}

TEST_CASE("cli: oracle segmentation reproduces the reference exactly", "[cli]") {
    const auto& run = oracle_run();
    const auto report = nlohmann::json::parse(slurp(run.report));
    CHECK(report.at("aggregates").at("dice_mean").get<double>() == 1.0);
    CHECK(report.at("aggregates").at("dice_count").get<int>() == 4);
    CHECK(report.at("aggregates").at("identification_accuracy").get<double>() == 1.0);
    CHECK(report.at("aggregates").at("completeness_accuracy").get<double>() == 1.0);
    CHECK(report.at("instances").size() == 4);
    for (const auto& inst : report.at("instances")) {
        CHECK(inst.at("identified").get<bool>());
        CHECK(inst.at("dice").get<double>() == 1.0);
    }
}

TEST_CASE("cli: segmentation report carries refined labels and a trace", "[cli]") {
    const auto& run = oracle_run();
    const auto report = nlohmann::json::parse(slurp(fs::path(run.auto_mask.string() + ".report.json")));
    CHECK(report.at("direction").get<std::string>() == "up");
    CHECK(report.at("instances").size() == 4);
    int expected = 3;
    for (const auto& inst : report.at("instances"))
        CHECK(inst.at("label").get<int>() == expected++);
    CHECK(report.at("versions").contains("tool"));

    // Trace: one JSON object per line, iteration counter consecutive from 0.
    std::ifstream trace(work_dir() / "o.trace.jsonl");
    std::string line;
    long t = 0;
    while (std::getline(trace, line)) {
        const auto row = nlohmann::json::parse(line);
        CHECK(row.at("t").get<long>() == t++);
        CHECK((row.at("phase") == "sliding" || row.at("phase") == "converging"));
    }
    CHECK(t > 4);
}

TEST_CASE("cli: same seed and config give byte-identical outputs", "[cli]") {
    const auto& run = oracle_run();
    const fs::path d = work_dir();
    auto p = run_cli("phantom " + (d / "o.phantom.cfg").string() + " " + (d / "re.image.nrrd").string() +
                     " " + (d / "re.mask.nrrd").string());
    REQUIRE(p.exit_code == 0);
    CHECK(slurp(d / "re.image.nrrd") == slurp(run.image));
    CHECK(slurp(d / "re.mask.nrrd") == slurp(run.ref_mask));

    auto s = run_cli("segment " + run.image.string() + " " + (d / "re.auto.nrrd").string() +
                     " --oracle --reference " + run.ref_mask.string() + " --direction up --config " +
                     (d / "o.seg.cfg").string());
    REQUIRE(s.exit_code == 0);
    CHECK(slurp(d / "re.auto.nrrd") == slurp(run.auto_mask));
    CHECK(slurp(d / "re.auto.nrrd.report.json") ==
          slurp(fs::path(run.auto_mask.string() + ".report.json")));
}

TEST_CASE("cli: train emits model and ascending-lambda curve", "[cli]") {
    const auto& run = oracle_run();
    const fs::path d = work_dir();
    fs::create_directories(d / "ds");
    fs::copy_file(run.image, d / "ds" / "a.image.nrrd", fs::copy_options::overwrite_existing);
    fs::copy_file(run.ref_mask, d / "ds" / "a.mask.nrrd", fs::copy_options::overwrite_existing);
    write_file(d / "train.cfg",
               "model.channels = 4\n"
               "model.depth = 2\n"
               "model.head_width = 4\n"
               "model.patch_size = 16 16 16\n"
               "train.n_max = 10\n"
               "train.seed = 5\n");
    auto t = run_cli("train " + (d / "train.cfg").string() + " " + (d / "ds").string() + " " +
                     (d / "model.bin").string());
    REQUIRE(t.exit_code == 0);
    CHECK(fs::exists(d / "model.bin"));

    std::ifstream csv(d / "model.bin.curve.csv");
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "iteration,lambda,fp_soft,fn_soft,seg_loss,label_loss,completeness_loss,total");
    std::vector<double> lambdas;
    long iter = 0;
    while (std::getline(csv, line)) {
        std::istringstream row(line);
        std::string cell;
        REQUIRE(std::getline(row, cell, ','));
        CHECK(std::stol(cell) == iter++);
        REQUIRE(std::getline(row, cell, ','));
        lambdas.push_back(std::stod(cell));
    }
    REQUIRE(lambdas.size() == 10);
    for (std::size_t i = 1; i < lambdas.size(); ++i) CHECK(lambdas[i] > lambdas[i - 1]);
    CHECK(lambdas.front() < 0.2);
    CHECK(lambdas.back() > 0.9);
}

TEST_CASE("cli: missing inputs exit with code 2 and name the path", "[cli]") {
    const auto& run = oracle_run();
    auto missing_model = run_cli("segment " + run.image.string() + " /tmp/x.nrrd --model /nope/model.bin");
    CHECK(missing_model.exit_code == 2);
    CHECK(missing_model.output.find("/nope/model.bin") != std::string::npos);

    auto missing_image = run_cli("segment /nope/scan.nrrd /tmp/x.nrrd --oracle --reference " +
                                 run.ref_mask.string());
    CHECK(missing_image.exit_code == 2);
    CHECK(missing_image.output.find("/nope/scan.nrrd") != std::string::npos);

    auto no_segmentor = run_cli("segment " + run.image.string() + " /tmp/x.nrrd");
    CHECK(no_segmentor.exit_code == 2);

    auto missing_ref = run_cli("evaluate /nope/r.nrrd " + run.auto_mask.string() + " /tmp/x.json");
    CHECK(missing_ref.exit_code == 2);
    CHECK(missing_ref.output.find("/nope/r.nrrd") != std::string::npos);
}

TEST_CASE("cli: unknown or malformed config keys exit with code 2", "[cli]") {
    const fs::path d = work_dir();
    write_file(d / "bad1.cfg", "phantom.dims = 8 8 8\nphantom.bogus = 1\n");
    auto stray = run_cli("phantom " + (d / "bad1.cfg").string() + " /tmp/a.nrrd /tmp/b.nrrd");
    CHECK(stray.exit_code == 2);
    CHECK(stray.output.find("phantom.bogus") != std::string::npos);

    write_file(d / "bad2.cfg", "phantom.n_instances = four\n");
    auto mistyped = run_cli("phantom " + (d / "bad2.cfg").string() + " /tmp/a.nrrd /tmp/b.nrrd");
    CHECK(mistyped.exit_code == 2);

    write_file(d / "bad3.cfg", "phantom.seed = 1\nphantom.seed = 2\n");
    auto duplicated = run_cli("phantom " + (d / "bad3.cfg").string() + " /tmp/a.nrrd /tmp/b.nrrd");
    CHECK(duplicated.exit_code == 2);
}

TEST_CASE("cli: evaluate rejects masks on different grids", "[cli]") {
    const auto& run = oracle_run();
    const fs::path d = work_dir();
    write_file(d / "small.cfg",
               "phantom.dims = 24 24 32\nphantom.n_instances = 2\n"
               "phantom.half_axes = 5 5 4\nphantom.seed = 1\n");
    auto p = run_cli("phantom " + (d / "small.cfg").string() + " " + (d / "s.image.nrrd").string() +
                     " " + (d / "s.mask.nrrd").string());
    REQUIRE(p.exit_code == 0);
    auto e = run_cli("evaluate " + run.ref_mask.string() + " " + (d / "s.mask.nrrd").string() +
                     " /tmp/x.json");
    CHECK(e.exit_code == 2);
    CHECK(e.output.find("differ") != std::string::npos);
}

TEST_CASE("cli: segment handles direction down", "[cli]") {
    const auto& run = oracle_run();
    const fs::path d = work_dir();
    auto s = run_cli("segment " + run.image.string() + " " + (d / "down.auto.nrrd").string() +
                     " --oracle --reference " + run.ref_mask.string() +
                     " --direction down --config " + (d / "o.seg.cfg").string());
    REQUIRE(s.exit_code == 0);
    const auto report = nlohmann::json::parse(slurp(d / "down.auto.nrrd.report.json"));
    CHECK(report.at("direction").get<std::string>() == "down");
    // Traversal visits top-down, so raw ids descend while refined labels still
    // name the same anatomy: first accepted instance is the topmost, label 6.
    const auto& instances = report.at("instances");
    REQUIRE(instances.size() == 4);
    CHECK(instances[0].at("label").get<int>() == 6);
    CHECK(instances[3].at("label").get<int>() == 3);

    auto e = run_cli("evaluate " + run.ref_mask.string() + " " + (d / "down.auto.nrrd").string() +
                     " " + (d / "down.eval.json").string());
    REQUIRE(e.exit_code == 0);
    const auto eval = nlohmann::json::parse(slurp(d / "down.eval.json"));
    CHECK(eval.at("aggregates").at("dice_mean").get<double>() == 1.0);
    CHECK(eval.at("aggregates").at("identification_accuracy").get<double>() == 1.0);
}
