#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "crd_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run crd(const std::string& args) {
    const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
    const std::string cmd = std::string("\"") + CRD_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::map<std::string, std::string> key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma != std::string::npos) kv[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return kv;
}

const char* kTinyConfig =
    "image_size = 8\ntrain_count = 4\nval_count = 2\nepochs = 2\nteacher_base_width = 8\n"
    "num_res_blocks = 1\ndisc_layers = 2\ndisc_base_width = 8\npatch_n = 4\npatch_m = 4\n"
    "teacher_eval_interval = 1\nlambda_crd = 0.025\n";

}  // namespace

TEST_CASE("usage errors exit with 2") {
    const Run none = crd("");
    CHECK(none.code == 2);
    const Run unknown = crd("frobnicate");
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("train") != std::string::npos);
    CHECK(crd("train").code == 2);
    CHECK(crd("bench --repeats 0").code == 2);
}

TEST_CASE("runtime errors exit with 1") {
    const Run bad = crd("train --out " + (work_dir() / "bad").string() + " --set epochs=-1");
    CHECK(bad.code == 1);
    CHECK(bad.err.find("epochs") != std::string::npos);
    CHECK(crd("train --out " + (work_dir() / "bad").string() + " --set nosuchkey=1").code == 1);
    CHECK(crd("slice --granularity diagonal --out " + (work_dir() / "bad").string()).code == 1);
}

TEST_CASE("slice writes items and a manifest") {
    const fs::path dir = work_dir() / "slice";
    const Run r = crd("slice --size 16 --granularity patch --patch 4 --out " + dir.string());
    REQUIRE(r.code == 0);
    std::ifstream manifest(dir / "manifest.txt");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(manifest, line)) {
        CHECK(line == "patch," + std::to_string(lines) + ",48");
        ++lines;
    }
    CHECK(lines == 16);
    CHECK(fs::exists(dir / "patch_0015.crdt"));
    CHECK(fs::file_size(dir / "patch_0000.crdt") == 4 + 1 + 4 + 4 + 48 * 4);

    const Run cols = crd("slice --size 16 --granularity column --out " + (work_dir() / "cols").string());
    CHECK(cols.code == 0);
    CHECK(cols.out.find("16 items of length 48") != std::string::npos);
}

TEST_CASE("gradcheck passes") {
    const Run r = crd("gradcheck --size 8 --patch 4");
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("PASS crd_loss") != std::string::npos);
    CHECK(r.out.find("PASS composite") != std::string::npos);
}

TEST_CASE("bench budget reduces evaluated triples") {
    const Run full = crd("bench --size 32 --budget 0 --repeats 1");
    const Run budgeted = crd("bench --size 32 --budget 1024 --repeats 1");
    REQUIRE(full.code == 0);
    REQUIRE(budgeted.code == 0);
    const auto f = key_values(full.out), b = key_values(budgeted.out);
    REQUIRE(f.count("triples_evaluated"));
    REQUIRE(b.count("triples_evaluated"));
    CHECK(std::stoull(b.at("triples_evaluated")) < std::stoull(f.at("triples_evaluated")));
    CHECK(std::stod(f.at("loss_evaluations_per_second")) > 0.0);
    CHECK(std::stod(f.at("tuple_enumeration_per_second")) > 0.0);
}

TEST_CASE("train then eval") {
    const fs::path cfg = work_dir() / "c.cfg";
    std::ofstream(cfg) << kTinyConfig;
    const fs::path run = work_dir() / "runs" / "a";
    const Run t = crd("train --config " + cfg.string() + " --task invert --out " + run.string() + " --quiet");
    REQUIRE(t.code == 0);
    CHECK(key_values(t.out).at("steps") == "8");
    CHECK(fs::exists(run / "config.cfg"));
    CHECK(fs::exists(run / "metrics.csv"));
    CHECK(fs::exists(run / "checkpoints" / "manifest.csv"));
    CHECK(fs::exists(run / "samples" / "epoch_000.ppm"));
    CHECK(fs::exists(run / "samples" / "epoch_001.ppm"));

    const std::string before = slurp(run / "metrics.csv");
    const Run e = crd("eval --run " + run.string());
    REQUIRE(e.code == 0);
    const auto kv = key_values(e.out);
    REQUIRE(kv.count("student_l2"));
    REQUIRE(kv.count("teacher_l2"));
    CHECK(std::stod(kv.at("student_l2")) >= 0.0);
    CHECK(std::stoull(kv.at("teacher_parameters")) > std::stoull(kv.at("student_parameters")));
    const std::string after = slurp(run / "metrics.csv");
    REQUIRE(after.size() > before.size());
    CHECK(after.compare(0, before.size(), before) == 0);
    CHECK(after.substr(before.size()).rfind("eval,8,", 0) == 0);

    const fs::path run_b = work_dir() / "runs" / "b";
    const Run t2 = crd("train --config " + cfg.string() + " --task invert --out " + run_b.string() + " --quiet");
    REQUIRE(t2.code == 0);
    CHECK(slurp(run_b / "metrics.csv") == before);

    CHECK(crd("eval --run " + (work_dir() / "missing").string()).code == 2);
}
