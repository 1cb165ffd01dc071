#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "retarget/file_io.hpp"
#include "retarget/io.hpp"
#include "test_support.hpp"

namespace retarget {
namespace {

namespace fs = std::filesystem;
using testing::nao;

struct CliRun {
    int code = -1;
    std::string out;
};

// Runs the CLI with stderr folded into the captured output.
CliRun cli(const std::string& args) {
    const std::string cmd = std::string(RETARGET_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    CliRun r;
    if (!p) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.out += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path work_dir() {
    const fs::path d = fs::temp_directory_path() / "retarget_test_cli";
    fs::create_directories(d);
    return d;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

std::string bundled(const std::string& name) { return testing::data_path(name); }

// Small training config so determinism checks stay fast.
std::string quick_train_config(const std::string& extra = "") {
    const std::string p = path("quick" + std::to_string(std::hash<std::string>{}(extra)) + ".json");
    write_file_atomic(p, R"({"robot": ")" + bundled("nao_like.json") +
                             R"(", "train": {"epochs": 3, "batch_size": 64)" + extra + "}}");
    return p;
}

TEST(Cli, InspectListsJoints) {
    const CliRun r = cli("inspect");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("RHipYawPitch"), std::string::npos);
    EXPECT_NE(r.out.find("leg_yaw_pitch"), std::string::npos);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
    EXPECT_EQ(cli("randomize --count 0").code, 1);
    EXPECT_EQ(cli("retarget " + bundled("wave.motion.json")).code, 1);  // no --out
    EXPECT_EQ(cli("retarget " + bundled("wave.motion.json") + " -o " + path("x.json") + " --solver asn").code, 1);
    EXPECT_EQ(cli("retarget " + bundled("wave.motion.json") + " -o " + path("x.json") + " --solver magic").code, 1);
}

TEST(Cli, RandomizeReproducible) {
    const CliRun a = cli("randomize --count 3 --seed 11");
    const CliRun b = cli("randomize --count 3 --seed 11");
    const CliRun c = cli("randomize --count 3 --seed 12");
    ASSERT_EQ(a.code, 0) << a.out;
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out, c.out);
    std::istringstream in(a.out);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        const auto pos = line.find("static_friction=");
        ASSERT_NE(pos, std::string::npos);
        const double sf = std::stod(line.substr(pos + 16));
        EXPECT_GE(sf, 0.3);
        EXPECT_LE(sf, 1.1);
    }
    EXPECT_EQ(lines, 3);
}

TEST(Cli, RetargetWaveWithOracle) {
    const std::string out = path("wave.cmds.json");
    const CliRun r = cli("retarget " + bundled("wave.motion.json") + " -o " + out);
    ASSERT_EQ(r.code, 0) << r.out;
    const CommandFile cf = load_commands(out, nao());
    ASSERT_EQ(cf.frames.size(), 40u);
    double sum = 0.0;
    for (double l : cf.loss) sum += l;
    EXPECT_LE(sum / 40.0, 1e-4);
    EXPECT_NE(r.out.find("converged 40"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(path("wave.cmds.loss.csv")));
}

TEST(Cli, RetargetBadMotionIsInputError) {
    write_file_atomic(path("bad.motion.json"), R"({"fps": 20, "frames": [[[0,0,0]]]})");
    const CliRun r = cli("retarget " + path("bad.motion.json") + " -o " + path("bad.cmds.json"));
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("frame 0"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(path("bad.cmds.json")));
}

TEST(Cli, EvalZeroCommands) {
    CommandFile cf;
    cf.robot = nao().name;
    cf.fps = 20.0;
    cf.frames.assign(20, CommandVector{});
    save_commands(path("zero.json"), cf, nao());
    const CliRun r = cli("eval " + path("zero.json") + " -o " + path("zero.report.txt"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("rmse_rad LShoulderPitch 0\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("termination running"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("zero.report.trace.csv")));
    EXPECT_EQ(read_file(path("zero.report.txt")) + "report " + path("zero.report.txt") + "\ntrace " +
                  path("zero.report.trace.csv") + "\n",
              r.out);
}

TEST(Cli, EvalMalformedIsInputError) {
    write_file_atomic(path("malformed.json"), R"({"robot": "nao_like", "fps": 20, "frames": [[1, 2]]})");
    EXPECT_EQ(cli("eval " + path("malformed.json")).code, 2);
    write_file_atomic(path("trunc.json"), "{\"robot\": ");
    EXPECT_EQ(cli("eval " + path("trunc.json")).code, 2);
    EXPECT_EQ(cli("eval " + path("does_not_exist.json")).code, 2);
}

TEST(Cli, TrainBatchOneIsConfigError) {
    const CliRun r = cli("train -o " + path("p1.bin") + " --config " + quick_train_config(R"(, "batch_size": 1)"));
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("batch_size"), std::string::npos) << r.out;
}

TEST(Cli, TrainSeedRepeatIsByteIdentical) {
    const std::string cfg = quick_train_config();
    const CliRun a = cli("train -o " + path("pa.bin") + " --seed 5 --config " + cfg);
    const CliRun b = cli("train -o " + path("pb.bin") + " --seed 5 --config " + cfg);
    const CliRun c = cli("train -o " + path("pc.bin") + " --seed 6 --config " + cfg);
    ASSERT_EQ(a.code, 0) << a.out;
    ASSERT_EQ(b.code, 0) << b.out;
    ASSERT_EQ(c.code, 0) << c.out;
    EXPECT_EQ(read_file(path("pa.bin")), read_file(path("pb.bin")));
    EXPECT_NE(read_file(path("pa.bin")), read_file(path("pc.bin")));
    EXPECT_TRUE(fs::exists(path("pa.loss.csv")));
    EXPECT_TRUE(fs::exists(path("pa.report.txt")));
}

TEST(Cli, TrainDivergenceExitsNumeric) {
    const std::string out = path("pdiv.bin");
    fs::remove(out);
    const CliRun r = cli("train -o " + out + " --config " + quick_train_config(R"(, "learning_rate": 1e300)"));
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_NE(r.out.find("pdiv.report.txt"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, RetargetWithAsnParams) {
    const std::string cfg = quick_train_config();
    ASSERT_EQ(cli("train -o " + path("pasn.bin") + " --config " + cfg).code, 0);
    const CliRun r = cli("retarget " + bundled("wave.motion.json") + " -o " + path("wave.asn.json") +
                      " --solver asn --params " + path("pasn.bin"));
    ASSERT_EQ(r.code, 0) << r.out;
    const CommandFile cf = load_commands(path("wave.asn.json"), nao());
    EXPECT_EQ(cf.frames.size(), 40u);
    // corrupt params are input errors
    std::string bytes = read_file(path("pasn.bin"));
    bytes[100] ^= 1;
    write_file_atomic(path("pbad.bin"), bytes);
    EXPECT_EQ(cli("retarget " + bundled("wave.motion.json") + " -o " + path("wave.bad.json") +
                  " --solver asn --params " + path("pbad.bin"))
                  .code,
              2);
}

}  // namespace
}  // namespace retarget
