#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "retarget/config.hpp"
#include "retarget/fixtures.hpp"
#include "retarget/io.hpp"
#include "test_support.hpp"

namespace retarget {
namespace {

using testing::nao;

std::filesystem::path temp_dir() {
    const auto d = std::filesystem::temp_directory_path() / "retarget_test_io";
    std::filesystem::create_directories(d);
    return d;
}

CommandFile wave_file() {
    CommandFile cf;
    cf.robot = nao().name;
    cf.fps = 20.0;
    for (int i = 0; i < 5; ++i) {
        cf.frames.push_back(fixtures::wave_command(nao(), i / 20.0));
        cf.loss.push_back(1e-7 * i);
        cf.orientation.push_back(Quat::identity());
    }
    return cf;
}

TEST(CommandFile, RoundTripsExactly) {
    const CommandFile cf = wave_file();
    const CommandFile back = parse_commands(serialize_commands(cf, nao()), nao());
    EXPECT_EQ(back.robot, cf.robot);
    EXPECT_EQ(back.fps, cf.fps);
    EXPECT_EQ(back.frames, cf.frames);
    EXPECT_EQ(back.loss, cf.loss);
    ASSERT_EQ(back.orientation.size(), cf.orientation.size());
}

TEST(CommandFile, NonFiniteLossIsNull) {
    CommandFile cf = wave_file();
    cf.loss[2] = std::numeric_limits<double>::infinity();
    const std::string text = serialize_commands(cf, nao());
    EXPECT_NE(text.find("null"), std::string::npos);
    EXPECT_TRUE(std::isnan(parse_commands(text, nao()).loss[2]));
}

TEST(CommandFile, RejectsMalformed) {
    const std::string good = serialize_commands(wave_file(), nao());
    EXPECT_THROW(parse_commands("{", nao()), ParseError);
    EXPECT_THROW(parse_commands("[]", nao()), ParseError);
    std::string bad = good;
    bad.replace(bad.find("LShoulderPitch"), 14, "LShoulderPitcX");
    EXPECT_THROW(parse_commands(bad, nao()), ParseError);
    bad = good;
    bad.replace(bad.find("\"fps\": 20"), 9, "\"fps\": -2");
    EXPECT_THROW(parse_commands(bad, nao()), ParseError);
    bad = good;
    bad.replace(bad.find("[", bad.find("\"frames\"")) + 1, 1, "[\"x\", ");
    EXPECT_THROW(parse_commands(bad, nao()), ParseError);
    nlohmann::json j = nlohmann::json::parse(good);
    j["frames"][1].erase(3);
    try {
        parse_commands(j.dump(), nao());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
    }
}

TEST(CommandFile, RejectsOtherRobot) {
    CommandFile cf = wave_file();
    cf.robot = "other";
    EXPECT_THROW(parse_commands(serialize_commands(cf, nao()), nao()), ParseError);
}

TEST(DescriptorFile, RoundTripsExactly) {
    Rng rng(3);
    std::vector<DescriptorVector> ds;
    for (int i = 0; i < 20; ++i) {
        const CommandVector c = testing::random_command(rng, nao());
        ds.push_back(flatten(robot_descriptor(fk(expand_command(c, nao()), nao()), nao())));
    }
    EXPECT_EQ(parse_descriptors(serialize_descriptors(ds)), ds);
}

TEST(DescriptorFile, ErrorsNameLine) {
    const DescriptorVector d = flatten(robot_descriptor(fk(JointVector{}, nao()), nao()));
    std::string text = serialize_descriptors({d, d});
    text += "1 2 3\n";
    try {
        parse_descriptors(text);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    std::string nan_text = serialize_descriptors({d});
    nan_text.replace(nan_text.find('\n') + 1, 1, "nan");
    EXPECT_THROW(parse_descriptors(nan_text), ParseError);
    EXPECT_THROW(parse_descriptors("1 2 x\n"), ParseError);
}

TEST(AppConfig, BundledDefaultMatchesBuiltIn) {
    const AppConfig c = load_app_config(testing::data_path("default_config.json"));
    const AppConfig d = default_app_config();
    EXPECT_TRUE(std::filesystem::equivalent(c.robot_path, d.robot_path));
    EXPECT_EQ(c.solver.max_iters, d.solver.max_iters);
    EXPECT_EQ(c.train.batch_size, d.train.batch_size);
    EXPECT_EQ(c.dataset.size, d.dataset.size);
    EXPECT_EQ(c.eval.weights.as_array(), d.eval.weights.as_array());
    for (int i = 0; i < kActuatorClasses; ++i) {
        const auto a = c.eval.actuators.by_class[static_cast<std::size_t>(i)];
        const auto b = d.eval.actuators.by_class[static_cast<std::size_t>(i)];
        EXPECT_EQ(a.max_torque, b.max_torque);
        EXPECT_EQ(a.max_speed, b.max_speed);
        EXPECT_EQ(a.kp, b.kp);
        EXPECT_EQ(a.kd, b.kd);
    }
    EXPECT_EQ(c.randomization.static_friction.lo, 0.3);
    EXPECT_EQ(c.randomization.push_interval.hi, 6.0);
}

TEST(AppConfig, RejectsUnknownKeysAndBadValues) {
    const auto dir = std::filesystem::path(RETARGET_DATA_DIR);
    EXPECT_THROW(parse_app_config(R"({"solvr": {}})", dir), ConfigError);
    EXPECT_THROW(parse_app_config(R"({"train": {"batch_size": 1}})", dir), ConfigError);
    EXPECT_THROW(parse_app_config(R"({"train": {"batch_size": "x"}})", dir), ConfigError);
    EXPECT_THROW(parse_app_config(R"({"robot": "missing.json"})", dir), ConfigError);
    EXPECT_THROW(parse_app_config(R"({"ctrl": {"randomization": {"base_mass_add": [1, 0]}}})", dir), ConfigError);
    EXPECT_THROW(parse_app_config(R"({"ctrl": {"actuators": {"tail": {}}}})", dir), ConfigError);
    EXPECT_THROW(parse_app_config("{", dir), ConfigError);
    EXPECT_THROW(load_app_config(temp_dir() / "none.json"), ConfigError);
}

TEST(AppConfig, OverridesApply) {
    const AppConfig c = parse_app_config(
        R"({"seed": 7, "npr": {"w_quat": 2.0}, "ctrl": {"actuators": {"arm": {"kp": 100.0}}, "arm_inertia": 0.02}})",
        RETARGET_DATA_DIR);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.npr_weights(nao()).w_quat, 2.0);
    EXPECT_EQ(c.eval.actuators[ActuatorClass::arm].kp, 100.0);
    EXPECT_EQ(c.eval.actuators[ActuatorClass::arm].kd, 5.0);
    EXPECT_EQ(c.eval.plant.arm_inertia, 0.02);
}

TEST(AtomicWrite, ReplacesAndLeavesNoTemp) {
    const auto p = temp_dir() / "atomic.txt";
    write_file_atomic(p, "one");
    write_file_atomic(p, "two");
    EXPECT_EQ(read_file(p), "two");
    EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
}

}  // namespace
}  // namespace retarget
