// Regenerates the bundled data files:
//   wave.motion.json      40-frame right-hand wave (human skeleton, y-up)
//   reachable_2000.desc   2000 descriptors of uniform random in-limit poses
//
// usage: make_fixtures [data-dir]

#include <cstdio>
#include <exception>
#include <filesystem>
#include <vector>

#include "retarget/fixtures.hpp"
#include "retarget/io.hpp"
#include "retarget/random.hpp"
#include "retarget/robot.hpp"
#include "retarget/skeleton.hpp"

namespace {

constexpr std::uint64_t kDatasetSeed = 2000;
constexpr int kDatasetSize = 2000;

}  // namespace

int main(int argc, char** argv) {
    using namespace retarget;
    const std::filesystem::path dir = argc > 1 ? argv[1] : RETARGET_DATA_DIR;
    try {
        const RobotModel model = load_robot(dir / "nao_like.json");

        save_motion(fixtures::wave_motion(model), dir / "wave.motion.json");

        Rng rng(kDatasetSeed);
        const CommandVector lo = model.command_min(), hi = model.command_max();
        std::vector<DescriptorVector> ds;
        for (int i = 0; i < kDatasetSize; ++i) {
            CommandVector c{};
            for (std::size_t k = 0; k < kCommandDims; ++k) c[k] = rng.uniform(lo[k], hi[k]);
            ds.push_back(flatten(robot_descriptor(fk(expand_command(c, model), model), model)));
        }
        save_descriptors(dir / "reachable_2000.desc", ds);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "make_fixtures: %s\n", e.what());
        return 2;
    }
    return 0;
}
