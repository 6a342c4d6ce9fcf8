#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "foam/checkpoint.hpp"
#include "foam/config.hpp"
#include "foam/dataset.hpp"
#include "helpers.hpp"

using namespace foam;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("world directory round trip") {
    const WorldData world = build_world(foam::testing::tiny_world_options(44));
    const fs::path dir = fs::temp_directory_path() / "foam_io_test_world";
    fs::remove_all(dir);
    save_world_dir(dir.string(), world, false);

    SUBCASE("loading restores environments and datasets exactly") {
        const WorldData back = load_world_dir(dir.string());
        REQUIRE(back.envs.size() == world.envs.size());
        for (size_t i = 0; i < world.envs.size(); ++i) {
            CHECK(back.envs[i].env_id == world.envs[i].env_id);
            CHECK(back.envs[i].adj == world.envs[i].adj);
            CHECK(back.envs[i].dist == world.envs[i].dist);
            for (size_t n = 0; n < world.envs[i].nodes.size(); ++n) {
                CHECK(back.envs[i].nodes[n].tag == world.envs[i].nodes[n].tag);
                CHECK(back.envs[i].nodes[n].feat == world.envs[i].nodes[n].feat); // bitwise
            }
        }
        REQUIRE(back.train.size() == world.train.size());
        for (size_t i = 0; i < world.train.size(); ++i) {
            CHECK(back.train[i].route == world.train[i].route);
            CHECK(back.train[i].tokens == world.train[i].tokens);
            CHECK(back.train[i].style == world.train[i].style);
        }
        CHECK(back.vocab.tokens() == world.vocab.tokens());
    }

    SUBCASE("saving twice produces byte-identical files") {
        const fs::path dir2 = fs::temp_directory_path() / "foam_io_test_world2";
        fs::remove_all(dir2);
        save_world_dir(dir2.string(), world, false);
        for (const char* name : {"world.jsonl", "vocab.json", "dataset_train.jsonl",
                                 "routes_train.jsonl"}) {
            CHECK(slurp(dir / name) == slurp(dir2 / name));
        }
        fs::remove_all(dir2);
    }

    SUBCASE("a non-empty output dir is rejected without force") {
        CHECK_THROWS_AS(save_world_dir(dir.string(), world, false), Error);
        CHECK_NOTHROW(save_world_dir(dir.string(), world, true));
    }

    SUBCASE("tampering with a world file fails the hash check") {
        std::ofstream os(dir / "dataset_train.jsonl", std::ios::app);
        os << "\n";
        os.close();
        CHECK_THROWS_AS((void)load_world_dir(dir.string()), Error);
        CHECK_NOTHROW((void)load_world_dir(dir.string(), /*verify_hashes=*/false));
    }

    fs::remove_all(dir);
}

TEST_CASE("dataset gives three styles per route") {
    const WorldData world = build_world(foam::testing::tiny_world_options(45));
    REQUIRE(world.train.size() % 3 == 0);
    for (size_t i = 0; i < world.train.size(); i += 3) {
        CHECK(world.train[i].style == 0);
        CHECK(world.train[i + 1].style == 1);
        CHECK(world.train[i + 2].style == 2);
        CHECK(world.train[i].route == world.train[i + 1].route);
        CHECK(world.train[i].route == world.train[i + 2].route);
        CHECK(world.train[i].tokens != world.train[i + 1].tokens);
    }
}

TEST_CASE("flat config") {
    const fs::path path = fs::temp_directory_path() / "foam_cfg_test.cfg";
    {
        std::ofstream os(path);
        os << "# comment line\n";
        os << "train.eta_s = 0.125\n";
        os << "train.total_steps = 42   # trailing comment\n";
        os << "train.recon = false\n";
        os << "name.with.dots = hello\n";
    }
    const FlatConfig cfg = FlatConfig::from_file(path.string());
    CHECK(cfg.get_double("train.eta_s", 0.0) == doctest::Approx(0.125));
    CHECK(cfg.get_int("train.total_steps", 0) == 42);
    CHECK(cfg.get_bool("train.recon", true) == false);
    CHECK(cfg.get_str("name.with.dots", "") == "hello");
    CHECK(cfg.get_int("absent.key", 7) == 7);

    SUBCASE("overrides win during merge") {
        FlatConfig flags;
        flags.set("train.eta_s", "0.5");
        flags.merge_over(cfg);
        CHECK(flags.get_double("train.eta_s", 0.0) == doctest::Approx(0.5));
        CHECK(flags.get_int("train.total_steps", 0) == 42);
    }

    SUBCASE("bad values raise config errors") {
        CHECK_THROWS_AS((void)cfg.get_int("name.with.dots", 0), Error);
        CHECK_THROWS_AS((void)cfg.get_bool("name.with.dots", false), Error);
    }

    fs::remove(path);
}

TEST_CASE("checkpoint format errors") {
    const fs::path path = fs::temp_directory_path() / "foam_bad_ckpt.bin";
    {
        std::ofstream os(path, std::ios::binary);
        const uint32_t bad_version = 99;
        os.write(reinterpret_cast<const char*>(&bad_version), 4);
    }
    CHECK_THROWS_AS((void)load_checkpoint(path.string()), Error);
    CHECK_THROWS_AS((void)load_checkpoint("/nonexistent/nowhere.bin"), Error);
    fs::remove(path);
}
