#include <filesystem>
#include <fstream>

#include "alt/cli.hpp"
#include "alt/synthetic.hpp"
#include "alt/train.hpp"
#include "doctest.h"

using namespace alt;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
    std::vector<const char*> argv = {"alt"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

struct CliSandbox {
    fs::path root;
    CliSandbox() {
        static int counter = 0;
        root = fs::temp_directory_path() /
               ("alt_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(root);
    }
    ~CliSandbox() { fs::remove_all(root); }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
};

// one sandbox with a generated dataset and a short training run, shared
// across the CLI cases (building it is the slow part)
CliSandbox& shared_box() {
    static CliSandbox box;
    static bool ready = false;
    if (!ready) {
        REQUIRE(cli({"data", "gen", "--seed", "5", "--entities", "5", "--actions", "4",
                     "--unseen", "1", "--samples", "6", "--frames", "3", "--out",
                     box.p("data")}) == 0);
        std::ofstream cfg(box.p("cfg.json"));
        cfg << R"({"epochs": 2, "warmup_epochs": 1, "batch_size": 8, "seed": 3,
                   "model": {"d": 16, "depth": 3, "heads": 2, "r": 2,
                             "adapter_blocks": 1, "adapter_heads": 2, "frames": 3}})";
        cfg.close();
        REQUIRE(cli({"train", "--data", box.p("data"), "--config", box.p("cfg.json"), "--out",
                     box.p("run")}) == 0);
        ready = true;
    }
    return box;
}

}  // namespace

TEST_CASE("cli: data gen guards against overwrites") {
    auto& box = shared_box();
    CHECK(cli({"data", "gen", "--seed", "5", "--out", box.p("data")}) == 1);
    CHECK(fs::exists(box.p("data") + "/manifest.json"));
}

TEST_CASE("cli: train produces checkpoint, log, echo, and metrics") {
    auto& box = shared_box();
    CHECK(fs::exists(box.p("run") + "/model.altw"));
    CHECK(fs::exists(box.p("run") + "/train_log.jsonl"));
    CHECK(fs::exists(box.p("run") + "/config.json"));
    CHECK(fs::exists(box.p("run") + "/metrics.json"));

    SUBCASE("the echoed config is accepted back as --config") {
        CHECK(cli({"train", "--data", box.p("data"), "--config", box.p("run") + "/config.json",
                   "--out", box.p("run2")}) == 0);
        // same config + seed: bit-identical training log
        std::ifstream a(box.p("run") + "/train_log.jsonl"), b(box.p("run2") + "/train_log.jsonl");
        std::string sa((std::istreambuf_iterator<char>(a)), {});
        std::string sb((std::istreambuf_iterator<char>(b)), {});
        CHECK(sa == sb);
    }
}

TEST_CASE("cli: eval on a missing checkpoint exits 2") {
    auto& box = shared_box();
    CHECK(cli({"eval", "--ckpt", box.p("missing.altw"), "--data", box.p("data"), "--out",
               box.p("m.json")}) == 2);
}

TEST_CASE("cli: eval writes metrics and zero-shot works") {
    auto& box = shared_box();
    CHECK(cli({"eval", "--ckpt", box.p("run") + "/model.altw", "--data", box.p("data"), "--out",
               box.p("eval.json")}) == 0);
    std::ifstream in(box.p("eval.json"));
    auto j = nlohmann::json::parse(in);
    CHECK(j.contains("top1"));
    CHECK(j.contains("per_class"));
    CHECK(j.at("views") == "1x1");

    CHECK(cli({"eval", "--ckpt", box.p("run") + "/model.altw", "--data", box.p("data"),
               "--zero-shot", "--out", box.p("zs.json")}) == 0);
}

TEST_CASE("cli: align dump rows obey the token-count law and feed precision") {
    auto& box = shared_box();
    CHECK(cli({"align", "--ckpt", box.p("run") + "/model.altw", "--data", box.p("data"),
               "--limit", "2", "--precision", "--out", box.p("dump.jsonl")}) == 0);
    auto dump = load_align_dump(box.p("dump.jsonl"));
    REQUIRE(!dump.empty());
    // geometry: 17 tokens - 2 blocks * r=2 -> 13 rows per frame
    for (const auto& f : dump) CHECK(f.rows.size() == 13);

    // class row empty; the rest partition {1..16}
    for (const auto& f : dump) {
        std::set<int> seen;
        CHECK(f.rows[0].patches.empty());
        for (size_t i = 1; i < f.rows.size(); ++i)
            for (int p : f.rows[i].patches) CHECK(seen.insert(p).second);
        CHECK(seen.size() == 16);
    }

    // the emitted precision file round-trips through the scorer
    std::ifstream pin(box.p("dump.jsonl") + ".precision.json");
    REQUIRE(pin.good());
    auto pj = nlohmann::json::parse(pin);
    Dataset ds = Dataset::load(box.p("data"));
    CHECK(pj.at("precision").get<double>() ==
          doctest::Approx(alignment_precision(dump, ds)).epsilon(1e-12));
}

TEST_CASE("cli: bench flops emits reports and sweeps") {
    auto& box = shared_box();
    CHECK(cli({"bench", "flops", "--n", "16", "--d", "32", "--depth", "4", "--heads", "2",
               "--entities", "12", "--sweep", "0,1,2", "--out", box.p("sweep.json")}) == 0);
    std::ifstream in(box.p("sweep.json"));
    auto j = nlohmann::json::parse(in);
    REQUIRE(j.size() == 3);
    CHECK(j[0].at("total").get<uint64_t>() > j[2].at("total").get<uint64_t>());
}

TEST_CASE("cli: bench time reports mean and sd") {
    auto& box = shared_box();
    CHECK(cli({"bench", "time", "--ckpt", box.p("run") + "/model.altw", "--data", box.p("data"),
               "--reps", "3", "--clips", "2", "--out", box.p("time.json")}) == 0);
    std::ifstream in(box.p("time.json"));
    auto j = nlohmann::json::parse(in);
    CHECK(j.at("mean_seconds_per_clip").get<double>() > 0);
    CHECK(j.contains("sd_seconds_per_clip"));

    CHECK(cli({"bench", "time", "--ckpt", box.p("run") + "/model.altw", "--data", box.p("data"),
               "--reps", "1", "--out", box.p("time2.json")}) == 1);
}

TEST_CASE("cli: corpus build and embed") {
    auto& box = shared_box();
    CHECK(cli({"corpus", "build", "--manifest", box.p("data") + "/manifest.json", "--out",
               box.p("corpus.jsonl")}) == 0);
    auto corpus = load_corpus(box.p("corpus.jsonl"));
    CHECK(corpus.size() > 6);  // glyph entities + motions + default body parts

    CHECK(cli({"corpus", "embed", "--corpus", box.p("corpus.jsonl"), "--dim", "16", "--seed",
               "3", "--out", box.p("cache.alte")}) == 0);
    auto cache = load_embedding_cache(box.p("cache.alte"));
    CHECK(cache.k == corpus.size());
    CHECK(cache.d == 16);
}

TEST_CASE("cli: unknown flags and config keys are rejected") {
    auto& box = shared_box();
    CHECK(cli({"train", "--data", box.p("data"), "--out", box.p("x"), "--no-such-flag"}) == 1);

    std::ofstream bad(box.p("bad.json"));
    bad << R"({"epochs": 2, "swizzle": true})";
    bad.close();
    CHECK(cli({"train", "--data", box.p("data"), "--config", box.p("bad.json"), "--out",
               box.p("y")}) == 1);
}
