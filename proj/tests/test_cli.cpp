#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "proxtune/cli.hpp"

using namespace proxtune;
namespace fs = std::filesystem;

namespace {

// Tiny runs: the CLI mechanics are under test, not training quality.
const char* kBaseConfig = R"([task]
train_samples = 512
eval_samples = 128

[run]
pretrain_steps = 60
finetune_steps = 40
batch_size = 16
seed = 1
log_every = 10
)";

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("proxtune_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text,
                      const std::string& name = "config.ini") {
    const fs::path path = dir / name;
    std::ofstream out(path);
    out << text;
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int cli(std::initializer_list<std::string> args) { return run_cli(std::vector<std::string>(args)); }

}  // namespace

TEST_CASE("pretrain: success, artifacts, byte-identical rerun") {
    const fs::path dir = fresh_dir("pretrain");
    const fs::path config = write_config(dir, kBaseConfig);

    const fs::path out1 = dir / "out1";
    const fs::path out2 = dir / "out2";
    CHECK(cli({"pretrain", "--config", config.string(), "--out-dir", out1.string()}) == kExitOk);
    CHECK(fs::exists(out1 / "pretrained.ckpt"));
    CHECK(fs::exists(out1 / "pretrain.manifest.ini"));

    CHECK(cli({"pretrain", "--config", config.string(), "--out-dir", out2.string()}) == kExitOk);
    CHECK(slurp(out1 / "pretrained.ckpt") == slurp(out2 / "pretrained.ckpt"));
    CHECK(slurp(out1 / "pretrain.manifest.ini") == slurp(out2 / "pretrain.manifest.ini"));
    fs::remove_all(dir);
}

TEST_CASE("pretrain: misspelled config key exits 2 and names the key") {
    const fs::path dir = fresh_dir("badkey");
    const fs::path config =
        write_config(dir, std::string(kBaseConfig) + "\n[policy]\nlamda_max = 1\n");
    CHECK(cli({"pretrain", "--config", config.string(), "--out-dir", (dir / "out").string()}) ==
          kExitConfig);
    fs::remove_all(dir);
}

TEST_CASE("pretrain: missing config exits 4") {
    const fs::path dir = fresh_dir("noconfig");
    CHECK(cli({"pretrain", "--config", (dir / "absent.ini").string(), "--out-dir",
               (dir / "out").string()}) == kExitIo);
    fs::remove_all(dir);
}

TEST_CASE("finetune: metrics file, archive mismatch, reduction equality") {
    const fs::path dir = fresh_dir("finetune");
    const fs::path config = write_config(dir, kBaseConfig);
    const fs::path pre = dir / "pre";
    REQUIRE(cli({"pretrain", "--config", config.string(), "--out-dir", pre.string()}) == kExitOk);
    const fs::path archive = pre / "pretrained.ckpt";

    SUBCASE("metrics header and determinism") {
        const fs::path out1 = dir / "ft1";
        const fs::path out2 = dir / "ft2";
        CHECK(cli({"finetune", archive.string(), "--config", config.string(), "--out-dir",
                   out1.string()}) == kExitOk);
        CHECK(cli({"finetune", archive.string(), "--config", config.string(), "--out-dir",
                   out2.string()}) == kExitOk);
        const std::string metrics = slurp(out1 / "metrics.csv");
        CHECK(metrics.rfind("step,dev_vision_early,dev_vision_late,dev_bridge,dev_lang_early,"
                            "dev_lang_late,dev_head,projection_rate,train_loss,retention_loss,"
                            "shift_loss\n", 0) == 0);
        CHECK(metrics == slurp(out2 / "metrics.csv"));
        CHECK(slurp(out1 / "finetuned.ckpt") == slurp(out2 / "finetuned.ckpt"));
        CHECK(fs::exists(out1 / "finetune.manifest.ini"));
    }

    SUBCASE("archive from a different model spec exits 5") {
        const fs::path other_cfg = write_config(
            dir, std::string(kBaseConfig) + "\n[model]\ninput_dim = 8\n", "other.ini");
        const fs::path pre8 = dir / "pre8";
        REQUIRE(cli({"pretrain", "--config", other_cfg.string(), "--out-dir", pre8.string()}) ==
                kExitOk);
        CHECK(cli({"finetune", (pre8 / "pretrained.ckpt").string(), "--config", config.string(),
                   "--out-dir", (dir / "bad").string()}) == kExitArchiveMismatch);
    }

    SUBCASE("MAPS with lambda_max 0 equals mode none byte-for-byte") {
        const fs::path cfg_none = write_config(
            dir, std::string(kBaseConfig) + "\n[policy]\nmode = none\n", "none.ini");
        const fs::path cfg_maps0 = write_config(
            dir, std::string(kBaseConfig) + "\n[policy]\nmode = maps\nlambda_max = 0\n",
            "maps0.ini");
        const fs::path out_none = dir / "none";
        const fs::path out_maps = dir / "maps0";
        CHECK(cli({"finetune", archive.string(), "--config", cfg_none.string(), "--out-dir",
                   out_none.string()}) == kExitOk);
        CHECK(cli({"finetune", archive.string(), "--config", cfg_maps0.string(), "--out-dir",
                   out_maps.string()}) == kExitOk);
        CHECK(slurp(out_none / "metrics.csv") == slurp(out_maps / "metrics.csv"));
        CHECK(slurp(out_none / "finetuned.ckpt") == slurp(out_maps / "finetuned.ckpt"));
    }

    SUBCASE("missing archive exits 4") {
        CHECK(cli({"finetune", (dir / "ghost.ckpt").string(), "--config", config.string(),
                   "--out-dir", (dir / "x").string()}) == kExitIo);
    }
    fs::remove_all(dir);
}

TEST_CASE("seed override changes the run") {
    const fs::path dir = fresh_dir("seed");
    const fs::path config = write_config(dir, kBaseConfig);
    const fs::path a = dir / "a";
    const fs::path b = dir / "b";
    REQUIRE(cli({"pretrain", "--config", config.string(), "--out-dir", a.string()}) == kExitOk);
    REQUIRE(cli({"pretrain", "--config", config.string(), "--seed-override", "77", "--out-dir",
                 b.string()}) == kExitOk);
    CHECK(slurp(a / "pretrained.ckpt") != slurp(b / "pretrained.ckpt"));
    // The manifest reflects the override.
    CHECK(slurp(b / "pretrain.manifest.ini").find("seed = 77") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("sweep: scheduler grid shape, freeze rows, empty grid") {
    const fs::path dir = fresh_dir("sweep");
    // Very small grid for speed; the full 3x3 runs in the acceptance suite.
    const std::string text = std::string(kBaseConfig) +
                             "\n[sweep]\nschedules = linear\nlambda_max_values = 0.5,2\n"
                             "freeze_masks = all; vision_early\n";
    const fs::path config = write_config(dir, text);

    SUBCASE("scheduler") {
        const fs::path out = dir / "sched";
        CHECK(cli({"sweep", "scheduler", "--config", config.string(), "--out-dir", out.string(),
                   "--jobs", "2"}) == kExitOk);
        const std::string table = slurp(out / "sweep_scheduler.csv");
        CHECK(std::count(table.begin(), table.end(), '\n') == 3);  // header + 2 rows
        CHECK(table.find("linear,0.5") != std::string::npos);
        CHECK(table.find("linear,2") != std::string::npos);
    }

    SUBCASE("freeze") {
        const fs::path out = dir / "freeze";
        CHECK(cli({"sweep", "freeze", "--config", config.string(), "--out-dir", out.string()}) ==
              kExitOk);
        const std::string table = slurp(out / "sweep_freeze.csv");
        CHECK(std::count(table.begin(), table.end(), '\n') == 3);
        CHECK(table.find("all,") != std::string::npos);
        CHECK(table.find("vision_early,") != std::string::npos);
    }

    SUBCASE("empty grid exits 2") {
        const fs::path bad = write_config(
            dir, std::string(kBaseConfig) + "\n[sweep]\nschedules =\n", "empty.ini");
        CHECK(cli({"sweep", "scheduler", "--config", bad.string(), "--out-dir",
                   (dir / "e").string()}) == kExitConfig);
        const fs::path badf = write_config(
            dir, std::string(kBaseConfig) + "\n[sweep]\nfreeze_masks =\n", "emptyf.ini");
        CHECK(cli({"sweep", "freeze", "--config", badf.string(), "--out-dir",
                   (dir / "f").string()}) == kExitConfig);
    }

    SUBCASE("unknown kind exits 2") {
        CHECK(cli({"sweep", "volcano", "--config", config.string(), "--out-dir",
                   (dir / "k").string()}) == kExitConfig);
    }
    fs::remove_all(dir);
}

TEST_CASE("report: renders deviations, rejects malformed files, reruns identically") {
    const fs::path dir = fresh_dir("report");
    const fs::path config = write_config(dir, kBaseConfig);
    const fs::path pre = dir / "pre";
    const fs::path ft = dir / "ft";
    REQUIRE(cli({"pretrain", "--config", config.string(), "--out-dir", pre.string()}) == kExitOk);
    REQUIRE(cli({"finetune", (pre / "pretrained.ckpt").string(), "--config", config.string(),
                 "--out-dir", ft.string()}) == kExitOk);

    SUBCASE("valid metrics") {
        const fs::path out1 = dir / "rep1";
        const fs::path out2 = dir / "rep2";
        CHECK(cli({"report", (ft / "metrics.csv").string(), "--out-dir", out1.string()}) ==
              kExitOk);
        CHECK(cli({"report", (ft / "metrics.csv").string(), "--out-dir", out2.string()}) ==
              kExitOk);
        for (const char* name : {"dev_vision_early.tsv", "dev_bridge.tsv", "dev_head.tsv"}) {
            CHECK(fs::exists(out1 / name));
            CHECK(slurp(out1 / name) == slurp(out2 / name));
        }
        const std::string tsv = slurp(out1 / "dev_vision_early.tsv");
        CHECK(tsv.rfind("step\tdeviation\n", 0) == 0);
    }

    SUBCASE("truncated file exits 2") {
        const fs::path broken = dir / "broken.csv";
        {
            const std::string metrics = slurp(ft / "metrics.csv");
            std::ofstream out(broken, std::ios::binary);
            out << metrics.substr(0, metrics.size() / 2);
            // Cut mid-row: the final line has the wrong column count.
        }
        CHECK(cli({"report", broken.string(), "--out-dir", (dir / "r").string()}) == kExitConfig);

        const fs::path empty = dir / "empty.csv";
        std::ofstream(empty).close();
        CHECK(cli({"report", empty.string(), "--out-dir", (dir / "r2").string()}) == kExitConfig);
    }
    fs::remove_all(dir);
}

TEST_CASE("usage errors exit 1") {
    CHECK(cli({"unknown-command"}) == kExitUsage);
    CHECK(cli({}) == kExitUsage);
    CHECK(cli({"pretrain"}) == kExitUsage);  // --config required
}
