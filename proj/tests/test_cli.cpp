#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "pact/cdss/mask.hpp"
#include "pact/dataset.hpp"
#include "pact/io_util.hpp"
#include "pact/recon.hpp"
#include "pact/rng.hpp"
#include "pact/system_matrix.hpp"

using namespace pact;
namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("PACT_BIN");
    REQUIRE_MESSAGE(b != nullptr, "PACT_BIN must point at the pact binary");
    return b;
}

int run(const std::string& args) {
    const std::string cmd = bin() + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "pact_cli_test";
    fs::create_directories(dir);
    return dir;
}

void write_small_config(const fs::path& path) {
    io::write_text_file(path.string(), R"({
  "geometry": {"n_elements": 16, "n_samples": 512},
  "grid": {"nx": 32, "ny": 32, "pitch_m": 0.000625},
  "phantom": {"kind": "mixed"},
  "model": {"depth": 2, "base_channels": 8, "heads": 2, "ffn_ratio": 2},
  "training": {"batch_size": 4, "epochs": 2}
})");
}

} // namespace

TEST_CASE("cli: operator build, simulate, recon, train, eval, export") {
    const fs::path dir = work_dir();
    const fs::path cfg = dir / "cfg.json";
    write_small_config(cfg);

    SUBCASE("build-operator writes a loadable file plus resolved config") {
        const auto out = (dir / "op.pactsysm").string();
        CHECK(run("build-operator --config " + cfg.string() + " --out " + out) == 0);
        SystemMatrix A = load_system_matrix(out);
        CHECK(A.geometry.n_elements == 16);
        CHECK(fs::exists(out + ".resolved.json"));
        CHECK(fs::exists(out + ".log"));
    }

    SUBCASE("full pipeline on a tiny problem") {
        const auto data = (dir / "data").string();
        CHECK(run("simulate --config " + cfg.string() + " --out " + data +
                  " --n-train 6 --n-test 2 --snr-db 40 --seed 7") == 0);
        REQUIRE(fs::exists(data + ".train.pactdset"));
        REQUIRE(fs::exists(data + ".test.pactdset"));

        Dataset test = load_dataset(data + ".test.pactdset");
        CHECK(test.size() == 2);
        CHECK(test.split == "test");

        // recon --method das reproduces the library call bit for bit.
        const auto rdir = (dir / "recon_das").string();
        CHECK(run("recon --config " + cfg.string() + " --method das --dataset " + data +
                  ".test.pactdset --slice 0 --out " + rdir) == 0);
        ImageField das = das_reconstruct(test.geometry, test.grid, test.noisy(0));
        std::ifstream raw(rdir + "/recon.f64", std::ios::binary);
        REQUIRE(raw.good());
        std::vector<double> vals(das.size());
        raw.read(reinterpret_cast<char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double)));
        CHECK(vals == das.values);
        CHECK(fs::exists(rdir + "/recon_das.pgm"));
        CHECK(fs::exists(rdir + "/recon_das_diff.pgm"));

        // tv route also runs.
        const auto tdir = (dir / "recon_tv").string();
        CHECK(run("recon --config " + cfg.string() +
                  " --method tv --dataset " + data +
                  ".test.pactdset --slice 0 --keep-fraction 0.5 --out " + tdir) == 0);

        // Training twice with one seed gives byte-identical history.
        const auto t1 = (dir / "train1").string();
        const auto t2 = (dir / "train2").string();
        const std::string train_args = "train-cdss --config " + cfg.string() + " --dataset " +
                                       data + ".train.pactdset --epochs 2 --seed 5 --out ";
        CHECK(run(train_args + t1) == 0);
        CHECK(run(train_args + t2) == 0);
        CHECK(io::read_text_file(t1 + "/history.csv") == io::read_text_file(t2 + "/history.csv"));
        REQUIRE(fs::exists(t1 + "/checkpoint.pactckpt"));

        // Evaluation emits per-slice rows and a summary; rerun is identical.
        const auto e1 = (dir / "eval1").string();
        const auto e2 = (dir / "eval2").string();
        const std::string eval_args = "eval --config " + cfg.string() + " --checkpoint " + t1 +
                                      "/checkpoint.pactckpt --dataset " + data +
                                      ".test.pactdset --keep-fractions 0.5,1.0 --seed 3 --out ";
        CHECK(run(eval_args + e1) == 0);
        CHECK(run(eval_args + e2) == 0);
        CHECK(io::read_text_file(e1 + "/metrics.csv") == io::read_text_file(e2 + "/metrics.csv"));
        const std::string csv = io::read_text_file(e1 + "/metrics.csv");
        CHECK(csv.rfind("slice_id,method,channels_kept,ssim,psnr_db,rmse\n", 0) == 0);
        CHECK(csv.find(",das,8,") != std::string::npos);
        CHECK(csv.find(",cdss,16,") != std::string::npos);

        // Export writes rasters and difference maps.
        const auto x1 = (dir / "export1").string();
        CHECK(run("export --config " + cfg.string() + " --dataset " + data +
                  ".test.pactdset --checkpoint " + t1 +
                  "/checkpoint.pactckpt --slice 1 --keep-fraction 0.5 --out " + x1) == 0);
        CHECK(fs::exists(x1 + "/phantom.pgm"));
        CHECK(fs::exists(x1 + "/das.pgm"));
        CHECK(fs::exists(x1 + "/das_diff.pgm"));
        CHECK(fs::exists(x1 + "/model.pgm"));
        CHECK(fs::exists(x1 + "/model_diff.pgm"));
        // PGM header sanity: 16-bit grayscale.
        const std::string pgm = io::read_text_file(x1 + "/das.pgm");
        CHECK(pgm.rfind("P5\n32 32\n65535\n", 0) == 0);
    }

    SUBCASE("usage errors exit 1") {
        CHECK(run("recon --method das") == 1);                    // missing required flags
        CHECK(run("definitely-not-a-command --out x") == 1);      // unknown subcommand
        const fs::path bad = dir / "bad.json";
        io::write_text_file(bad.string(), R"({"geometry": {"radius_mm": 50}})");
        CHECK(run("build-operator --config " + bad.string() + " --out " +
                  (dir / "x.op").string()) == 1);                 // unknown key rejected
    }

    SUBCASE("runtime errors exit 2") {
        CHECK(run("recon --method das --dataset /nonexistent.pactdset --out " +
                  (dir / "r").string()) == 2);
    }
}
