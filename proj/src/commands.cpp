#include "pact/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pact/cdss/evaluate.hpp"
#include "pact/cdss/train.hpp"
#include "pact/io_util.hpp"
#include "pact/recon.hpp"

namespace pact::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config file: one JSON document with fixed sections; unknown keys rejected.
// ---------------------------------------------------------------------------

struct RunConfig {
    RingGeometry geometry;
    ImageGrid grid;
    PhantomSpec phantom;
    double snr_db = 40.0;
    double masking_ratio = 0.5;
    net::IFUnetConfig model;
    cdss::TrainConfig training;
    IterativeOptions iterative;
    bool amplitude_decay = false;
    std::string dataset_path;
    std::string operator_path;
    std::string checkpoint_path;

    RunConfig() {
        // Desk-scale training preset: small enough to train on one CPU core.
        model.depth = 2;
        model.base_channels = 6;
        model.ffn_ratio = 2;
        model.attn_pool = 4;
        training.batch_size = 4;
        training.epochs = 100;
    }
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw InvalidConfig("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig parse_config(const std::string& path) {
    RunConfig c;
    if (path.empty()) return c;
    json j;
    try {
        j = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw InvalidConfig(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j, {"geometry", "grid", "phantom", "noise", "masking", "model", "training",
                       "losses", "paths", "iterative", "operator"},
                   "config root");
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        reject_unknown(g, {"n_elements", "radius_m", "fs_hz", "n_samples", "sound_speed_mps",
                           "t0_s"}, "geometry");
        take(g, "n_elements", c.geometry.n_elements);
        take(g, "radius_m", c.geometry.radius_m);
        take(g, "fs_hz", c.geometry.fs_hz);
        take(g, "n_samples", c.geometry.n_samples);
        take(g, "sound_speed_mps", c.geometry.sound_speed_mps);
        take(g, "t0_s", c.geometry.t0_s);
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        reject_unknown(g, {"nx", "ny", "pitch_m"}, "grid");
        take(g, "nx", c.grid.nx);
        take(g, "ny", c.grid.ny);
        take(g, "pitch_m", c.grid.pitch_m);
    }
    if (j.contains("phantom")) {
        const auto& g = j["phantom"];
        reject_unknown(g, {"kind", "min_count", "max_count", "min_intensity", "max_intensity"},
                       "phantom");
        std::string kind = to_string(c.phantom.kind);
        take(g, "kind", kind);
        c.phantom.kind = phantom_kind_from_string(kind);
        take(g, "min_count", c.phantom.min_count);
        take(g, "max_count", c.phantom.max_count);
        take(g, "min_intensity", c.phantom.min_intensity);
        take(g, "max_intensity", c.phantom.max_intensity);
    }
    if (j.contains("noise")) {
        reject_unknown(j["noise"], {"snr_db"}, "noise");
        take(j["noise"], "snr_db", c.snr_db);
    }
    if (j.contains("masking")) {
        reject_unknown(j["masking"], {"masking_ratio"}, "masking");
        take(j["masking"], "masking_ratio", c.masking_ratio);
    }
    if (j.contains("model")) {
        const auto& g = j["model"];
        reject_unknown(g, {"depth", "base_channels", "f_pool", "f_conv", "f_attn", "heads",
                           "ffn_ratio", "attn_pool", "use_mixer_blocks", "max_pool_in_mixer"},
                       "model");
        take(g, "depth", c.model.depth);
        take(g, "base_channels", c.model.base_channels);
        take(g, "f_pool", c.model.f_pool);
        take(g, "f_conv", c.model.f_conv);
        take(g, "f_attn", c.model.f_attn);
        take(g, "heads", c.model.heads);
        take(g, "ffn_ratio", c.model.ffn_ratio);
        take(g, "attn_pool", c.model.attn_pool);
        take(g, "use_mixer_blocks", c.model.use_mixer_blocks);
        take(g, "max_pool_in_mixer", c.model.max_pool_in_mixer);
    }
    if (j.contains("training")) {
        const auto& g = j["training"];
        reject_unknown(g, {"mode", "batch_size", "epochs", "lr", "weight_decay", "seed",
                           "checkpoint_every", "even_channels", "rotate_exact90",
                           "stop_grad_p1_in_mic", "stop_grad_ei_input", "wavelet_levels"},
                       "training");
        std::string mode = cdss::to_string(c.training.mode);
        take(g, "mode", mode);
        c.training.mode = cdss::train_mode_from_string(mode);
        take(g, "batch_size", c.training.batch_size);
        take(g, "epochs", c.training.epochs);
        take(g, "lr", c.training.lr);
        take(g, "weight_decay", c.training.weight_decay);
        take(g, "seed", c.training.seed);
        take(g, "checkpoint_every", c.training.checkpoint_every);
        take(g, "even_channels", c.training.even_channels);
        take(g, "rotate_exact90", c.training.rotate_exact90);
        take(g, "stop_grad_p1_in_mic", c.training.stop_grad_p1_in_mic);
        take(g, "stop_grad_ei_input", c.training.stop_grad_ei_input);
        take(g, "wavelet_levels", c.training.wavelet_levels);
    }
    if (j.contains("losses")) {
        const auto& g = j["losses"];
        reject_unknown(g, {"mdc", "mic", "ei", "dwt", "tv"}, "losses");
        take(g, "mdc", c.training.weights.mdc);
        take(g, "mic", c.training.weights.mic);
        take(g, "ei", c.training.weights.ei);
        take(g, "dwt", c.training.weights.dwt);
        take(g, "tv", c.training.weights.tv);
    }
    if (j.contains("iterative")) {
        const auto& g = j["iterative"];
        reject_unknown(g, {"regularizer", "reg_weight", "n_steps", "step0", "wavelet_levels"},
                       "iterative");
        std::string reg = c.iterative.regularizer == Regularizer::Tv ? "tv" : "wavelet";
        take(g, "regularizer", reg);
        if (reg == "tv") c.iterative.regularizer = Regularizer::Tv;
        else if (reg == "wavelet") c.iterative.regularizer = Regularizer::Wavelet;
        else throw InvalidConfig("unknown regularizer: " + reg);
        take(g, "reg_weight", c.iterative.reg_weight);
        take(g, "n_steps", c.iterative.n_steps);
        take(g, "step0", c.iterative.step0);
        take(g, "wavelet_levels", c.iterative.wavelet_levels);
    }
    if (j.contains("operator")) {
        reject_unknown(j["operator"], {"amplitude_decay"}, "operator");
        take(j["operator"], "amplitude_decay", c.amplitude_decay);
    }
    if (j.contains("paths")) {
        const auto& g = j["paths"];
        reject_unknown(g, {"dataset", "operator", "checkpoint"}, "paths");
        take(g, "dataset", c.dataset_path);
        take(g, "operator", c.operator_path);
        take(g, "checkpoint", c.checkpoint_path);
    }
    return c;
}

json resolved_json(const RunConfig& c) {
    json j;
    j["geometry"] = {{"n_elements", c.geometry.n_elements}, {"radius_m", c.geometry.radius_m},
                     {"fs_hz", c.geometry.fs_hz}, {"n_samples", c.geometry.n_samples},
                     {"sound_speed_mps", c.geometry.sound_speed_mps}, {"t0_s", c.geometry.t0_s}};
    j["grid"] = {{"nx", c.grid.nx}, {"ny", c.grid.ny}, {"pitch_m", c.grid.pitch_m}};
    j["phantom"] = {{"kind", to_string(c.phantom.kind)}, {"min_count", c.phantom.min_count},
                    {"max_count", c.phantom.max_count},
                    {"min_intensity", c.phantom.min_intensity},
                    {"max_intensity", c.phantom.max_intensity}};
    j["noise"] = {{"snr_db", std::isinf(c.snr_db) ? 1e9 : c.snr_db}};
    j["masking"] = {{"masking_ratio", c.masking_ratio}};
    j["model"] = {{"depth", c.model.depth}, {"base_channels", c.model.base_channels},
                  {"f_pool", c.model.f_pool}, {"f_conv", c.model.f_conv},
                  {"f_attn", c.model.f_attn}, {"heads", c.model.heads},
                  {"ffn_ratio", c.model.ffn_ratio},
                  {"attn_pool", c.model.attn_pool},
                  {"use_mixer_blocks", c.model.use_mixer_blocks},
                  {"max_pool_in_mixer", c.model.max_pool_in_mixer}};
    j["training"] = {{"mode", cdss::to_string(c.training.mode)},
                     {"batch_size", c.training.batch_size}, {"epochs", c.training.epochs},
                     {"lr", c.training.lr}, {"weight_decay", c.training.weight_decay},
                     {"seed", c.training.seed}, {"checkpoint_every", c.training.checkpoint_every},
                     {"even_channels", c.training.even_channels},
                     {"rotate_exact90", c.training.rotate_exact90},
                     {"stop_grad_p1_in_mic", c.training.stop_grad_p1_in_mic},
                     {"stop_grad_ei_input", c.training.stop_grad_ei_input},
                     {"wavelet_levels", c.training.wavelet_levels}};
    j["losses"] = {{"mdc", c.training.weights.mdc}, {"mic", c.training.weights.mic},
                   {"ei", c.training.weights.ei}, {"dwt", c.training.weights.dwt},
                   {"tv", c.training.weights.tv}};
    j["iterative"] = {{"regularizer", c.iterative.regularizer == Regularizer::Tv ? "tv" : "wavelet"},
                      {"reg_weight", c.iterative.reg_weight}, {"n_steps", c.iterative.n_steps},
                      {"step0", c.iterative.step0},
                      {"wavelet_levels", c.iterative.wavelet_levels}};
    j["operator"] = {{"amplitude_decay", c.amplitude_decay}};
    j["paths"] = {{"dataset", c.dataset_path}, {"operator", c.operator_path},
                  {"checkpoint", c.checkpoint_path}};
    return j;
}

void archive_config(const RunConfig& c, const std::string& beside, const std::string& log_text) {
    io::write_text_file(beside + ".resolved.json", resolved_json(c).dump(2) + "\n");
    io::write_text_file(beside + ".log", log_text);
}

std::string out_base(const std::string& out) {
    fs::path p(out);
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    return out;
}

std::string out_dir(const std::string& out) {
    fs::create_directories(out);
    return out;
}

// Operator cache: build from config unless an operator path is given.
SystemMatrix obtain_operator(const RunConfig& c) {
    if (!c.operator_path.empty()) return load_system_matrix(c.operator_path);
    return build_system_matrix(c.geometry, c.grid, {c.amplitude_decay});
}

// 16-bit grayscale PGM (big-endian samples per the format).
void write_pgm16(const std::string& path, const ImageField& img, double lo, double hi) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << "P5\n" << img.nx << " " << img.ny << "\n65535\n";
    const double span = hi > lo ? hi - lo : 1.0;
    for (double v : img.values) {
        const double t = std::clamp((v - lo) / span, 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                        static_cast<unsigned char>(q & 0xFF)};
        os.write(reinterpret_cast<const char*>(bytes), 2);
    }
}

void write_image_and_diff(const std::string& dir, const std::string& stem,
                          const ImageField& img, const ImageField* reference) {
    double lo = img.values[0], hi = img.values[0];
    for (double v : img.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    write_pgm16(dir + "/" + stem + ".pgm", img, lo, hi);
    if (reference) {
        ImageField diff = img;
        // Compare on a common peak-1 scale, like the metrics do.
        double ip = hi > 0 ? hi : 1.0;
        double rp = *std::max_element(reference->values.begin(), reference->values.end());
        if (!(rp > 0)) rp = 1.0;
        double dmax = 0.0;
        for (std::size_t q = 0; q < diff.values.size(); ++q) {
            diff.values[q] = img.values[q] / ip - reference->values[q] / rp;
            dmax = std::max(dmax, std::abs(diff.values[q]));
        }
        if (dmax == 0.0) dmax = 1.0;
        write_pgm16(dir + "/" + stem + "_diff.pgm", diff, -dmax, dmax);
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_build_operator(const RunConfig& cfg, const std::string& out) {
    SystemMatrix A = build_system_matrix(cfg.geometry, cfg.grid, {cfg.amplitude_decay});
    save_system_matrix(A, out_base(out));
    archive_config(cfg, out,
                   "build-operator: rows=" + std::to_string(A.rows) + " cols=" +
                       std::to_string(A.cols) + " nnz=" + std::to_string(A.nnz()) + "\n");
    std::cout << "wrote operator " << out << " (" << A.rows << " x " << A.cols << ", nnz "
              << A.nnz() << ")\n";
    return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& out, int n_train, int n_test,
                 std::uint64_t seed) {
    SystemMatrix A = obtain_operator(cfg);
    SimulateConfig sc;
    sc.phantom = cfg.phantom;
    sc.snr_db = cfg.snr_db;
    sc.seed = seed;

    out_base(out);
    std::string log;
    sc.n_slices = n_train;
    sc.split = "train";
    Dataset train = simulate_dataset(A, sc);
    save_dataset(train, out + ".train.pactdset");
    log += "train: " + std::to_string(train.size()) + " slices\n";

    sc.n_slices = n_test;
    sc.split = "test";
    Dataset test = simulate_dataset(A, sc);
    save_dataset(test, out + ".test.pactdset");
    log += "test: " + std::to_string(test.size()) + " slices\n";

    archive_config(cfg, out, log);
    std::cout << "wrote " << out << ".train.pactdset (" << n_train << ") and " << out
              << ".test.pactdset (" << n_test << ")\n";
    return 0;
}

int cmd_recon(RunConfig cfg, const std::string& method, const std::string& dataset_path,
              int slice, double keep_fraction, std::uint64_t mask_seed, const std::string& out) {
    Dataset d = load_dataset(dataset_path);
    cfg.geometry = d.geometry;
    cfg.grid = d.grid;
    if (slice < 0 || static_cast<std::size_t>(slice) >= d.size())
        throw InvalidConfig("slice index out of range");
    const Sinogram& y0 = d.noisy(static_cast<std::size_t>(slice));

    cdss::ChannelMask mask;
    const int ne = d.geometry.n_elements;
    Sinogram y = y0;
    if (keep_fraction < 1.0) {
        const int kept = static_cast<int>(std::round(ne * keep_fraction));
        if (kept < 1) throw DegenerateMask("keep fraction keeps no channels");
        CounterRng rng(mask_seed);
        mask.masking_ratio = 1.0 - keep_fraction;
        mask.keep = cdss::sample_keep_set(ne, kept, rng);
        y = cdss::apply_mask(y0, mask);
    }

    ImageField img;
    if (method == "das") {
        img = mask.keep.empty()
                  ? das_reconstruct(d.geometry, d.grid, y)
                  : das_reconstruct(d.geometry, d.grid, y, {mask.keep.data(), mask.keep.size()});
    } else if (method == "tv" || method == "wavelet") {
        SystemMatrix A = obtain_operator(cfg);
        IterativeOptions opts = cfg.iterative;
        opts.regularizer = method == "tv" ? Regularizer::Tv : Regularizer::Wavelet;
        if (method == "wavelet" && opts.reg_weight == IterativeOptions{}.reg_weight)
            opts.reg_weight = 2e-4;
        if (!mask.keep.empty()) opts.keep = mask.keep;
        img = iterative_reconstruct(A, y, opts);
    } else {
        throw InvalidConfig("unknown reconstruction method: " + method);
    }

    const std::string dir = out_dir(out);
    // Raw f64 dump plus a viewable raster.
    std::ofstream os(dir + "/recon.f64", std::ios::binary);
    io::write_bytes(os, img.values.data(), img.values.size() * sizeof(double));
    const ImageField& ref = d.phantom(static_cast<std::size_t>(slice));
    write_image_and_diff(dir, "recon_" + method, img, &ref);
    const auto rep = metrics::compute_metrics(img, ref);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "method=%s slice=%d ssim=%.6f psnr=%.3f rmse=%.6f\n",
                  method.c_str(), slice, rep.ssim, rep.psnr_db, rep.rmse);
    archive_config(cfg, dir + "/recon", buf);
    std::cout << buf;
    return 0;
}

int cmd_train(RunConfig cfg, const std::string& dataset_path, const std::string& out,
              bool supervised) {
    Dataset train = load_dataset(dataset_path);
    cfg.geometry = train.geometry;
    cfg.grid = train.grid;
    SystemMatrix A = obtain_operator(cfg);

    const std::string dir = out_dir(out);
    cfg.training.checkpoint_path = dir + "/checkpoint.pactckpt";
    cfg.training.masking_ratio = cfg.masking_ratio;
    cfg.training.model = cfg.model;
    if (supervised && cfg.training.mode == cdss::TrainMode::Cdss)
        cfg.training.mode = cdss::TrainMode::SupervisedMasked;
    if (!supervised) cfg.training.mode = cdss::TrainMode::Cdss;

    cdss::TrainResult r = supervised ? cdss::train_supervised(A, train, cfg.training)
                                     : cdss::train_cdss(A, train, cfg.training);

    io::write_text_file(dir + "/history.csv",
                        cdss::history_csv(r.history, cdss::deterministic_mode()));
    double wall = 0.0;
    for (const auto& h : r.history) wall += h.wall_seconds;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "mode=%s epochs=%zu final_total=%.9g wall_seconds=%.1f phantom_reads=%llu\n",
                  cdss::to_string(cfg.training.mode).c_str(), r.history.size(),
                  r.history.empty() ? 0.0 : r.history.back().total, wall,
                  static_cast<unsigned long long>(r.phantom_reads));
    archive_config(cfg, dir + "/train", buf);
    std::cout << buf;
    return 0;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint_path, const std::string& dataset_path,
             const std::vector<double>& keep_fractions, std::uint64_t seed,
             const std::string& reference, const std::string& out) {
    auto [params, meta] = net::load_checkpoint(checkpoint_path);
    Dataset test = load_dataset(dataset_path);
    cfg.geometry = meta.geometry;
    cfg.grid = meta.grid;
    SystemMatrix A = obtain_operator(cfg);

    cdss::EvalOptions opts;
    opts.keep_fractions = keep_fractions;
    opts.seed = seed;
    if (reference == "dense-das") opts.reference_dense_das = true;
    else if (reference != "phantom") throw InvalidConfig("reference must be phantom|dense-das");

    cdss::EvalResult r = cdss::evaluate_model(A, params, meta, test, opts);
    const std::string dir = out_dir(out);
    io::write_text_file(dir + "/metrics.csv", r.csv());
    io::write_text_file(dir + "/summary.csv", r.summary_text());
    archive_config(cfg, dir + "/eval", "rows=" + std::to_string(r.rows.size()) + "\n");
    std::cout << r.summary_text();
    return 0;
}

int cmd_export(RunConfig cfg, const std::string& dataset_path, const std::string& checkpoint_path,
               int slice, double keep_fraction, std::uint64_t mask_seed, const std::string& out) {
    Dataset d = load_dataset(dataset_path);
    cfg.geometry = d.geometry;
    cfg.grid = d.grid;
    if (slice < 0 || static_cast<std::size_t>(slice) >= d.size())
        throw InvalidConfig("slice index out of range");
    const std::string dir = out_dir(out);

    const ImageField& ref = d.phantom(static_cast<std::size_t>(slice));
    write_image_and_diff(dir, "phantom", ref, nullptr);

    const Sinogram& y0 = d.noisy(static_cast<std::size_t>(slice));
    Sinogram y = y0;
    cdss::ChannelMask mask;
    const int ne = d.geometry.n_elements;
    if (keep_fraction < 1.0) {
        const int kept = static_cast<int>(std::round(ne * keep_fraction));
        if (kept < 1) throw DegenerateMask("keep fraction keeps no channels");
        CounterRng rng(mask_seed);
        mask.keep = cdss::sample_keep_set(ne, kept, rng);
        y = cdss::apply_mask(y0, mask);
    }
    ImageField das_img =
        mask.keep.empty()
            ? das_reconstruct(d.geometry, d.grid, y)
            : das_reconstruct(d.geometry, d.grid, y, {mask.keep.data(), mask.keep.size()});
    write_image_and_diff(dir, "das", das_img, &ref);

    std::string log = "exported phantom and das";
    if (!checkpoint_path.empty()) {
        auto [params, meta] = net::load_checkpoint(checkpoint_path);
        if (meta.grid.fingerprint() != d.grid.fingerprint())
            throw GeometryMismatch("checkpoint grid does not match dataset");
        std::vector<ImageField> in(1, das_img);
        for (double& v : in[0].values) v *= meta.input_gain;
        ImageField net_img = net::ifunet_apply(in, params, meta.config)[0];
        write_image_and_diff(dir, "model", net_img, &ref);
        log += " and model";
    }
    archive_config(cfg, dir + "/export", log + "\n");
    std::cout << log << " to " << dir << "\n";
    return 0;
}

} // namespace

int run_command(const std::vector<std::string>& argv) {
    CLI::App app{"PACT reconstruction toolkit"};
    app.require_subcommand(1);

    std::string config_path, out, dataset_path, checkpoint_path, method = "das";
    std::string reference = "phantom", keep_fractions_str = "0.5";
    int n_train = 200, n_test = 20, slice = 0;
    double snr_db = 40.0, keep_fraction = 1.0, masking_ratio = -1.0;
    std::uint64_t seed = 7, mask_seed = 1;
    int epochs = -1;
    bool amplitude_decay = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--out", out, "output path")->required();
        cmd->add_option("--seed", seed, "random seed");
    };

    auto* op = app.add_subcommand("build-operator", "discretize the forward operator");
    add_common(op);
    op->add_flag("--amplitude-decay", amplitude_decay, "1/r amplitude weighting");

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    add_common(sim);
    sim->add_option("--n-train", n_train);
    sim->add_option("--n-test", n_test);
    sim->add_option("--snr-db", snr_db);

    auto* rec = app.add_subcommand("recon", "reconstruct one slice");
    add_common(rec);
    rec->add_option("--method", method, "das|tv|wavelet");
    rec->add_option("--dataset", dataset_path)->required();
    rec->add_option("--slice", slice);
    rec->add_option("--keep-fraction", keep_fraction);
    rec->add_option("--mask-seed", mask_seed);

    auto* tc = app.add_subcommand("train-cdss", "self-supervised training");
    add_common(tc);
    tc->add_option("--dataset", dataset_path)->required();
    tc->add_option("--epochs", epochs);
    tc->add_option("--masking-ratio", masking_ratio);
    double keep_fraction_flag = -1.0;
    tc->add_option("--keep-fraction", keep_fraction_flag, "alternative to --masking-ratio");

    auto* ts = app.add_subcommand("train-supervised", "supervised baseline training");
    add_common(ts);
    ts->add_option("--dataset", dataset_path)->required();
    ts->add_option("--epochs", epochs);
    ts->add_option("--masking-ratio", masking_ratio);
    int even_channels = 0;
    ts->add_option("--even-channels", even_channels, "fixed evenly spaced channels");

    auto* ev = app.add_subcommand("eval", "metric sweep over keep fractions");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint_path)->required();
    ev->add_option("--dataset", dataset_path)->required();
    ev->add_option("--keep-fractions", keep_fractions_str, "comma list, e.g. 0.1,0.3,0.5");
    ev->add_option("--reference", reference, "phantom|dense-das");

    auto* ex = app.add_subcommand("export", "write 16-bit rasters and difference maps");
    add_common(ex);
    ex->add_option("--dataset", dataset_path)->required();
    ex->add_option("--checkpoint", checkpoint_path);
    ex->add_option("--slice", slice);
    ex->add_option("--keep-fraction", keep_fraction);
    ex->add_option("--mask-seed", mask_seed);

    std::vector<std::string> args(argv.rbegin(), argv.rend());
    if (!args.empty()) args.pop_back(); // program name
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        RunConfig cfg = parse_config(config_path);
        cfg.amplitude_decay |= amplitude_decay;
        if (epochs > 0) cfg.training.epochs = epochs;
        if (masking_ratio >= 0.0) cfg.masking_ratio = masking_ratio;
        if (keep_fraction_flag > 0.0) cfg.masking_ratio = 1.0 - keep_fraction_flag;
        if (sim->count("--snr-db")) cfg.snr_db = snr_db;
        for (auto* cmd : {op, sim, rec, tc, ts, ev, ex})
            if (cmd->parsed() && cmd->count("--seed")) cfg.training.seed = seed;

        if (op->parsed()) return cmd_build_operator(cfg, out);
        if (sim->parsed()) return cmd_simulate(cfg, out, n_train, n_test, cfg.training.seed);
        if (rec->parsed())
            return cmd_recon(cfg, method, dataset_path, slice, keep_fraction, mask_seed, out);
        if (tc->parsed()) return cmd_train(cfg, dataset_path, out, false);
        if (ts->parsed()) {
            cfg.training.even_channels = even_channels;
            if (even_channels > 0) cfg.training.mode = cdss::TrainMode::Supervised;
            else cfg.training.mode = cdss::TrainMode::SupervisedMasked;
            return cmd_train(cfg, dataset_path, out, true);
        }
        if (ev->parsed()) {
            std::vector<double> fractions;
            std::string tok;
            for (char ch : keep_fractions_str + ",") {
                if (ch == ',') {
                    if (!tok.empty()) fractions.push_back(std::stod(tok));
                    tok.clear();
                } else {
                    tok += ch;
                }
            }
            return cmd_eval(cfg, checkpoint_path, dataset_path, fractions, cfg.training.seed,
                            reference, out);
        }
        if (ex->parsed())
            return cmd_export(cfg, dataset_path, checkpoint_path, slice, keep_fraction,
                              mask_seed, out);
        std::cerr << "usage error: no subcommand\n";
        return 1;
    } catch (const InvalidConfig& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace pact::cli
