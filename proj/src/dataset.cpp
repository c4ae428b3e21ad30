#include "pact/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "pact/io_util.hpp"
#include "pact/rng.hpp"

namespace pact {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'C', 'T', 'D', 'S', 'E', 'T'};
constexpr std::uint16_t kVersion = 1;

// Dataset arrays persist as f32; snapping values on creation makes
// save -> load an exact round trip.
void snap_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

double snr_of(const std::vector<double>& signal, const std::vector<double>& noise) {
    double s2 = 0.0, n2 = 0.0;
    for (double v : signal) s2 += v * v;
    for (double v : noise) n2 += v * v;
    if (n2 == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(s2 / n2);
}

} // namespace

Sinogram simulate_measurement(const SystemMatrix& A, const ImageField& p, double snr_db,
                              std::uint64_t seed) {
    if (std::isnan(snr_db)) throw InvalidConfig("snr_db must be finite or +inf");
    Sinogram y = forward_project(A, p);
    if (std::isinf(snr_db)) return y;

    double signal_sq = 0.0;
    for (double v : y.data) signal_sq += v * v;
    if (signal_sq == 0.0) return y; // zero signal -> zero noise by convention

    CounterRng rng(CounterRng::mix(seed ^ 0x4E4F495345ull)); // "NOISE"
    std::vector<double> g(y.size());
    double g_sq = 0.0;
    for (double& v : g) {
        v = rng.next_gaussian();
        g_sq += v * v;
    }
    // ||eps||^2 = ||Ap||^2 * 10^(-snr/10), realized exactly.
    const double alpha = std::sqrt(signal_sq / g_sq) * std::pow(10.0, -snr_db / 20.0);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * g[i];
    return y;
}

Dataset simulate_dataset(const SystemMatrix& A, const SimulateConfig& cfg) {
    Dataset d;
    d.geometry = A.geometry;
    d.grid = A.grid;
    d.snr_db = cfg.snr_db;
    d.split = cfg.split;
    d.seed = cfg.seed;

    CounterRng root(cfg.seed);
    const std::uint64_t split_stream = cfg.split == "train" ? 1 : 2;
    for (int i = 0; i < cfg.n_slices; ++i) {
        CounterRng slice = root.fork(split_stream).fork(static_cast<std::uint64_t>(i));
        PhantomSpec spec = cfg.phantom;
        spec.seed = slice.next_u64();
        DatasetEntry e;
        e.phantom = generate_phantom(spec, A.grid);
        snap_f32(e.phantom.values);
        e.clean = forward_project(A, e.phantom);
        snap_f32(e.clean.data);
        e.noisy = simulate_measurement(A, e.phantom, cfg.snr_db, slice.next_u64());
        snap_f32(e.noisy.data);
        std::vector<double> noise(e.noisy.size());
        for (std::size_t q = 0; q < noise.size(); ++q) noise[q] = e.noisy.data[q] - e.clean.data[q];
        e.realized_snr_db = snr_of(e.clean.data, noise);
        d.add(std::move(e));
    }
    return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");

    nlohmann::json header;
    header["geometry"] = {{"n_elements", d.geometry.n_elements},
                          {"radius_m", d.geometry.radius_m},
                          {"fs_hz", d.geometry.fs_hz},
                          {"n_samples", d.geometry.n_samples},
                          {"sound_speed_mps", d.geometry.sound_speed_mps},
                          {"t0_s", d.geometry.t0_s}};
    header["grid"] = {{"nx", d.grid.nx}, {"ny", d.grid.ny}, {"pitch_m", d.grid.pitch_m}};
    header["snr_db"] = std::isinf(d.snr_db) ? 1e9 : d.snr_db;
    header["split"] = d.split;
    header["seed"] = d.seed;
    header["n_records"] = d.size();
    std::vector<double> realized;
    for (std::size_t i = 0; i < d.size(); ++i)
        realized.push_back(std::isinf(d.realized_snr_db(i)) ? 1e9 : d.realized_snr_db(i));
    header["realized_snr_db"] = realized;
    const std::string text = header.dump();

    io::write_bytes(os, kMagic, sizeof(kMagic));
    io::write_pod<std::uint16_t>(os, kVersion);
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    io::write_bytes(os, text.data(), text.size());

    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& img = d.phantom(i).values;
        const auto& clean = d.clean(i).data;
        const auto& noisy = d.noisy(i).data;
        io::write_f32_array(os, img);
        io::write_f32_array(os, clean);
        io::write_f32_array(os, noisy);
        std::uint32_t crc = io::crc32_f32(img);
        crc = io::crc32_f32(clean, crc);
        crc = io::crc32_f32(noisy, crc);
        io::write_pod<std::uint32_t>(os, crc);
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);

    char magic[8];
    io::read_bytes(is, magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorruptFile("bad dataset magic");
    const auto version = io::read_pod<std::uint16_t>(is, "version");
    if (version != kVersion)
        throw VersionMismatch("dataset version " + std::to_string(version) +
                              ", expected " + std::to_string(kVersion));

    const auto len = io::read_pod<std::uint32_t>(is, "header length");
    std::string text(len, '\0');
    io::read_bytes(is, text.data(), len, "header");

    Dataset d;
    std::size_t n_records = 0;
    std::vector<double> realized;
    try {
        const auto header = nlohmann::json::parse(text);
        const auto& jg = header.at("geometry");
        d.geometry.n_elements = jg.at("n_elements").get<int>();
        d.geometry.radius_m = jg.at("radius_m").get<double>();
        d.geometry.fs_hz = jg.at("fs_hz").get<double>();
        d.geometry.n_samples = jg.at("n_samples").get<int>();
        d.geometry.sound_speed_mps = jg.at("sound_speed_mps").get<double>();
        d.geometry.t0_s = jg.at("t0_s").get<double>();
        const auto& jr = header.at("grid");
        d.grid.nx = jr.at("nx").get<int>();
        d.grid.ny = jr.at("ny").get<int>();
        d.grid.pitch_m = jr.at("pitch_m").get<double>();
        d.snr_db = header.at("snr_db").get<double>();
        if (d.snr_db >= 1e9) d.snr_db = std::numeric_limits<double>::infinity();
        d.split = header.at("split").get<std::string>();
        d.seed = header.at("seed").get<std::uint64_t>();
        n_records = header.at("n_records").get<std::size_t>();
        realized = header.at("realized_snr_db").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("bad dataset header: ") + e.what());
    }
    if (realized.size() != n_records) throw CorruptFile("realized SNR list length mismatch");

    const std::size_t n_pix = static_cast<std::size_t>(d.grid.nx) * d.grid.ny;
    const std::size_t n_meas =
        static_cast<std::size_t>(d.geometry.n_elements) * d.geometry.n_samples;
    const std::uint64_t geom_fp = d.geometry.fingerprint();
    const std::uint64_t grid_fp = d.grid.fingerprint();

    for (std::size_t i = 0; i < n_records; ++i) {
        DatasetEntry e;
        e.phantom.nx = d.grid.nx;
        e.phantom.ny = d.grid.ny;
        e.phantom.grid_fp = grid_fp;
        e.phantom.values = io::read_f32_array(is, n_pix, "phantom");
        e.clean.n_elements = e.noisy.n_elements = d.geometry.n_elements;
        e.clean.n_samples = e.noisy.n_samples = d.geometry.n_samples;
        e.clean.geom_fp = e.noisy.geom_fp = geom_fp;
        e.clean.data = io::read_f32_array(is, n_meas, "clean sinogram");
        e.noisy.data = io::read_f32_array(is, n_meas, "noisy sinogram");
        const auto stored_crc = io::read_pod<std::uint32_t>(is, "record crc");
        std::uint32_t crc = io::crc32_f32(e.phantom.values);
        crc = io::crc32_f32(e.clean.data, crc);
        crc = io::crc32_f32(e.noisy.data, crc);
        if (crc != stored_crc)
            throw CorruptFile("record " + std::to_string(i) + " failed its CRC check");
        e.realized_snr_db = realized[i] >= 1e9 ? std::numeric_limits<double>::infinity()
                                               : realized[i];
        d.add(std::move(e));
    }
    d.reset_phantom_read_count();
    return d;
}

} // namespace pact
