#include "pact/system_matrix.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pact/io_util.hpp"
#include "pact/rng.hpp"

namespace pact {

namespace {

constexpr char kMagic[16] = {'P', 'A', 'C', 'T', 'S', 'Y', 'S', 'M',
                             0, 0, 0, 0, 0, 0, 0, 0};

} // namespace

SystemMatrix build_system_matrix(const RingGeometry& geometry, const ImageGrid& grid,
                                 const BuildOptions& opts) {
    validate_pair(geometry, grid);

    const int ne = geometry.n_elements;
    const int nt = geometry.n_samples;
    const int nx = grid.nx;
    const int ny = grid.ny;
    const std::uint64_t n_pix = static_cast<std::uint64_t>(nx) * ny;

    SystemMatrix A;
    A.rows = static_cast<std::uint64_t>(ne) * nt;
    A.cols = n_pix;
    A.geometry = geometry;
    A.grid = grid;
    A.geom_fp = geometry.fingerprint();
    A.grid_fp = grid.fingerprint();
    A.amplitude_decay = opts.amplitude_decay;

    const std::vector<double> ex = element_xs(geometry);
    const std::vector<double> ey = element_ys(geometry);

    // Fractional sample index of each (element, pixel) pair, computed once and
    // reused by both CSR passes.
    std::vector<double> s_idx(static_cast<std::size_t>(ne) * n_pix);
    std::vector<float> amp;
    if (opts.amplitude_decay) amp.resize(s_idx.size());
    const double inv_c = 1.0 / geometry.sound_speed_mps;
    for (int e = 0; e < ne; ++e) {
        double* se = s_idx.data() + static_cast<std::size_t>(e) * n_pix;
        float* ae = opts.amplitude_decay ? amp.data() + static_cast<std::size_t>(e) * n_pix : nullptr;
        for (int i = 0; i < ny; ++i) {
            const double dy = grid.y_of(i) - ey[e];
            for (int j = 0; j < nx; ++j) {
                const double dx = grid.x_of(j) - ex[e];
                const double d = std::sqrt(dx * dx + dy * dy);
                const double s = (d * inv_c - geometry.t0_s) * geometry.fs_hz;
                se[static_cast<std::size_t>(i) * nx + j] = s;
                if (ae) {
                    const double r = std::max(d, grid.pitch_m);
                    ae[static_cast<std::size_t>(i) * nx + j] =
                        static_cast<float>(grid.pitch_m / r);
                }
            }
        }
    }
    for (double s : s_idx) {
        if (s < 0.0 || s > static_cast<double>(nt - 2))
            throw TimeWindowTooShort(
                "a pixel's time-of-flight sample falls outside [0, n_samples-2]");
    }

    // Pass 1: row populations.
    A.row_offsets.assign(A.rows + 1, 0);
    for (std::size_t k = 0; k < s_idx.size(); ++k) {
        const std::uint64_t e = k / n_pix;
        const auto t0 = static_cast<std::uint64_t>(std::floor(s_idx[k]));
        const std::uint64_t base = e * nt;
        ++A.row_offsets[base + t0 + 1];
        ++A.row_offsets[base + t0 + 2];
    }
    for (std::uint64_t r = 0; r < A.rows; ++r) A.row_offsets[r + 1] += A.row_offsets[r];

    // Pass 2: fill. Pixels are visited in row-major order per element, so
    // column indices within each row come out sorted.
    const std::uint64_t nnz = A.row_offsets[A.rows];
    A.col_indices.resize(nnz);
    A.weights.resize(nnz);
    std::vector<std::uint64_t> cursor(A.row_offsets.begin(), A.row_offsets.end() - 1);
    for (std::size_t k = 0; k < s_idx.size(); ++k) {
        const std::uint64_t e = k / n_pix;
        const auto q = static_cast<std::uint32_t>(k % n_pix);
        const double s = s_idx[k];
        const double fl = std::floor(s);
        const double frac = s - fl; // exact: fl <= s < fl + 1
        const std::uint64_t row0 = e * nt + static_cast<std::uint64_t>(fl);
        float w0 = static_cast<float>(1.0 - frac);
        float w1 = static_cast<float>(frac);
        if (!amp.empty()) {
            w0 *= amp[k];
            w1 *= amp[k];
        }
        std::uint64_t slot0 = cursor[row0]++;
        std::uint64_t slot1 = cursor[row0 + 1]++;
        A.col_indices[slot0] = q;
        A.weights[slot0] = w0;
        A.col_indices[slot1] = q;
        A.weights[slot1] = w1;
    }
    return A;
}

void forward_project_into(const SystemMatrix& A, const double* image, double* sino) {
    for (std::uint64_t r = 0; r < A.rows; ++r) {
        double acc = 0.0;
        const std::uint64_t end = A.row_offsets[r + 1];
        for (std::uint64_t k = A.row_offsets[r]; k < end; ++k)
            acc += static_cast<double>(A.weights[k]) * image[A.col_indices[k]];
        sino[r] = acc;
    }
}

void adjoint_project_into(const SystemMatrix& A, const double* sino, double* image) {
    std::memset(image, 0, A.cols * sizeof(double));
    for (std::uint64_t r = 0; r < A.rows; ++r) {
        const double v = sino[r];
        if (v == 0.0) continue;
        const std::uint64_t end = A.row_offsets[r + 1];
        for (std::uint64_t k = A.row_offsets[r]; k < end; ++k)
            image[A.col_indices[k]] += static_cast<double>(A.weights[k]) * v;
    }
}

Sinogram forward_project(const SystemMatrix& A, const ImageField& p) {
    p.require_grid(A.grid_fp);
    if (p.size() != A.cols) throw ShapeMismatch("image pixel count != operator columns");
    Sinogram y(A.geometry);
    forward_project_into(A, p.values.data(), y.data.data());
    return y;
}

ImageField adjoint_project(const SystemMatrix& A, const Sinogram& y) {
    y.require_geometry(A.geom_fp);
    if (y.size() != A.rows) throw ShapeMismatch("sinogram sample count != operator rows");
    ImageField p(A.grid);
    adjoint_project_into(A, y.data.data(), p.values.data());
    return p;
}

double operator_norm_sq(const SystemMatrix& A, int iterations) {
    CounterRng rng(0x5EEDull);
    std::vector<double> v(A.cols), tmp_y(A.rows), tmp_x(A.cols);
    double norm = 0.0;
    for (auto& x : v) x = rng.next_gaussian();
    for (int it = 0; it < iterations; ++it) {
        forward_project_into(A, v.data(), tmp_y.data());
        adjoint_project_into(A, tmp_y.data(), tmp_x.data());
        norm = 0.0;
        for (double x : tmp_x) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = tmp_x[i] / norm;
    }
    return norm; // ||A^T A v|| for unit v -> sigma_max^2
}

void save_system_matrix(const SystemMatrix& A, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    io::write_bytes(os, kMagic, sizeof(kMagic));
    io::write_pod<std::uint64_t>(os, A.rows);
    io::write_pod<std::uint64_t>(os, A.cols);
    io::write_pod<std::uint64_t>(os, A.nnz());
    io::write_bytes(os, A.row_offsets.data(), A.row_offsets.size() * sizeof(std::uint64_t));
    io::write_bytes(os, A.col_indices.data(), A.col_indices.size() * sizeof(std::uint32_t));
    io::write_bytes(os, A.weights.data(), A.weights.size() * sizeof(float));

    nlohmann::json footer;
    footer["geometry"] = {{"n_elements", A.geometry.n_elements},
                          {"radius_m", A.geometry.radius_m},
                          {"fs_hz", A.geometry.fs_hz},
                          {"n_samples", A.geometry.n_samples},
                          {"sound_speed_mps", A.geometry.sound_speed_mps},
                          {"t0_s", A.geometry.t0_s}};
    footer["grid"] = {{"nx", A.grid.nx}, {"ny", A.grid.ny}, {"pitch_m", A.grid.pitch_m}};
    footer["amplitude_decay"] = A.amplitude_decay;
    const std::string text = footer.dump();
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    io::write_bytes(os, text.data(), text.size());
}

SystemMatrix load_system_matrix(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    char magic[16];
    io::read_bytes(is, magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorruptFile("bad operator file magic");

    SystemMatrix A;
    A.rows = io::read_pod<std::uint64_t>(is, "rows");
    A.cols = io::read_pod<std::uint64_t>(is, "cols");
    const auto nnz = io::read_pod<std::uint64_t>(is, "nnz");
    A.row_offsets.resize(A.rows + 1);
    A.col_indices.resize(nnz);
    A.weights.resize(nnz);
    io::read_bytes(is, A.row_offsets.data(), A.row_offsets.size() * sizeof(std::uint64_t),
                   "row offsets");
    io::read_bytes(is, A.col_indices.data(), nnz * sizeof(std::uint32_t), "column indices");
    io::read_bytes(is, A.weights.data(), nnz * sizeof(float), "weights");

    const auto len = io::read_pod<std::uint32_t>(is, "footer length");
    std::string text(len, '\0');
    io::read_bytes(is, text.data(), len, "footer");
    nlohmann::json footer;
    try {
        footer = nlohmann::json::parse(text);
        const auto& jg = footer.at("geometry");
        A.geometry.n_elements = jg.at("n_elements").get<int>();
        A.geometry.radius_m = jg.at("radius_m").get<double>();
        A.geometry.fs_hz = jg.at("fs_hz").get<double>();
        A.geometry.n_samples = jg.at("n_samples").get<int>();
        A.geometry.sound_speed_mps = jg.at("sound_speed_mps").get<double>();
        A.geometry.t0_s = jg.at("t0_s").get<double>();
        const auto& jr = footer.at("grid");
        A.grid.nx = jr.at("nx").get<int>();
        A.grid.ny = jr.at("ny").get<int>();
        A.grid.pitch_m = jr.at("pitch_m").get<double>();
        A.amplitude_decay = footer.at("amplitude_decay").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(std::string("bad operator footer: ") + e.what());
    }
    A.geom_fp = A.geometry.fingerprint();
    A.grid_fp = A.grid.fingerprint();
    if (A.rows != static_cast<std::uint64_t>(A.geometry.n_elements) * A.geometry.n_samples ||
        A.cols != static_cast<std::uint64_t>(A.grid.nx) * A.grid.ny)
        throw CorruptFile("operator dimensions disagree with footer");
    return A;
}

} // namespace pact
