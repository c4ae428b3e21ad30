#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "pact/field.hpp"
#include "pact/phantom.hpp"
#include "pact/system_matrix.hpp"

namespace pact {

// y = A p + eps with eps scaled so the realized SNR equals snr_db exactly;
// snr_db = +inf means noise free. Deterministic per seed.
Sinogram simulate_measurement(const SystemMatrix& A, const ImageField& p, double snr_db,
                              std::uint64_t seed);

struct DatasetEntry {
    ImageField phantom;
    Sinogram clean;
    Sinogram noisy;
    double realized_snr_db = 0.0;
};

// Slices sharing one geometry/grid. Phantom access is counted so the
// self-supervised loop can prove it never touched ground truth.
class Dataset {
public:
    Dataset() = default;
    Dataset(Dataset&& o) noexcept
        : geometry(o.geometry), grid(o.grid), snr_db(o.snr_db), split(std::move(o.split)),
          seed(o.seed), entries_(std::move(o.entries_)),
          phantom_reads_(o.phantom_reads_.load()) {}
    Dataset& operator=(Dataset&& o) noexcept {
        geometry = o.geometry;
        grid = o.grid;
        snr_db = o.snr_db;
        split = std::move(o.split);
        seed = o.seed;
        entries_ = std::move(o.entries_);
        phantom_reads_.store(o.phantom_reads_.load());
        return *this;
    }

    RingGeometry geometry;
    ImageGrid grid;
    double snr_db = 40.0;
    std::string split = "train";
    std::uint64_t seed = 0;

    std::size_t size() const { return entries_.size(); }
    void add(DatasetEntry e) { entries_.push_back(std::move(e)); }

    const ImageField& phantom(std::size_t i) const {
        ++phantom_reads_;
        return entries_.at(i).phantom;
    }
    const Sinogram& clean(std::size_t i) const { return entries_.at(i).clean; }
    const Sinogram& noisy(std::size_t i) const { return entries_.at(i).noisy; }
    double realized_snr_db(std::size_t i) const { return entries_.at(i).realized_snr_db; }

    std::uint64_t phantom_read_count() const { return phantom_reads_.load(); }
    void reset_phantom_read_count() const { phantom_reads_.store(0); }

private:
    std::vector<DatasetEntry> entries_;
    mutable std::atomic<std::uint64_t> phantom_reads_{0};
};

struct SimulateConfig {
    PhantomSpec phantom;
    double snr_db = 40.0;
    int n_slices = 200;
    std::string split = "train";
    std::uint64_t seed = 7;
};

// Per-slice seeds are forked from config.seed, so generation order is
// irrelevant and slices are reproducible individually.
Dataset simulate_dataset(const SystemMatrix& A, const SimulateConfig& cfg);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

} // namespace pact
