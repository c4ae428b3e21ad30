#pragma once

#include <cstdint>
#include <vector>

namespace pact {

// Ring transducer array. Element k sits at angle 2*pi*k/n_elements on the
// circle of radius radius_m, centered on the image grid center.
struct RingGeometry {
    int n_elements = 64;
    double radius_m = 0.025;
    double fs_hz = 10e6;
    int n_samples = 512;
    double sound_speed_mps = 1513.0;
    double t0_s = 0.0;

    void validate() const;
    std::uint64_t fingerprint() const;
};

// Square pixel grid centered on the ring center.
struct ImageGrid {
    int nx = 64;
    int ny = 64;
    double pitch_m = 0.0003125;

    void validate() const;
    std::uint64_t fingerprint() const;

    int n_pixels() const { return nx * ny; }
    double half_diagonal_m() const;
    // Physical coordinates of pixel centers; row index i maps to y, column
    // index j maps to x, both symmetric about the center.
    double x_of(int j) const { return (j - 0.5 * (nx - 1)) * pitch_m; }
    double y_of(int i) const { return (i - 0.5 * (ny - 1)) * pitch_m; }
};

// The grid must fit strictly inside the ring; the time window must cover the
// farthest pixel as seen from any element.
void validate_pair(const RingGeometry& g, const ImageGrid& grid);

// Element positions. When 4 | n_elements the four quadrants are generated by
// exact (x, y) -> (-y, x) rotations of the first, so a quarter-turn shift of
// the element index matches a quarter-turn of the image bit for bit.
std::vector<double> element_xs(const RingGeometry& g);
std::vector<double> element_ys(const RingGeometry& g);

// Paper-scale system: 512 elements, 50 mm radius, 40 MHz, 2000 samples.
RingGeometry full_scale_geometry();

} // namespace pact
