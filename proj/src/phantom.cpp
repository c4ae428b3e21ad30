#include "pact/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "pact/rng.hpp"

namespace pact {

PhantomKind phantom_kind_from_string(const std::string& s) {
    if (s == "discs") return PhantomKind::Discs;
    if (s == "rings") return PhantomKind::Rings;
    if (s == "branching-vessels") return PhantomKind::BranchingVessels;
    if (s == "mixed") return PhantomKind::Mixed;
    throw InvalidConfig("unknown phantom kind: " + s);
}

std::string to_string(PhantomKind k) {
    switch (k) {
    case PhantomKind::Discs: return "discs";
    case PhantomKind::Rings: return "rings";
    case PhantomKind::BranchingVessels: return "branching-vessels";
    case PhantomKind::Mixed: return "mixed";
    }
    return "?";
}

void PhantomSpec::validate() const {
    if (min_count < 0 || max_count < min_count)
        throw InvalidConfig("bad phantom count range");
    if (min_intensity < 0.0 || max_intensity > 1.0 || max_intensity < min_intensity)
        throw InvalidConfig("phantom intensities must lie in [0, 1]");
}

namespace {

// All coordinates below are in pixel units with the origin at the grid center.
struct Canvas {
    int n;
    double r_in; // inscribed-circle radius in pixels
    std::vector<double>* img;

    void paint_disc(double cx, double cy, double radius, double value) {
        const double c = 0.5 * (n - 1);
        const int lo_i = std::max(0, static_cast<int>(std::floor(c + cy - radius)) - 1);
        const int hi_i = std::min(n - 1, static_cast<int>(std::ceil(c + cy + radius)) + 1);
        const int lo_j = std::max(0, static_cast<int>(std::floor(c + cx - radius)) - 1);
        const int hi_j = std::min(n - 1, static_cast<int>(std::ceil(c + cx + radius)) + 1);
        for (int i = lo_i; i <= hi_i; ++i) {
            const double y = i - c;
            for (int j = lo_j; j <= hi_j; ++j) {
                const double x = j - c;
                const double dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy <= radius * radius) {
                    double& px = (*img)[static_cast<std::size_t>(i) * n + j];
                    px = std::max(px, value);
                }
            }
        }
    }

    void paint_ring(double cx, double cy, double r_out, double thickness, double value) {
        const double c = 0.5 * (n - 1);
        const double r_in2 = (r_out - thickness) * (r_out - thickness);
        const double r_out2 = r_out * r_out;
        const int lo_i = std::max(0, static_cast<int>(std::floor(c + cy - r_out)) - 1);
        const int hi_i = std::min(n - 1, static_cast<int>(std::ceil(c + cy + r_out)) + 1);
        const int lo_j = std::max(0, static_cast<int>(std::floor(c + cx - r_out)) - 1);
        const int hi_j = std::min(n - 1, static_cast<int>(std::ceil(c + cx + r_out)) + 1);
        for (int i = lo_i; i <= hi_i; ++i) {
            const double y = i - c;
            for (int j = lo_j; j <= hi_j; ++j) {
                const double x = j - c;
                const double dx = x - cx, dy = y - cy;
                const double d2 = dx * dx + dy * dy;
                if (d2 <= r_out2 && d2 >= r_in2) {
                    double& px = (*img)[static_cast<std::size_t>(i) * n + j];
                    px = std::max(px, value);
                }
            }
        }
    }

    // Thick segment (capsule) between two points.
    void paint_capsule(double x0, double y0, double x1, double y1, double half_w, double value) {
        const double c = 0.5 * (n - 1);
        const double lo_x = std::min(x0, x1) - half_w, hi_x = std::max(x0, x1) + half_w;
        const double lo_y = std::min(y0, y1) - half_w, hi_y = std::max(y0, y1) + half_w;
        const int lo_i = std::max(0, static_cast<int>(std::floor(c + lo_y)) - 1);
        const int hi_i = std::min(n - 1, static_cast<int>(std::ceil(c + hi_y)) + 1);
        const int lo_j = std::max(0, static_cast<int>(std::floor(c + lo_x)) - 1);
        const int hi_j = std::min(n - 1, static_cast<int>(std::ceil(c + hi_x)) + 1);
        const double vx = x1 - x0, vy = y1 - y0;
        const double len2 = vx * vx + vy * vy;
        for (int i = lo_i; i <= hi_i; ++i) {
            const double y = i - c;
            for (int j = lo_j; j <= hi_j; ++j) {
                const double x = j - c;
                double t = len2 > 0.0 ? ((x - x0) * vx + (y - y0) * vy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double dx = x - (x0 + t * vx), dy = y - (y0 + t * vy);
                if (dx * dx + dy * dy <= half_w * half_w) {
                    double& px = (*img)[static_cast<std::size_t>(i) * n + j];
                    px = std::max(px, value);
                }
            }
        }
    }
};

void grow_vessel(Canvas& cv, CounterRng& rng, double x, double y, double angle,
                 double half_w, double value, int depth) {
    if (depth <= 0 || half_w < 0.5) return;
    const double len = rng.uniform(0.12, 0.3) * cv.r_in;
    double x1 = x + len * std::cos(angle);
    double y1 = y + len * std::sin(angle);
    // Pull the endpoint back inside the inscribed circle if it escaped.
    const double d = std::sqrt(x1 * x1 + y1 * y1);
    const double limit = cv.r_in - half_w - 1.0;
    if (d > limit && d > 0.0) {
        x1 *= limit / d;
        y1 *= limit / d;
    }
    cv.paint_capsule(x, y, x1, y1, half_w, value);
    const int n_children = rng.next_double() < 0.7 ? 2 : 1;
    for (int k = 0; k < n_children; ++k) {
        const double turn = rng.uniform(0.25, 0.9) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
        grow_vessel(cv, rng, x1, y1, angle + turn, half_w * rng.uniform(0.6, 0.85), value,
                    depth - 1);
    }
}

} // namespace

ImageField generate_phantom(const PhantomSpec& spec, const ImageGrid& grid) {
    spec.validate();
    grid.validate();
    if (spec.max_count == 0)
        throw UnplaceableShape("phantom with zero shapes is rejected");

    const int n = grid.nx;
    ImageField out(grid);
    Canvas cv{n, 0.5 * n - 1.0, &out.values};
    if (cv.r_in < 4.0) throw UnplaceableShape("grid too small to hold any shape");

    CounterRng rng(CounterRng::mix(spec.seed ^ 0x50484E544Dull)); // "PHNTM"
    const int count = spec.min_count == spec.max_count
                          ? spec.min_count
                          : spec.min_count +
                                static_cast<int>(rng.next_below(
                                    static_cast<std::uint64_t>(spec.max_count - spec.min_count + 1)));
    if (count == 0) throw UnplaceableShape("drawn shape count is zero");

    auto draw_intensity = [&] { return rng.uniform(spec.min_intensity, spec.max_intensity); };
    auto place_center = [&](double r_shape, double& cx, double& cy) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const double rr = (cv.r_in - r_shape) * std::sqrt(rng.next_double());
            const double th = rng.uniform(0.0, 6.283185307179586);
            cx = rr * std::cos(th);
            cy = rr * std::sin(th);
            return;
        }
        throw UnplaceableShape("could not place shape inside the inscribed circle");
    };

    const bool mixed = spec.kind == PhantomKind::Mixed;
    if (mixed) {
        // Body outline: a large soft disc with a brighter rim.
        const double body_r = cv.r_in * rng.uniform(0.7, 0.9);
        cv.paint_disc(0.0, 0.0, body_r, rng.uniform(0.15, 0.3));
        cv.paint_ring(0.0, 0.0, body_r, std::max(1.0, 0.04 * n), rng.uniform(0.5, 0.8));
    }

    for (int s = 0; s < count; ++s) {
        PhantomKind k = spec.kind;
        if (mixed) {
            const double u = rng.next_double();
            k = u < 0.4 ? PhantomKind::Discs
                        : (u < 0.6 ? PhantomKind::Rings : PhantomKind::BranchingVessels);
        }
        const double value = draw_intensity();
        switch (k) {
        case PhantomKind::Discs: {
            const double r = rng.uniform(0.05, 0.2) * cv.r_in;
            double cx, cy;
            place_center(r, cx, cy);
            cv.paint_disc(cx, cy, std::max(r, 1.5), value);
            break;
        }
        case PhantomKind::Rings: {
            const double r = rng.uniform(0.1, 0.3) * cv.r_in;
            double cx, cy;
            place_center(r, cx, cy);
            cv.paint_ring(cx, cy, std::max(r, 2.5), std::max(1.0, 0.3 * r), value);
            break;
        }
        case PhantomKind::BranchingVessels:
        case PhantomKind::Mixed: {
            double cx, cy;
            place_center(0.3 * cv.r_in, cx, cy);
            grow_vessel(cv, rng, cx, cy, rng.uniform(0.0, 6.283185307179586),
                        std::max(0.8, 0.015 * n), value, 4);
            break;
        }
        }
    }

    bool any = false;
    for (double v : out.values)
        if (v != 0.0) { any = true; break; }
    if (!any) throw UnplaceableShape("generated phantom is empty");
    return out;
}

} // namespace pact
