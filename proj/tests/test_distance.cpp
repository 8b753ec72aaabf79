#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "iterseg/distance_transform.hpp"

using namespace iterseg;

namespace {

// Independent O(n^2) oracle: exhaustive min over surface voxels, with its own
// surface extraction (set voxel with an unset six-connected in-bounds neighbor).
Grid3<double> brute_force_surface_distance(const BinaryGrid& target) {
    std::vector<Vec3i> surface;
    for (int k = 0; k < target.dims.z; ++k)
        for (int j = 0; j < target.dims.y; ++j)
            for (int i = 0; i < target.dims.x; ++i) {
                if (target.at(i, j, k) == 0) continue;
                bool on_surface = false;
                const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
                for (const auto& o : d) {
                    const int nx = i + o[0], ny = j + o[1], nz = k + o[2];
                    if (target.in_bounds(nx, ny, nz) && target.at(nx, ny, nz) == 0) on_surface = true;
                }
                if (on_surface) surface.push_back({i, j, k});
            }

    Grid3<double> out(target.dims, kInfDistance, target.spacing, target.origin);
    for (int k = 0; k < target.dims.z; ++k)
        for (int j = 0; j < target.dims.y; ++j)
            for (int i = 0; i < target.dims.x; ++i) {
                double best = kInfDistance;
                for (const auto& s : surface) {
                    const double dx = (i - s.x) * target.spacing.x;
                    const double dy = (j - s.y) * target.spacing.y;
                    const double dz = (k - s.z) * target.spacing.z;
                    best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
                }
                out.at(i, j, k) = best;
            }
    return out;
}

}  // namespace

TEST_CASE("surface voxels of a target are at distance zero", "[distance]") {
    BinaryGrid t({7, 7, 7});
    for (int k = 2; k <= 4; ++k)
        for (int j = 2; j <= 4; ++j)
            for (int i = 2; i <= 4; ++i) t.at(i, j, k) = 1;
    auto d = distance_to_surface(t);
    CHECK(d.at(2, 2, 2) == 0.0);
    CHECK(d.at(4, 3, 2) == 0.0);
    CHECK(d.at(3, 3, 3) == 1.0);  // cube center is one voxel inside
}

TEST_CASE("single-voxel target puts its 6-neighbors at one spacing", "[distance]") {
    BinaryGrid t({5, 5, 5}, 0, {2, 2, 2});
    t.at(2, 2, 2) = 1;
    auto d = distance_to_surface(t);
    CHECK(d.at(2, 2, 2) == 0.0);
    CHECK(d.at(3, 2, 2) == 2.0);
    CHECK(d.at(2, 1, 2) == 2.0);
    CHECK(d.at(2, 2, 3) == 2.0);
    CHECK(d.at(3, 3, 2) == Catch::Approx(std::sqrt(8.0)).epsilon(1e-12));
}

TEST_CASE("all-zero target yields the +inf sentinel everywhere", "[distance]") {
    BinaryGrid t({4, 4, 4});
    auto d = distance_to_surface(t);
    for (double v : d.values) CHECK(v == kInfDistance);
}

TEST_CASE("full-grid target has no surface and yields +inf", "[distance]") {
    BinaryGrid t({3, 3, 3}, 1);
    auto d = distance_to_surface(t);
    for (double v : d.values) CHECK(v == kInfDistance);
}

TEST_CASE("random masks match the exhaustive pairwise oracle", "[distance]") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryGrid t({8, 8, 8});
        // densities from sparse to dense
        const double density = 0.05 + 0.9 * (trial / 29.0);
        for (auto& v : t.values)
            v = (std::ldexp(static_cast<double>(rng() >> 11), -53) < density) ? 1 : 0;
        auto fast = distance_to_surface(t);
        auto slow = brute_force_surface_distance(t);
        for (std::size_t i = 0; i < fast.values.size(); ++i) {
            if (slow.values[i] == kInfDistance)
                CHECK(fast.values[i] == kInfDistance);
            else
                CHECK(std::abs(fast.values[i] - slow.values[i]) < 1e-9);
        }
    }
}

TEST_CASE("anisotropic spacing is honored exactly", "[distance]") {
    std::mt19937_64 rng(29);
    BinaryGrid t({6, 6, 6}, 0, {0.5, 1.0, 2.5});
    for (auto& v : t.values) v = (rng() % 5 == 0) ? 1 : 0;
    auto fast = distance_to_surface(t);
    auto slow = brute_force_surface_distance(t);
    for (std::size_t i = 0; i < fast.values.size(); ++i) {
        if (slow.values[i] == kInfDistance)
            CHECK(fast.values[i] == kInfDistance);
        else
            CHECK(std::abs(fast.values[i] - slow.values[i]) < 1e-9);
    }
}
