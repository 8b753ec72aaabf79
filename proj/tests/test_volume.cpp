#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "iterseg/volume.hpp"

using namespace iterseg;

TEST_CASE("grid construction rejects bad dims and spacing", "[volume]") {
    CHECK_THROWS_AS(VoxelGrid({0, 4, 4}), std::invalid_argument);
    CHECK_THROWS_AS(VoxelGrid({4, 4, 4}, 0.0f, {1, -1, 1}), std::invalid_argument);

    VoxelGrid g({2, 3, 4});
    CHECK(g.voxel_count() == 24);
    CHECK(g.values.size() == 24);
}

TEST_CASE("validate_grid catches non-finite values and size mismatch", "[volume]") {
    VoxelGrid g({2, 2, 2});
    CHECK_NOTHROW(validate_grid(g));
    g.values[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(validate_grid(g), std::invalid_argument);
    g.values[3] = 0;
    g.values.pop_back();
    CHECK_THROWS_AS(validate_grid(g), std::invalid_argument);
}

TEST_CASE("indexing is x-fastest", "[volume]") {
    VoxelGrid g({3, 4, 5});
    CHECK(g.index(0, 0, 0) == 0);
    CHECK(g.index(1, 0, 0) == 1);
    CHECK(g.index(0, 1, 0) == 3);
    CHECK(g.index(0, 0, 1) == 12);
    CHECK(g.index(2, 3, 4) == g.voxel_count() - 1);
}

TEST_CASE("resample identity when already at target spacing", "[volume]") {
    VoxelGrid g({3, 3, 3}, 0.0f, {1, 1, 1});
    std::mt19937_64 rng(7);
    for (auto& v : g.values) v = static_cast<float>(rng() % 100);
    auto out = resample_to_isotropic(g, 1.0, ResampleMode::trilinear);
    CHECK(out.dims == g.dims);
    CHECK(out.values == g.values);
}

TEST_CASE("resampling a constant grid yields a constant grid of new dims", "[volume]") {
    VoxelGrid g({5, 4, 3}, 2.5f, {0.7, 1.3, 2.1});
    for (auto mode : {ResampleMode::trilinear, ResampleMode::nearest}) {
        auto out = resample_to_isotropic(g, 1.0, mode);
        CHECK(out.dims.x == static_cast<int>(std::llround(5 * 0.7)));
        CHECK(out.dims.y == static_cast<int>(std::llround(4 * 1.3)));
        CHECK(out.dims.z == static_cast<int>(std::llround(3 * 2.1)));
        for (float v : out.values) CHECK(v == 2.5f);
    }
}

// Index-mapping oracle: a 4^3 grid at spacing 2 resampled to 1.0 with nearest
// must expand every input voxel into an aligned 2x2x2 block.
TEST_CASE("nearest upsampling maps each voxel to a 2x2x2 block", "[volume]") {
    VoxelGrid g({4, 4, 4}, 0.0f, {2, 2, 2});
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) g.at(i, j, k) = static_cast<float>(g.index(i, j, k));

    auto out = resample_to_isotropic(g, 1.0, ResampleMode::nearest);
    REQUIRE(out.dims == Vec3i{8, 8, 8});
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i)
                CHECK(out.at(i, j, k) == g.at(i / 2, j / 2, k / 2));
}

TEST_CASE("trilinear resampling rejects bad target spacing", "[volume]") {
    VoxelGrid g({2, 2, 2});
    CHECK_THROWS_AS(resample_to_isotropic(g, 0.0, ResampleMode::trilinear), std::invalid_argument);
    CHECK_THROWS_AS(resample_to_isotropic(g, std::numeric_limits<double>::quiet_NaN(), ResampleMode::nearest),
                    std::invalid_argument);
}

TEST_CASE("trilinear interpolation of a linear ramp is exact at matching points", "[volume]") {
    // A ramp along x sampled at half spacing: interior output centers fall
    // exactly between input centers, so values must be the arithmetic means.
    VoxelGrid g({4, 1, 1}, 0.0f, {2, 2, 2});
    for (int i = 0; i < 4; ++i) g.at(i, 0, 0) = static_cast<float>(10 * i);
    auto out = resample_to_isotropic(g, 2.0 /*unchanged*/, ResampleMode::trilinear);
    CHECK(out.values == g.values);

    VoxelGrid r({4, 4, 4}, 0.0f, {2, 2, 2});
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) r.at(i, j, k) = static_cast<float>(i);
    auto fine = resample_to_isotropic(r, 1.0, ResampleMode::trilinear);
    // u(i) = i/2 - 1/4; clamped replication at the edges, linear inside.
    for (int i = 0; i < 8; ++i) {
        const double u = std::clamp(i / 2.0 - 0.25, 0.0, 3.0);
        CHECK(fine.at(i, 3, 3) == Catch::Approx(u).margin(1e-6));
    }
}

TEST_CASE("mask resampled onto its own grid is unchanged", "[volume]") {
    InstanceMask m({4, 4, 4});
    m.at(1, 2, 3) = 5;
    m.at(2, 2, 2) = 5;
    m.records[5] = {12, true};
    VoxelGrid ref({4, 4, 4});
    auto res = resample_mask_to_grid(m, ref);
    CHECK(res.mask.ids == m.ids);
    CHECK(res.vanished.empty());
    REQUIRE(res.mask.records.count(5) == 1);
    CHECK(res.mask.records.at(5).anatomical_label == 12);
}

TEST_CASE("mask nearest-neighbor up/down round trip restores original ids", "[volume]") {
    InstanceMask m({4, 4, 4});
    std::mt19937_64 rng(11);
    for (auto& id : m.ids) id = static_cast<std::uint16_t>(rng() % 3);  // ids 0..2
    m.records[1] = {3, true};
    m.records[2] = {4, false};

    VoxelGrid fine_ref({8, 8, 8}, 0.0f, {0.5, 0.5, 0.5});
    auto fine = resample_mask_to_grid(m, fine_ref);
    // every fine voxel must replicate its containing coarse voxel
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i)
                CHECK(fine.mask.at(i, j, k) == m.at(i / 2, j / 2, k / 2));

    VoxelGrid coarse_ref({4, 4, 4});
    auto back = resample_mask_to_grid(fine.mask, coarse_ref);
    CHECK(back.mask.ids == m.ids);
    CHECK(back.mask.records.size() == 2);
}

TEST_CASE("empty mask resamples to empty mask on reference grid", "[volume]") {
    InstanceMask m({4, 4, 4});
    VoxelGrid ref({6, 6, 6}, 0.0f, {0.75, 0.75, 0.75});
    auto res = resample_mask_to_grid(m, ref);
    CHECK(res.mask.dims == ref.dims);
    for (auto id : res.mask.ids) CHECK(id == 0);
}

TEST_CASE("instances that vanish under resampling are reported", "[volume]") {
    InstanceMask m({4, 4, 4});
    m.at(0, 0, 0) = 7;  // even coordinates are never the nearest sample below
    m.at(1, 1, 1) = 3;
    m.records[7] = {1, true};
    m.records[3] = {2, true};
    VoxelGrid ref({2, 2, 2}, 0.0f, {2, 2, 2});
    auto res = resample_mask_to_grid(m, ref);
    REQUIRE(res.vanished.size() == 1);
    CHECK(res.vanished[0] == 7);
    CHECK(res.mask.records.count(7) == 1);  // record survives
    CHECK(res.mask.at(0, 0, 0) == 3);
}

TEST_CASE("extract_patch copies an interior sub-block exactly", "[volume]") {
    VoxelGrid g({6, 6, 6});
    std::mt19937_64 rng(3);
    for (auto& v : g.values) v = static_cast<float>(rng() % 1000);
    PatchSpec spec{{3, 3, 3}, {3, 3, 3}, -1.0};
    auto p = extract_patch(g, spec);
    REQUIRE(p.dims == Vec3i{3, 3, 3});
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i)
                CHECK(p.at(i, j, k) == g.at(2 + i, 2 + j, 2 + k));
}

TEST_CASE("extract_patch pads out-of-bounds regions", "[volume]") {
    VoxelGrid g({4, 4, 4}, 5.0f);
    PatchSpec spec{{0, 0, 0}, {4, 4, 4}, -1000.0};
    auto p = extract_patch(g, spec);  // start at (-2,-2,-2)
    int pad = 0, real = 0;
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) {
                const bool inside = i >= 2 && j >= 2 && k >= 2;
                CHECK(p.at(i, j, k) == (inside ? 5.0f : -1000.0f));
                (inside ? real : pad)++;
            }
    CHECK(real == 8);
    CHECK(pad == 56);
}

TEST_CASE("1x1x1 patch picks out a single voxel", "[volume]") {
    VoxelGrid g({2, 2, 2});
    g.at(0, 0, 0) = 42.0f;
    auto p = extract_patch(g, {{0, 0, 0}, {1, 1, 1}, 0.0});
    REQUIRE(p.voxel_count() == 1);
    CHECK(p.values[0] == 42.0f);
}

TEST_CASE("paste_instance labels a full patch into an empty mask", "[volume]") {
    InstanceMask dst({8, 8, 8});
    VoxelGrid patch({2, 2, 2}, 1.0f);
    dst = paste_instance(dst, patch, {{4, 4, 4}, {2, 2, 2}, 0.0}, 9, {17, true});
    int count = 0;
    for (auto id : dst.ids) count += (id == 9);
    CHECK(count == 8);
    CHECK(dst.at(3, 3, 3) == 9);
    CHECK(dst.at(4, 4, 4) == 9);
    CHECK(dst.records.at(9).anatomical_label == 17);
}

TEST_CASE("paste_instance never overwrites voxels owned by another instance", "[volume]") {
    InstanceMask dst({8, 8, 8});
    VoxelGrid patch({2, 2, 2}, 1.0f);
    PatchSpec at{{4, 4, 4}, {2, 2, 2}, 0.0};
    dst = paste_instance(dst, patch, at, 1, {5, true});
    dst = paste_instance(dst, patch, {{5, 5, 5}, {2, 2, 2}, 0.0}, 2, {6, true});
    CHECK(dst.at(4, 4, 4) == 1);  // overlap region keeps the first owner
    CHECK(dst.at(5, 5, 5) == 2);
    CHECK_THROWS_AS(paste_instance(dst, patch, at, 2, {6, true}), std::invalid_argument);
    CHECK_THROWS_AS(paste_instance(dst, patch, at, 0, {6, true}), std::invalid_argument);
}

TEST_CASE("paste_instance drops out-of-bounds voxels silently", "[volume]") {
    InstanceMask dst({4, 4, 4});
    VoxelGrid patch({4, 4, 4}, 1.0f);
    dst = paste_instance(dst, patch, {{0, 0, 0}, {4, 4, 4}, 0.0}, 1, {1, true});
    int count = 0;
    for (auto id : dst.ids) count += (id == 1);
    CHECK(count == 8);  // only the (0..1)^3 corner lands inside
}

TEST_CASE("random paste/extract round trip localizes the instance", "[volume]") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        InstanceMask dst({16, 16, 16});
        const Vec3i c{static_cast<int>(rng() % 16), static_cast<int>(rng() % 16),
                      static_cast<int>(rng() % 16)};
        VoxelGrid patch({3, 3, 3}, 0.0f);
        for (auto& v : patch.values) v = (rng() % 2) ? 1.0f : 0.0f;
        PatchSpec spec{c, {3, 3, 3}, 0.0};
        dst = paste_instance(dst, patch, spec, 4, {4, true});
        auto got = extract_patch_ids(dst, spec);
        const Vec3i s = spec.start();
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 3; ++j)
                for (int i = 0; i < 3; ++i) {
                    const bool inside = dst.in_bounds(s.x + i, s.y + j, s.z + k);
                    const std::uint16_t expect =
                        (inside && patch.at(i, j, k) > 0.5f) ? std::uint16_t{4} : std::uint16_t{0};
                    CHECK(got.at(i, j, k) == expect);
                }
    }
}

TEST_CASE("check_records flags ids without a record", "[volume]") {
    InstanceMask m({2, 2, 2});
    m.at(0, 0, 0) = 3;
    CHECK_THROWS_AS(m.check_records(), std::invalid_argument);
    m.records[3] = {1, true};
    CHECK_NOTHROW(m.check_records());
}
