#include <doctest.h>

#include <random>
#include <string>

#include "fewrec/binvox.hpp"
#include "fewrec/rng.hpp"
#include "fewrec/voxel.hpp"

using namespace fewrec;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) {
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

VoxelGrid random_grid(int r, std::mt19937_64& rng, double density) {
    VoxelGrid g(r);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : g.occupancy()) v = u(rng) < density ? 1 : 0;
    return g;
}

}  // namespace

TEST_CASE("binvox round trip is bit-exact on 1000 random 32^3 grids") {
    auto rng = make_rng(derive_seed(11, "binvox-roundtrip"));
    std::uniform_real_distribution<double> dens(0.02, 0.98);
    for (int i = 0; i < 1000; ++i) {
        VoxelGrid g = random_grid(32, rng, dens(rng));
        g.translate = {0.5, -1.25, 2.0};
        g.scale = 1.5;
        auto bytes = write_binvox(g);
        VoxelGrid back = read_binvox(bytes);
        REQUIRE(back == g);
        // Byte-level fixed point: re-encoding the decoded grid is identical.
        CHECK(write_binvox(back) == bytes);
    }
}

TEST_CASE("all-zero 32^3 grid uses the hand-derived RLE layout") {
    VoxelGrid g(32);
    auto bytes = write_binvox(g);

    // Find the start of the data section.
    std::string text(bytes.begin(), bytes.end());
    auto pos = text.find("data\n");
    REQUIRE(pos != std::string::npos);
    std::size_t data_start = pos + 5;

    // 32768 = 128*255 + 128: 128 pairs (0,255) then one pair (0,128).
    REQUIRE(bytes.size() - data_start == 2 * 129);
    for (int p = 0; p < 128; ++p) {
        CHECK(bytes[data_start + 2 * p] == 0);
        CHECK(bytes[data_start + 2 * p + 1] == 255);
    }
    CHECK(bytes[data_start + 2 * 128] == 0);
    CHECK(bytes[data_start + 2 * 128 + 1] == 128);
}

TEST_CASE("binvox header metadata round trips") {
    VoxelGrid g(16);
    g.set(3, 4, 5, true);
    g.translate = {-0.125, 0.25, 10.0};
    g.scale = 0.03125;
    VoxelGrid back = read_binvox(write_binvox(g));
    CHECK(back.translate == g.translate);
    CHECK(back.scale == g.scale);
    CHECK(back.at(3, 4, 5) == 1);
}

TEST_CASE("binvox malformed streams are data errors") {
    CHECK_THROWS_AS(read_binvox(bytes_of("#voxbin 1\ndim 2 2 2\ndata\n")), DataError);

    // Overrun: dim 2 (8 voxels) but 9 encoded.
    std::string over = "#binvox 1\ndim 2 2 2\ntranslate 0 0 0\nscale 1\ndata\n";
    auto ob = bytes_of(over);
    ob.push_back(0);
    ob.push_back(9);
    CHECK_THROWS_AS(read_binvox(ob), DataError);

    // Underrun: only 7 of 8 voxels encoded.
    auto ub = bytes_of(over);
    ub.push_back(1);
    ub.push_back(7);
    CHECK_THROWS_AS(read_binvox(ub), DataError);

    // Trailing bytes after a complete encoding.
    auto tb = bytes_of(over);
    tb.push_back(1);
    tb.push_back(8);
    tb.push_back(0);
    CHECK_THROWS_AS(read_binvox(tb), DataError);

    // Exact encoding parses.
    auto ok = bytes_of(over);
    ok.push_back(1);
    ok.push_back(8);
    CHECK(read_binvox(ok).count_occupied() == 8);
}

TEST_CASE("binvox error messages carry byte offsets") {
    std::string over = "#binvox 1\ndim 2 2 2\ntranslate 0 0 0\nscale 1\ndata\n";
    auto ob = bytes_of(over);
    ob.push_back(0);
    ob.push_back(9);
    try {
        read_binvox(ob);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}
