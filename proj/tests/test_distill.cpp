#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "fewrec/distill.hpp"
#include "fewrec/rng.hpp"
#include "fewrec/synth.hpp"

using namespace fewrec;
namespace fs = std::filesystem;

namespace {

VoxelGrid block(int r, int x0, int side) {
    VoxelGrid g(r);
    for (int x = x0; x < x0 + side; ++x)
        for (int y = 0; y < side; ++y)
            for (int z = 0; z < side; ++z) g.set(x, y, z, true);
    return g;
}

DistanceMatrix matrix_from(const std::vector<std::vector<double>>& rows) {
    DistanceMatrix d;
    d.n = static_cast<int>(rows.size());
    for (const auto& row : rows)
        for (double v : row) d.entries.push_back(v);
    return d;
}

// All C(n, k) medoid subsets, evaluated exactly.
double brute_force_objective(const DistanceMatrix& d, int k) {
    std::vector<int> pick(d.n, 0);
    std::fill(pick.begin(), pick.begin() + k, 1);
    std::sort(pick.begin(), pick.end());
    double best = std::numeric_limits<double>::infinity();
    do {
        double obj = 0.0;
        for (int i = 0; i < d.n; ++i) {
            double nearest = std::numeric_limits<double>::infinity();
            for (int m = 0; m < d.n; ++m)
                if (pick[m]) nearest = std::min(nearest, d.at(i, m));
            obj += nearest;
        }
        best = std::min(best, obj);
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

}  // namespace

TEST_CASE("pairwise distances are 1 - IoU with a zero diagonal") {
    std::vector<VoxelGrid> shapes = {block(8, 0, 4), block(8, 0, 4), block(8, 4, 4),
                                     block(8, 2, 4)};
    auto d = pairwise_distances(shapes);
    REQUIRE(d.n == 4);
    CHECK(d.at(0, 0) == 0.0);
    CHECK(d.at(0, 1) == 0.0);  // duplicates
    CHECK(d.at(0, 2) == 1.0);  // disjoint
    // Half-overlapping blocks: intersection 2*4*4, union 6*4*4.
    CHECK(d.at(0, 3) == doctest::Approx(1.0 - 1.0 / 3.0).epsilon(1e-12));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(d.at(i, j) == d.at(j, i));
}

TEST_CASE("distance cache round trips and rejects stale content") {
    std::vector<VoxelGrid> shapes;
    auto rng = make_rng(404);
    for (int i = 0; i < 6; ++i) {
        VoxelGrid g(8);
        for (auto& v : g.occupancy()) v = (rng() % 2) ? 1 : 0;
        shapes.push_back(g);
    }
    auto d = pairwise_distances(shapes);
    std::uint64_t hash = shape_list_hash(shapes);

    std::string path = (fs::temp_directory_path() / "fewrec_dist.cache").string();
    fs::remove(path);
    save_distance_cache(d, 8, hash, path);

    DistanceMatrix loaded;
    REQUIRE(load_distance_cache(path, hash, loaded));
    REQUIRE(loaded.n == d.n);
    for (int i = 0; i < d.n; ++i)
        for (int j = 0; j < d.n; ++j)
            CHECK(loaded.at(i, j) == doctest::Approx(d.at(i, j)).epsilon(1e-6));

    // A different shape list hashes differently and invalidates the cache.
    shapes[0].set(0, 0, 0, shapes[0].at(0, 0, 0) == 0);
    std::uint64_t other = shape_list_hash(shapes);
    CHECK(other != hash);
    CHECK(!load_distance_cache(path, other, loaded));
    CHECK(!load_distance_cache("/nonexistent/fewrec.cache", hash, loaded));

    // The cached helper agrees with the direct computation to float precision
    // whether it recomputes (first call) or reads the file back (second call).
    auto via_cache = pairwise_distances_cached(shapes, path);
    auto direct = pairwise_distances(shapes);
    auto again = pairwise_distances_cached(shapes, path);
    for (int i = 0; i < d.n; ++i)
        for (int j = 0; j < d.n; ++j) {
            CHECK(via_cache.at(i, j) == doctest::Approx(again.at(i, j)).epsilon(1e-6));
            CHECK(via_cache.at(i, j) == doctest::Approx(direct.at(i, j)).epsilon(1e-6));
        }
    fs::remove(path);
}

TEST_CASE("k-medoids three-point hand case") {
    auto d = matrix_from({{0.0, 0.1, 0.9}, {0.1, 0.0, 0.8}, {0.9, 0.8, 0.0}});
    auto m = kmedoids(d, 1, 7);
    REQUIRE(m.indices.size() == 1);
    CHECK(m.indices[0] == 1);  // the middle point
    CHECK(m.objective == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.assignment == std::vector<int>{0, 0, 0});
}

TEST_CASE("k-medoids with k = n is lossless") {
    std::vector<VoxelGrid> shapes = {block(8, 0, 2), block(8, 2, 2), block(8, 4, 2),
                                     block(8, 6, 2)};
    auto m = kmedoids(pairwise_distances(shapes), 4, 3);
    CHECK(m.objective == 0.0);
    std::set<int> uniq(m.indices.begin(), m.indices.end());
    CHECK(uniq.size() == 4);
}

TEST_CASE("k-medoids input validation") {
    auto d = matrix_from({{0.0, 0.5}, {0.5, 0.0}});
    CHECK_THROWS_AS(kmedoids(d, 0, 1), ConfigError);
    CHECK_THROWS_AS(kmedoids(d, 3, 1), ConfigError);
}

TEST_CASE("k-medoids finds the planted optimum on well-separated clusters") {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto rng = make_rng(derive_seed(seed, "planted"));
        std::uniform_real_distribution<double> within(0.0, 0.1);
        std::uniform_real_distribution<double> across(0.8, 1.0);
        std::uniform_int_distribution<int> size_a(3, 6);
        int n = 10;
        int na = size_a(rng);
        DistanceMatrix d;
        d.n = n;
        d.entries.assign(static_cast<std::size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                bool same = (i < na) == (j < na);
                double v = same ? within(rng) : across(rng);
                d.entries[static_cast<std::size_t>(i) * n + j] = v;
                d.entries[static_cast<std::size_t>(j) * n + i] = v;
            }
        auto m = kmedoids(d, 2, derive_seed(seed, "run"));
        if (std::abs(m.objective - brute_force_objective(d, 2)) <= 1e-12) ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("distillation keeps small categories whole and is reproducible") {
    fs::path dir = fs::temp_directory_path() / "fewrec_distill_test";
    fs::remove_all(dir);

    std::vector<SynthClassSpec> specs = {
        default_class_spec("boxes", ShapeFamily::box_stack, 1, 16),
        default_class_spec("rings", ShapeFamily::ring, 2, 16),
    };
    BuildDatasetOptions opts;
    opts.per_class = 6;
    opts.views = 3;
    opts.seed = 33;
    opts.render.image_size = 16;
    opts.out_dir = dir.string();
    auto source = build_dataset(specs, opts);

    MiniSpec mini;
    mini.k = 2;
    mini.v = 2;
    mini.seed = 9;
    auto m1 = distill(source, dir.string(), mini);

    // 2 classes x 2 medoids x 2 views.
    CHECK(m1.entries.size() == 8);
    CHECK(m1.provenance.contains("distill"));
    CHECK(m1.provenance["distill"]["k"] == 2);
    // Every retained entry exists in the source.
    for (const auto& e : m1.entries) {
        bool found = false;
        for (const auto& s : source.entries)
            if (s.image == e.image && s.shape == e.shape) found = true;
        CHECK(found);
    }

    auto m2 = distill(source, dir.string(), mini);
    for (std::size_t i = 0; i < m1.entries.size(); ++i) {
        CHECK(m1.entries[i].image == m2.entries[i].image);
        CHECK(m1.entries[i].shape == m2.entries[i].shape);
    }

    // k at least the category size keeps everything.
    MiniSpec big = mini;
    big.k = 50;
    auto mb = distill(source, dir.string(), big);
    std::set<std::string> kept;
    for (const auto& e : mb.entries) kept.insert(e.shape);
    std::set<std::string> all;
    for (const auto& e : source.entries) all.insert(e.shape);
    CHECK(kept == all);

    fs::remove_all(dir);
}

TEST_CASE("performance ratio arithmetic and validation") {
    std::map<std::string, double> mini = {{"a", 0.4}, {"b", 0.3}};
    std::map<std::string, double> full = {{"a", 0.5}, {"b", 0.6}};
    auto r = performance_ratio(mini, full);
    CHECK(r.per_class.at("a") == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.per_class.at("b") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.mean == doctest::Approx(0.65).epsilon(1e-12));

    CHECK_THROWS_AS(performance_ratio(mini, {{"a", 0.5}}), ConfigError);
    CHECK_THROWS_AS(performance_ratio(mini, {{"a", 0.5}, {"b", 0.0}}), NumericError);
}
