#include <doctest.h>

#include <cmath>
#include <random>

#include "fewrec/priors.hpp"
#include "fewrec/rng.hpp"
#include "fewrec/sparsemax.hpp"

using namespace fewrec;

namespace {

CodebookSet random_codes(int M, int m, int D, std::uint64_t seed) {
    CodebookSet cs;
    cs.num_codebooks = M;
    cs.codes_per_book = m;
    cs.code_dim = D;
    cs.codes.resize(static_cast<std::size_t>(M) * m * D);
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : cs.codes) v = u(rng);
    return cs;
}

}  // namespace

TEST_CASE("variant wiring predicates") {
    CHECK(prior_kind_from_string("cgce") == PriorKind::cgce);
    CHECK(prior_kind_from_string("mcce-full") == PriorKind::mcce_full);
    CHECK(to_string(PriorKind::hybrid) == "hybrid");
    CHECK_THROWS_AS(prior_kind_from_string("bogus"), ConfigError);

    CHECK_FALSE(kind_has_class_params(PriorKind::zs));
    CHECK_FALSE(kind_has_class_params(PriorKind::as_));
    CHECK_FALSE(kind_has_class_params(PriorKind::wallace_avg));
    CHECK(kind_has_class_params(PriorKind::gce));

    CHECK(kind_concatenates_prior(PriorKind::gce));
    CHECK(kind_concatenates_prior(PriorKind::cgce));
    CHECK_FALSE(kind_concatenates_prior(PriorKind::mcce_full));

    // Hybrid = CAB encoder + CBN decoder.
    CHECK(kind_uses_cab_encoder(PriorKind::hybrid));
    CHECK(kind_uses_cbn_decoder(PriorKind::hybrid));
    CHECK_FALSE(kind_uses_cab_decoder(PriorKind::hybrid));
    CHECK_FALSE(kind_uses_cbn_encoder(PriorKind::hybrid));

    CHECK(kind_uses_cbn_encoder(PriorKind::mcce_full));
    CHECK(kind_uses_cbn_decoder(PriorKind::mcce_full));
    CHECK(kind_uses_cbn_decoder(PriorKind::mcce_dec));
    CHECK_FALSE(kind_uses_cbn_encoder(PriorKind::mcce_dec));
}

TEST_CASE("compose_gce returns the stored row and isolates classes") {
    GlobalEmbeddingTable table;
    table.dim = 4;
    table.embeddings["car"] = {1.0, 2.0, 3.0, 4.0};
    table.embeddings["chair"] = {5.0, 6.0, 7.0, 8.0};
    CHECK(compose_gce(table, "car") == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    table.embeddings["car"][0] = 9.0;
    CHECK(compose_gce(table, "chair") == std::vector<double>{5.0, 6.0, 7.0, 8.0});
    CHECK_THROWS_AS(compose_gce(table, "plane"), ConfigError);
}

TEST_CASE("compose_cgce equals the attended code sum") {
    const int M = 3, m = 4, D = 5;
    CodebookSet cs = random_codes(M, m, D, derive_seed(23, "cgce"));
    AttentionTable attn;
    attn.num_codebooks = M;
    attn.codes_per_book = m;

    // One-hot-forcing logits: large margin selects a single code per book.
    std::vector<double> logits(static_cast<std::size_t>(M) * m, 0.0);
    logits[0 * m + 2] = 10.0;
    logits[1 * m + 0] = 10.0;
    logits[2 * m + 3] = 10.0;
    attn.logits["cls"] = logits;
    auto e = compose_cgce(cs, attn, "cls");
    for (int d = 0; d < D; ++d) {
        double expect = cs.codes[(0 * m + 2) * D + d] + cs.codes[(1 * m + 0) * D + d] +
                        cs.codes[(2 * m + 3) * D + d];
        CHECK(e[d] == doctest::Approx(expect).epsilon(1e-12));
    }

    // All-equal logits: sparsemax is uniform, so each book contributes its mean.
    attn.logits["uniform"] = std::vector<double>(static_cast<std::size_t>(M) * m, 0.7);
    e = compose_cgce(cs, attn, "uniform");
    for (int d = 0; d < D; ++d) {
        double expect = 0.0;
        for (int j = 0; j < M; ++j) {
            double mean = 0.0;
            for (int k = 0; k < m; ++k) mean += cs.codes[(j * m + k) * D + d];
            expect += mean / m;
        }
        CHECK(e[d] == doctest::Approx(expect).epsilon(1e-12));
    }

    CHECK_THROWS_AS(compose_cgce(cs, attn, "missing"), ConfigError);
}

TEST_CASE("knockout is exact by linearity") {
    const int M = 3, m = 4, D = 6;
    CodebookSet cs = random_codes(M, m, D, derive_seed(23, "knockout"));
    AttentionTable attn;
    attn.num_codebooks = M;
    attn.codes_per_book = m;
    auto rng = make_rng(derive_seed(23, "knockout-logits"));
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    std::vector<double> logits(static_cast<std::size_t>(M) * m);
    for (auto& v : logits) v = u(rng);
    attn.logits["cls"] = logits;

    auto full = compose_cgce(cs, attn, "cls");
    for (int j = 0; j < M; ++j) {
        auto without = knockout_codebook(cs, attn, "cls", j);
        // Rebuild book j's contribution directly and re-add it.
        auto a = sparsemax(std::vector<double>(logits.begin() + j * m,
                                               logits.begin() + (j + 1) * m));
        for (int d = 0; d < D; ++d) {
            double contribution = 0.0;
            for (int k = 0; k < m; ++k) contribution += a[k] * cs.codes[(j * m + k) * D + d];
            CHECK(without[d] + contribution == doctest::Approx(full[d]).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(knockout_codebook(cs, attn, "cls", M), ConfigError);
    CHECK_THROWS_AS(knockout_codebook(cs, attn, "cls", -1), ConfigError);
}

TEST_CASE("compose_codes_backward matches finite differences") {
    const int M = 2, m = 3, D = 4;
    CodebookSet cs = random_codes(M, m, D, derive_seed(23, "compose-grad"));
    auto rng = make_rng(derive_seed(23, "compose-grad-l"));
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<double> logits(static_cast<std::size_t>(M) * m);
    for (auto& v : logits) v = u(rng);
    std::vector<double> dout(D);
    for (auto& v : dout) v = u(rng);

    std::vector<double> dcodes(cs.codes.size(), 0.0), dlogits(logits.size(), 0.0);
    compose_codes_backward(cs.codes.data(), M, m, D, logits.data(), dout.data(), dcodes.data(),
                           dlogits.data());

    auto scalar = [&] {
        std::vector<double> out(D);
        compose_codes(cs.codes.data(), M, m, D, logits.data(), out.data());
        double s = 0.0;
        for (int d = 0; d < D; ++d) s += out[d] * dout[d];
        return s;
    };
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double orig = logits[i];
        logits[i] = orig + h;
        double up = scalar();
        logits[i] = orig - h;
        double down = scalar();
        logits[i] = orig;
        double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - dlogits[i]) <= 1e-5 * std::max({std::abs(fd), 1.0}));
    }
    for (std::size_t i = 0; i < cs.codes.size(); i += 3) {
        double orig = cs.codes[i];
        cs.codes[i] = orig + h;
        double up = scalar();
        cs.codes[i] = orig - h;
        double down = scalar();
        cs.codes[i] = orig;
        double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - dcodes[i]) <= 1e-6 * std::max({std::abs(fd), 1.0}));
    }
}

TEST_CASE("cab modulation splits the attended combination into gamma/beta") {
    const int M = 2, m = 3, channels = 4;
    CodebookSet cs = random_codes(M, m, 2 * channels, derive_seed(23, "cab"));
    AttentionTable attn;
    attn.num_codebooks = M;
    attn.codes_per_book = m;
    std::vector<double> logits(static_cast<std::size_t>(M) * m, 0.0);
    logits[0 * m + 1] = 10.0;
    logits[1 * m + 2] = 10.0;
    attn.logits["cls"] = logits;

    auto [gamma, beta] = cab_modulation(cs, attn, "cls");
    REQUIRE(gamma.size() == channels);
    REQUIRE(beta.size() == channels);
    const int D = 2 * channels;
    for (int c = 0; c < channels; ++c) {
        double g = cs.codes[(0 * m + 1) * D + c] + cs.codes[(1 * m + 2) * D + c];
        double b = cs.codes[(0 * m + 1) * D + channels + c] +
                   cs.codes[(1 * m + 2) * D + channels + c];
        CHECK(gamma[static_cast<std::size_t>(c)] == doctest::Approx(g).epsilon(1e-12));
        CHECK(beta[static_cast<std::size_t>(c)] == doctest::Approx(b).epsilon(1e-12));
    }

    CodebookSet odd = random_codes(M, m, 5, derive_seed(23, "cab-odd"));
    AttentionTable attn_odd = attn;
    CHECK_THROWS_AS(cab_modulation(odd, attn_odd, "cls"), ConfigError);
}

TEST_CASE("wallace prior averages support shapes voxelwise") {
    VoxelGrid a(4), b(4);
    a.set(0, 0, 0, true);
    a.set(1, 1, 1, true);
    b.set(2, 2, 2, true);
    b.set(1, 1, 1, true);

    auto f = wallace_prior({a});
    CHECK(f.at(0, 0, 0) == 1.0);
    CHECK(f.at(3, 3, 3) == 0.0);

    f = wallace_prior({a, b});
    CHECK(f.at(1, 1, 1) == 1.0);
    CHECK(f.at(0, 0, 0) == 0.5);
    CHECK(f.at(2, 2, 2) == 0.5);
    CHECK(f.at(3, 3, 3) == 0.0);

    f = wallace_prior({a, a, a});
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y)
            for (int z = 0; z < 4; ++z) CHECK(f.at(x, y, z) == (a.at(x, y, z) ? 1.0 : 0.0));

    CHECK_THROWS_AS(wallace_prior({}), ConfigError);
    CHECK_THROWS_AS(wallace_prior({a, VoxelGrid(8)}), DataError);
}

TEST_CASE("mcce bank lookup") {
    CBNBank bank;
    bank.params[{"car", "decoder/bn1"}] = {{1.0, 1.1}, {0.9, 1.2}};
    auto [g, b] = mcce_params(bank, "car", "decoder/bn1");
    CHECK(g == std::vector<double>{1.0, 1.1});
    CHECK(b == std::vector<double>{0.9, 1.2});
    CHECK_THROWS_AS(mcce_params(bank, "car", "decoder/bn2"), ConfigError);
    CHECK_THROWS_AS(mcce_params(bank, "chair", "decoder/bn1"), ConfigError);
}
