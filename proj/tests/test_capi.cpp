#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fewrec.h"
#include "fewrec/binvox.hpp"
#include "fewrec/voxel.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "fewrec_capi_test";

json gen_config() {
    return json{{"out_dir", (kDir / "data").string()},
                {"per_class", 4},
                {"views", 2},
                {"seed", 11},
                {"image_size", 16},
                {"resolution", 16},
                {"classes",
                 {{{"id", "boxes"}, {"family", "box-stack"}, {"seed", 1}},
                  {{"id", "rings"}, {"family", "ring"}, {"seed", 2}, {"role", "novel"}}}}};
}

}  // namespace

TEST_CASE("c api pipeline: generate, train, adapt, evaluate") {
    fs::remove_all(kDir);
    fs::create_directories(kDir);

    REQUIRE(fr_gen_data(gen_config().dump().c_str()) == FR_OK);
    REQUIRE(fs::exists(kDir / "data" / "manifest.jsonl"));

    json train = {{"variant", "gce"},
                  {"manifest", (kDir / "data" / "manifest.jsonl").string()},
                  {"out_checkpoint", (kDir / "model.ckpt").string()},
                  {"epochs", 1},
                  {"batch_size", 4},
                  {"image_size", 16},
                  {"resolution", 16},
                  {"embedding_dim", 8},
                  {"width_scale", 0.05},
                  {"ignore_novel", true},
                  {"seed", 5}};
    REQUIRE_MESSAGE(fr_train(train.dump().c_str()) == FR_OK, std::string(fr_last_error()));
    REQUIRE(fs::exists(kDir / "model.ckpt"));

    json adapt = {{"checkpoint", (kDir / "model.ckpt").string()},
                  {"out_checkpoint", (kDir / "adapted.ckpt").string()},
                  {"manifest", (kDir / "data" / "manifest.jsonl").string()},
                  {"class", "rings"},
                  {"shots", 2},
                  {"steps", 3},
                  {"seed", 5}};
    REQUIRE_MESSAGE(fr_adapt(adapt.dump().c_str()) == FR_OK, std::string(fr_last_error()));

    json eval = {{"checkpoint", (kDir / "adapted.ckpt").string()},
                 {"manifest", (kDir / "data" / "manifest.jsonl").string()},
                 {"classes", {"rings"}},
                 {"format", "csv"}};
    char* report = nullptr;
    REQUIRE_MESSAGE(fr_eval(eval.dump().c_str(), &report) == FR_OK, std::string(fr_last_error()));
    REQUIRE(report != nullptr);
    std::string text(report);
    fr_string_free(report);
    CHECK(text.rfind("class,method,shots,mean_iou,relative_gain,n_queries\n", 0) == 0);
    CHECK(text.find("rings,gce") != std::string::npos);

    json onn = {{"manifest", (kDir / "data" / "manifest.jsonl").string()},
                {"shots", 1},
                {"episodes", 2},
                {"seed", 7},
                {"classes", {"boxes"}}};
    report = nullptr;
    REQUIRE_MESSAGE(fr_onn(onn.dump().c_str(), &report) == FR_OK, std::string(fr_last_error()));
    std::string onn_text(report);
    fr_string_free(report);
    CHECK(onn_text.find("onn-1") != std::string::npos);

    fs::remove_all(kDir);
}

TEST_CASE("c api error mapping and last-error message") {
    // Malformed JSON and missing keys are configuration errors.
    CHECK(fr_train("{not json") == FR_ERR_CONFIG);
    CHECK(fr_train("{}") == FR_ERR_CONFIG);
    CHECK(std::strlen(fr_last_error()) > 0);

    // A missing manifest file is a data error.
    json train = {{"variant", "zs"},
                  {"manifest", "/nonexistent/manifest.jsonl"},
                  {"out_checkpoint", "/tmp/fewrec_never.ckpt"}};
    CHECK(fr_train(train.dump().c_str()) == FR_ERR_DATA);

    // An unknown variant is a configuration error.
    json bad = {{"variant", "wat"},
                {"manifest", "/nonexistent/manifest.jsonl"},
                {"out_checkpoint", "/tmp/fewrec_never.ckpt"}};
    CHECK(fr_ablate("{\"kind\":\"nonsense\"}", nullptr) == FR_ERR_CONFIG);
    CHECK(fr_train(bad.dump().c_str()) == FR_ERR_CONFIG);
}

TEST_CASE("c api grid handles round trip through binvox") {
    fs::create_directories(kDir);
    fewrec::VoxelGrid g(16);
    for (int x = 0; x < 5; ++x)
        for (int y = 0; y < 5; ++y)
            for (int z = 0; z < 5; ++z) g.set(x, y, z, true);
    std::string p1 = (kDir / "a.binvox").string();
    std::string p2 = (kDir / "b.binvox").string();
    fewrec::save_binvox(g, p1);

    fr_grid* a = nullptr;
    REQUIRE(fr_grid_load(p1.c_str(), &a) == FR_OK);
    CHECK(fr_grid_resolution(a) == 16);
    REQUIRE(fr_grid_save(a, p2.c_str()) == FR_OK);

    fr_grid* b = nullptr;
    REQUIRE(fr_grid_load(p2.c_str(), &b) == FR_OK);
    double v = -1.0;
    REQUIRE(fr_grid_iou(a, b, &v) == FR_OK);
    CHECK(v == 1.0);

    fr_grid_free(a);
    fr_grid_free(b);

    fr_grid* missing = nullptr;
    CHECK(fr_grid_load("/nonexistent/x.binvox", &missing) == FR_ERR_DATA);
    CHECK(missing == nullptr);
    fs::remove_all(kDir);
}
