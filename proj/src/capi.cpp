#include "fewrec.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>

#include <json.hpp>

#include "fewrec/binvox.hpp"
#include "fewrec/distill.hpp"
#include "fewrec/errors.hpp"
#include "fewrec/model.hpp"
#include "fewrec/report.hpp"
#include "fewrec/rng.hpp"
#include "fewrec/synth.hpp"
#include "fewrec/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

thread_local std::string g_last_error;

fr_status run_guarded(const std::function<void()>& body) {
    try {
        body();
        g_last_error.clear();
        return FR_OK;
    } catch (const fewrec::ConfigError& e) {
        g_last_error = e.what();
        return FR_ERR_CONFIG;
    } catch (const fewrec::DataError& e) {
        g_last_error = e.what();
        return FR_ERR_DATA;
    } catch (const fewrec::NumericError& e) {
        g_last_error = e.what();
        return FR_ERR_NUMERIC;
    } catch (const json::exception& e) {
        g_last_error = std::string("configuration JSON error: ") + e.what();
        return FR_ERR_CONFIG;
    } catch (const fs::filesystem_error& e) {
        g_last_error = e.what();
        return FR_ERR_DATA;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FR_ERR_DATA;
    }
}

json parse_config(const char* config_json) {
    if (!config_json) throw fewrec::ConfigError("null configuration");
    return json::parse(config_json);
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::string require_string(const json& cfg, const std::string& key) {
    if (!cfg.contains(key) || !cfg.at(key).is_string() || cfg.at(key).get<std::string>().empty()) {
        throw fewrec::ConfigError("missing required configuration key '" + key + "'");
    }
    return cfg.at(key).get<std::string>();
}

fewrec::ModelConfig model_config_from_json(const json& cfg, const std::string& variant) {
    fewrec::ModelConfig mc;
    mc.kind = fewrec::prior_kind_from_string(variant);
    mc.encoder.input_size = cfg.value("image_size", 128);
    mc.encoder.embedding_dim = cfg.value("embedding_dim", 128);
    mc.encoder.width_scale = cfg.value("width_scale", 1.0);
    mc.decoder.output_resolution = cfg.value("resolution", 32);
    mc.decoder.width_scale = cfg.value("width_scale", 1.0);
    mc.num_codebooks = cfg.value("num_codebooks", 5);
    mc.codes_per_book = cfg.value("codes_per_book", 6);
    mc.seed = cfg.value("seed", 0ull);
    return mc;
}

fewrec::AdaptConfig adapt_config_from_json(const json& cfg) {
    fewrec::AdaptConfig ac;
    ac.max_steps = cfg.value("steps", 200);
    ac.learning_rate = cfg.value("lr", 0.01);
    ac.momentum = cfg.value("momentum", 0.9);
    ac.patience = cfg.value("patience", 20);
    return ac;
}

std::map<std::string, std::vector<fewrec::SamplePair>> load_query_map(
    const fewrec::DatasetManifest& manifest, const std::string& dir,
    const std::vector<std::string>& classes, const std::string& split) {
    std::map<std::string, std::vector<fewrec::SamplePair>> out;
    for (const auto& cls : classes) {
        out[cls] = fewrec::load_pairs(manifest, dir, cls, split);
    }
    return out;
}

std::vector<std::string> classes_from_config(const json& cfg,
                                             const fewrec::DatasetManifest& manifest) {
    if (cfg.contains("classes") && !cfg.at("classes").empty()) {
        return cfg.at("classes").get<std::vector<std::string>>();
    }
    return manifest.class_ids();
}

fewrec::FewShotEpisode make_episode(const fewrec::DatasetManifest& manifest,
                                    const std::string& dir, const std::string& cls, int shots,
                                    std::uint64_t seed) {
    fewrec::FewShotEpisode ep;
    ep.class_id = cls;
    auto pool = fewrec::load_pairs(manifest, dir, cls, "train");
    if (pool.empty()) throw fewrec::DataError("no support candidates for class '" + cls + "'");
    if (shots < 1) throw fewrec::ConfigError("shots must be >= 1");
    auto rng = fewrec::make_rng(fewrec::derive_seed(seed, "support", cls));
    std::shuffle(pool.begin(), pool.end(), rng);
    if (static_cast<int>(pool.size()) > shots) pool.resize(static_cast<std::size_t>(shots));
    ep.support = std::move(pool);
    ep.query = fewrec::load_pairs(manifest, dir, cls, "test");
    return ep;
}

void maybe_write(const json& cfg, const std::string& report) {
    if (cfg.contains("out")) {
        std::ofstream out(cfg.at("out").get<std::string>());
        if (!out) throw fewrec::DataError("cannot write report to " + cfg.at("out").get<std::string>());
        out << report;
    }
}

void set_report(char** report_out, const std::string& report) {
    if (report_out) *report_out = dup_string(report);
}

fewrec::ReportFormat format_from_config(const json& cfg) {
    std::string f = cfg.value("format", "csv");
    if (f == "csv") return fewrec::ReportFormat::csv;
    if (f == "markdown") return fewrec::ReportFormat::markdown;
    throw fewrec::ConfigError("unknown report format '" + f + "'");
}

}  // namespace

extern "C" {

const char* fr_last_error(void) { return g_last_error.c_str(); }

void fr_string_free(char* s) { std::free(s); }

fr_status fr_gen_data(const char* config_json) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        fewrec::BuildDatasetOptions opts;
        opts.out_dir = require_string(cfg, "out_dir");
        opts.per_class = cfg.value("per_class", 10);
        opts.views = cfg.value("views", 4);
        opts.split_ratio = cfg.value("split_ratio", 0.8);
        opts.seed = cfg.value("seed", 0ull);
        opts.render.image_size = cfg.value("image_size", 128);

        if (!cfg.contains("classes") || cfg.at("classes").empty()) {
            throw fewrec::ConfigError("gen-data: 'classes' must list at least one class");
        }
        std::vector<fewrec::SynthClassSpec> specs;
        for (const auto& c : cfg.at("classes")) {
            auto spec = fewrec::default_class_spec(
                require_string(c, "id"), fewrec::family_from_string(require_string(c, "family")),
                c.value("seed", 0ull), cfg.value("resolution", 32));
            spec.role = c.value("role", "base");
            if (c.contains("param_ranges")) {
                for (const auto& [name, range] : c.at("param_ranges").items()) {
                    spec.param_ranges[name] = {range.at(0).get<double>(),
                                               range.at(1).get<double>()};
                }
            }
            specs.push_back(std::move(spec));
        }
        fewrec::build_dataset(specs, opts);
    });
}

fr_status fr_distill(const char* config_json) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        std::string manifest_path = require_string(cfg, "manifest");
        std::string out_path = require_string(cfg, "out");
        auto manifest = fewrec::DatasetManifest::load(manifest_path);
        fewrec::MiniSpec spec;
        spec.k = cfg.value("k", 1250);
        spec.v = cfg.value("views", 4);
        spec.seed = cfg.value("seed", 0ull);
        auto mini = fewrec::distill(manifest, fs::path(manifest_path).parent_path().string(), spec);
        mini.save(out_path);
    });
}

fr_status fr_train(const char* config_json) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        std::string variant = require_string(cfg, "variant");
        std::string manifest_path = require_string(cfg, "manifest");
        std::string out_ckpt = require_string(cfg, "out_checkpoint");
        // Validate the variant and model settings before touching the data so
        // a bad variant name reports as a configuration error.
        fewrec::ModelConfig mc = model_config_from_json(cfg, variant);
        auto manifest = fewrec::DatasetManifest::load(manifest_path);
        std::string dir = fs::path(manifest_path).parent_path().string();

        std::vector<std::string> train_classes;
        if (mc.kind == fewrec::PriorKind::as_) {
            train_classes = manifest.class_ids();  // all-shot: merged base + novel
        } else {
            train_classes = manifest.classes_with_role("base");
            auto novel = manifest.classes_with_role("novel");
            if (!novel.empty() && !cfg.value("ignore_novel", false)) {
                throw fewrec::ConfigError(
                    "train: manifest contains novel classes for a base-only variant; filter the "
                    "manifest or pass ignore_novel=true to train on the base split only");
            }
        }
        if (train_classes.empty()) throw fewrec::ConfigError("train: no training classes");

        fewrec::ReconstructionModel model(mc, train_classes);

        std::vector<fewrec::SamplePair> items;
        for (const auto& cls : train_classes) {
            auto part = fewrec::load_pairs(manifest, dir, cls, "train");
            // The average-shape variant conditions on a per-class prior field,
            // which for training classes is the mean of their train shapes.
            if (mc.kind == fewrec::PriorKind::wallace_avg) {
                std::vector<fewrec::VoxelGrid> shapes;
                for (const auto& p : part) shapes.push_back(p.shape);
                model.set_wallace_prior(cls, fewrec::wallace_prior(shapes));
            }
            items.insert(items.end(), part.begin(), part.end());
        }

        fewrec::TrainConfig tc;
        tc.epochs = cfg.value("epochs", 25);
        tc.learning_rate = cfg.value("lr", 1e-4);
        tc.batch_size = cfg.value("batch_size", 32);
        tc.seed = cfg.value("seed", 0ull);
        tc.optimizer = cfg.value("optimizer", std::string("adam")) == "sgd_momentum"
                           ? fewrec::OptimizerKind::sgd_momentum
                           : fewrec::OptimizerKind::adam;

        std::vector<fewrec::SamplePair> eval_items;
        if (cfg.value("eval_split", false)) {
            for (const auto& cls : train_classes) {
                auto part = fewrec::load_pairs(manifest, dir, cls, "test");
                eval_items.insert(eval_items.end(), part.begin(), part.end());
            }
        }

        auto result = fewrec::train_base(model, items, tc,
                                         eval_items.empty() ? nullptr : &eval_items);
        model.save(out_ckpt);
        if (cfg.contains("loss_curve")) {
            fewrec::write_loss_curve_csv(result.curve, cfg.at("loss_curve").get<std::string>());
        }
        // Run descriptor, for provenance of every produced checkpoint.
        std::ofstream desc(out_ckpt + ".run.json");
        desc << cfg.dump(2) << "\n";
    });
}

fr_status fr_adapt(const char* config_json) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        std::string ckpt = require_string(cfg, "checkpoint");
        std::string out_ckpt = require_string(cfg, "out_checkpoint");
        std::string manifest_path = require_string(cfg, "manifest");
        auto manifest = fewrec::DatasetManifest::load(manifest_path);
        std::string dir = fs::path(manifest_path).parent_path().string();

        auto model = fewrec::ReconstructionModel::load(ckpt);
        fewrec::AdaptConfig ac = adapt_config_from_json(cfg);
        std::uint64_t seed = cfg.value("seed", 0ull);
        int shots = cfg.value("shots", 1);

        std::vector<std::string> classes;
        if (cfg.contains("class")) {
            classes.push_back(cfg.at("class").get<std::string>());
        } else {
            classes = manifest.classes_with_role("novel");
        }
        if (classes.empty()) throw fewrec::ConfigError("adapt: no novel classes to adapt");

        for (const auto& cls : classes) {
            auto ep = make_episode(manifest, dir, cls, shots, seed);
            fewrec::adapt_novel(*model, ep, ac);
        }
        model->save(out_ckpt);
        std::ofstream desc(out_ckpt + ".run.json");
        desc << cfg.dump(2) << "\n";
    });
}

fr_status fr_eval(const char* config_json, char** report_out) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        std::string ckpt = require_string(cfg, "checkpoint");
        std::string manifest_path = require_string(cfg, "manifest");
        auto manifest = fewrec::DatasetManifest::load(manifest_path);
        std::string dir = fs::path(manifest_path).parent_path().string();

        auto model = fewrec::ReconstructionModel::load(ckpt);
        auto classes = classes_from_config(cfg, manifest);
        auto queries = load_query_map(manifest, dir, classes, cfg.value("split", "test"));
        double thresh = cfg.value("threshold", 0.5);
        auto rows = fewrec::evaluate(*model, queries, thresh, cfg.value("shots", 0));

        if (cfg.contains("zs_checkpoint")) {
            auto zs = fewrec::ReconstructionModel::load(cfg.at("zs_checkpoint").get<std::string>());
            auto zs_rows = fewrec::evaluate(*zs, queries, thresh);
            fewrec::relative_gain(rows, zs_rows);
        }
        std::string report = fewrec::emit_report(rows, format_from_config(cfg));
        maybe_write(cfg, report);
        set_report(report_out, report);
    });
}

fr_status fr_ablate(const char* config_json, char** report_out) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        auto kind = fewrec::ablation_kind_from_string(require_string(cfg, "kind"));
        std::string manifest_path = require_string(cfg, "manifest");
        auto manifest = fewrec::DatasetManifest::load(manifest_path);
        std::string dir = fs::path(manifest_path).parent_path().string();

        std::vector<fewrec::ReportRow> rows;
        if (kind == fewrec::AblationKind::placement_sweep) {
            fewrec::ModelConfig mc = model_config_from_json(cfg, "zs");
            fewrec::TrainConfig tc;
            tc.epochs = cfg.value("epochs", 25);
            tc.learning_rate = cfg.value("lr", 1e-4);
            tc.batch_size = cfg.value("batch_size", 32);
            tc.seed = cfg.value("seed", 0ull);
            rows = fewrec::run_placement_sweep(manifest, dir, mc, tc, adapt_config_from_json(cfg),
                                               cfg.value("shots", 25));
        } else {
            auto model = fewrec::ReconstructionModel::load(require_string(cfg, "checkpoint"));
            auto classes = classes_from_config(cfg, manifest);
            auto queries = load_query_map(manifest, dir, classes, cfg.value("split", "test"));
            auto result = fewrec::run_ablation(*model, kind, queries, cfg.value("seed", 0ull));
            rows = std::move(result.rows);
            if (cfg.contains("details_out")) {
                std::ofstream out(cfg.at("details_out").get<std::string>());
                out << result.details.dump(2) << "\n";
            }
        }
        std::string report = fewrec::emit_report(rows, format_from_config(cfg));
        maybe_write(cfg, report);
        set_report(report_out, report);
    });
}

fr_status fr_onn(const char* config_json, char** report_out) {
    return run_guarded([&] {
        json cfg = parse_config(config_json);
        std::string manifest_path = require_string(cfg, "manifest");
        auto manifest = fewrec::DatasetManifest::load(manifest_path);
        std::string dir = fs::path(manifest_path).parent_path().string();

        int shots = cfg.value("shots", 0);  // 0 = full database
        int episodes = cfg.value("episodes", 100);
        std::uint64_t seed = cfg.value("seed", 0ull);
        if (episodes < 1) throw fewrec::ConfigError("onn: episodes must be >= 1");

        std::vector<std::string> classes;
        if (cfg.contains("classes") && !cfg.at("classes").empty()) {
            classes = cfg.at("classes").get<std::vector<std::string>>();
        } else {
            classes = manifest.classes_with_role("novel");
            if (classes.empty()) classes = manifest.class_ids();
        }

        std::vector<fewrec::ReportRow> rows;
        for (const auto& cls : classes) {
            // Unique train-split shapes form the retrieval database.
            std::vector<fewrec::VoxelGrid> db;
            std::set<std::string> seen;
            for (const auto& e : manifest.select(cls, "train")) {
                if (seen.insert(e.shape).second) {
                    db.push_back(fewrec::load_binvox((fs::path(dir) / e.shape).string()));
                }
            }
            std::vector<fewrec::VoxelGrid> queries;
            seen.clear();
            for (const auto& e : manifest.select(cls, "test")) {
                if (seen.insert(e.shape).second) {
                    queries.push_back(fewrec::load_binvox((fs::path(dir) / e.shape).string()));
                }
            }
            if (db.empty() || queries.empty()) {
                throw fewrec::DataError("onn: class '" + cls + "' lacks train or test shapes");
            }
            double total = 0.0;
            for (int ep = 0; ep < episodes; ++ep) {
                std::uint64_t ep_seed = fewrec::derive_seed(seed, "episode", cls, ep);
                for (const auto& q : queries) {
                    total += fewrec::onn_retrieve(q, db, shots, ep_seed).score;
                }
            }
            fewrec::ReportRow row;
            row.class_id = cls;
            row.method = shots > 0 ? "onn-" + std::to_string(shots) : "onn-full";
            row.shots = shots;
            row.mean_iou = total / (static_cast<double>(episodes) * queries.size());
            row.n_queries = static_cast<int>(queries.size());
            rows.push_back(std::move(row));
        }
        std::string report = fewrec::emit_report(rows, format_from_config(cfg));
        maybe_write(cfg, report);
        set_report(report_out, report);
    });
}

fr_status fr_grid_load(const char* path, fr_grid** out) {
    return run_guarded([&] {
        if (!path || !out) throw fewrec::ConfigError("fr_grid_load: null argument");
        auto grid = std::make_unique<fewrec::VoxelGrid>(fewrec::load_binvox(path));
        *out = reinterpret_cast<fr_grid*>(grid.release());
    });
}

fr_status fr_grid_save(const fr_grid* grid, const char* path) {
    return run_guarded([&] {
        if (!grid || !path) throw fewrec::ConfigError("fr_grid_save: null argument");
        fewrec::save_binvox(*reinterpret_cast<const fewrec::VoxelGrid*>(grid), path);
    });
}

int fr_grid_resolution(const fr_grid* grid) {
    return grid ? reinterpret_cast<const fewrec::VoxelGrid*>(grid)->resolution() : 0;
}

fr_status fr_grid_iou(const fr_grid* a, const fr_grid* b, double* iou_out) {
    return run_guarded([&] {
        if (!a || !b || !iou_out) throw fewrec::ConfigError("fr_grid_iou: null argument");
        *iou_out = fewrec::iou(*reinterpret_cast<const fewrec::VoxelGrid*>(a),
                               *reinterpret_cast<const fewrec::VoxelGrid*>(b));
    });
}

void fr_grid_free(fr_grid* grid) { delete reinterpret_cast<fewrec::VoxelGrid*>(grid); }

}  // extern "C"
