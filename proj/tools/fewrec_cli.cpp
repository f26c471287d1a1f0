#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fewrec.h"

using nlohmann::json;

namespace {

// Every option gets an environment-variable fallback; CLI11 resolves the
// documented precedence flag > environment > config file > default.
std::string env_name(const std::string& flag) {
    std::string out = "FEWREC_";
    for (char c : flag) out += (c == '-') ? '_' : static_cast<char>(std::toupper(c));
    return out;
}

struct OptionBag {
    CLI::App* cmd;
    json values = json::object();

    void add_string(const std::string& flag, const std::string& key, const std::string& desc) {
        auto holder = std::make_shared<std::string>();
        cmd->add_option("--" + flag, *holder, desc)
            ->envname(env_name(flag))
            ->each([this, key, holder](const std::string&) { values[key] = *holder; });
    }
    void add_int(const std::string& flag, const std::string& key, const std::string& desc) {
        auto holder = std::make_shared<int>();
        cmd->add_option("--" + flag, *holder, desc)
            ->envname(env_name(flag))
            ->each([this, key, holder](const std::string&) { values[key] = *holder; });
    }
    void add_uint64(const std::string& flag, const std::string& key, const std::string& desc) {
        auto holder = std::make_shared<std::uint64_t>();
        cmd->add_option("--" + flag, *holder, desc)
            ->envname(env_name(flag))
            ->each([this, key, holder](const std::string&) { values[key] = *holder; });
    }
    void add_double(const std::string& flag, const std::string& key, const std::string& desc) {
        auto holder = std::make_shared<double>();
        cmd->add_option("--" + flag, *holder, desc)
            ->envname(env_name(flag))
            ->each([this, key, holder](const std::string&) { values[key] = *holder; });
    }
    void add_bool(const std::string& flag, const std::string& key, const std::string& desc) {
        auto holder = std::make_shared<bool>(false);
        cmd->add_flag("--" + flag, *holder, desc)
            ->envname(env_name(flag))
            ->each([this, key, holder](const std::string&) { values[key] = *holder; });
    }
    void add_string_list(const std::string& flag, const std::string& key,
                         const std::string& desc) {
        auto holder = std::make_shared<std::vector<std::string>>();
        cmd->add_option("--" + flag, *holder, desc)
            ->envname(env_name(flag))
            ->each([this, key, holder](const std::string&) { values[key] = *holder; });
    }

    void add_spec_file() {
        auto holder = std::make_shared<std::string>();
        cmd->add_option("--spec", *holder,
                        "JSON file with the full operation configuration; flags override its keys")
            ->envname("FEWREC_SPEC")
            ->each([this, holder](const std::string&) { spec_path = *holder; });
    }

    std::string spec_path;

    json merged() const {
        json cfg = json::object();
        if (!spec_path.empty()) {
            std::ifstream in(spec_path);
            if (!in) {
                std::cerr << "error: cannot read spec file " << spec_path << "\n";
                std::exit(FR_ERR_DATA);
            }
            cfg = json::parse(in);
        }
        for (const auto& [k, v] : values.items()) cfg[k] = v;
        return cfg;
    }
};

void add_model_flags(OptionBag& bag) {
    bag.add_int("image-size", "image_size", "input image side length");
    bag.add_int("resolution", "resolution", "output voxel resolution");
    bag.add_int("embedding-dim", "embedding_dim", "image embedding dimension");
    bag.add_double("width-scale", "width_scale", "channel width multiplier");
    bag.add_int("num-codebooks", "num_codebooks", "codebooks M");
    bag.add_int("codes-per-book", "codes_per_book", "codes per book m");
}

int finish(fr_status status, char* report) {
    if (status != FR_OK) {
        std::cerr << "error: " << fr_last_error() << "\n";
    } else if (report) {
        std::cout << report;
    }
    fr_string_free(report);
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot single-view 3D reconstruction toolkit"};
    app.require_subcommand(1);

    auto make_bag = [&](const std::string& name, const std::string& desc) {
        OptionBag bag;
        bag.cmd = app.add_subcommand(name, desc);
        bag.cmd->set_config("--config", "", "INI/TOML config file (flag > env > config > default)");
        bag.add_spec_file();
        return bag;
    };

    OptionBag gen = make_bag("gen-data", "Generate a synthetic image/shape dataset");
    gen.add_string("out-dir", "out_dir", "output directory");
    gen.add_int("per-class", "per_class", "shapes per class");
    gen.add_int("views", "views", "rendered views per shape");
    gen.add_double("split-ratio", "split_ratio", "train fraction per shape");
    gen.add_uint64("seed", "seed", "generation seed");
    gen.add_int("image-size", "image_size", "rendered image side length");
    gen.add_int("resolution", "resolution", "voxel resolution");
    gen.add_string_list("class", "class_specs",
                        "class spec id=family[:role], repeatable (alternative to --spec)");

    OptionBag dis = make_bag("distill", "Distill a dataset to per-category k-medoids");
    dis.add_string("manifest", "manifest", "source manifest path");
    dis.add_string("out", "out", "output manifest path");
    dis.add_int("k", "k", "medoids per category");
    dis.add_int("views", "views", "views kept per medoid");
    dis.add_uint64("seed", "seed", "distillation seed");

    OptionBag tr = make_bag("train", "Train a model on the base classes");
    tr.add_string("variant", "variant",
                  "prior variant: zs|as|wallace|gce|cgce|mcce-enc|mcce-dec|mcce-full|"
                  "cab-enc|cab-dec|cab-full|hybrid");
    tr.add_string("manifest", "manifest", "dataset manifest path");
    tr.add_string("out-checkpoint", "out_checkpoint", "checkpoint output path");
    tr.add_string("loss-curve", "loss_curve", "loss curve CSV output path");
    tr.add_uint64("seed", "seed", "training seed");
    tr.add_int("epochs", "epochs", "training epochs");
    tr.add_double("lr", "lr", "learning rate");
    tr.add_int("batch-size", "batch_size", "batch size");
    tr.add_string("optimizer", "optimizer", "adam|sgd_momentum");
    tr.add_bool("ignore-novel", "ignore_novel",
                "allow novel classes in the manifest (train on base split only)");
    tr.add_bool("eval-split", "eval_split", "also record test-split loss per epoch");
    add_model_flags(tr);

    OptionBag ad = make_bag("adapt", "Adapt a trained model to novel classes");
    ad.add_string("checkpoint", "checkpoint", "trained checkpoint path");
    ad.add_string("out-checkpoint", "out_checkpoint", "adapted checkpoint output path");
    ad.add_string("manifest", "manifest", "dataset manifest path");
    ad.add_string("class", "class", "novel class id (default: all novel classes)");
    ad.add_int("shots", "shots", "support set size K");
    ad.add_int("steps", "steps", "max adaptation steps");
    ad.add_double("lr", "lr", "adaptation learning rate");
    ad.add_double("momentum", "momentum", "SGD momentum");
    ad.add_int("patience", "patience", "plateau steps before early stop");
    ad.add_uint64("seed", "seed", "support sampling seed");

    OptionBag ev = make_bag("eval", "Evaluate a checkpoint: per-class mean IoU");
    ev.add_string("checkpoint", "checkpoint", "checkpoint path");
    ev.add_string("manifest", "manifest", "dataset manifest path");
    ev.add_string("zs-checkpoint", "zs_checkpoint", "ZS checkpoint for relative gains");
    ev.add_double("threshold", "threshold", "occupancy threshold");
    ev.add_string_list("classes", "classes", "classes to evaluate (default: all)");
    ev.add_string("split", "split", "query split (default test)");
    ev.add_int("shots", "shots", "shot count recorded in the report");
    ev.add_string("format", "format", "csv|markdown");
    ev.add_string("out", "out", "also write the report to this path");

    OptionBag ab = make_bag("ablate", "Run an ablation study");
    ab.add_string("kind", "kind", "gce-rand|codebook-knockout|placement-sweep");
    ab.add_string("checkpoint", "checkpoint", "checkpoint path (gce-rand/knockout)");
    ab.add_string("manifest", "manifest", "dataset manifest path");
    ab.add_uint64("seed", "seed", "ablation seed");
    ab.add_string_list("classes", "classes", "classes to evaluate (default: all)");
    ab.add_int("shots", "shots", "support size for placement-sweep");
    ab.add_int("epochs", "epochs", "training epochs for placement-sweep");
    ab.add_double("lr", "lr", "learning rate for placement-sweep");
    ab.add_int("batch-size", "batch_size", "batch size for placement-sweep");
    ab.add_string("details-out", "details_out", "JSON path for ablation details");
    ab.add_string("format", "format", "csv|markdown");
    ab.add_string("out", "out", "also write the report to this path");
    add_model_flags(ab);

    OptionBag on = make_bag("onn", "Oracle nearest-neighbor retrieval study");
    on.add_string("manifest", "manifest", "dataset manifest path");
    on.add_int("shots", "shots", "database subset size K (0 = full)");
    on.add_int("episodes", "episodes", "seeded subset draws to average");
    on.add_uint64("seed", "seed", "episode seed");
    on.add_string_list("classes", "classes", "classes to query (default: novel)");
    on.add_string("format", "format", "csv|markdown");
    on.add_string("out", "out", "also write the report to this path");

    CLI11_PARSE(app, argc, argv);

    char* report = nullptr;
    if (gen.cmd->parsed()) {
        json cfg = gen.merged();
        if (cfg.contains("class_specs")) {
            json classes = cfg.value("classes", json::array());
            for (const auto& s : cfg.at("class_specs")) {
                std::string spec = s.get<std::string>();
                auto eq = spec.find('=');
                if (eq == std::string::npos) {
                    std::cerr << "error: --class expects id=family[:role], got '" << spec << "'\n";
                    return FR_ERR_CONFIG;
                }
                std::string id = spec.substr(0, eq);
                std::string rest = spec.substr(eq + 1);
                std::string role = "base";
                auto colon = rest.find(':');
                if (colon != std::string::npos) {
                    role = rest.substr(colon + 1);
                    rest = rest.substr(0, colon);
                }
                classes.push_back({{"id", id}, {"family", rest}, {"role", role}});
            }
            cfg["classes"] = classes;
            cfg.erase("class_specs");
        }
        return finish(fr_gen_data(cfg.dump().c_str()), nullptr);
    }
    if (dis.cmd->parsed()) return finish(fr_distill(dis.merged().dump().c_str()), nullptr);
    if (tr.cmd->parsed()) return finish(fr_train(tr.merged().dump().c_str()), nullptr);
    if (ad.cmd->parsed()) return finish(fr_adapt(ad.merged().dump().c_str()), nullptr);
    if (ev.cmd->parsed()) {
        fr_status s = fr_eval(ev.merged().dump().c_str(), &report);
        return finish(s, report);
    }
    if (ab.cmd->parsed()) {
        fr_status s = fr_ablate(ab.merged().dump().c_str(), &report);
        return finish(s, report);
    }
    if (on.cmd->parsed()) {
        fr_status s = fr_onn(on.merged().dump().c_str(), &report);
        return finish(s, report);
    }
    return FR_ERR_CONFIG;
}
