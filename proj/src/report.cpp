#include "fewrec/report.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "fewrec/rng.hpp"

namespace fewrec {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double class_mean_iou(ReconstructionModel& model, const std::vector<SamplePair>& queries,
                      const std::string& predict_as, double threshold) {
    double total = 0.0;
    for (const auto& q : queries) {
        OccupancyField field = model.predict(q.image, predict_as);
        total += iou(fewrec::threshold(field, threshold), q.shape);
    }
    return total / static_cast<double>(queries.size());
}

}  // namespace

std::vector<ReportRow> evaluate(ReconstructionModel& model,
                                const std::map<std::string, std::vector<SamplePair>>& queries,
                                double threshold, int shots) {
    if (queries.empty()) throw ConfigError("evaluate: no classes to evaluate");
    const PriorKind kind = model.config().kind;
    const bool conditioned = kind_has_class_params(kind) || kind == PriorKind::wallace_avg;

    std::vector<std::string> missing;
    for (const auto& [cls, qs] : queries) {
        if (qs.empty()) throw DataError("evaluate: empty query set for class '" + cls + "'");
        bool ok = !conditioned ||
                  (kind == PriorKind::wallace_avg ? model.has_wallace_prior(cls)
                                                  : model.has_class(cls));
        if (!ok) missing.push_back(cls);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw ConfigError("evaluate: no adapted conditioning for: " + list);
    }

    std::vector<ReportRow> rows;
    for (const auto& [cls, qs] : queries) {
        ReportRow row;
        row.class_id = cls;
        row.method = to_string(kind);
        row.shots = shots;
        row.mean_iou = class_mean_iou(model, qs, cls, threshold);
        row.n_queries = static_cast<int>(qs.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

double relative_gain(std::vector<ReportRow>& rows, const std::vector<ReportRow>& zs_rows) {
    std::map<std::string, double> zs;
    for (const auto& r : zs_rows) zs[r.class_id] = r.mean_iou;
    double mean = 0.0;
    for (auto& r : rows) {
        auto it = zs.find(r.class_id);
        if (it == zs.end()) {
            throw ConfigError("relative_gain: class '" + r.class_id + "' missing from ZS rows");
        }
        if (it->second <= 0.0) {
            throw NumericError("relative_gain: zero ZS IoU for class '" + r.class_id + "'");
        }
        r.relative_gain = (r.mean_iou - it->second) / it->second;
        mean += r.relative_gain;
    }
    return rows.empty() ? 0.0 : mean / static_cast<double>(rows.size());
}

AblationKind ablation_kind_from_string(const std::string& s) {
    if (s == "gce-rand") return AblationKind::gce_rand;
    if (s == "codebook-knockout") return AblationKind::codebook_knockout;
    if (s == "placement-sweep") return AblationKind::placement_sweep;
    throw ConfigError("unknown ablation kind '" + s + "'");
}

AblationResult run_ablation(ReconstructionModel& model, AblationKind kind,
                            const std::map<std::string, std::vector<SamplePair>>& queries,
                            std::uint64_t seed) {
    AblationResult result;
    switch (kind) {
        case AblationKind::gce_rand: {
            if (model.config().kind != PriorKind::gce) {
                throw ConfigError("gce-rand ablation requires the gce variant");
            }
            const auto& classes = model.classes();
            if (classes.size() < 2) {
                throw ConfigError("gce-rand ablation needs at least two classes");
            }
            for (const auto& [cls, qs] : queries) {
                if (qs.empty()) throw DataError("gce-rand: empty query set for '" + cls + "'");
                double total = 0.0;
                for (std::size_t i = 0; i < qs.size(); ++i) {
                    auto rng = make_rng(derive_seed(seed, "gce-rand", cls, i));
                    std::string other;
                    do {
                        other = classes[rng() % classes.size()];
                    } while (other == cls);
                    OccupancyField field = model.predict(qs[i].image, other);
                    total += iou(threshold(field, 0.5), qs[i].shape);
                }
                ReportRow row;
                row.class_id = cls;
                row.method = "gce-rand";
                row.mean_iou = total / static_cast<double>(qs.size());
                row.n_queries = static_cast<int>(qs.size());
                result.rows.push_back(std::move(row));
            }
            break;
        }
        case AblationKind::codebook_knockout: {
            if (model.config().kind != PriorKind::cgce) {
                throw ConfigError("codebook knockout requires the cgce variant");
            }
            const int books = model.config().num_codebooks;
            for (const auto& [cls, qs] : queries) {
                if (qs.empty()) throw DataError("knockout: empty query set for '" + cls + "'");
                std::vector<VoxelGrid> baseline;
                model.set_knockout(-1);
                double baseline_iou = 0.0;
                for (const auto& q : qs) {
                    baseline.push_back(threshold(model.predict(q.image, cls), 0.5));
                    baseline_iou += iou(baseline.back(), q.shape);
                }
                ReportRow base_row;
                base_row.class_id = cls;
                base_row.method = "cgce";
                base_row.mean_iou = baseline_iou / static_cast<double>(qs.size());
                base_row.n_queries = static_cast<int>(qs.size());
                result.rows.push_back(std::move(base_row));
                for (int b = 0; b < books; ++b) {
                    model.set_knockout(b);
                    double total_iou = 0.0;
                    double diff_frac = 0.0;
                    for (std::size_t i = 0; i < qs.size(); ++i) {
                        VoxelGrid pred = threshold(model.predict(qs[i].image, cls), 0.5);
                        total_iou += iou(pred, qs[i].shape);
                        std::size_t diff = 0;
                        for (std::size_t v = 0; v < pred.size(); ++v) {
                            diff += pred.occupancy()[v] != baseline[i].occupancy()[v];
                        }
                        diff_frac += static_cast<double>(diff) / static_cast<double>(pred.size());
                    }
                    ReportRow row;
                    row.class_id = cls;
                    row.method = "cgce-knockout-" + std::to_string(b);
                    row.mean_iou = total_iou / static_cast<double>(qs.size());
                    row.n_queries = static_cast<int>(qs.size());
                    result.rows.push_back(std::move(row));
                    result.details["voxel_diff"][cls][std::to_string(b)] =
                        diff_frac / static_cast<double>(qs.size());
                }
                model.set_knockout(-1);
            }
            break;
        }
        case AblationKind::placement_sweep:
            throw ConfigError("placement sweep needs a dataset; use run_placement_sweep");
    }
    return result;
}

const std::vector<PriorKind>& placement_sweep_kinds() {
    static const std::vector<PriorKind> kinds = {
        PriorKind::mcce_enc, PriorKind::mcce_dec, PriorKind::mcce_full, PriorKind::cab_enc,
        PriorKind::cab_dec,  PriorKind::cab_full, PriorKind::cgce,      PriorKind::hybrid};
    return kinds;
}

std::vector<ReportRow> run_placement_sweep(const DatasetManifest& manifest,
                                           const std::string& manifest_dir,
                                           ModelConfig model_template, TrainConfig train_cfg,
                                           AdaptConfig adapt_cfg, int shots) {
    auto base_classes = manifest.classes_with_role("base");
    auto novel_classes = manifest.classes_with_role("novel");
    if (base_classes.empty() || novel_classes.empty()) {
        throw ConfigError("placement sweep needs both base and novel classes in the manifest");
    }

    std::vector<SamplePair> base_train;
    for (const auto& cls : base_classes) {
        auto items = load_pairs(manifest, manifest_dir, cls, "train");
        base_train.insert(base_train.end(), items.begin(), items.end());
    }

    std::vector<ReportRow> rows;
    for (PriorKind kind : placement_sweep_kinds()) {
        ModelConfig cfg = model_template;
        cfg.kind = kind;
        ReconstructionModel model(cfg, base_classes);
        train_base(model, base_train, train_cfg);

        double iou_sum = 0.0;
        int n_queries = 0;
        for (const auto& cls : novel_classes) {
            auto support_pool = load_pairs(manifest, manifest_dir, cls, "train");
            auto rng = make_rng(derive_seed(train_cfg.seed, "support", cls));
            std::shuffle(support_pool.begin(), support_pool.end(), rng);
            if (static_cast<int>(support_pool.size()) > shots) {
                support_pool.resize(static_cast<std::size_t>(shots));
            }
            FewShotEpisode ep;
            ep.class_id = cls;
            ep.support = support_pool;
            adapt_novel(model, ep, adapt_cfg);

            auto queries = load_pairs(manifest, manifest_dir, cls, "test");
            if (queries.empty()) throw DataError("placement sweep: no test queries for '" + cls + "'");
            double total = 0.0;
            for (const auto& q : queries) {
                total += iou(threshold(model.predict(q.image, cls), 0.5), q.shape);
            }
            iou_sum += total / static_cast<double>(queries.size());
            n_queries += static_cast<int>(queries.size());
        }
        ReportRow row;
        row.class_id = "all-novel";
        row.method = to_string(kind);
        row.shots = shots;
        row.mean_iou = iou_sum / static_cast<double>(novel_classes.size());
        row.n_queries = n_queries;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string emit_report(const std::vector<ReportRow>& rows, ReportFormat format) {
    if (rows.empty()) throw ConfigError("emit_report: no rows");
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        out << "class,method,shots,mean_iou,relative_gain,n_queries\n";
        for (const auto& r : rows) {
            out << r.class_id << "," << r.method << "," << r.shots << "," << fmt_double(r.mean_iou)
                << "," << fmt_double(r.relative_gain) << "," << r.n_queries << "\n";
        }
    } else {
        out << "| class | method | shots | mean_iou | relative_gain | n_queries |\n";
        out << "|---|---|---|---|---|---|\n";
        for (const auto& r : rows) {
            out << "| " << r.class_id << " | " << r.method << " | " << r.shots << " | "
                << fmt_double(r.mean_iou) << " | " << fmt_double(r.relative_gain) << " | "
                << r.n_queries << " |\n";
        }
    }
    return out.str();
}

}  // namespace fewrec
